import numpy as np
import pytest
from scipy import stats

from skillopt.numerics import make_rng
from skillopt.play import (
    FAMILIES,
    DatasetParseError,
    Episode,
    PlayConfig,
    PlayConfigError,
    PlayDataset,
    aligned_windows,
    generate_play,
    load_dataset,
    min_jerk,
    sample_window,
    save_dataset,
    step_magnitude_envelope,
)


@pytest.fixture(scope="module")
def ds():
    return generate_play(PlayConfig(episodes=40), seed=3)


def test_deterministic(ds):
    assert generate_play(PlayConfig(episodes=40), seed=3) == ds
    assert generate_play(PlayConfig(episodes=40), seed=4) != ds


def test_action_invariants(ds):
    for ep in ds.episodes:
        assert ep.actions.shape == (150, 9)
        assert np.abs(ep.actions).max() <= 1.0
        assert np.array_equal(ep.actions, ep.actions.astype(np.float32).astype(np.float64))
        assert ep.labels[0][1] == 0 and ep.labels[-1][2] == 150


def test_default_size_and_census():
    cfg = PlayConfig()
    full = generate_play(cfg, seed=0)
    assert len(full) >= 200 and all(ep.actions.shape[0] == 150 for ep in full.episodes)
    census = full.census()
    assert set(census) == set(FAMILIES)
    assert min(census.values()) >= cfg.min_count


def test_close_all_joints_share_sign(ds):
    seen = 0
    for ep in ds.episodes:
        for fam, a, b in ep.labels:
            if fam in ("close-all", "open-all"):
                seg = ep.actions[a:b, 3:]
                sign = 1 if fam == "close-all" else -1
                assert np.all(sign * seg >= 0)
                seen += 1
    assert seen > 0


def test_min_jerk_profile():
    s = min_jerk(10)
    assert s[0] == 0.0 and s[-1] == 1.0
    assert np.all(np.diff(s) > 0)
    # peak per-step progress sits mid-way and is below 1.875 / n
    assert np.diff(s).max() <= 1.875 / 10


def test_empty_family_set():
    with pytest.raises(PlayConfigError):
        generate_play(PlayConfig(families={}), seed=0)
    with pytest.raises(PlayConfigError):
        generate_play(PlayConfig(families={"juggle": 1.0}), seed=0)


def test_single_family():
    d = generate_play(PlayConfig(episodes=3, families={"rotate": 1.0}), seed=0)
    assert set(d.census()) == {"rotate"}
    a = np.concatenate([ep.actions for ep in d.episodes])
    assert np.all(a[:, [0, 1]] == 0) and np.all(a[:, 3:] == 0)


def test_round_trip(tmp_path, ds):
    p = tmp_path / "play.bin"
    save_dataset(ds, p)
    assert load_dataset(p) == ds
    b1 = p.read_bytes()
    save_dataset(load_dataset(p), p)
    assert p.read_bytes() == b1


def test_truncated_file(tmp_path, ds):
    p = tmp_path / "play.bin"
    save_dataset(ds, p)
    raw = p.read_bytes()
    for cut in (5, 16, 200, len(raw) - 3):
        p.write_bytes(raw[:cut])
        with pytest.raises(DatasetParseError) as e:
            load_dataset(p)
        assert e.value.offset <= cut


def test_header_only_file(tmp_path):
    p = tmp_path / "empty.bin"
    save_dataset(PlayDataset([], 10, 0), p)
    with pytest.raises(DatasetParseError, match="no episodes"):
        load_dataset(p)


def test_single_window_dataset():
    a = np.linspace(-1, 1, 90).reshape(10, 9)
    d = PlayDataset([Episode(a, [("rotate", 0, 10)])], 10)
    rng = make_rng(0, "w")
    for aligned in (True, False):
        for _ in range(5):
            assert np.array_equal(sample_window(d, rng, aligned), a)


def test_short_episodes_skipped():
    short = Episode(np.zeros((5, 9)), [])
    long = Episode(np.ones((10, 9)) * 0.5, [])
    d = PlayDataset([short, long], 10)
    assert np.all(sample_window(d, make_rng(0, "w")) == 0.5)
    with pytest.raises(ValueError):
        sample_window(PlayDataset([short], 10), make_rng(0, "w"))


def test_window_start_uniform():
    """Chi-square frequency test on the unaligned start position."""
    T = 30
    a = np.repeat(np.arange(T, dtype=np.float64)[:, None] / T, 9, axis=1)
    d = PlayDataset([Episode(a, [])], 10)
    rng = make_rng(1, "chi")
    starts = [int(round(sample_window(d, rng)[0, 0] * T)) for _ in range(10_000)]
    counts = np.bincount(starts, minlength=T - 10 + 1)
    assert len(counts) == 21
    assert stats.chisquare(counts).pvalue > 1e-3
    rng = make_rng(1, "chi-aligned")
    aligned = {int(round(sample_window(d, rng, aligned=True)[0, 0] * T)) for _ in range(200)}
    assert aligned == {0, 10, 20}


def test_windows_within_bounds(ds):
    rng = make_rng(0, "b")
    for _ in range(50):
        w = sample_window(ds, rng)
        assert w.shape == (10, 9) and np.abs(w).max() <= 1


def test_aligned_windows(ds):
    w = aligned_windows(ds)
    assert w.shape == (40, 15, 10, 9)
    assert np.array_equal(w[3, 2], ds.episodes[3].actions[20:30])


def test_envelope(ds):
    env = step_magnitude_envelope(ds)
    norms = np.linalg.norm(np.concatenate([e.actions for e in ds.episodes]), axis=1)
    assert np.mean(norms <= env) >= 0.99
