import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from skillopt.numerics import grad_check, make_rng
from skillopt.play import Episode, PlayConfig, PlayDataset, encode_dataset, generate_play, sample_windows
from skillopt.vae import (
    TrainingFault,
    VaeConfig,
    VaeModel,
    VaeTrainConfig,
    kl_divergence,
    load_vae,
    reparameterize,
    roundtrip_mse,
    save_vae,
    train_vae,
)

TINY = VaeConfig(action_dim=3, H=4, latent_dim=2, hidden=5, layers=2, beta_kl=0.3)


def windows(n, cfg=TINY, seed=0):
    return np.tanh(make_rng(seed, "w").standard_normal((n, cfg.H, cfg.action_dim)))


class TestEncodeDecode:
    def test_encode_deterministic(self):
        m = VaeModel(TINY, seed=1)
        w = windows(3)
        a, b = m.encode(w), m.encode(w)
        assert a[0].tobytes() == b[0].tobytes() and a[1].tobytes() == b[1].tobytes()
        mu, lv = m.encode(w[0])
        assert mu.shape == (2,)
        # batched BLAS may round differently from a single row
        np.testing.assert_allclose(mu, a[0][0], rtol=0, atol=1e-14)

    def test_fresh_logvar_near_bias(self):
        m = VaeModel(VaeConfig(), seed=0)
        _, lv = m.encode(windows(16, VaeConfig()))
        assert np.all(np.abs(lv - (-2.0)) < 0.5)

    def test_decode_bounded_and_deterministic(self):
        m = VaeModel(VaeConfig(), seed=0)
        z = make_rng(0, "z").standard_normal((5, 16))
        z *= 100 / np.linalg.norm(z, axis=1, keepdims=True)
        y = m.decode(z)
        assert y.shape == (5, 10, 9) and np.abs(y).max() <= 1.0
        assert m.decode(z).tobytes() == y.tobytes()

    def test_decode_sequence(self):
        m = VaeModel(VaeConfig(), seed=0)
        zs = make_rng(1, "z").standard_normal((2, 15, 16))
        a = m.decode_sequence(zs)
        assert a.shape == (2, 150, 9)
        np.testing.assert_allclose(a[1, 20:30], m.decode(zs[1, 2]), rtol=0, atol=1e-14)

    def test_shape_errors(self):
        m = VaeModel(TINY)
        with pytest.raises(ValueError):
            m.encode(np.zeros((5, 3)))
        with pytest.raises(ValueError):
            m.decode(np.zeros(3))


class TestReparameterize:
    def test_zero_sigma(self):
        mu = np.array([0.3, -1.0])
        assert np.array_equal(reparameterize(mu, np.full(2, -np.inf), make_rng(0, "r")), mu)

    def test_zero_noise(self):
        mu = np.array([0.3, -1.0])
        assert np.array_equal(reparameterize(mu, np.zeros(2), eps=np.zeros(2)), mu)

    def test_monte_carlo_mean(self):
        mu, lv = np.array([0.5, -2.0]), np.array([0.0, np.log(4.0)])
        n = 100_000
        z = reparameterize(np.broadcast_to(mu, (n, 2)), np.broadcast_to(lv, (n, 2)), make_rng(0, "mc"))
        sd = np.exp(0.5 * lv)
        assert np.all(np.abs(z.mean(0) - mu) < 3 * sd / np.sqrt(n))
        np.testing.assert_allclose(z.std(0), sd, rtol=0.02)


class TestElbo:
    def test_kl_closed_forms(self):
        assert kl_divergence(np.zeros(4), np.zeros(4)) == 0.0
        assert kl_divergence(np.ones(1), np.zeros(1)) == 0.5

    @given(arrays(np.float64, 5, elements=st.floats(-5, 5)), arrays(np.float64, 5, elements=st.floats(-10, 2)))
    def test_kl_nonnegative(self, mu, lv):
        assert kl_divergence(mu, lv) >= 0.0

    def test_perfect_reconstruction(self):
        m = VaeModel(TINY, seed=0)
        m.store["dec.out.W"][...] = 0.0
        m.store["dec.out.b"][...] = np.arctanh(0.25)
        w = np.full((2, TINY.H, TINY.action_dim), np.tanh(np.arctanh(0.25)))
        _, recon, _ = m.elbo_loss(w, make_rng(0, "e"))
        assert recon == 0.0

    def test_loss_composition(self):
        m = VaeModel(TINY, seed=0)
        loss, recon, kl = m.elbo_loss(windows(4), make_rng(0, "e"))
        assert loss == pytest.approx(recon + TINY.beta_kl * kl, rel=1e-15)
        assert kl >= 0

    @pytest.mark.parametrize("cell", ["gru", "lstm"])
    def test_gradients(self, cell):
        cfg = VaeConfig(action_dim=3, H=4, latent_dim=2, hidden=5, layers=2, beta_kl=0.3, cell=cell)
        m = VaeModel(cfg, seed=1)
        w, eps = windows(3, cfg), make_rng(0, "e").standard_normal((3, 2))
        m.store.zero_grad()
        m.elbo_loss(w, eps=eps, backward=True)
        assert grad_check(lambda: m.elbo_loss(w, eps=eps)[0], m.store) <= 1e-4


@pytest.fixture(scope="module")
def small_ds():
    return generate_play(PlayConfig(episodes=20), seed=0)


SMALL = VaeConfig(hidden=24, layers=1, latent_dim=8)


class TestTraining:
    def test_zero_steps_is_init(self, small_ds):
        m, curve = train_vae(small_ds, SMALL, VaeTrainConfig(steps=0), seed=5)
        ref = VaeModel(SMALL, seed=5)
        for k in ref.store:
            assert np.array_equal(m.store[k], ref.store[k])
        assert curve.steps == [0, 0] or curve.steps == [0]

    def test_training_reduces_heldout_loss(self, small_ds):
        m, curve = train_vae(small_ds, SMALL, VaeTrainConfig(steps=150, batch=32, eval_every=50), seed=0)
        assert curve.heldout_mse[-1] < curve.heldout_mse[0]
        assert curve.steps[-1] == 150

    def test_deterministic(self, small_ds):
        h = VaeTrainConfig(steps=20, batch=8)
        a, _ = train_vae(small_ds, SMALL, h, seed=2)
        b, _ = train_vae(small_ds, SMALL, h, seed=2)
        for k in a.store:
            assert a.store[k].tobytes() == b.store[k].tobytes()

    def test_nan_data_faults_with_step(self):
        bad = np.zeros((20, 9))
        bad[3, 2] = np.nan
        ds = PlayDataset([Episode(bad, [])], 10)
        with pytest.raises(TrainingFault) as e:
            train_vae(ds, SMALL, VaeTrainConfig(steps=50, batch=4), seed=0)
        assert e.value.step >= 0

    def test_checkpoint_round_trip(self, tmp_path, small_ds):
        m = VaeModel(SMALL, seed=3)
        save_vae(tmp_path / "v.ckpt", m)
        m2 = load_vae(tmp_path / "v.ckpt")
        w = sample_windows(small_ds, make_rng(0, "w"), 6)
        assert m2.cfg == m.cfg
        assert m2.encode(w)[0].tobytes() == m.encode(w)[0].tobytes()
        z = make_rng(0, "z").standard_normal((3, 8))
        assert m2.decode(z).tobytes() == m.decode(z).tobytes()


def test_encode_dataset_shapes(small_ds):
    m = VaeModel(SMALL, seed=0)
    lat = encode_dataset(small_ds, m)
    assert lat.shape == (20, 15, 8)
    twin = PlayDataset([small_ds.episodes[0], small_ds.episodes[0]], 10)
    lt = encode_dataset(twin, m)
    assert lt[0].tobytes() == lt[1].tobytes()


def test_roundtrip_mse_zero_for_identity_like():
    m = VaeModel(TINY, seed=0)
    w = windows(3)
    assert roundtrip_mse(m, w) == pytest.approx(np.mean((m.decode(m.encode(w)[0]) - w) ** 2))
