import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from skillopt.ldm import (
    Denoiser,
    DenoiserConfig,
    LatentDiffusion,
    LdmTrainConfig,
    ModelFault,
    ScheduleError,
    TrainingFault,
    cosine_schedule,
    ldm_loss,
    load_ldm,
    posterior_coefficients,
    posterior_mean,
    q_sample,
    sample_unguided,
    save_ldm,
    step_features,
    train_ldm,
)
from skillopt.numerics import grad_check, make_rng

TINY = DenoiserConfig(latent_dim=3, length=4, width=8, layers=2, heads=2, mlp_ratio=2)


# --------------------------------------------------------------------------
# schedule


def bayes_posterior(x0, xi, i, sched):
    """Gaussian conditioning of x_{i-1} ~ N(sqrt(abar') x0, 1 - abar') on x_i ~ N(sqrt(a) x_{i-1}, beta)."""
    ab_prev = sched.alpha_bar[i - 1]
    a, b = sched.alpha[i], sched.beta[i]
    prec = 1.0 / (1.0 - ab_prev) + a / b
    mean = (np.sqrt(ab_prev) * x0 / (1.0 - ab_prev) + np.sqrt(a) * xi / b) / prec
    return mean, 1.0 / prec


class TestSchedule:
    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 600), st.floats(1e-4, 0.2))
    def test_invariants(self, N, s):
        sc = cosine_schedule(N, s)
        b, ab = sc.beta[1:], sc.alpha_bar
        assert np.all(b > 0) and np.all(b <= 0.999)
        assert ab[0] == 1.0 and np.all(np.diff(ab) < 0) and ab[-1] >= 0
        assert np.array_equal(ab, np.cumprod(sc.alpha))
        assert np.all(sc.var >= 0) and np.all(sc.var[1:] <= b)
        assert sc.sigma(0) == 0.0 and sc.var[1] == 0.0

    def test_reference_values(self):
        sc = cosine_schedule(200, 0.008)
        f = lambda t: np.cos((t / 200 + 0.008) / 1.008 * np.pi / 2) ** 2
        for i in (1, 50, 100, 150):
            assert sc.beta[i] == pytest.approx(1 - f(i) / f(i - 1), rel=1e-12)
        assert sc.beta[200] == 0.999  # cos^2(pi/2) underflows the ratio, so clipped
        assert sc.alpha_bar[1] == 1.0 - sc.beta[1] and sc.alpha_bar[1] > 0.999

    @pytest.mark.parametrize("N,s", [(0, 0.008), (-3, 0.008), (10, 0.0), (10, -1.0), (2.5, 0.008)])
    def test_bad_arguments(self, N, s):
        with pytest.raises(ScheduleError):
            cosine_schedule(N, s)

    def test_step_range(self):
        sc = cosine_schedule(10)
        for bad in (0, 11, np.array([1, 0])):
            with pytest.raises(ScheduleError):
                posterior_coefficients(bad, sc)
        with pytest.raises(ScheduleError):
            q_sample(np.zeros(2), 1.5, np.zeros(2), sc)


class TestForward:
    def test_zero_noise_scales(self):
        sc = cosine_schedule(50)
        x0 = np.array([1.0, -2.0])
        np.testing.assert_allclose(q_sample(x0, 7, np.zeros(2), sc), np.sqrt(sc.alpha_bar[7]) * x0, rtol=1e-15)

    def test_per_row_steps(self):
        sc = cosine_schedule(50)
        x0, eps = np.ones((3, 2, 2)), np.full((3, 2, 2), 0.5)
        out = q_sample(x0, np.array([1, 20, 50]), eps, sc)
        for r, i in enumerate((1, 20, 50)):
            assert out[r].tobytes() == q_sample(x0[r], i, eps[r], sc).tobytes()

    def test_noise_shape(self):
        with pytest.raises(ValueError):
            q_sample(np.zeros((2, 3)), 1, np.zeros(3), cosine_schedule(5))

    def test_matches_composed_single_steps(self):
        """Monte Carlo: i one-step kernels compose to the closed-form marginal."""
        sc = cosine_schedule(30)
        rng = make_rng(0, "compose")
        n, x0, i = 200_000, 0.7, 12
        x = np.full(n, x0)
        for j in range(1, i + 1):
            x = np.sqrt(sc.alpha[j]) * x + np.sqrt(sc.beta[j]) * rng.standard_normal(n)
        m, v = np.sqrt(sc.alpha_bar[i]) * x0, 1 - sc.alpha_bar[i]
        assert abs(x.mean() - m) < 4 * np.sqrt(v / n)
        assert x.var() == pytest.approx(v, rel=0.015)


class TestPosterior:
    def test_matches_bayes_oracle(self):
        sc = cosine_schedule(200)
        rng = make_rng(0, "post")
        for _ in range(1000):
            i = int(rng.integers(2, 201))
            x0, xi = rng.standard_normal(4), rng.standard_normal(4)
            mean, var = bayes_posterior(x0, xi, i, sc)
            np.testing.assert_allclose(posterior_mean(x0, xi, i, sc), mean, rtol=0, atol=1e-12)
            assert sc.var[i] == pytest.approx(var, rel=1e-10)

    def test_first_step_returns_prediction(self):
        sc = cosine_schedule(200)
        x0, xi = np.array([0.3, -0.1]), np.array([5.0, 7.0])
        assert np.array_equal(posterior_mean(x0, xi, 1, sc), x0)
        assert posterior_coefficients(1, sc) == (1.0, 0.0)

    def test_per_row_steps(self):
        sc = cosine_schedule(40)
        rng = make_rng(1, "rows")
        x0, xi = rng.standard_normal((3, 2, 2)), rng.standard_normal((3, 2, 2))
        steps = np.array([1, 9, 40])
        out = posterior_mean(x0, xi, steps, sc)
        for r, i in enumerate(steps):
            np.testing.assert_array_equal(out[r], posterior_mean(x0[r], xi[r], int(i), sc))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            posterior_mean(np.zeros(3), np.zeros(2), 2, cosine_schedule(5))


# --------------------------------------------------------------------------
# denoiser and loss


class TestDenoiser:
    def test_shapes_and_step_features(self):
        d = Denoiser(TINY, seed=0)
        y = d(np.zeros((5, 4, 3)), 7)
        assert y.shape == (5, 4, 3)
        f = step_features(np.array([0, 3]), 8)
        assert f.shape == (2, 8) and np.array_equal(f[0], [0, 0, 0, 0, 1, 1, 1, 1])

    def test_step_conditions_output(self):
        d = Denoiser(TINY, seed=0)
        x = make_rng(0, "x").standard_normal((1, 4, 3))
        assert not np.allclose(d(x, 1), d(x, 100))

    def test_scalar_step_equals_broadcast(self):
        d = Denoiser(TINY, seed=0)
        x = make_rng(0, "x").standard_normal((3, 4, 3))
        assert d(x, 5).tobytes() == d(x, np.full(3, 5)).tobytes()

    def test_bad_shape(self):
        with pytest.raises(ValueError):
            Denoiser(TINY)(np.zeros((1, 5, 3)), 1)
        with pytest.raises(ValueError):
            Denoiser(DenoiserConfig(width=10, heads=4))

    def test_loss_gradients(self):
        d = Denoiser(TINY, seed=2)
        sc = cosine_schedule(20)
        rng = make_rng(0, "g")
        x0 = rng.standard_normal((3, 4, 3))
        steps, eps = np.array([1, 8, 20]), rng.standard_normal(x0.shape)
        d.store.zero_grad()
        ldm_loss(d, x0, sched=sc, steps=steps, eps=eps, backward=True)
        assert grad_check(lambda: ldm_loss(d, x0, sched=sc, steps=steps, eps=eps), d.store) <= 1e-4

    def test_oracle_denoiser_has_zero_loss(self):
        sc = cosine_schedule(50)
        rng = make_rng(0, "oracle")
        x0, eps = rng.standard_normal((6, 4, 3)), rng.standard_normal((6, 4, 3))
        steps = rng.integers(1, 51, size=6)

        class Oracle:
            def forward(self, xi, i):
                ab = sc.alpha_bar[i][:, None, None]
                return (xi - np.sqrt(1 - ab) * eps) / np.sqrt(ab), None

        assert ldm_loss(Oracle(), x0, sched=sc, steps=steps, eps=eps) < 1e-25

    def test_empty_batch(self):
        with pytest.raises(ValueError):
            ldm_loss(Denoiser(TINY), np.zeros((0, 4, 3)), make_rng(0, "e"), cosine_schedule(5))


# --------------------------------------------------------------------------
# sampling with an exact Bayes denoiser


class GaussianDenoiser:
    """E[x0 | x_i] for standardised data x0 ~ N(0, v I)."""

    def __init__(self, sched, v, shape):
        self.sched, self.v = sched, v
        self.cfg = DenoiserConfig(latent_dim=shape[1], length=shape[0])

    def __call__(self, x, i):
        ab = self.sched.alpha_bar[i]
        return np.sqrt(ab) * self.v * x / (ab * self.v + 1 - ab)


def test_ancestral_sampler_matches_linear_recursion():
    """With a linear denoiser each reverse step is x' = g_i x + sigma_i eps, so the
    sample variance follows V' = g_i^2 V + sigma_i^2 from V_N = 1."""
    sc = cosine_schedule(40)
    v = 0.25
    model = LatentDiffusion(GaussianDenoiser(sc, v, (2, 2)), sc, np.array([1.0, -1.0]), np.array([2.0, 0.5]))
    V = 1.0
    for i in range(sc.N, 0, -1):
        ab = sc.alpha_bar[i]
        k = np.sqrt(ab) * v / (ab * v + 1 - ab)
        if i == 1:
            g, s2 = k, 0.0
        else:
            m1, _ = bayes_posterior(1.0, 0.0, i, sc)
            m2, var = bayes_posterior(0.0, 1.0, i, sc)
            g, s2 = m1 * k + m2, var
        V = g * g * V + s2
    z = sample_unguided(model, make_rng(0, "anc"), 20_000)
    x = model.standardize(z).reshape(-1)
    assert abs(x.mean()) < 4 * np.sqrt(V / x.size)
    assert x.var() == pytest.approx(V, rel=0.03)
    np.testing.assert_allclose(z.reshape(-1, 2).mean(0), [1.0, -1.0], atol=0.02)


def test_sampling_deterministic():
    m = LatentDiffusion(Denoiser(TINY, seed=0), cosine_schedule(10), np.zeros(3), np.ones(3))
    a = sample_unguided(m, make_rng(3, "s"), 4)
    b = sample_unguided(m, make_rng(3, "s"), 4)
    assert a.shape == (4, 4, 3) and a.tobytes() == b.tobytes()


def test_nonfinite_denoiser_input_faults():
    m = LatentDiffusion(Denoiser(TINY, seed=0), cosine_schedule(10), np.zeros(3), np.ones(3))
    with pytest.raises(ModelFault):
        m.denoise(np.full((1, 4, 3), np.nan), 3)


# --------------------------------------------------------------------------
# training


@pytest.fixture(scope="module")
def one_mode():
    """Synthetic latents from a single Gaussian mode with a shared per-trajectory offset."""
    rng = make_rng(0, "one-mode")
    off = rng.standard_normal((512, 1, 1))
    return np.array([2.0, -1.0, 0.5]) + 0.3 * off + 0.1 * rng.standard_normal((512, 4, 3))


FAST = LdmTrainConfig(steps=1500, batch=32, lr=3e-3, N=20, eval_every=100)


class TestTraining:
    def test_zero_steps_is_init(self, one_mode):
        m, curve = train_ldm(one_mode, TINY, LdmTrainConfig(steps=0, N=20), seed=4)
        ref = Denoiser(TINY, seed=4)
        for k in ref.store:
            assert np.array_equal(m.denoiser.store[k], ref.store[k])
        assert curve.steps == []
        np.testing.assert_allclose(m.mean, one_mode.reshape(-1, 3).mean(0))

    def test_training_fits_one_mode(self, one_mode):
        m, curve = train_ldm(one_mode, TINY, FAST, seed=0)
        assert curve.loss[-1] < 0.5 * curve.loss[0]
        z = sample_unguided(m, make_rng(0, "fit"), 400)
        np.testing.assert_allclose(z.reshape(-1, 3).mean(0), [2.0, -1.0, 0.5], atol=0.1)
        sd = z.reshape(-1, 3).std(0)
        assert np.all(np.abs(sd / one_mode.reshape(-1, 3).std(0) - 1) < 0.35)

    def test_deterministic(self, one_mode):
        h = LdmTrainConfig(steps=5, batch=8, N=20)
        a, _ = train_ldm(one_mode, TINY, h, seed=1)
        b, _ = train_ldm(one_mode, TINY, h, seed=1)
        for k in a.denoiser.store:
            assert a.denoiser.store[k].tobytes() == b.denoiser.store[k].tobytes()

    def test_nan_latents_fault(self, one_mode):
        bad = one_mode.copy()
        bad[:, 0, 0] = np.nan
        with pytest.raises((TrainingFault, ModelFault, ValueError)):
            train_ldm(bad, TINY, LdmTrainConfig(steps=3, batch=4, N=5), seed=0)

    def test_bad_shape(self):
        with pytest.raises(ValueError):
            train_ldm(np.zeros((0, 4, 3)), TINY)

    def test_checkpoint_round_trip(self, tmp_path, one_mode):
        m, _ = train_ldm(one_mode, TINY, LdmTrainConfig(steps=3, batch=4, N=20), seed=0)
        save_ldm(tmp_path / "l.ckpt", m)
        m2 = load_ldm(tmp_path / "l.ckpt")
        assert m2.sched.N == 20 and m2.mean.tobytes() == m.mean.tobytes() and m2.std.tobytes() == m.std.tobytes()
        a = sample_unguided(m, make_rng(0, "rt"), 3)
        assert sample_unguided(m2, make_rng(0, "rt"), 3).tobytes() == a.tobytes()
        save_ldm(tmp_path / "l2.ckpt", m2)
        assert (tmp_path / "l.ckpt").read_bytes() == (tmp_path / "l2.ckpt").read_bytes()
