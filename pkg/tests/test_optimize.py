import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from skillopt.ldm import Denoiser, DenoiserConfig, LatentDiffusion, cosine_schedule, sample_unguided
from skillopt.numerics import make_rng
from skillopt.optimize import (
    DCubedConfig,
    DiffusionEsConfig,
    Evaluator,
    GuidanceConfig,
    IdentitySkills,
    MppiConfig,
    OptimizerFault,
    OptResult,
    SkillMppiConfig,
    ablation_no_skill,
    classifier_guided_sample,
    d_cubed_optimize,
    diffusion_es_optimize,
    find_best_latents,
    guided_sample,
    mppi_optimize,
    mppi_update,
    mppi_weights,
    skill_mppi_optimize,
)
from skillopt.sim import SimulationFault, Task, simulate_batch
from skillopt.sim.tasks import _hand, disc_points, grid_points

H, A = 10, 9


def small_task(agents=1, name="mini"):
    hands = [_hand(-0.03)] if agents == 1 else [_hand(-0.04), _hand(0.04)]
    return Task(name, grid_points(3, 3, 0.01), hands, disc_points(9, (0.03, 0.02), 0.015), horizon=20)


DEC = IdentitySkills(H, A)


def random_ldm(N=4, seed=0, length=2, width=H * A):
    cfg = DenoiserConfig(latent_dim=width, length=length, width=8, layers=1, heads=2, mlp_ratio=2)
    return LatentDiffusion(Denoiser(cfg, seed), cosine_schedule(N), np.zeros(width), np.full(width, 0.3))


# --------------------------------------------------------------------------
# shared plumbing


class TestFindBest:
    def test_picks_lowest_cost(self):
        t = small_task()
        z = np.zeros((3, 2, H * A))
        z[1, :, 0::9] = 1.0  # push right towards the target
        best, c = find_best_latents(z, t, DEC)
        costs = simulate_batch(t, DEC.decode_sequence(z[:, None]))[1]
        assert c == costs.min() and np.array_equal(best, z[int(np.argmin(costs))])

    def test_tie_keeps_lowest_index(self):
        # 2.0 and 3.0 both clip to a full push, so the rows roll out identically
        t = small_task()
        z = np.zeros((3, 2, H * A))
        z[1, :, 0::9] = 3.0
        z[2, :, 0::9] = 2.0
        best, _ = find_best_latents(z[1:], t, DEC)
        assert best[0, 0] == 3.0
        best, _ = find_best_latents(z[[2, 1]], t, DEC)
        assert best[0, 0] == 2.0

    def test_single_and_empty(self):
        t = small_task()
        z = np.zeros((1, 2, H * A))
        best, c = find_best_latents(z, t, DEC)
        assert c == pytest.approx(t.d0) and best.shape == (2, H * A)
        with pytest.raises(ValueError):
            find_best_latents(np.zeros((0, 2, H * A)), t, DEC)

    def test_fault_names_trajectory(self):
        t = small_task()
        z = np.zeros((3, 1, 2, H * A))
        acts = DEC.decode_sequence(z)
        acts[2, 0, 5, 0] = np.nan
        with pytest.raises(SimulationFault, match="trajectory 2"):
            Evaluator(t).rollout(acts)

    def test_evaluator_strictly_lower(self):
        t = small_task()
        ev = Evaluator(t, DEC)
        z = np.zeros((1, 1, 2, H * A))
        z[..., 0::9] = 2.0
        ev(z)
        ev(z * 1.5)  # same clipped actions, equal cost: the earlier candidate stays
        assert ev.best_latents[0, 0, 0] == 2.0 and ev.count == 2


def test_identity_skills_layout():
    z = np.arange(2 * 90, dtype=float).reshape(2, 90) / 1000
    a = DEC.decode_sequence(z)
    assert a.shape == (20, 9) and np.array_equal(a[10], z[1, :9])
    eps = np.arange(2 * 20 * 9, dtype=float).reshape(2, 20, 9)
    assert np.array_equal(IdentitySkills.encode_episodes(eps, 10)[1, 1], eps[1, 10:20].ravel())


# --------------------------------------------------------------------------
# diffusion search


class TestDCubed:
    @pytest.mark.parametrize("N,B", [(1, 1), (4, 3), (6, 1)])
    def test_counts_and_trace(self, N, B):
        t = small_task()
        r = d_cubed_optimize(t, DEC, random_ldm(N), DCubedConfig(B=B, seed=1))
        assert r.evaluations == N * (B + 1)
        assert len(r.trace) == N
        assert all(b <= a for a, b in zip(r.trace, r.trace[1:]))
        assert r.c_best == r.trace[-1]
        assert r.trajectory.shape == (1, 20, A)
        assert float(simulate_batch(t, r.trajectory[None])[1][0]) == r.c_best

    def test_deterministic(self):
        t = small_task()
        a = d_cubed_optimize(t, DEC, random_ldm(4), DCubedConfig(B=4, seed=3))
        b = d_cubed_optimize(t, DEC, random_ldm(4), DCubedConfig(B=4, seed=3))
        c = d_cubed_optimize(t, DEC, random_ldm(4), DCubedConfig(B=4, seed=4))
        assert a.trajectory.tobytes() == b.trajectory.tobytes() and a.trace == b.trace
        assert c.trajectory.tobytes() != a.trajectory.tobytes()

    def test_dual_agent(self):
        t = small_task(agents=2)
        r = d_cubed_optimize(t, DEC, random_ldm(3), DCubedConfig(B=2))
        assert r.trajectory.shape == (2, 20, A) and r.evaluations == 9
        assert r.latents.shape == (2, 2, H * A)

    def test_bad_batch_size(self):
        with pytest.raises(ValueError):
            DCubedConfig(B=0)

    def test_no_skill_ablation(self):
        t = small_task()
        r = ablation_no_skill(t, random_ldm(2), DCubedConfig(B=2))
        assert r.method == "no-skill" and r.evaluations == 6
        with pytest.raises(ValueError):
            ablation_no_skill(t, random_ldm(2, width=16))


# --------------------------------------------------------------------------
# MPPI


class TestMppiWeights:
    @given(arrays(np.float64, st.integers(1, 20), elements=st.floats(-1e3, 1e3)), st.floats(0.01, 10))
    def test_normalised_and_monotone(self, c, temp):
        w = mppi_weights(c, temp)
        assert w.sum() == pytest.approx(1.0) and np.all(w >= 0)
        order = np.argsort(c)
        assert np.all(np.diff(w[order]) <= 1e-15)

    @settings(max_examples=30)
    @given(arrays(np.int64, 5, elements=st.integers(-1000, 1000)), st.floats(0.1, 100), st.floats(-50, 50))
    def test_affine_invariant(self, c, scale, shift):
        c = c / 100.0  # on a grid, so an affine map cannot round distinct costs into ties
        np.testing.assert_allclose(mppi_weights(c, 0.3), mppi_weights(c * scale + shift, 0.3), atol=1e-9)

    def test_ties_uniform(self):
        assert np.array_equal(mppi_weights(np.full(4, 2.0), 0.1), np.full(4, 0.25))

    def test_update_concentrates_on_best(self):
        s = np.array([[0.0, 0.0], [1.0, 1.0], [5.0, 5.0]])
        m = mppi_update(np.zeros(2), s, np.array([1.0, 0.0, 1.0]), 1e-3)
        np.testing.assert_allclose(m, [1.0, 1.0])


class TestMppi:
    def test_budget_and_shapes(self):
        t = small_task()
        cfg = MppiConfig(population=4, horizon=6, execute=5, budget=60)
        r = mppi_optimize(t, cfg)
        assert r.trajectory.shape == (1, 20, A) and np.abs(r.trajectory).max() <= 1
        assert r.evaluations <= cfg.budget and len(r.trace) == 4
        assert mppi_optimize(t, cfg).trajectory.tobytes() == r.trajectory.tobytes()

    def test_bad_config(self):
        with pytest.raises(ValueError):
            MppiConfig(sigma=0.0)

    def test_skill_mppi(self):
        t = small_task()
        cfg = SkillMppiConfig(population=3, budget=12)
        r = skill_mppi_optimize(t, DEC, cfg)
        assert r.evaluations == 12 and len(r.trace) == 4
        assert all(b <= a for a, b in zip(r.trace, r.trace[1:]))


# --------------------------------------------------------------------------
# guidance


class TestGuidance:
    def test_zero_gamma_matches_unguided(self):
        ldm = random_ldm(5, length=2, width=4)
        called = []
        x, evals, warns, _ = guided_sample(ldm, lambda xs: called.append(1), make_rng(0, "g"), 3,
                                           GuidanceConfig(gamma=0.0))
        ref = sample_unguided(ldm, make_rng(0, "g"), 3, standardized=True)
        assert x.tobytes() == ref.tobytes() and evals == 0 and not called and not warns

    def test_quadratic_cost_is_reduced(self):
        """Guidance on sum(x^2) under a unit Gaussian prior pulls samples to the origin."""
        sc = cosine_schedule(10)

        class UnitPrior:  # exact E[x0 | x_i] for x0 ~ N(0, I)
            cfg = DenoiserConfig(latent_dim=3, length=2)

            def __call__(self, x, i):
                return np.sqrt(sc.alpha_bar[i]) * x

        ldm = LatentDiffusion(UnitPrior(), sc, np.zeros(3), np.ones(3))
        cost = lambda xs: np.sum(xs.reshape(len(xs), -1) ** 2, axis=1)
        cfg = GuidanceConfig(gamma=0.3, guided_fraction=1.0, max_coords=6, budget=10_000)
        plain, _, _, _ = guided_sample(ldm, cost, make_rng(0, "q"), 1, GuidanceConfig(gamma=0.0))
        x, evals, warns, trace = guided_sample(ldm, cost, make_rng(0, "q"), 1, cfg)
        assert evals == 10 * 12 and not warns and len(trace) == 10
        assert cost(x[None])[0] < 0.5 * cost(plain[None])[0]

    def test_gradient_estimate_is_central_difference(self):
        ldm = random_ldm(1, length=1, width=2)
        g = np.array([[[3.0, -2.0]]])
        seen = []

        def cost(xs):
            seen.append(xs.copy())
            return np.sum(xs.reshape(len(xs), -1) * g.reshape(-1), axis=1)

        cfg = GuidanceConfig(gamma=1.0, guided_fraction=1.0, max_coords=2, fd_step=0.1)
        x, evals, _, _ = guided_sample(ldm, cost, make_rng(0, "c"), 1, cfg)
        x0 = seen[0][0] - np.array([[[0.1, 0.0]]])
        mu = ldm.denoise(x0, 1)  # at i = 1 the posterior mean is the prediction
        np.testing.assert_allclose(x, mu - g, atol=1e-12)
        assert evals == 4

    def test_budget_exhaustion_warns(self):
        ldm = random_ldm(6, length=2, width=3)
        cost = lambda xs: np.sum(xs.reshape(len(xs), -1) ** 2, axis=1)
        _, evals, warns, _ = guided_sample(ldm, cost, make_rng(0, "b"), 1,
                                           GuidanceConfig(gamma=0.1, guided_fraction=1.0, max_coords=6, budget=20))
        assert evals <= 20 and warns and "skipped" in warns[0]

    def test_on_task(self):
        t = small_task()
        r = classifier_guided_sample(t, DEC, random_ldm(4), GuidanceConfig(max_coords=4, budget=40))
        assert r.trajectory.shape == (1, 20, A) and r.evaluations <= 41
        assert float(simulate_batch(t, r.trajectory[None])[1][0]) == r.c_best


# --------------------------------------------------------------------------
# evolutionary search


class TestDiffusionEs:
    def test_single_generation(self):
        t = small_task()
        r = diffusion_es_optimize(t, DEC, random_ldm(4), DiffusionEsConfig(population=5, generations=1))
        assert r.evaluations == 5 and len(r.trace) == 1

    def test_zero_truncation_copies_elites(self):
        t = small_task()
        r = diffusion_es_optimize(t, DEC, random_ldm(4),
                                  DiffusionEsConfig(population=4, elites=2, truncation=0, generations=3))
        assert r.evaluations == 12
        assert r.trace[0] == r.trace[1] == r.trace[2]

    def test_trace_monotone(self):
        t = small_task()
        r = diffusion_es_optimize(t, DEC, random_ldm(6),
                                  DiffusionEsConfig(population=4, elites=2, truncation=3, generations=4))
        assert r.evaluations == 16 and all(b <= a for a, b in zip(r.trace, r.trace[1:]))
        assert float(simulate_batch(t, r.trajectory[None])[1][0]) == r.c_best


# --------------------------------------------------------------------------
# results


def test_result_round_trip(tmp_path):
    t = small_task()
    r = d_cubed_optimize(t, DEC, random_ldm(2), DCubedConfig(B=2))
    r.save(tmp_path / "a.json", include_wall_time=False)
    back = OptResult.load(tmp_path / "a.json")
    assert back.trajectory.tobytes() == r.trajectory.tobytes() and back.c_best == r.c_best
    assert back.trace == r.trace and back.improvement == r.improvement
    r2 = d_cubed_optimize(t, DEC, random_ldm(2), DCubedConfig(B=2))
    r2.save(tmp_path / "b.json", include_wall_time=False)
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_mismatched_resimulation_faults():
    from skillopt.optimize.core import finish

    t = small_task()
    ev = Evaluator(t)
    ev.rollout(np.zeros((1, 1, 20, A)))
    with pytest.raises(OptimizerFault):
        finish("x", t, ev, [], 0.0, {}, c_best=ev.best_cost + 1.0)
    with pytest.raises(OptimizerFault):
        finish("x", t, Evaluator(t), [], 0.0, {})
