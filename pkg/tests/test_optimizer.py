"""Tests for optimizer.py: AdamW, the compressed variants, resampling and updates."""

import numpy as np
import pandas as pd
import pytest

from sgc.errors import (
    ConfigError,
    InvalidChunkingError,
    InvalidGradientError,
    InvalidRankError,
)
from sgc.model import header_lines, train
from sgc.optimizer import (
    CESGC,
    MESGC,
    SGC,
    SGD,
    AdamW,
    SgcConfig,
    adamw_state,
    adamw_step,
    apply_update,
    apply_update_,
    can_compress,
    cesgc_state,
    cesgc_step,
    make_optimizer,
    mesgc_step,
    moment_ratio_bound,
    projection_matrix,
    sgc_state,
    sgc_step,
    sgca_resample,
)
from sgc.omp import omp_cholesky
from sgc.problems import make_problem
from sgc.tensor import Rng


def lossless(d, **changes):
    """Identity projection with every entry kept: the compression is exact."""
    return SgcConfig(projection="identity", kappa=1, c=1, s_c=d, omp_tol=0.0, **changes)


class TestConfig:
    def test_derived_sizes(self):
        cfg = SgcConfig(c=4, s_c=4, kappa=8)
        assert (cfg.k_chunk, cfg.k, cfg.s) == (32, 128, 16)

    @pytest.mark.parametrize("field,value", [("beta1", 1.0), ("eta", 0.0), ("c", 0),
                                             ("projection", "dct"), ("resample_T", -1)])
    def test_out_of_range(self, field, value):
        with pytest.raises(ConfigError) as info:
            SgcConfig(**{field: value})
        assert field in str(info.value)

    def test_from_dict_rejects_unknown(self):
        with pytest.raises(ConfigError):
            SgcConfig.from_dict({"beta3": 0.5})

    def test_round_trip(self):
        cfg = SgcConfig(c=2, s_c=3, omp_tol=1e-9)
        assert SgcConfig.from_dict(cfg.to_dict()) == cfg

    def test_recovery_budget(self):
        assert SgcConfig(s_c=4, recovery_budget_multiplier=1.5).recovery_budget == 6

    def test_chunk_length(self):
        assert SgcConfig(c=4, s_c=2, kappa=8).chunk_length(256) == 64
        with pytest.raises(InvalidChunkingError):
            SgcConfig(c=3).chunk_length(64)
        with pytest.raises(ConfigError):
            SgcConfig(c=4, s_c=4, kappa=8).chunk_length(64)


class TestAdamW:
    def test_first_step_bias_correction(self):
        cfg = SgcConfig()
        state = adamw_state(1, cfg)
        out = adamw_step(np.array([1.0]), state, cfg)
        assert out.n[0] == pytest.approx(1.0 / (1.0 + 1e-8), rel=1e-15)

    def test_zero_gradient_fixed_point(self):
        cfg = SgcConfig()
        state = adamw_state(4, cfg)
        for _ in range(5):
            assert np.all(adamw_step(np.zeros(4), state, cfg).n == 0.0)

    def test_non_finite_gradient(self):
        cfg = SgcConfig()
        with pytest.raises(InvalidGradientError):
            adamw_step(np.array([1.0, np.nan]), adamw_state(2, cfg), cfg)

    def test_three_steps_match_scalar_recurrence(self):
        cfg = SgcConfig()
        state = adamw_state(2, cfg)
        g = np.array([2.0, -2.0])
        m = v = 0.0
        for t in range(1, 4):
            out = adamw_step(g, state, cfg)
            m = cfg.beta1 * m + (1 - cfg.beta1) * 2.0
            v = cfg.beta2 * v + (1 - cfg.beta2) * 4.0
            m_hat = m / (1 - cfg.beta1 ** t)
            v_hat = v / (1 - cfg.beta2 ** t)
            expected = m_hat / (v_hat ** 0.5 + cfg.epsilon)
            assert out.n[0] == pytest.approx(expected, abs=1e-12)
            assert out.n[1] == pytest.approx(-expected, abs=1e-12)

    def test_direction_within_moment_ratio_bound(self):
        cfg = SgcConfig()
        state = adamw_state(16, cfg)
        rng = Rng(21)
        for t in range(1, 61):
            g = rng.normal(16) * (rng.normal(16) > 0.5)
            out = adamw_step(g, state, cfg)
            assert np.all(np.abs(out.n) <= moment_ratio_bound(cfg, t) + 1e-12)


class TestMomentRatioBound:
    def test_first_step(self):
        assert moment_ratio_bound(SgcConfig(), 1) == pytest.approx(1.0, rel=1e-12)

    def test_grows_towards_limit(self):
        cfg = SgcConfig()
        bounds = [moment_ratio_bound(cfg, t) for t in (1, 10, 100, 10000)]
        assert all(a < b for a, b in zip(bounds, bounds[1:]))
        limit = ((1 - cfg.beta1) ** 2 / (1 - cfg.beta2) / (1 - cfg.beta1 ** 2 / cfg.beta2)) ** 0.5
        assert bounds[-1] == pytest.approx(limit, rel=1e-4)

    def test_no_second_moment_memory(self):
        assert moment_ratio_bound(SgcConfig(beta2=0.0), 5) == float("inf")

    def test_no_momentum(self):
        cfg = SgcConfig(beta1=0.0)
        assert moment_ratio_bound(cfg, 1) == pytest.approx(1.0)
        assert moment_ratio_bound(cfg, 50) <= 1.0 / (1 - cfg.beta2) ** 0.5


class TestSgc:
    def test_lossless_limit_matches_adamw(self):
        d = 64
        cfg = lossless(d, eta=0.01)
        problem = make_problem("quadratic", d, seed=3)
        w_adam = problem.initial_params()
        w_sgc = problem.initial_params()
        adam = AdamW(d, cfg)
        sgc = SGC(d, cfg)
        for _ in range(200):
            loss_adam, g_adam = problem.loss_and_grad(w_adam)
            loss_sgc, g_sgc = problem.loss_and_grad(w_sgc)
            assert loss_sgc == pytest.approx(loss_adam, abs=1e-5)
            n_adam = adam.step(g_adam).n
            n_sgc = sgc.step(g_sgc).n
            assert np.allclose(n_sgc, n_adam, atol=1e-6, rtol=0)
            w_adam = apply_update(w_adam, n_adam, cfg.eta)
            w_sgc = apply_update(w_sgc, n_sgc, cfg.eta)

    def test_zero_gradient(self):
        cfg = SgcConfig(s_c=4, kappa=8)
        state = sgc_state(64, cfg)
        out = sgc_step(np.zeros(64), state, cfg)
        assert np.all(out.n == 0.0)
        assert out.recovered_support_size == 0
        assert np.all(state.m == 0.0) and np.all(state.v == 0.0)

    def test_single_step_follows_gradient_signs(self):
        cfg = SgcConfig(s_c=4, kappa=8, seed=1)
        g = np.zeros(64)
        g[[5, 17, 40, 63]] = [0.3, -1.2, 2.0, -0.05]
        out = sgc_step(g, sgc_state(64, cfg), cfg)
        support = np.flatnonzero(out.n)
        assert support.tolist() == [5, 17, 40, 63]
        assert np.array_equal(np.sign(out.n[support]), np.sign(g[support]))
        assert np.allclose(out.n[support], np.sign(g[support]), atol=1e-6)

    def test_sgc_needs_one_chunk(self):
        cfg = SgcConfig(c=2)
        with pytest.raises(ConfigError):
            sgc_step(np.ones(64), sgc_state(64, cfg), cfg)
        with pytest.raises(ConfigError):
            SGC(64, cfg)

    def test_non_finite_gradient(self):
        cfg = SgcConfig(s_c=2, kappa=4)
        with pytest.raises(InvalidGradientError):
            sgc_step(np.full(32, np.inf), sgc_state(32, cfg), cfg)

    @pytest.mark.parametrize("second_moment", [-1.0, 0.0, 1e-20])
    def test_inconsistent_entry_gives_no_update(self, second_moment):
        cfg = lossless(8)
        state = sgc_state(8, cfg)
        state.m[3] = 1.0
        state.v[3] = second_moment
        out = sgc_step(np.zeros(8), state, cfg)
        assert out.recovered_support_size == 1
        assert np.all(out.n == 0.0)

    def test_consistent_entry_is_kept(self):
        cfg = lossless(8)
        state = sgc_state(8, cfg)
        state.m[3] = 1.0
        state.v[3] = 1.0
        out = sgc_step(np.zeros(8), state, cfg)
        assert out.n[3] > 0

    @pytest.mark.parametrize("name", ["adamw", "sgc"])
    def test_loss_non_increasing_after_warmup(self, name):
        d = 64
        cfg = lossless(d, eta=1e-3)
        problem = make_problem("quadratic", d, seed=3)
        optimizer = make_optimizer(name, d, cfg)
        w = problem.initial_params()
        losses = []
        for _ in range(100):
            loss, grad = problem.loss_and_grad(w)
            losses.append(loss)
            w = apply_update(w, optimizer.step(grad).n, cfg.eta)
        assert np.all(np.diff(losses[10:]) <= 0.0)


class TestMesgc:
    def test_one_chunk_equals_sgc(self):
        cfg = SgcConfig(s_c=3, kappa=6, seed=2)
        rng = Rng(5)
        state_a = sgc_state(48, cfg)
        state_b = sgc_state(48, cfg)
        for _ in range(4):
            g = rng.normal(48)
            assert np.array_equal(sgc_step(g, state_a, cfg).n, mesgc_step(g, state_b, cfg).n)
        assert np.array_equal(state_a.m, state_b.m)

    def test_state_size_independent_of_dimension(self):
        cfg = SgcConfig(c=4, s_c=4, kappa=8)
        assert MESGC(256, cfg).state_size == MESGC(1024, cfg).state_size == 2 * cfg.k

    def test_chunked_update_support(self):
        cfg = SgcConfig(c=4, s_c=2, kappa=8, seed=4)
        g = Rng(6).normal(256)
        out = MESGC(256, cfg).step(g)
        for i in range(4):
            assert np.count_nonzero(out.n[i * 64:(i + 1) * 64]) <= cfg.recovery_budget
        assert out.recovered_support_size <= cfg.s

    def test_indivisible_dimension(self):
        with pytest.raises(InvalidChunkingError):
            MESGC(30, SgcConfig(c=4))

    def test_gram_budget_does_not_change_steps(self):
        rng = Rng(7)
        stored = MESGC(128, SgcConfig(c=2, s_c=2, kappa=8))
        on_demand = MESGC(128, SgcConfig(c=2, s_c=2, kappa=8, gram_budget=0))
        assert not on_demand.state.gram.precomputed
        for _ in range(3):
            g = rng.normal(128)
            assert np.allclose(stored.step(g).n, on_demand.step(g).n, atol=1e-9)


class TestCesgc:
    def test_rank_one_projection_captures_gradient(self):
        u = Rng(1).normal(8)
        v = Rng(2).normal(16)
        G = np.outer(u, v)
        cfg = SgcConfig(rank_r=1, s_c=2, kappa=8)
        state = cesgc_state((8, 16), cfg)
        cesgc_step(G, state, cfg)
        assert state.B.shape == (1, 8)
        assert np.linalg.norm(G - state.B.T @ (state.B @ G)) <= 1e-8

    def test_orthogonal_invariance_in_lossless_limit(self):
        m, n = 4, 6
        rows, _ = np.linalg.qr(Rng(3).normal((n, m)))
        G = np.diag([4.0, 3.0, 2.0, 1.0]) @ rows.T
        cfg = lossless(m * n, rank_r=m)
        out = cesgc_step(G, cesgc_state((m, n), cfg), cfg)
        expected = sgc_step(G.ravel(), sgc_state(m * n, cfg), cfg)
        assert np.allclose(out.n, expected.n, atol=1e-5)

    def test_refresh_schedule(self):
        cfg = SgcConfig(rank_r=1, s_c=1, kappa=4, svd_refresh_T=3)
        optimizer = CESGC(32, cfg, shape=(4, 8))
        rng = Rng(4)
        projections = []
        for _ in range(4):
            optimizer.step(rng.normal(32))
            projections.append(optimizer.state.B.copy())
        assert np.array_equal(projections[0], projections[1])
        assert np.array_equal(projections[1], projections[2])
        assert not np.array_equal(projections[2], projections[3])

    def test_rank_larger_than_rows(self):
        with pytest.raises(InvalidRankError):
            cesgc_state((2, 8), SgcConfig(rank_r=3))


class TestResample:
    def test_zero_moments_only_replace_matrix(self):
        cfg = SgcConfig(s_c=2, kappa=4, resample_T=5)
        state = sgc_state(32, cfg)
        A = state.A.copy()
        sgca_resample(state, cfg)
        assert not np.array_equal(state.A, A)
        assert np.all(state.m == 0.0) and np.all(state.v == 0.0)
        assert state.resample_count == 1
        assert np.array_equal(state.A, projection_matrix(cfg, 8, 32, 0, 1))

    def test_disabled(self):
        cfg = SgcConfig(s_c=2, kappa=4)
        optimizer = MESGC(32, cfg)
        A = optimizer.state.A.copy()
        rng = Rng(5)
        for _ in range(10):
            optimizer.step(rng.normal(32))
        assert optimizer.state.resample_count == 0
        assert np.array_equal(optimizer.state.A, A)

    def test_period(self):
        cfg = SgcConfig(s_c=2, kappa=4, resample_T=3, seed=9)
        optimizer = MESGC(32, cfg, group_id=2)
        rng = Rng(6)
        for _ in range(7):
            optimizer.step(rng.normal(32))
        assert optimizer.state.resample_count == 2
        assert np.array_equal(optimizer.state.A, projection_matrix(cfg, 8, 32, 2, 2))

    def test_realigned_moments_recover_the_same_vector(self):
        cfg = SgcConfig(s_c=2, kappa=8, resample_T=1, seed=3)
        state = sgc_state(64, cfg)
        g = np.zeros(64)
        g[[10, 50]] = [1.0, -2.0]
        sgc_step(g, state, cfg)
        expected = np.zeros(64)
        expected[[10, 50]] = 0.1 * g[[10, 50]]
        assert np.allclose(state.m, state.A @ expected, atol=1e-10)
        assert state.resample_count == 1

    def test_representable_moments_survive_resample(self):
        cfg = SgcConfig(s_c=1, kappa=8, resample_T=4, seed=12)
        state = sgc_state(64, cfg)
        x = np.zeros(64)
        x[37] = -0.75
        state.m[:] = state.A @ x
        state.v[:] = state.A @ (x * x)
        sgca_resample(state, cfg)
        recovered = omp_cholesky(state.A, state.gram, state.m, 1)
        assert np.allclose(recovered.estimate.densify(), x, atol=1e-6)
        second = omp_cholesky(state.A, state.gram, state.v, 1)
        assert np.allclose(second.estimate.densify(), x * x, atol=1e-6)


class TestUpdates:
    def test_zero_direction(self):
        w = np.array([1.0, -2.0])
        assert np.array_equal(apply_update(w, np.zeros(2), 0.1), w)

    def test_zero_rate(self):
        w = np.array([1.0, -2.0])
        assert np.array_equal(apply_update(w, np.ones(2), 0.0), w)

    def test_arithmetic(self):
        assert np.array_equal(apply_update([1.0, 1.0], [2.0, -2.0], 0.5), [0.0, 2.0])

    def test_weight_decay(self):
        assert np.allclose(apply_update([2.0], [0.0], 0.1, weight_decay=0.5), [1.9])

    def test_in_place(self):
        w = np.array([1.0, 1.0])
        apply_update_(w, np.array([2.0, -2.0]), 0.5)
        assert np.array_equal(w, [0.0, 2.0])


class TestFactory:
    def test_names(self):
        cfg = SgcConfig(s_c=1, kappa=4)
        for name, cls in [("sgd", SGD), ("adamw", AdamW), ("SGC", SGC), ("mesgc", MESGC),
                          ("cesgc", CESGC)]:
            assert isinstance(make_optimizer(name, 16, cfg), cls)
        with pytest.raises(ConfigError):
            make_optimizer("lion", 16, cfg)

    def test_can_compress(self):
        cfg = SgcConfig(c=4, s_c=2, kappa=8)
        assert can_compress("adamw", 3, cfg)
        assert can_compress("mesgc", 256, cfg)
        assert not can_compress("mesgc", 30, cfg)
        assert not can_compress("mesgc", 32, cfg)
        assert not can_compress("cesgc", 16, SgcConfig(rank_r=5), shape=(4, 4))

    def test_sgd_direction_is_gradient(self):
        g = np.array([1.0, -3.0])
        assert np.array_equal(SGD(2, SgcConfig()).step(g).n, g)
        assert SGD(2, SgcConfig()).state_size == 0


BASELINE_CSV = "adamw_logistic_d256.csv"
BASELINE_PROBLEM = {"kind": "logistic-regression", "dims": 256, "n_samples": 512, "l2": 0.1}
BASELINE_CFG = SgcConfig(c=4, s_c=4, kappa=8, eta=0.01)
BASELINE_STEPS = 1000
SEEDS = range(5)


def final_losses(optimizer, cfg, steps, **problem_changes):
    losses = []
    for seed in SEEDS:
        problem = make_problem(seed=seed, **dict(BASELINE_PROBLEM, **problem_changes))
        losses.append(train(problem, optimizer, cfg.replace(seed=seed), steps).final_loss)
    return np.array(losses)


@pytest.mark.slow
class TestConvergence:
    header = {
        "problem": BASELINE_PROBLEM,
        "optimizer": "adamw",
        "config": BASELINE_CFG.to_dict(),
        "steps": BASELINE_STEPS,
    }

    def test_adamw_baseline_matches_golden(self, golden):
        losses = final_losses("adamw", BASELINE_CFG, BASELINE_STEPS)
        frame = pd.DataFrame({"seed": list(SEEDS), "final_loss": losses})
        golden.check(BASELINE_CSV, frame, self.header)

    def test_mesgc_close_to_adamw_on_logistic(self, golden):
        header, baseline = golden.load(BASELINE_CSV)
        assert header == header_lines(self.header)
        compressed = final_losses("mesgc", BASELINE_CFG, BASELINE_STEPS)
        ratios = compressed / baseline["final_loss"].to_numpy()
        assert np.median(ratios) <= 1.10

    @staticmethod
    def _median_loss(**changes):
        cfg = SgcConfig(kappa=8, eta=0.01, **changes)
        return float(np.median(final_losses("mesgc", cfg, 300, energy_profile="skewed")))

    def test_more_chunks_at_fixed_sparsity_do_not_help(self):
        losses = [self._median_loss(c=c, s_c=16 // c) for c in (2, 4, 8, 16)]
        assert all(b >= a for a, b in zip(losses, losses[1:]))

    def test_more_sparsity_per_chunk_helps(self):
        losses = [self._median_loss(c=4, s_c=s_c) for s_c in (1, 2, 4, 8)]
        assert all(b <= a for a, b in zip(losses, losses[1:]))


class TestStateProperties:
    def test_moments_are_linear_in_projected_gradients(self):
        cfg = SgcConfig(s_c=3, kappa=4, seed=8)
        state = sgc_state(40, cfg)
        rng = Rng(10)
        support = [4, 19, 33]
        expected = np.zeros(cfg.k)
        for _ in range(6):
            g = np.zeros(40)
            g[support] = rng.normal(3)
            sgc_step(g, state, cfg)
            expected = cfg.beta1 * expected + (1 - cfg.beta1) * (state.A @ g)
        assert np.allclose(state.m, expected, atol=1e-8)

    def test_equal_seeds_give_equal_steps(self):
        cfg = SgcConfig(c=2, s_c=2, kappa=4, seed=5)
        a, b = MESGC(64, cfg), MESGC(64, cfg)
        rng = Rng(11)
        for _ in range(4):
            g = rng.normal(64)
            assert np.array_equal(a.step(g).n, b.step(g).n)

    def test_groups_draw_different_matrices(self):
        cfg = SgcConfig(s_c=2, kappa=4)
        assert not np.array_equal(MESGC(32, cfg, group_id=0).state.A,
                                  MESGC(32, cfg, group_id=1).state.A)
