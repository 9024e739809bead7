"""Tests for the augmented-Lagrangian outer loop and its subproblem objective."""

import numpy as np
import pytest

from stiefelbb import (
    AugLagConfig,
    AugLagSubproblem,
    FixedEntrySet,
    LowRankCorrProblem,
    SolverConfig,
    auglag_objective,
    auglag_solve,
    ex3_matrix,
    gen_ex3,
    modified_pca_init,
    sample_fixed_entries,
    solve,
)


def synthetic_weak_instance():
    """n=50 factor-model correlation target with the 10 weakest strict-lower
    pairs prescribed to zero."""
    rng = np.random.default_rng(0)
    a = rng.standard_normal((50, 8))
    m = a @ a.T + 0.5 * np.eye(50)
    d = np.sqrt(np.diag(m))
    c = m / np.outer(d, d)
    c = 0.5 * (c + c.T)
    il, jl = np.tril_indices(50, k=-1)
    order = np.argsort(np.abs(c[il, jl]))[:10]
    fes = FixedEntrySet(il[order] + 1, jl[order] + 1, np.zeros(10))
    return LowRankCorrProblem(c, 5, name="synthetic"), fes


def unit_columns(v, tol=1e-12):
    return np.abs(np.linalg.norm(v, axis=0) - 1.0).max() <= tol


class TestSubproblemObjective:
    def test_empty_entry_set_is_exactly_the_base(self):
        base = gen_ex3(20, weighted=True, seed=1, r=3)
        fes = FixedEntrySet([], [], [])
        sub = AugLagSubproblem(base, fes, np.zeros((20, 20)), 1.0)
        rng = np.random.default_rng(2)
        v = rng.standard_normal((3, 20))
        v /= np.linalg.norm(v, axis=0)
        fb, gb = base.fg(v)
        fs, gs = sub.fg(v)
        assert fs == fb
        assert np.array_equal(gs, gb)
        assert sub.value(v) == base.value(v)

    def test_satisfied_entries_contribute_nothing(self):
        # columns v1 = v2 = e1, v3 = e2 satisfy (2,1)->1 and (3,1)->0 exactly
        base = LowRankCorrProblem(ex3_matrix(3), 2)
        fes = FixedEntrySet([2, 3], [1, 1], [1.0, 0.0])
        v = np.array([[1.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
        sub = AugLagSubproblem(base, fes, np.zeros((3, 3)), 25.0)
        assert sub.value(v) == base.value(v)
        assert np.array_equal(sub.grad(v), base.grad(v))

    def test_per_entry_penalty_oracle(self):
        base = gen_ex3(12, weighted=False, r=3)
        fes = sample_fixed_entries(12, 2, seed=3)
        rng = np.random.default_rng(4)
        lam_raw = rng.standard_normal((12, 12))
        lam = fes.mask(12) * (lam_raw + lam_raw.T)  # symmetric, supported on B_e
        mu = 7.5
        v = rng.standard_normal((3, 12))
        v /= np.linalg.norm(v, axis=0)
        sub = AugLagSubproblem(base, fes, lam, mu)
        expected = base.value(v)
        for i, j, q in fes:
            c_e = float(v[:, i - 1] @ v[:, j - 1]) - q
            expected += 0.5 * mu * (c_e - lam[i - 1, j - 1] / mu) ** 2
        assert sub.value(v) == pytest.approx(expected, rel=1e-13)

    def test_finite_difference_gradient(self):
        base = gen_ex3(10, weighted=True, seed=5, r=3)
        fes = sample_fixed_entries(10, 2, seed=6)
        rng = np.random.default_rng(7)
        lam_raw = rng.standard_normal((10, 10))
        lam = fes.mask(10) * (lam_raw + lam_raw.T)
        mu = 3.25
        v = rng.standard_normal((3, 10))
        v /= np.linalg.norm(v, axis=0)
        pair = auglag_objective(v, base, fes, lam, mu)
        h = 1e-6
        for _ in range(5):
            z = rng.standard_normal(v.shape)
            z /= np.linalg.norm(z)
            fd = (
                auglag_objective(v + h * z, base, fes, lam, mu).value
                - auglag_objective(v - h * z, base, fes, lam, mu).value
            ) / (2.0 * h)
            assert abs(float(np.vdot(pair.euclid_grad, z)) - fd) <= 1e-5 * max(
                1.0, abs(fd)
            )

    def test_validation(self):
        base = gen_ex3(8, weighted=False, r=2)
        fes = sample_fixed_entries(8, 1, seed=8)
        with pytest.raises(ValueError):
            AugLagSubproblem(base, fes, np.zeros((8, 8)), 0.0)
        with pytest.raises(ValueError):
            AugLagSubproblem(base, fes, np.zeros((4, 4)), 1.0)

    def test_metadata_and_consistency(self):
        base = gen_ex3(8, weighted=False, r=2)
        fes = sample_fixed_entries(8, 1, seed=9)
        sub = AugLagSubproblem(base, fes, np.zeros((8, 8)), 2.0)
        assert sub.shape == base.shape
        assert sub.name == "ex3+auglag"
        assert sub.manifold == "spheres"
        rng = np.random.default_rng(10)
        v = rng.standard_normal((2, 8))
        v /= np.linalg.norm(v, axis=0)
        f, g = sub.fg(v)
        assert f == sub.value(v)
        assert np.array_equal(g, sub.grad(v))


class TestAugLagSolve:
    def test_empty_entry_set_single_solve(self):
        base = gen_ex3(25, weighted=False, r=3)
        rep = auglag_solve(base, FixedEntrySet([], [], []))
        assert rep.stop_reason == "NuTarget"
        assert rep.nu_final == 0.0
        assert rep.nu_trace == [0.0]
        assert rep.mu_trace == [1.0]
        assert rep.outer_iters == 1
        assert len(rep.sub_reports) == 1
        assert np.array_equal(rep.lambda_final, np.zeros((25, 25)))
        assert rep.theta_final == rep.sub_reports[0].f_final
        assert rep.nlcmres_final == pytest.approx(
            base.nlcmres(rep.v_final), rel=1e-15
        )
        assert rep.f_initial == rep.sub_reports[0].f_history[0]
        assert unit_columns(rep.v_final, tol=1e-12)

    def test_weak_pairs_instance_meets_target_and_penalty_oracle(self):
        base, fes = synthetic_weak_instance()
        rep = auglag_solve(base, fes)
        assert rep.stop_reason == "NuTarget"
        assert rep.nu_final <= 3e-8
        assert unit_columns(rep.v_final)
        # outer-loop bookkeeping
        k = rep.outer_iters
        assert len(rep.nu_trace) == len(rep.mu_trace) == len(rep.sub_reports) == k
        assert rep.mu_trace == [10.0**i for i in range(k)]
        assert rep.nfge_total == sum(r.nfge for r in rep.sub_reports)
        assert rep.iters_total == sum(r.iters for r in rep.sub_reports)
        assert rep.theta_final == pytest.approx(base.value(rep.v_final), rel=1e-15)
        # independent oracle: warm-started pure-penalty continuation to mu=1e10
        v = modified_pca_init(base.c, base.r)
        zero = np.zeros((base.n, base.n))
        for i in range(11):
            sub = AugLagSubproblem(base, fes, zero, 10.0**i)
            v = solve(
                sub, v, SolverConfig(eps=1e-5, eps_x=1e-5, eps_f=1e-8, max_iter=2000)
            ).x_final
        theta_pen = base.value(v)
        assert abs(rep.theta_final - theta_pen) <= 1e-3 * max(1.0, abs(theta_pen))

    def test_hard_instance_reduces_violation_by_orders_of_magnitude(self):
        base = gen_ex3(40, weighted=False, r=5)
        fes = sample_fixed_entries(40, 1, seed=7)
        rep = auglag_solve(base, fes)
        assert rep.stop_reason in ("NuTarget", "NuStall")
        assert rep.nu_final <= 1e-6
        assert rep.nu_trace[0] > 1.0  # starts badly violated
        assert rep.nu_final < rep.nu_trace[0] * 1e-6

    def test_single_outer_multiplier_update(self):
        base, fes = synthetic_weak_instance()
        rep = auglag_solve(base, fes, AugLagConfig(max_outer=1))
        v1 = rep.v_final
        he = fes.mask(base.n)
        expected = -1.0 * (he * (v1.T @ v1 - fes.target_matrix(base.n)))
        assert np.array_equal(rep.lambda_final, expected)

    def test_outer_cap_flag(self):
        base = gen_ex3(40, weighted=False, r=5)
        fes = sample_fixed_entries(40, 1, seed=7)
        rep = auglag_solve(base, fes, AugLagConfig(max_outer=1))
        assert rep.stop_reason == "OuterCap"
        assert rep.hit_outer_cap is True
        assert rep.outer_iters == 1

    def test_pure_penalty_ladder_monotone(self):
        base = gen_ex3(40, weighted=False, r=5)
        fes = sample_fixed_entries(40, 1, seed=7)
        v0 = modified_pca_init(base.c, 5)
        zero = np.zeros((40, 40))
        nus = []
        for mu in (1.0, 10.0, 100.0, 1000.0):
            sub = AugLagSubproblem(base, fes, zero, mu)
            r = solve(
                sub, v0, SolverConfig(eps=1e-5, eps_x=1e-5, eps_f=1e-8, max_iter=4000)
            )
            nus.append(fes.violation(r.x_final))
        assert all(a > b for a, b in zip(nus, nus[1:]))

    def test_supplied_start_is_used(self):
        base, fes = synthetic_weak_instance()
        rng = np.random.default_rng(11)
        v0 = rng.standard_normal(base.shape)
        v0 /= np.linalg.norm(v0, axis=0)
        rep = auglag_solve(base, fes, AugLagConfig(max_outer=1), v0=v0)
        first = AugLagSubproblem(base, fes, np.zeros((base.n, base.n)), 1.0)
        assert rep.f_initial == first.value(v0)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            AugLagConfig(mu0=0.0)
        with pytest.raises(ValueError):
            AugLagConfig(mu_growth=1.0)
        with pytest.raises(ValueError):
            AugLagConfig(shrink=1.0)
        with pytest.raises(ValueError):
            AugLagConfig(max_outer=0)
