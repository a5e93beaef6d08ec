import math

import cvxpy as cp
import numpy as np
import pytest
from scipy.optimize import linprog

from wpir.core import InfeasibleError, binary_entropy
from wpir.metrics import maxl_leakage, mi_leakage
from wpir.optimizer import (
    OptProblem,
    lmo,
    maxl_objective,
    maxl_smoothed,
    mi_objective,
    minimize_leakage,
    rate_leakage_curve,
    smoothing_error,
)
from wpir.wrappers import drop_index, partition_tuple_a, timeshare_dist_a


def random_feasible(rng, M, n, c):
    K = n ** (M - 1)
    w = rng.dirichlet(np.full(K, 0.5))
    z = (1 - c) * w
    z[0] += c
    return z


# Independent oracles -------------------------------------------------------


def cvx_mi(M, n, D):
    """Minimize per-server MI written as an average of KL divergences, solved by a conic solver."""
    K = n ** (M - 1)
    idx = drop_index(M, n)
    rows = [np.eye(K)[idx[:, m]] / n for m in range(M)]
    avg = sum(rows) / M
    z = cp.Variable(K, nonneg=True)
    obj = sum(cp.sum(cp.rel_entr(R @ z, avg @ z)) for R in rows) / (M * math.log(2))
    cons = [cp.sum(z) == 1, z[0] >= n - D]
    prob = cp.Problem(cp.Minimize(obj), cons)
    prob.solve(solver=cp.CLARABEL)
    return prob.value


def lp_maxl(M, n, D):
    """Exact MaxL optimum as an LP: minimize (1/n) sum_q t_q with t_q >= z[q without m]."""
    K = n ** (M - 1)
    idx = drop_index(M, n)
    Q = idx.shape[0]
    c = np.concatenate([np.zeros(K), np.full(Q, 1.0 / n)])
    A, b = [], []
    for q in range(Q):
        for m in range(M):
            row = np.zeros(K + Q)
            row[idx[q, m]] = 1.0
            row[K + q] = -1.0
            A.append(row)
            b.append(0.0)
    floor = np.zeros(K + Q)
    floor[0] = -1.0
    A.append(floor)
    b.append(-(n - D))
    eq = np.concatenate([np.ones(K), np.zeros(Q)])[None, :]
    res = linprog(c, A_ub=np.array(A), b_ub=b, A_eq=eq, b_eq=[1.0], bounds=(0, None), method="highs")
    assert res.status == 0
    return res.fun


# Objectives ----------------------------------------------------------------


class TestObjectives:
    def test_examples(self):
        assert mi_objective(np.full(4, 0.25), 3, 2)[0] == pytest.approx(0.0, abs=1e-12)
        for p in (0.0, 0.1, 0.25, 0.5):
            z = np.array([1 - p, p])
            assert mi_objective(z, 2, 2)[0] == pytest.approx((1 - binary_entropy(p)) / 2, abs=1e-12)
            assert maxl_objective(z, 2, 2)[0] == pytest.approx(0.5 + (1 - p), abs=1e-15)
        assert maxl_objective(np.full(9, 1 / 9), 3, 3)[0] == pytest.approx(1.0)
        assert maxl_objective(np.array([1.0, 0.0]), 2, 2)[0] == 1.5

    def test_point_mass_consistency(self):
        for M, n in [(2, 2), (3, 2), (3, 3)]:
            z = np.eye(n ** (M - 1))[0]
            assert mi_objective(z, M, n)[0] == pytest.approx(mi_leakage(timeshare_dist_a(M, n, z)), abs=1e-12)

    @pytest.mark.parametrize("M,n", [(2, 2), (3, 2), (2, 3), (3, 3), (4, 2)])
    def test_match_metrics_on_random_points(self, M, n):
        rng = np.random.default_rng(M * 7 + n)
        for _ in range(100):
            z = rng.dirichlet(np.full(n ** (M - 1), 0.7))
            if rng.random() < 0.3:
                z[rng.integers(len(z))] = 0.0
                z /= z.sum()
            d = timeshare_dist_a(M, n, z)
            assert mi_objective(z, M, n)[0] == pytest.approx(mi_leakage(d), abs=1e-12)
            assert math.log2(maxl_objective(z, M, n)[0]) == pytest.approx(maxl_leakage(d), abs=1e-12)

    def test_mi_gradient_finite_difference(self):
        rng = np.random.default_rng(1)
        z = rng.dirichlet(np.ones(9))
        _, g = mi_objective(z, 3, 3)
        for _ in range(10):
            d = rng.normal(size=9)
            d -= d.mean()
            h = 1e-6
            fd = (mi_objective(z + h * d, 3, 3)[0] - mi_objective(z - h * d, 3, 3)[0]) / (2 * h)
            assert g @ d == pytest.approx(fd, rel=1e-5, abs=1e-8)

    def test_gradient_finite_at_zero(self):
        _, g = mi_objective(np.array([1.0, 0.0, 0.0, 0.0]), 3, 2)
        assert np.all(np.isfinite(g))

    def test_smoothing_bound(self):
        rng = np.random.default_rng(2)
        for tau in (1e-1, 1e-2, 1e-3):
            z = rng.dirichlet(np.ones(8))
            exact = maxl_objective(z, 4, 2)[0]
            smooth = maxl_smoothed(z, 4, 2, tau)[0]
            assert exact - 1e-12 <= smooth <= exact + smoothing_error(4, 2, tau) + 1e-12

    @pytest.mark.parametrize("M,n", [(3, 2), (2, 3), (3, 3)])
    def test_convexity_on_segments(self, M, n):
        rng = np.random.default_rng(M + 11 * n)
        for _ in range(50):
            c = rng.uniform(0, 0.6)
            a, b = random_feasible(rng, M, n, c), random_feasible(rng, M, n, c)
            for lam in (0.2, 0.5, 0.8):
                mid = lam * a + (1 - lam) * b
                for f in (mi_objective, maxl_objective):
                    chord = lam * f(a, M, n)[0] + (1 - lam) * f(b, M, n)[0]
                    assert f(mid, M, n)[0] <= chord + 1e-9


class TestLmo:
    def test_examples(self):
        assert lmo([1, 0], 0.3).tolist() == pytest.approx([0.3, 0.7])
        assert lmo([0, 1], 0.3).tolist() == pytest.approx([1.0, 0.0])
        assert lmo([2, 1, 1], 0.3).tolist() == pytest.approx([0.3, 0.7, 0.0])

    def test_infeasible_floor(self):
        with pytest.raises(InfeasibleError):
            lmo([0, 1], 1.2)


# Solver --------------------------------------------------------------------


class TestMinimize:
    def test_maxl_example(self):
        res = minimize_leakage(OptProblem(2, 2, "maxl", 1.25))
        assert res.z_star.probs.tolist() == pytest.approx([0.75, 0.25], abs=1e-6)
        assert res.objective == pytest.approx(math.log2(1.25), abs=1e-6)
        assert res.converged and res.fw_gap <= 1e-6

    def test_mi_example(self):
        res = minimize_leakage(OptProblem(2, 2, "mi", 1.25))
        assert res.objective == pytest.approx(0.0943609, abs=1e-6)
        assert res.rate(2) == pytest.approx(0.8, abs=1e-9)

    @pytest.mark.parametrize("M,n", [(2, 2), (3, 2), (3, 3)])
    @pytest.mark.parametrize("metric", ["mi", "maxl"])
    def test_slack_budget_is_private(self, M, n, metric):
        res = minimize_leakage(OptProblem(M, n, metric, float(n)))
        assert res.objective <= 1e-6

    def test_infeasible(self):
        with pytest.raises(InfeasibleError):
            OptProblem(3, 3, "mi", 1.9)
        with pytest.raises(ValueError):
            OptProblem(3, 3, "wil", 2.5)

    def test_floor_one_is_point_mass(self):
        res = minimize_leakage(OptProblem(3, 2, "mi", 1.0))
        assert res.z0 == 1.0
        assert res.rate(2) == 1.0

    @pytest.mark.parametrize("M,n,D", [(3, 2, 1.3), (3, 3, 2.2), (4, 2, 1.5), (2, 3, 2.1)])
    def test_mi_matches_conic_solver(self, M, n, D):
        res = minimize_leakage(OptProblem(M, n, "mi", D))
        ref = cvx_mi(M, n, D)
        assert res.converged
        assert res.objective == pytest.approx(ref, abs=1e-6)

    @pytest.mark.parametrize("M,n,D", [(2, 2, 1.1), (3, 2, 1.3), (3, 3, 2.2), (4, 2, 1.5), (2, 3, 2.1)])
    def test_maxl_matches_lp(self, M, n, D):
        res = minimize_leakage(OptProblem(M, n, "maxl", D))
        best = lp_maxl(M, n, D)
        assert best - 1e-9 <= res.value <= best + res.fw_gap + 1e-9

    @pytest.mark.parametrize("metric", ["mi", "maxl"])
    def test_feasibility_and_monotone_history(self, metric):
        rng = np.random.default_rng(4)
        for M, n in [(3, 2), (3, 3), (4, 2)]:
            D = float(rng.uniform(n - 1, n - 0.3))
            res = minimize_leakage(OptProblem(M, n, metric, D))
            z = res.z_star.probs
            assert z.min() >= -1e-9
            assert z.sum() == pytest.approx(1.0, abs=1e-9)
            assert z[0] >= n - D - 1e-9
            bounds = list(res.stages) + [len(res.history)]
            for lo, hi in zip(bounds, bounds[1:]):
                seg = np.array(res.history[lo:hi])
                assert np.all(np.diff(seg) <= 1e-12 * np.maximum(1.0, np.abs(seg[:-1])))

    def test_open_loop(self):
        res = minimize_leakage(OptProblem(2, 2, "mi", 1.25), method="open_loop", tol=1e-5)
        assert res.objective == pytest.approx(0.0943609, abs=1e-4)
        with pytest.raises(ValueError):
            minimize_leakage(OptProblem(2, 2, "mi", 1.25), method="newton")

    def test_deterministic(self):
        a = minimize_leakage(OptProblem(3, 3, "maxl", 2.3))
        b = minimize_leakage(OptProblem(3, 3, "maxl", 2.3))
        assert a.z_star.probs.tolist() == b.z_star.probs.tolist()


class TestCurve:
    def test_22_mi_endpoints(self):
        pts = rate_leakage_curve(2, 2, "mi", [1.0, 1.5])
        assert (pts[0].rate, pts[0].rho) == pytest.approx((1.0, 0.5), abs=1e-9)
        assert (pts[1].rate, pts[1].rho) == pytest.approx((2 / 3, 0.0), abs=1e-9)

    def test_22_maxl_matches_formula(self):
        grid = np.linspace(1.0, 1.5, 11)
        for pt in rate_leakage_curve(2, 2, "maxl", grid, jobs=2):
            assert pt.rho == pytest.approx(math.log2(2.5 - pt.D), abs=1e-6)
            assert pt.rate == pytest.approx(1 / pt.D, abs=1e-9)

    def test_infeasible_grid(self):
        with pytest.raises(InfeasibleError):
            rate_leakage_curve(2, 2, "mi", [0.9])

    @pytest.mark.slow
    def test_63_dominates_partition_points(self):
        M, n = 6, 3
        for eta in (1, 2, 3):
            part = partition_tuple_a(M, n, eta)
            D = (n - 1) / part.rate
            (pt,) = rate_leakage_curve(M, n, "mi", [D])
            assert pt.rate >= part.rate - 1e-9
            assert pt.rho <= part.rho_mi + 1e-6
