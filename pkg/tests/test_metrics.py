import math
from fractions import Fraction

import numpy as np
import pytest

from wpir.core import CapacityError, CondQueryDist, Query, ServerQueryDist, binary_entropy, capacity
from wpir.metrics import (
    access_complexity,
    cond_query_dist,
    download_cost,
    epsp_leakage,
    evaluate_tradeoff,
    maxl_leakage,
    maxl_per_server,
    mi_leakage,
    mi_per_server,
    mix,
    rate,
    upload_cost,
    wil_leakage,
)
from wpir.scheme_a import SchemeA, bernoulli_strategy_a, bernoulli_tuple_a, uniform_strategy_a
from wpir.scheme_b import SchemeB, bernoulli_strategy_b, sphere_strategy_b


# Plain-loop references straight from the definitions, independent of the vectorized code.
def ref_mi(mat):
    M, K = len(mat), len(mat[0])
    total = 0.0
    for m in range(M):
        for k in range(K):
            pq = sum(mat[i][k] for i in range(M)) / M
            if mat[m][k] > 0:
                total += mat[m][k] / M * math.log2(mat[m][k] / pq)
    return total


def ref_wil(mat):
    M, K = len(mat), len(mat[0])
    best = math.inf
    for k in range(K):
        col = [mat[m][k] for m in range(M)]
        if sum(col) == 0:
            continue
        post = [c / sum(col) for c in col]
        best = min(best, -sum(x * math.log2(x) for x in post if x > 0))
    return math.log2(M) - best


def ref_maxl(mat):
    return math.log2(sum(max(mat[m][k] for m in range(len(mat))) for k in range(len(mat[0]))))


def single(mat):
    mat = np.asarray(mat, dtype=float)
    sup = tuple(Query((k,), max(2, mat.shape[1])) for k in range(mat.shape[1]))
    return CondQueryDist((ServerQueryDist(sup, mat),))


def table_one(p):
    # (2,2) Scheme A: server 1 sees (0,0) w.p. 1-p and (1,1) w.p. p for both files.
    s1 = single([[1 - p, p], [1 - p, p]]).servers[0]
    s2 = single([[1 - p, p], [p, 1 - p]]).servers[0]
    return CondQueryDist((s1, s2))


def random_dist(rng, M, K, n=2, sparsity=0.0):
    servers = []
    for _ in range(n):
        mat = rng.random((M, K)) + 1e-3
        mat[rng.random((M, K)) < sparsity] = 0.0
        mat[:, 0] += 1e-3
        mat /= mat.sum(axis=1, keepdims=True)
        servers.append(single(mat).servers[0])
    return CondQueryDist(tuple(servers))


class TestLeakageExamples:
    @pytest.mark.parametrize("p", [0.0, 0.1, 0.25, 0.4, 0.5])
    def test_example_one(self, p):
        d = table_one(p)
        assert mi_leakage(d) == pytest.approx((1 - binary_entropy(p)) / 2, abs=1e-12)
        assert wil_leakage(d) == pytest.approx(1 - binary_entropy(p), abs=1e-12)
        assert maxl_leakage(d) == pytest.approx(math.log2(2 * (1 - p)), abs=1e-12)

    def test_table_matches_scheme(self):
        for p in (0.0, 0.3):
            d = cond_query_dist(SchemeA(2, 2, bernoulli_strategy_a(2, p)))
            assert mi_leakage(d) == pytest.approx(mi_leakage(table_one(p)), abs=1e-12)

    def test_deterministic_distinct_queries(self):
        d = single(np.eye(4))
        assert maxl_leakage(d) == pytest.approx(2.0)
        assert wil_leakage(d) == pytest.approx(2.0)
        assert mi_leakage(d) == pytest.approx(2.0)
        assert epsp_leakage(d) == math.inf

    def test_epsp(self):
        assert epsp_leakage(single([[0.5, 0.5], [0.25, 0.75]])) == pytest.approx(math.log(2))
        assert epsp_leakage(table_one(0.0)) == math.inf
        assert epsp_leakage(table_one(0.25)) == pytest.approx(math.log(3))
        assert epsp_leakage(single([[0.5, 0.5, 0.0], [0.5, 0.5, 0.0]])) == 0.0

    def test_wil_ignores_null_queries(self):
        d = single([[0.5, 0.5, 0.0], [0.5, 0.5, 0.0]])
        assert wil_leakage(d) == 0.0

    def test_references_on_random_dists(self):
        rng = np.random.default_rng(7)
        for trial in range(30):
            M = int(rng.integers(2, 6))
            d = random_dist(rng, M, int(rng.integers(2, 9)), sparsity=0.3 * (trial % 2))
            for srv, mi in zip(d.servers, mi_per_server(d)):
                mat = srv.matrix.tolist()
                assert mi == pytest.approx(ref_mi(mat), abs=1e-12)
            assert wil_leakage(d) == pytest.approx(max(ref_wil(s.matrix.tolist()) for s in d.servers), abs=1e-12)
            assert maxl_leakage(d) == pytest.approx(max(ref_maxl(s.matrix.tolist()) for s in d.servers), abs=1e-12)


class TestProperties:
    @pytest.mark.parametrize("M", [2, 3, 4, 5])
    @pytest.mark.parametrize("n", [2, 3])
    def test_uniform_strategy_is_private(self, M, n):
        pt = evaluate_tradeoff(SchemeA(M, n, uniform_strategy_a(M, n)))
        for v in (pt.rho_mi, pt.rho_wil, pt.rho_maxl, pt.rho_epsp):
            assert abs(v) <= 1e-9
        assert pt.rate == pytest.approx(capacity(M, n), abs=1e-12)

    def test_convexity(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            M = int(rng.integers(2, 5))
            K = int(rng.integers(2, 7))
            d1, d2 = random_dist(rng, M, K, sparsity=0.2), random_dist(rng, M, K, sparsity=0.2)
            for lam in (0.25, 0.5, 0.75):
                dm = mix(d1, d2, lam)
                lhs = mi_per_server(dm)
                rhs = lam * mi_per_server(d1) + (1 - lam) * mi_per_server(d2)
                assert np.all(lhs <= rhs + 1e-12)
                lhs2 = 2 ** maxl_per_server(dm)
                rhs2 = lam * 2 ** maxl_per_server(d1) + (1 - lam) * 2 ** maxl_per_server(d2)
                assert np.all(lhs2 <= rhs2 + 1e-12)

    def test_leakage_at_most_log_m(self):
        rng = np.random.default_rng(3)
        for _ in range(40):
            M = int(rng.integers(2, 6))
            d = random_dist(rng, M, int(rng.integers(2, 10)), sparsity=0.5)
            for v in (mi_leakage(d), wil_leakage(d), maxl_leakage(d)):
                assert -1e-12 <= v <= math.log2(M) + 1e-12

    @pytest.mark.parametrize("M", [2, 3, 4, 5])
    def test_closed_forms_on_grid(self, M):
        for p in np.round(np.arange(0, 0.5001, 0.05), 10):
            closed = bernoulli_tuple_a(M, float(p))
            enum = evaluate_tradeoff(SchemeA(M, 2, bernoulli_strategy_a(M, float(p))))
            assert closed.max_abs_diff(enum) <= 1e-9


class TestCosts:
    def test_scheme_a_rate(self):
        for M, n, p in [(2, 2, 0.25), (3, 3, 0.4), (4, 2, 0.1)]:
            s = SchemeA(M, n, bernoulli_strategy_a(M, p, n))
            p0 = (1 - p) ** (M - 1)
            assert rate(s) == pytest.approx((n - 1) / (1 - p0 + n - 1), abs=1e-12)

    def test_scheme_b_rate(self):
        for M, n in [(2, 2), (3, 3), (2, 4)]:
            assert rate(SchemeB(M, n, bernoulli_strategy_b(M, 0.2, n))) == pytest.approx(1 - 1 / n)
        assert rate(SchemeB(3, 2, sphere_strategy_b(3, 1))) == pytest.approx(0.5)

    def test_uniform_rate_is_capacity(self):
        assert rate(SchemeA(3, 2)) == pytest.approx((1 - 1 / 2) / (1 - 1 / 8))

    def test_upload_and_access(self):
        s = SchemeA(2, 2, bernoulli_strategy_a(2, 0.25))
        assert upload_cost(cond_query_dist(s)) == pytest.approx(1 + binary_entropy(0.25), abs=1e-12)
        assert access_complexity(s) == pytest.approx(1.5)
        assert download_cost(s) == pytest.approx(1.25)

    def test_deterministic_upload_is_zero(self):
        d = single([[1.0, 0.0], [1.0, 0.0]])
        assert upload_cost(d) == 0.0

    def test_evaluate_examples(self):
        pt = evaluate_tradeoff(SchemeA(2, 2, bernoulli_strategy_a(2, 0.5)))
        assert (pt.rate, pt.rho_mi) == pytest.approx((2 / 3, 0.0), abs=1e-12)
        pt = evaluate_tradeoff(SchemeA(2, 2, bernoulli_strategy_a(2, 0.0)))
        assert (pt.rate, pt.rho_mi) == pytest.approx((1.0, 0.5), abs=1e-12)
        pt = evaluate_tradeoff(SchemeA(2, 2, bernoulli_strategy_a(2, 0.25)))
        assert (pt.rate, pt.rho_mi) == pytest.approx((0.8, 0.0943609), abs=1e-7)

    def test_capacity_cap(self):
        with pytest.raises(CapacityError):
            evaluate_tradeoff(SchemeA(4, 3), cap=10)

    def test_exact_fractions_example(self):
        # Expected download of (4,2) Scheme A with Bern(3/10): 1 - (7/10)^3 + 1.
        s = SchemeA(4, 2, bernoulli_strategy_a(4, 0.3))
        assert download_cost(s) == pytest.approx(float(1 - Fraction(7, 10) ** 3 + 1), abs=1e-12)
