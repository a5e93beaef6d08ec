"""Leakage minimization for time-shared Scheme A under a download budget.

The decision variable is the mask law z over [0:n-1]^(M-1) (index 0 is the
all-zero mask). The download cost of Scheme A is 1 - z_0 + (n - 1), so a
budget D turns into the floor z_0 >= c = n - D. Every feasible z is
c * e_0 + (1 - c) * w with w on the simplex, and the solver runs
Frank-Wolfe over w.

The default solver uses pairwise (away-to-toward) steps with an exact line
search, which keeps objective values monotone and converges linearly on
these problems. ``method="open_loop"`` gives classic Frank-Wolfe with step
2 / (k + 2).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq

from .core import InfeasibleError, Pmf
from .scheme_a import strategy_space
from .wrappers import drop_index

LOG_FLOOR = 1e-12
DEFAULT_TOL = 1e-7
MAX_ITER = 200_000
TAU_SCHEDULE = (1e-1, 1e-2, 1e-3, 1e-4)
METRICS = ("mi", "maxl")
# Steps whose value change is below float resolution still follow the exact line search.
ROUNDING = 1e-13


@lru_cache(maxsize=32)
def _index(M: int, n: int) -> np.ndarray:
    idx = drop_index(M, n)
    idx.setflags(write=False)
    return idx


def _dims(z: np.ndarray, M: int, n: int) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.shape != (n ** (M - 1),):
        raise ValueError(f"z needs {n ** (M - 1)} entries for M={M}, n={n}")
    return z


# ---------------------------------------------------------------------------
# Objectives


def mi_objective(z: np.ndarray, M: int, n: int) -> tuple[float, np.ndarray]:
    """Per-server MI leakage of time-shared Scheme A and its gradient.

    value = (1/n) sum_q -u_q log2 u_q - H(z), with u_q = (1/M) sum_m z[q without m].
    The gradient floors logarithms at 1e-12 so zero coordinates stay finite.
    """
    z = _dims(z, M, n)
    idx = _index(M, n)
    u = z[idx].mean(axis=1)
    pos_u = u > 0
    pos_z = z > 0
    value = -(u[pos_u] * np.log2(u[pos_u])).sum() / n + (z[pos_z] * np.log2(z[pos_z])).sum()
    log_u = np.log2(np.maximum(u, LOG_FLOOR))
    spread = np.bincount(idx.ravel(), weights=np.repeat(log_u, M), minlength=z.size)
    grad = -spread / (n * M) + np.log2(np.maximum(z, LOG_FLOOR))
    return max(0.0, float(value)), grad


def maxl_objective(z: np.ndarray, M: int, n: int) -> tuple[float, np.ndarray]:
    """Linear-domain MaxL 2^rho = (1/n) sum_q max_m z[q without m], with a subgradient.

    Ties in the max go to the lowest file index.
    """
    z = _dims(z, M, n)
    idx = _index(M, n)
    vals = z[idx]
    arg = vals.argmax(axis=1)
    value = vals[np.arange(len(vals)), arg].sum() / n
    grad = np.bincount(idx[np.arange(len(vals)), arg], minlength=z.size) / n
    return float(value), grad.astype(float)


def maxl_smoothed(z: np.ndarray, M: int, n: int, tau: float) -> tuple[float, np.ndarray]:
    """Log-sum-exp smoothing of :func:`maxl_objective` at temperature ``tau``.

    Overestimates the exact value by at most n^(M-1) * tau * ln M.
    """
    z = _dims(z, M, n)
    idx = _index(M, n)
    vals = z[idx] / tau
    top = vals.max(axis=1, keepdims=True)
    ex = np.exp(vals - top)
    tot = ex.sum(axis=1, keepdims=True)
    value = tau * (top[:, 0] + np.log(tot[:, 0])).sum() / n
    weights = ex / tot
    grad = np.bincount(idx.ravel(), weights=weights.ravel(), minlength=z.size) / n
    return float(value), grad


def smoothing_error(M: int, n: int, tau: float) -> float:
    return n ** (M - 1) * tau * math.log(M)


def leakage_bits(metric: str, value: float) -> float:
    """Objective value in bits (MaxL objectives live in the linear domain)."""
    return value if metric == "mi" else max(0.0, math.log2(value))


# ---------------------------------------------------------------------------
# Problem and oracle


@dataclass(frozen=True)
class OptProblem:
    """Minimize ``metric`` leakage of time-shared Scheme A subject to download <= D."""

    M: int
    n: int
    metric: str
    D: float

    def __post_init__(self) -> None:
        if self.metric not in METRICS:
            raise ValueError(f"metric must be one of {METRICS}, got {self.metric!r}")
        if self.M < 2 or self.n < 2:
            raise ValueError("need M >= 2 and n >= 2")
        if math.isnan(self.D) or self.D < self.n - 1 - 1e-12:
            raise InfeasibleError(f"download budget {self.D} is below the minimum {self.n - 1}")

    @property
    def floor(self) -> float:
        """Lower bound c on z_0 implied by the budget, clipped to [0, 1]."""
        return min(1.0, max(0.0, self.n - self.D))

    @property
    def size(self) -> int:
        return self.n ** (self.M - 1)


def lmo(g: Sequence[float], c: float) -> np.ndarray:
    """Vertex minimizing <g, z> over {z in simplex : z_0 >= c}; ties go to the lowest index."""
    if c > 1.0 + 1e-12 or c < -1e-12 or math.isnan(c):
        raise InfeasibleError(f"floor {c} outside [0, 1]")
    c = min(1.0, max(0.0, c))
    g = np.asarray(g, dtype=float)
    v = np.zeros_like(g)
    v[0] = c
    v[int(np.argmin(g))] += 1.0 - c
    return v


@dataclass(frozen=True)
class OptResult:
    """Outcome of one leakage minimization.

    Attributes:
        z_star: optimal mask law over [0:n-1]^(M-1).
        objective: leakage at z_star in bits.
        fw_gap: certified bound on suboptimality of the native objective
            (bits for MI, the linear 2^rho domain for MaxL).
        leakage_gap: the same certificate expressed in bits of leakage.
        iterations: Frank-Wolfe iterations across all stages.
        history: native objective value after every iteration (smoothed
            values for MaxL, one stage after another).
        stages: iteration index at which each smoothing stage began.
    """

    z_star: Pmf
    objective: float
    fw_gap: float
    leakage_gap: float
    iterations: int
    converged: bool
    metric: str
    value: float
    history: tuple[float, ...] = field(repr=False, default=())
    stages: tuple[int, ...] = field(repr=False, default=())

    @property
    def z0(self) -> float:
        return float(self.z_star.probs[0])

    def rate(self, n: int) -> float:
        """Download rate of the optimal scheme, (n - 1) / (n - z_0)."""
        return (n - 1) / (n - self.z0)


# ---------------------------------------------------------------------------
# Solver


Oracle = Callable[[np.ndarray], "tuple[float, np.ndarray]"]


def _fw_gap(g: np.ndarray, z: np.ndarray, c: float) -> float:
    return max(0.0, float(g @ (z - lmo(g, c))))


def _pairwise(oracle: Oracle, w: np.ndarray, c: float, tol: float, budget: int, history: list) -> tuple[np.ndarray, float, int]:
    """Pairwise Frank-Wolfe on the weights w with z = c e_0 + (1 - c) w."""
    e0 = np.zeros_like(w)
    e0[0] = c
    scale = 1.0 - c

    def point(x: np.ndarray) -> np.ndarray:
        return e0 + scale * x

    gap = math.inf
    for k in range(budget):
        value, g = oracle(point(w))
        gap = scale * max(0.0, float(g @ w - g.min()))
        if gap <= tol:
            return w, gap, k
        toward = int(np.argmin(g))
        active = np.flatnonzero(w > 0)
        away = int(active[np.argmax(g[active])])
        if g[away] - g[toward] <= 0:
            return w, gap, k
        d = np.zeros_like(w)
        d[toward], d[away] = 1.0, -1.0
        gmax = float(w[away])

        def slope(t: float) -> float:
            gt = oracle(point(w + t * d))[1]
            return float(gt[toward] - gt[away])

        if slope(gmax) <= 0:
            t = gmax
        else:
            t = brentq(slope, 0.0, gmax, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
        w_new = w + t * d
        if t == gmax:
            w_new[away] = 0.0
        w_new = np.maximum(w_new, 0.0)
        w_new /= w_new.sum()
        new_value = oracle(point(w_new))[0]
        if new_value > value + ROUNDING * max(1.0, abs(value)):
            # Only possible through a broken line search; stop rather than climb.
            return w, gap, k
        w = w_new
        history.append(new_value)
    value, g = oracle(point(w))
    return w, scale * max(0.0, float(g @ w - g.min())), budget


def _open_loop(oracle: Oracle, w: np.ndarray, c: float, tol: float, budget: int, history: list) -> tuple[np.ndarray, float, int]:
    e0 = np.zeros_like(w)
    e0[0] = c
    scale = 1.0 - c
    gap = math.inf
    for k in range(budget):
        value, g = oracle(e0 + scale * w)
        gap = scale * max(0.0, float(g @ w - g.min()))
        if gap <= tol:
            return w, gap, k
        step = 2.0 / (k + 2.0)
        v = np.zeros_like(w)
        v[int(np.argmin(g))] = 1.0
        w = (1 - step) * w + step * v
        history.append(oracle(e0 + scale * w)[0])
    value, g = oracle(e0 + scale * w)
    return w, scale * max(0.0, float(g @ w - g.min())), budget


def minimize_leakage(
    problem: OptProblem,
    tol: float = DEFAULT_TOL,
    max_iter: int = MAX_ITER,
    method: str = "pairwise",
    taus: Sequence[float] = TAU_SCHEDULE,
) -> OptResult:
    """Minimize the leakage of time-shared Scheme A under the download budget.

    Args:
        problem: dimensions, metric and budget.
        tol: stop once the Frank-Wolfe gap of the working objective drops below this.
        max_iter: iteration cap shared by all smoothing stages.
        method: "pairwise" (line search) or "open_loop" (step 2/(k+2)).
        taus: smoothing temperatures for MaxL, from coarse to fine.

    Raises:
        InfeasibleError: if D < n - 1.
    """
    if method not in ("pairwise", "open_loop"):
        raise ValueError(f"unknown method {method!r}")
    M, n, c = problem.M, problem.n, problem.floor
    support = strategy_space(M, n)
    K = problem.size
    if c >= 1.0:
        z = np.zeros(K)
        z[0] = 1.0
        return _finish(problem, z, 0.0, 0, True, [], [])

    run = _pairwise if method == "pairwise" else _open_loop
    w = np.full(K, 1.0 / K)
    history: list[float] = []
    stages: list[int] = []
    used = 0

    if problem.metric == "mi":
        stages.append(0)
        w, gap, used = run(lambda x: mi_objective(x, M, n), w, c, tol, max_iter, history)
        z = c * np.eye(K)[0] + (1 - c) * w
        return _finish(problem, z, gap, used, gap <= tol, history, stages, support)

    smooth_bound = math.inf
    for tau in taus:
        stages.append(len(history))
        w, gap, k = run(lambda x, t=tau: maxl_smoothed(x, M, n, t), w, c, tol, max_iter - used, history)
        used += k
        smooth_bound = gap + smoothing_error(M, n, tau)
        if used >= max_iter:
            break
    z = c * np.eye(K)[0] + (1 - c) * w
    _, g = maxl_objective(z, M, n)
    cert = min(_fw_gap(g, z, c), smooth_bound)
    return _finish(problem, z, cert, used, cert <= tol, history, stages, support)


def _finish(problem, z, gap, iterations, converged, history, stages, support=None) -> OptResult:
    M, n = problem.M, problem.n
    z = np.maximum(z, 0.0)
    z /= z.sum()
    if problem.metric == "mi":
        value = mi_objective(z, M, n)[0]
        lgap = gap
    else:
        value = maxl_objective(z, M, n)[0]
        lower = max(1.0, value - gap)
        lgap = math.log2(value) - math.log2(lower)
    return OptResult(
        z_star=Pmf(support if support is not None else strategy_space(M, n), z),
        objective=leakage_bits(problem.metric, value),
        fw_gap=float(gap),
        leakage_gap=float(lgap),
        iterations=int(iterations),
        converged=bool(converged),
        metric=problem.metric,
        value=float(value),
        history=tuple(history),
        stages=tuple(stages),
    )


@dataclass(frozen=True)
class CurvePoint:
    D: float
    rate: float
    rho: float
    gap: float
    result: OptResult = field(repr=False)


def rate_leakage_curve(
    M: int, n: int, metric: str, D_grid: Sequence[float], jobs: int = 1, **kwargs
) -> list[CurvePoint]:
    """Optimal (rate, leakage) for every budget in ``D_grid``, in grid order.

    The rate is evaluated at the optimizer's actual z_0, so a slack budget
    reports the rate the optimal scheme really achieves.

    Raises:
        InfeasibleError: if any budget is below n - 1.
    """

    def solve(D: float) -> CurvePoint:
        res = minimize_leakage(OptProblem(M, n, metric, float(D)), **kwargs)
        return CurvePoint(D=float(D), rate=res.rate(n), rho=res.objective, gap=res.leakage_gap, result=res)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(solve, D_grid))
    return [solve(D) for D in D_grid]
