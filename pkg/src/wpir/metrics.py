"""Exact leakage and cost metrics of a retrieval scheme.

All metrics assume the requested index is uniform over the M files. Leakage
values are reported in bits, except epsilon-privacy, which uses nats.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .core import (
    ZERO_PROB,
    CapacityError,
    CondQueryDist,
    Scheme,
    ServerQueryDist,
    TradeoffPoint,
    _entropy_rows,
    entropy,
    marginal_query_dist,
)

DEFAULT_CAP = 2**24


def _nonneg(x: float) -> float:
    # Rounding can push a mathematically non-negative leakage to -1e-17.
    return max(0.0, float(x))


# ---------------------------------------------------------------------------
# Per-server leakages


def mi_per_server(d: CondQueryDist) -> np.ndarray:
    """I(M; Q_l) in bits for every server."""
    out = []
    for srv in d.servers:
        marginal = srv.matrix.mean(axis=0)
        h_q = entropy(marginal)
        h_q_given_m = float(_entropy_rows(srv.matrix).mean())
        out.append(_nonneg(h_q - h_q_given_m))
    return np.array(out)


def wil_per_server(d: CondQueryDist) -> np.ndarray:
    """log2 M minus the smallest posterior entropy of M, per server."""
    out = []
    for srv in d.servers:
        col = srv.matrix.sum(axis=0)
        seen = col > 0
        posterior = (srv.matrix[:, seen] / col[seen]).T
        h_min = float(_entropy_rows(posterior).min())
        out.append(_nonneg(math.log2(d.M) - h_min))
    return np.array(out)


def maxl_per_server(d: CondQueryDist) -> np.ndarray:
    """log2 of sum_q max_m P(q | m), per server."""
    return np.array([_nonneg(math.log2(srv.matrix.max(axis=0).sum())) for srv in d.servers])


def epsp_per_server(d: CondQueryDist) -> np.ndarray:
    """ln of the worst likelihood ratio of a query under two files, per server."""
    out = []
    for srv in d.servers:
        hi = srv.matrix.max(axis=0)
        lo = srv.matrix.min(axis=0)
        seen = hi > 0
        if np.any(lo[seen] == 0.0):
            out.append(math.inf)
            continue
        out.append(_nonneg(float(np.log(hi[seen] / lo[seen]).max())))
    return np.array(out)


def mi_leakage(d: CondQueryDist) -> float:
    """Server-averaged mutual information between M and Q_l, in bits."""
    return float(mi_per_server(d).mean())


def wil_leakage(d: CondQueryDist) -> float:
    """Worst-case information leakage over servers, in bits."""
    return float(wil_per_server(d).max())


def maxl_leakage(d: CondQueryDist) -> float:
    """Maximal leakage, worst case over servers, in bits."""
    return float(maxl_per_server(d).max())


def epsp_leakage(d: CondQueryDist) -> float:
    """Epsilon-privacy leakage in nats; ``math.inf`` when supports differ across files."""
    return float(epsp_per_server(d).max())


def upload_cost(d: CondQueryDist) -> float:
    """Sum over servers of H(Q_l) in bits."""
    return float(sum(entropy(p) for p in marginal_query_dist(d)))


# ---------------------------------------------------------------------------
# Enumeration


@dataclass(frozen=True)
class SchemeProfile:
    """Everything the metrics need from one exhaustive pass over a scheme.

    Attributes:
        dist: exact per-server conditional query distribution.
        download: expected downloaded symbols summed over servers.
        access: expected accessed symbols summed over servers.
        download_per_file: expected download conditioned on each file index.
    """

    dist: CondQueryDist
    download: float
    access: float
    download_per_file: np.ndarray


def profile(scheme: Scheme, cap: int = DEFAULT_CAP) -> SchemeProfile:
    """Enumerate every (m, s) with P_S(s) > 0 and accumulate exact statistics.

    Raises:
        CapacityError: if the strategy support exceeds ``cap``.
    """
    size = len(scheme.strategy)
    if size > cap:
        raise CapacityError(f"strategy support has {size} states, above the cap of {cap}")
    M, n = scheme.M, scheme.n
    tables = [defaultdict(lambda: defaultdict(float)) for _ in range(n)]
    down = np.zeros(M)
    acc = 0.0
    lens: dict = {}
    for s, ps in scheme.strategy.positive():
        for m in range(1, M + 1):
            qs = scheme.queries(m, s)
            for l, q in enumerate(qs):
                tables[l][m][q] += ps
                cached = lens.get(q)
                if cached is None:
                    cached = lens[q] = (scheme.answer_len(q), scheme.access_count(q))
                down[m - 1] += ps * cached[0]
                acc += ps * cached[1] / M
    dist = CondQueryDist.from_counts(M, [{m: dict(row) for m, row in t.items()} for t in tables])
    return SchemeProfile(dist=dist, download=float(down.mean()), access=float(acc), download_per_file=down)


def cond_query_dist(scheme: Scheme, cap: int = DEFAULT_CAP) -> CondQueryDist:
    """Exact P(Q_l = q | M = m) for every server by enumeration."""
    return profile(scheme, cap).dist


def download_cost(scheme: Scheme, cap: int = DEFAULT_CAP) -> float:
    """Expected downloaded bits across all servers (answers are binary)."""
    return profile(scheme, cap).download


def rate(scheme: Scheme, cap: int = DEFAULT_CAP) -> float:
    """beta / D, with D the expected download in bits."""
    return scheme.beta / download_cost(scheme, cap)


def access_complexity(scheme: Scheme, cap: int = DEFAULT_CAP) -> float:
    """Expected accessed symbols summed over servers."""
    return profile(scheme, cap).access


def tradeoff_from_profile(scheme: Scheme, prof: SchemeProfile) -> TradeoffPoint:
    d = prof.dist
    return TradeoffPoint(
        rate=scheme.beta / prof.download,
        upload=upload_cost(d),
        access=prof.access,
        rho_mi=mi_leakage(d),
        rho_wil=wil_leakage(d),
        rho_maxl=maxl_leakage(d),
        rho_epsp=epsp_leakage(d),
    )


def evaluate_tradeoff(scheme: Scheme, cap: int = DEFAULT_CAP) -> TradeoffPoint:
    """Rate, costs and all four leakages of ``scheme`` by exhaustive enumeration.

    Raises:
        CapacityError: if the strategy support exceeds ``cap`` states.
    """
    return tradeoff_from_profile(scheme, profile(scheme, cap))


def mix(d1: CondQueryDist, d2: CondQueryDist, lam: float) -> CondQueryDist:
    """Convex combination lam * d1 + (1 - lam) * d2 of two distributions on shared supports."""
    servers = []
    for a, b in zip(d1.servers, d2.servers):
        if a.support != b.support:
            raise ValueError("mixing needs identical supports")
        servers.append(ServerQueryDist(a.support, lam * a.matrix + (1.0 - lam) * b.matrix))
    return CondQueryDist(tuple(servers))


__all__ = [
    "DEFAULT_CAP",
    "ZERO_PROB",
    "SchemeProfile",
    "access_complexity",
    "cond_query_dist",
    "download_cost",
    "epsp_leakage",
    "epsp_per_server",
    "evaluate_tradeoff",
    "maxl_leakage",
    "maxl_per_server",
    "mi_leakage",
    "mi_per_server",
    "mix",
    "profile",
    "rate",
    "tradeoff_from_profile",
    "upload_cost",
    "wil_leakage",
    "wil_per_server",
]
