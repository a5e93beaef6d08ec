"""Scheme A: checksum-structured queries over [0:n-1]^M with beta = n - 1.

Server l receives a query whose entries sum to l - 1 modulo n. All entries
except the m-th come from the strategy vector s, so each server sees the
same random mask and the requested coordinate closes the checksum. The
answer is the GF(2) sum of the addressed symbols, and the all-zero query is
answered with nothing.
"""

from __future__ import annotations

import itertools
import math
from typing import Sequence

import numpy as np

from .core import (
    CapacityError,
    Database,
    Pmf,
    ProtocolError,
    Query,
    Scheme,
    TradeoffPoint,
    binary_entropy,
)

STRATEGY_CAP = 2**24


def strategy_space(M: int, n: int) -> list[tuple[int, ...]]:
    """All vectors of [0:n-1]^(M-1) in lexicographic order (index 0 is all-zero)."""
    return list(itertools.product(range(n), repeat=M - 1))


def _check_space(M: int, n: int, cap: int = STRATEGY_CAP) -> None:
    if M < 1 or n < 2:
        raise ValueError(f"need M >= 1 and n >= 2, got M={M}, n={n}")
    if n ** (M - 1) > cap:
        raise CapacityError(f"[0:{n - 1}]^{M - 1} has more than {cap} points")


def uniform_strategy_a(M: int, n: int) -> Pmf:
    """Uniform mask over [0:n-1]^(M-1); gives zero leakage."""
    _check_space(M, n)
    return Pmf.uniform(strategy_space(M, n))


def iid_strategy_a(M: int, n: int, marginal: Sequence[float]) -> Pmf:
    """Mask with i.i.d. coordinates drawn from ``marginal`` over [0:n-1]."""
    _check_space(M, n)
    base = np.asarray(marginal, dtype=float)
    if base.shape != (n,):
        raise ValueError(f"marginal needs {n} entries")
    support = strategy_space(M, n)
    probs = [float(np.prod(base[list(s)])) if s else 1.0 for s in support]
    return Pmf(support, probs)


def bernoulli_strategy_a(M: int, p: float, n: int = 2) -> Pmf:
    """I.i.d. mask with P(S_j = 0) = 1 - p, the rest split evenly over [1:n-1]."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    return iid_strategy_a(M, n, [1.0 - p] + [p / (n - 1)] * (n - 1))


class SchemeA(Scheme):
    """(M, n) Scheme A with a strategy Pmf over [0:n-1]^(M-1)."""

    scheme_id = 1
    name = "scheme-a"

    def __init__(self, M: int, n: int, strategy: Pmf | None = None) -> None:
        super().__init__(M, n, n - 1, strategy if strategy is not None else uniform_strategy_a(M, n))
        self._validate_strategy()

    def _validate_strategy(self) -> None:
        for s in self.strategy.support:
            if len(s) != self.M - 1 or any(not 0 <= x < self.n for x in s):
                raise ValueError(f"strategy outcome {s!r} is not in [0:{self.n - 1}]^{self.M - 1}")

    @property
    def query_alphabet(self) -> int:
        return self.n

    def queries(self, m: int, s: Sequence[int]) -> tuple[Query, ...]:
        self.check_file(m)
        s = tuple(int(x) for x in s)
        if len(s) != self.M - 1 or any(not 0 <= x < self.n for x in s):
            raise ValueError(f"strategy vector {s!r} is not in [0:{self.n - 1}]^{self.M - 1}")
        return queries_a(self.M, self.n, m, s)

    def answer_len(self, q: Query) -> int:
        return 0 if q.is_zero() else 1

    def answer(self, l: int, q: Query, db: Database | np.ndarray) -> np.ndarray:
        return answer_a(q, self.check_database(db))

    def decode(self, m: int, queries: Sequence[Query], answers: Sequence[np.ndarray]) -> np.ndarray:
        return decode_a(m, self.n, queries, answers)


def queries_a(M: int, n: int, m: int, s: Sequence[int]) -> tuple[Query, ...]:
    """The n Scheme A queries for file ``m`` and mask ``s``."""
    if not 1 <= m <= M:
        raise ValueError(f"file index {m} outside [1, {M}]")
    s = tuple(s)
    base = sum(s)
    out = []
    for l in range(1, n + 1):
        q_m = (l - 1 - base) % n
        out.append(Query(s[: m - 1] + (q_m,) + s[m - 1 :], n))
    return tuple(out)


def answer_a(q: Query, symbols: np.ndarray) -> np.ndarray:
    """GF(2) sum of X^(m)_{q_m} over the nonzero entries; empty for the zero query.

    ``symbols`` has shape (..., M, beta); the result has shape (..., 0 or 1).
    """
    lead = symbols.shape[:-2]
    if q.is_zero():
        return np.zeros(lead + (0,), dtype=np.uint8)
    acc = np.zeros(lead, dtype=np.uint8)
    for m, e in enumerate(q.entries):
        if e:
            acc ^= symbols[..., m, e - 1]
    return acc[..., None]


def decode_a(m: int, n: int, queries: Sequence[Query], answers: Sequence[np.ndarray]) -> np.ndarray:
    """Recover file ``m`` from one round of Scheme A.

    The server whose m-th entry is zero returns the interference Z (nothing
    when its query is all-zero). Each other server returns X^(m)_{q_m} + Z.
    Roles are read off the queries, so any server ordering works.
    """
    if len(queries) != len(answers):
        raise ProtocolError("query and answer counts differ")
    by_value: dict[int, int] = {}
    for idx, q in enumerate(queries):
        v = q.entries[m - 1]
        if v in by_value:
            raise ProtocolError(f"two servers share the value {v} at coordinate {m}")
        by_value[v] = idx
    if set(by_value) != set(range(n)):
        raise ProtocolError("queries do not cover every symbol index of the requested file")
    zi = by_value[0]
    z = answers[zi]
    if z.shape[-1] == 0:
        z = np.zeros(z.shape[:-1], dtype=np.uint8)
    else:
        z = z[..., 0]
    cols = []
    for v in range(1, n):
        a = answers[by_value[v]]
        if a.shape[-1] != 1:
            raise ProtocolError(f"expected one answer symbol for symbol index {v}")
        cols.append(a[..., 0] ^ z)
    return np.stack(cols, axis=-1).astype(np.uint8)


def rate_a(M: int, n: int, strategy: Pmf) -> float:
    """(n - 1) / (1 - P_S(0) + n - 1): only the all-zero query is free."""
    p0 = strategy.prob(tuple([0] * (M - 1)))
    return (n - 1) / (1.0 - p0 + n - 1)


def _check_p(p: float) -> None:
    if not 0.0 <= p <= 0.5 or math.isnan(p):
        raise ValueError(f"p must lie in [0, 1/2], got {p}")


def _pw(x: float, k: int) -> float:
    # 0^0 = 1; negative powers only appear with a zero coefficient and are skipped by callers.
    return 1.0 if k == 0 else x**k


def _h_two_level(count_a: int, a: float, count_b: int, b: float) -> float:
    h = 0.0
    for c, v in ((count_a, a), (count_b, b)):
        if c and v > 0:
            h -= c * v * math.log2(v)
    return h


def bernoulli_tuple_a(M: int, p: float) -> TradeoffPoint:
    """Closed-form tradeoff of the (M, 2) Scheme A with an i.i.d. Bern(p) mask."""
    _check_p(p)
    if M < 2:
        raise ValueError("closed forms need M >= 2")
    q = 1.0 - p
    upload = access = 0.0
    h_min = math.inf
    for w in range(M + 1):
        ta = (M - w) * _pw(q, M - w - 1) * _pw(p, w) if w < M else 0.0
        tb = w * _pw(q, M - w) * _pw(p, w - 1) if w > 0 else 0.0
        f = (ta + tb) / M
        if f <= 0.0:
            continue
        c = math.comb(M, w)
        upload -= c * f * math.log2(f)
        access += w * c * f
        a = ta / (M - w) / (M * f) if w < M else 0.0
        b = tb / w / (M * f) if w > 0 else 0.0
        h_min = min(h_min, _h_two_level(M - w, a, w, b))
    maxl_sum = sum(math.comb(M, w) * _pw(q, M - w) * _pw(p, w - 1) for w in range(1, M + 1, 2))
    return TradeoffPoint(
        rate=1.0 / (2.0 - q ** (M - 1)),
        upload=upload,
        access=access,
        rho_mi=max(0.0, upload / 2.0 - (M - 1) * binary_entropy(p)),
        rho_wil=max(0.0, math.log2(M) - h_min),
        rho_maxl=max(0.0, math.log2(maxl_sum)),
        rho_epsp=math.inf if p == 0.0 else math.log(q / p),
    )


def eps_privacy_p(rho: float) -> float:
    """Mask parameter p = 1 / (1 + e^rho) meeting an epsilon-privacy budget ``rho``."""
    if rho < 0 or math.isnan(rho):
        raise ValueError(f"rho must be non-negative, got {rho}")
    if math.isinf(rho):
        return 0.0
    return 1.0 / (1.0 + math.exp(rho))


def eps_privacy_rate_a(M: int, rho: float) -> float:
    """Rate of the (M, 2) Scheme A with a Bern(1/(1 + e^rho)) mask."""
    p = eps_privacy_p(rho)
    return 1.0 / (1.0 - (1.0 - p) ** (M - 1) + 1.0)
