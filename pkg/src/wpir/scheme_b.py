"""Scheme B: additive-mask queries with inner-product answers.

Every server gets the same random bit mask S of length beta*M, and server
l < n also gets one flipped bit at position (m-1)*beta + l. Each answer is a
single GF(2) inner product, so the rate is 1 - 1/n whatever the mask law.
"""

from __future__ import annotations

import itertools
import math
from typing import Sequence

import numpy as np

from .core import CapacityError, Database, Pmf, ProtocolError, Query, Scheme, TradeoffPoint, binary_entropy

STRATEGY_CAP = 2**24


def _check_len(length: int, cap: int = STRATEGY_CAP) -> None:
    if 2**length > cap:
        raise CapacityError(f"{{0,1}}^{length} has more than {cap} points")


def bernoulli_strategy_b(M: int, p: float, n: int = 2) -> Pmf:
    """I.i.d. Bern(p) mask over beta*M bits."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    length = (n - 1) * M
    _check_len(length)
    support = list(itertools.product((0, 1), repeat=length))
    probs = [p ** sum(s) * (1.0 - p) ** (length - sum(s)) for s in support]
    return Pmf(support, probs)


def sphere_strategy_b(M: int, w: int, n: int = 2) -> Pmf:
    """Mask drawn uniformly from the weight-w vectors of length beta*M."""
    length = (n - 1) * M
    if not 0 <= w <= length:
        raise ValueError(f"weight {w} outside [0, {length}]")
    if math.comb(length, w) > STRATEGY_CAP:
        raise CapacityError(f"C({length}, {w}) exceeds the strategy cap")
    support = []
    for ones in itertools.combinations(range(length), w):
        v = [0] * length
        for i in ones:
            v[i] = 1
        support.append(tuple(v))
    support.sort()
    return Pmf.uniform(support)


def queries_b(M: int, n: int, m: int, s: Sequence[int]) -> tuple[Query, ...]:
    """Q_l = s XOR v_l with v_l the unit vector at (m-1)*beta + l, and v_n = 0."""
    beta = n - 1
    if not 1 <= m <= M:
        raise ValueError(f"file index {m} outside [1, {M}]")
    s = tuple(int(x) for x in s)
    if len(s) != beta * M or any(x not in (0, 1) for x in s):
        raise ValueError(f"mask must be a bit vector of length {beta * M}")
    out = []
    for l in range(1, n):
        v = list(s)
        v[(m - 1) * beta + l - 1] ^= 1
        out.append(Query(tuple(v), 2))
    out.append(Query(s, 2))
    return tuple(out)


def answer_b(q: Query, symbols: np.ndarray) -> np.ndarray:
    """<q, flattened database> over GF(2); always one symbol."""
    flat = symbols.reshape(symbols.shape[:-2] + (-1,))
    sel = np.flatnonzero(np.asarray(q.entries, dtype=np.uint8))
    acc = np.bitwise_xor.reduce(flat[..., sel], axis=-1) if sel.size else np.zeros(flat.shape[:-1], np.uint8)
    return np.asarray(acc, dtype=np.uint8)[..., None]


def _roles(m: int, n: int, queries: Sequence[Query]) -> list[int]:
    """Role (1..n) of each query, read from the block of file m.

    The mask-only query is the unique block from which every other block
    differs in exactly one distinct position. With n = 2 both queries
    qualify and either choice decodes the same way.
    """
    beta = n - 1
    lo, hi = (m - 1) * beta, m * beta
    blocks = [np.array(q.entries[lo:hi], dtype=np.uint8) for q in queries]
    outside = {q.entries[:lo] + q.entries[hi:] for q in queries}
    if len(outside) != 1:
        raise ProtocolError("queries disagree outside the requested block")
    for c, centre in enumerate(blocks):
        roles = [0] * n
        roles[c] = n
        used = set()
        ok = True
        for k, b in enumerate(blocks):
            if k == c:
                continue
            diff = np.flatnonzero(b ^ centre)
            if diff.size != 1 or int(diff[0]) in used:
                ok = False
                break
            used.add(int(diff[0]))
            roles[k] = int(diff[0]) + 1
        if ok:
            return roles
    raise ProtocolError("queries do not form a valid Scheme B round")


def decode_b(m: int, n: int, queries: Sequence[Query], answers: Sequence[np.ndarray]) -> np.ndarray:
    """X^(m)_l = A_l XOR A_n, with roles recovered from the queries."""
    if len(queries) != n or len(answers) != n:
        raise ProtocolError(f"expected {n} queries and answers")
    roles = _roles(m, n, queries)
    by_role = {r: answers[i] for i, r in enumerate(roles)}
    for a in answers:
        if a.shape[-1] != 1:
            raise ProtocolError("every Scheme B answer has exactly one symbol")
    base = by_role[n][..., 0]
    return np.stack([by_role[l][..., 0] ^ base for l in range(1, n)], axis=-1).astype(np.uint8)


class SchemeB(Scheme):
    """(M, n) Scheme B with a mask Pmf over {0,1}^(beta*M), beta = n - 1."""

    scheme_id = 2
    name = "scheme-b"

    def __init__(self, M: int, n: int, strategy: Pmf | None = None) -> None:
        if strategy is None:
            strategy = bernoulli_strategy_b(M, 0.5, n)
        super().__init__(M, n, n - 1, strategy)
        for s in strategy.support:
            if len(s) != self.beta * M or any(x not in (0, 1) for x in s):
                raise ValueError(f"strategy outcome {s!r} is not a bit vector of length {self.beta * M}")

    @property
    def query_alphabet(self) -> int:
        return 2

    def queries(self, m: int, s: Sequence[int]) -> tuple[Query, ...]:
        self.check_file(m)
        return queries_b(self.M, self.n, m, s)

    def answer(self, l: int, q: Query, db: Database | np.ndarray) -> np.ndarray:
        return answer_b(q, self.check_database(db))

    def decode(self, m: int, queries: Sequence[Query], answers: Sequence[np.ndarray]) -> np.ndarray:
        return decode_b(m, self.n, queries, answers)


def _check_p(p: float) -> None:
    if not 0.0 <= p <= 0.5 or math.isnan(p):
        raise ValueError(f"p must lie in [0, 1/2], got {p}")


def _pw(x: float, k: int) -> float:
    return 1.0 if k == 0 else x**k


def bernoulli_tuple_b(M: int, p: float) -> TradeoffPoint:
    """Closed-form tradeoff of the (M, 2) Scheme B with an i.i.d. Bern(p) mask."""
    _check_p(p)
    if M < 2:
        raise ValueError("closed forms need M >= 2")
    q = 1.0 - p
    u1 = access = 0.0
    h_min = math.inf
    for w in range(M + 1):
        c = math.comb(M, w)
        ta = (M - w) * _pw(q, M - w - 1) * _pw(p, w + 1) if w < M else 0.0
        tb = w * _pw(q, M - w + 1) * _pw(p, w - 1) if w > 0 else 0.0
        g = (ta + tb) / M
        h = _pw(q, M - w) * _pw(p, w)
        access += w * c * (g + h)
        if g <= 0.0:
            continue
        u1 -= c * g * math.log2(g)
        a = ta / (M - w) / (M * g) if w < M else 0.0
        b = tb / w / (M * g) if w > 0 else 0.0
        hw = 0.0
        for cnt, v in ((M - w, a), (w, b)):
            if cnt and v > 0:
                hw -= cnt * v * math.log2(v)
        h_min = min(h_min, hw)
    hb = binary_entropy(p)
    maxl_sum = _pw(q, M - 1) * p + sum(math.comb(M, w) * _pw(q, M - w + 1) * _pw(p, w - 1) for w in range(1, M + 1))
    return TradeoffPoint(
        rate=0.5,
        upload=u1 + M * hb,
        access=access,
        rho_mi=max(0.0, (u1 + M * hb) / 2.0 - M * hb),
        rho_wil=max(0.0, math.log2(M) - h_min),
        rho_maxl=max(0.0, math.log2(maxl_sum)),
        rho_epsp=math.inf if p == 0.0 else 2.0 * math.log(q / p),
    )


def sphere_tuple_b(M: int, w: int) -> TradeoffPoint:
    """Closed-form tradeoff of the (M, 2) Scheme B with a uniform weight-w mask."""
    if M < 2:
        raise ValueError("closed forms need M >= 2")
    if not 0 <= w <= M:
        raise ValueError(f"weight {w} outside [0, {M}]")
    log_c = math.log2(math.comb(M, w))
    y = log_c + math.log2(M) - (M - w) * math.log2(w + 1) / M - w * math.log2(M - w + 1) / M
    return TradeoffPoint(
        rate=0.5,
        upload=log_c + y,
        access=1.0 + 2.0 * w * (1.0 - 1.0 / M),
        rho_mi=max(0.0, (y - log_c) / 2.0),
        rho_wil=max(0.0, math.log2(M) - min(math.log2(w + 1), math.log2(M - w + 1))),
        rho_maxl=max(0.0, math.log2((M - w) / (w + 1) + w / (M - w + 1))),
        # Only M = 2, w = 1 gives every file the same query support.
        rho_epsp=0.0 if (M, w) == (2, 1) else math.inf,
    )
