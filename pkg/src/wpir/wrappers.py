"""Scheme transformers: partitioning the library and time-sharing server roles."""

from __future__ import annotations

import itertools
import math
from typing import Any, Sequence

import numpy as np

from .core import CondQueryDist, Database, Pmf, Query, Scheme, ServerQueryDist, TradeoffPoint, capacity
from .scheme_a import SchemeA, queries_a, strategy_space, uniform_strategy_a


class PartitionScheme(Scheme):
    """Run ``sub`` inside one of ``eta`` contiguous file groups and reveal the group.

    File m lives in group j = ceil(m / (M / eta)). Queries carry the
    subscheme query plus j, so the query spaces of different groups are
    disjoint.
    """

    scheme_id = 3
    name = "partition"

    def __init__(self, sub: Scheme, eta: int) -> None:
        if eta < 1:
            raise ValueError("eta must be a positive integer")
        super().__init__(sub.M * eta, sub.n, sub.beta, sub.strategy)
        self.sub = sub
        self.eta = eta

    def __repr__(self) -> str:
        return f"PartitionScheme({self.sub!r}, eta={self.eta})"

    @property
    def query_alphabet(self) -> int:
        return self.sub.query_alphabet

    def locate(self, m: int) -> tuple[int, int]:
        """(group j, index inside the group), both 1-based."""
        self.check_file(m)
        size = self.sub.M
        return (m - 1) // size + 1, (m - 1) % size + 1

    def _strip(self, q: Query) -> Query:
        return Query(q.entries, q.alphabet_size)

    def queries(self, m: int, s: Any) -> tuple[Query, ...]:
        j, mt = self.locate(m)
        return tuple(Query(q.entries, q.alphabet_size, j) for q in self.sub.queries(mt, s))

    def answer(self, l: int, q: Query, db: Database | np.ndarray) -> np.ndarray:
        sym = self.check_database(db)
        if q.partition is None or not 1 <= q.partition <= self.eta:
            raise ValueError("partition query without a valid group index")
        size = self.sub.M
        block = sym[..., (q.partition - 1) * size : q.partition * size, :]
        return self.sub.answer(l, self._strip(q), block)

    def answer_len(self, q: Query) -> int:
        return self.sub.answer_len(self._strip(q))

    def access_count(self, q: Query) -> int:
        return self.sub.access_count(self._strip(q))

    def decode(self, m: int, queries: Sequence[Query], answers: Sequence[np.ndarray]) -> np.ndarray:
        _, mt = self.locate(m)
        return self.sub.decode(mt, [self._strip(q) for q in queries], answers)


def partition_wrap(sub: Scheme, eta: int) -> PartitionScheme:
    """Partition scheme over sub.M * eta files built from ``sub``."""
    return PartitionScheme(sub, eta)


def partition_shift(point: TradeoffPoint, n: int, eta: int) -> TradeoffPoint:
    """Tradeoff of the partition scheme given its subscheme's tradeoff."""
    shift = math.log2(eta)
    return TradeoffPoint(
        rate=point.rate,
        upload=point.upload + n * shift,
        access=point.access,
        rho_mi=point.rho_mi + shift,
        rho_wil=point.rho_wil + shift,
        rho_maxl=point.rho_maxl + shift,
        rho_epsp=math.inf if eta > 1 else point.rho_epsp,
    )


class PartitionSchemeA(SchemeA):
    """Partition Scheme A with a uniform subscheme and a shared all-zero query.

    The subscheme query for group j is written into the j-th block of an
    otherwise all-zero length-M query. Server 1's all-zero query is then
    the same for every group, which slightly reduces the leakage compared
    with tagging queries by group.
    """

    name = "partition-scheme-a"

    def __init__(self, M: int, n: int, eta: int) -> None:
        if eta < 1 or M % eta:
            raise ValueError(f"eta={eta} must divide M={M}")
        if not (eta == 1 or 1 <= eta <= M - 1):
            raise ValueError(f"eta={eta} outside [1, M-1]")
        self.eta = eta
        self.group = M // eta
        Scheme.__init__(self, M, n, n - 1, uniform_strategy_a(self.group, n))

    def __repr__(self) -> str:
        return f"PartitionSchemeA(M={self.M}, n={self.n}, eta={self.eta})"

    def queries(self, m: int, s: Sequence[int]) -> tuple[Query, ...]:
        self.check_file(m)
        j, mt = (m - 1) // self.group + 1, (m - 1) % self.group + 1
        pad_l = (0,) * ((j - 1) * self.group)
        pad_r = (0,) * ((self.eta - j) * self.group)
        return tuple(Query(pad_l + q.entries + pad_r, self.n) for q in queries_a(self.group, self.n, mt, s))


def partition_tuple_a(M: int, n: int, eta: int) -> TradeoffPoint:
    """Closed-form tradeoff of partition Scheme A with a uniform subscheme."""
    if eta < 1 or M % eta or not (eta == 1 or eta <= M - 1):
        raise ValueError(f"eta={eta} must divide M={M} and lie in [1, M-1]")
    g = M // eta
    le = math.log2(eta)
    return TradeoffPoint(
        rate=capacity(g, n),
        upload=n * ((g - 1) * math.log2(n) + le) - le / n ** (g - 1),
        access=(n - 1) * g,
        rho_mi=le - le / n**g,
        rho_wil=le,
        rho_maxl=le,
        rho_epsp=math.inf if eta > 1 else 0.0,
    )


def partition_scheme_a(M: int, n: int, eta: int) -> tuple[PartitionSchemeA, TradeoffPoint]:
    """Partition Scheme A instance and its closed-form tradeoff."""
    return PartitionSchemeA(M, n, eta), partition_tuple_a(M, n, eta)


def sigma(l: int, a: int, n: int) -> int:
    """a-fold left cyclic shift of the server index l in [1, n]."""
    return (l - 1 + a) % n + 1


class TimeShareScheme(Scheme):
    """Pick T uniformly in [1, n] and send server l the base query of role sigma^(T-1)(l).

    The strategy becomes (s, T). Costs are unchanged and every server sees
    the average of the base scheme's per-server query laws. A server's MI
    leakage equals the base average when the base query sets are disjoint
    across servers (as in Scheme A); otherwise T stays hidden and the
    leakage is at most that average. Decoding relies on the base decoder
    reading server roles from the queries themselves.
    """

    scheme_id = 4
    name = "timeshare"

    def __init__(self, base: Scheme) -> None:
        n = base.n
        support, probs = [], []
        for s, p in base.strategy:
            for t in range(1, n + 1):
                support.append((s, t))
                probs.append(p / n)
        super().__init__(base.M, n, base.beta, Pmf(support, probs))
        self.base = base

    def __repr__(self) -> str:
        return f"TimeShareScheme({self.base!r})"

    @property
    def query_alphabet(self) -> int:
        return self.base.query_alphabet

    def queries(self, m: int, s: Any) -> tuple[Query, ...]:
        s_base, t = s
        if not 1 <= t <= self.n:
            raise ValueError(f"shift {t} outside [1, {self.n}]")
        base_q = self.base.queries(m, s_base)
        return tuple(base_q[sigma(l, t - 1, self.n) - 1] for l in range(1, self.n + 1))

    def answer(self, l: int, q: Query, db: Database | np.ndarray) -> np.ndarray:
        # Base answer maps do not depend on the server index.
        return self.base.answer(l, q, db)

    def answer_len(self, q: Query) -> int:
        return self.base.answer_len(q)

    def access_count(self, q: Query) -> int:
        return self.base.access_count(q)

    def decode(self, m: int, queries: Sequence[Query], answers: Sequence[np.ndarray]) -> np.ndarray:
        return self.base.decode(m, queries, answers)


def timeshare_wrap(base: Scheme) -> TimeShareScheme:
    """Time-shared version of ``base``."""
    return TimeShareScheme(base)


def drop_index(M: int, n: int) -> np.ndarray:
    """idx[k, m] = index in [0:n-1]^(M-1) of the k-th vector of [0:n-1]^M with coordinate m removed.

    Both spaces use lexicographic order, first coordinate most significant.
    """
    k = np.arange(n**M)
    digits = np.stack([(k // n ** (M - 1 - i)) % n for i in range(M)], axis=1)
    weights = n ** np.arange(M - 2, -1, -1) if M > 1 else np.zeros(0, dtype=int)
    idx = np.empty((n**M, M), dtype=np.int64)
    for m in range(M):
        rest = np.delete(digits, m, axis=1)
        idx[:, m] = rest @ weights if M > 1 else 0
    return idx


def timeshare_dist_a(M: int, n: int, z: Pmf | Sequence[float] | np.ndarray) -> CondQueryDist:
    """Per-server query law of time-shared Scheme A with mask law z.

    Every server sees P(q | m) = z[q without coordinate m] / n on [0:n-1]^M.
    ``z`` is indexed like :func:`strategy_space`.
    """
    probs = z.probs if isinstance(z, Pmf) else np.asarray(z, dtype=float)
    if probs.shape != (n ** (M - 1),):
        raise ValueError(f"z needs {n ** (M - 1)} entries")
    idx = drop_index(M, n)
    matrix = probs[idx].T / n
    support = tuple(Query(q, n) for q in itertools.product(range(n), repeat=M))
    srv = ServerQueryDist(support, matrix)
    return CondQueryDist(tuple(srv for _ in range(n)))


def timeshare_scheme_a(M: int, n: int, z: Pmf | Sequence[float] | np.ndarray) -> TimeShareScheme:
    """Time-shared Scheme A whose mask law is z (indexed like strategy_space)."""
    probs = z.probs if isinstance(z, Pmf) else np.asarray(z, dtype=float)
    return TimeShareScheme(SchemeA(M, n, Pmf(strategy_space(M, n), probs)))
