"""Foundational types for replicated-server retrieval schemes.

File symbols, answers and Scheme B query bits live in GF(2). File indices
``m`` and server indices ``l`` are 1-based throughout the public API, the
way they appear in protocol descriptions; array storage is 0-based.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Hashable, Iterable, Iterator, Sequence

import numpy as np

PMF_TOL = 1e-9
RENORMALIZE_TOL = 1e-6
ZERO_PROB = 1e-15
INV_ENTROPY_TOL = 1e-12


class WPIRError(Exception):
    """Base class for errors raised by this package."""


class ProtocolError(WPIRError):
    """A retrieval round could not be completed or decoded."""

    def __init__(self, message: str, transcript: Any = None) -> None:
        super().__init__(message)
        self.transcript = transcript


class CapacityError(WPIRError):
    """An enumeration would exceed the configured state cap."""


class InfeasibleError(WPIRError, ValueError):
    """An optimization problem has an empty feasible set."""


# ---------------------------------------------------------------------------
# Distributions


@dataclass(frozen=True, eq=False)
class Pmf:
    """Probability vector over an explicit finite support.

    Support outcomes are arbitrary hashable values (tuples for strategy
    vectors, ints for plain indices). Inputs whose total is within 1e-6 of
    one are renormalized; anything further off is rejected.
    """

    support: tuple
    probs: np.ndarray

    def __init__(self, support: Iterable[Hashable], probs: Iterable[float]) -> None:
        sup = tuple(support)
        p = np.array(list(probs) if not isinstance(probs, np.ndarray) else probs, dtype=float)
        if p.ndim != 1 or len(sup) != p.shape[0]:
            raise ValueError("support and probs must have the same length")
        if len(sup) < 1:
            raise ValueError("a Pmf needs at least one support point")
        if len(set(sup)) != len(sup):
            raise ValueError("support points must be distinct")
        if not np.all(np.isfinite(p)) or np.any(p < 0):
            raise ValueError("probabilities must be finite and non-negative")
        total = float(p.sum())
        if abs(total - 1.0) > RENORMALIZE_TOL:
            raise ValueError(f"probabilities sum to {total!r}, not 1")
        p = p / total
        p.setflags(write=False)
        object.__setattr__(self, "support", sup)
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "_index", {x: i for i, x in enumerate(sup)})

    @classmethod
    def uniform(cls, support: Iterable[Hashable]) -> "Pmf":
        sup = tuple(support)
        return cls(sup, np.full(len(sup), 1.0 / len(sup)))

    @classmethod
    def point(cls, outcome: Hashable) -> "Pmf":
        return cls((outcome,), (1.0,))

    def __len__(self) -> int:
        return len(self.support)

    def __iter__(self) -> Iterator[tuple[Hashable, float]]:
        return iter(zip(self.support, self.probs.tolist()))

    def __repr__(self) -> str:
        return f"Pmf(size={len(self)}, probs={np.array2string(self.probs, precision=4, threshold=8)})"

    def prob(self, outcome: Hashable) -> float:
        i = self._index.get(outcome)  # type: ignore[attr-defined]
        return 0.0 if i is None else float(self.probs[i])

    def index(self, outcome: Hashable) -> int:
        return self._index[outcome]  # type: ignore[attr-defined]

    def positive(self) -> list[tuple[Hashable, float]]:
        """Outcomes with strictly positive probability, in support order."""
        return [(x, p) for x, p in self if p > 0.0]


def _as_probs(p: Pmf | Sequence[float] | np.ndarray) -> np.ndarray:
    if isinstance(p, Pmf):
        return p.probs
    arr = np.asarray(p, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("expected a non-empty probability vector")
    if np.any(arr < 0) or abs(arr.sum() - 1.0) > RENORMALIZE_TOL:
        raise ValueError("not a probability vector")
    return arr


def entropy(p: Pmf | Sequence[float] | np.ndarray) -> float:
    """Shannon entropy in bits, with 0 log 0 = 0."""
    probs = _as_probs(p)
    nz = probs[probs > ZERO_PROB]
    return float(-(nz * np.log2(nz)).sum()) + 0.0


def _entropy_rows(mat: np.ndarray) -> np.ndarray:
    """Row-wise entropy in bits of a non-negative matrix (no validation)."""
    safe = np.where(mat > ZERO_PROB, mat, 1.0)
    return -(np.where(mat > ZERO_PROB, mat * np.log2(safe), 0.0)).sum(axis=-1)


def binary_entropy(p: float) -> float:
    """H_b(p) = -p log2 p - (1-p) log2 (1-p)."""
    if not 0.0 <= p <= 1.0 or math.isnan(p):
        raise ValueError(f"binary_entropy needs p in [0, 1], got {p!r}")
    if p == 0.0 or p == 1.0:
        return 0.0
    return -p * math.log2(p) - (1.0 - p) * math.log2(1.0 - p)


def inv_binary_entropy(y: float) -> float:
    """The p in [0, 1/2] with H_b(p) = y, by bisection."""
    if not 0.0 <= y <= 1.0 or math.isnan(y):
        raise ValueError(f"inv_binary_entropy needs y in [0, 1], got {y!r}")
    if y == 0.0:
        return 0.0
    if y == 1.0:
        return 0.5
    lo, hi = 0.0, 0.5
    while hi - lo > INV_ENTROPY_TOL:
        mid = 0.5 * (lo + hi)
        if binary_entropy(mid) < y:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def capacity(M: int, n: int) -> float:
    """PIR capacity C_{M,n} = (1 + 1/n + ... + 1/n^(M-1))^-1."""
    if M < 1 or n < 2:
        raise ValueError(f"need M >= 1 and n >= 2, got M={M}, n={n}")
    return 1.0 / sum(n ** (-k) for k in range(M))


# ---------------------------------------------------------------------------
# Database and queries


@dataclass(frozen=True, eq=False)
class Database:
    """M files of beta GF(2) symbols, stored as an (M, beta) uint8 matrix."""

    symbols: np.ndarray

    def __init__(self, symbols: Any) -> None:
        arr = np.array(symbols, dtype=np.uint8)
        if arr.ndim != 2:
            raise ValueError("database symbols must be an M x beta matrix")
        if np.any(arr > 1):
            raise ValueError("database symbols must be 0 or 1")
        arr.setflags(write=False)
        object.__setattr__(self, "symbols", arr)

    @property
    def M(self) -> int:
        return self.symbols.shape[0]

    @property
    def beta(self) -> int:
        return self.symbols.shape[1]

    def file(self, m: int) -> np.ndarray:
        return self.symbols[m - 1]

    @classmethod
    def zeros(cls, M: int, beta: int) -> "Database":
        return cls(np.zeros((M, beta), dtype=np.uint8))

    @classmethod
    def random(cls, M: int, beta: int, rng: np.random.Generator) -> "Database":
        return cls(rng.integers(0, 2, size=(M, beta), dtype=np.uint8))


def db_symbols(db: Database | np.ndarray) -> np.ndarray:
    """Symbol array of shape (..., M, beta); batches of databases pass through."""
    if isinstance(db, Database):
        return db.symbols
    arr = np.asarray(db, dtype=np.uint8)
    if arr.ndim < 2:
        raise ValueError("database array needs at least two dimensions")
    return arr


@dataclass(frozen=True)
class Query:
    """A query vector with entries in [0, alphabet_size - 1].

    ``partition`` carries the group index j of the partition construction and
    is None for every other scheme.
    """

    entries: tuple[int, ...]
    alphabet_size: int
    partition: int | None = None

    def __post_init__(self) -> None:
        entries = tuple(int(e) for e in self.entries)
        object.__setattr__(self, "entries", entries)
        if self.alphabet_size < 2:
            raise ValueError("alphabet_size must be at least 2")
        if any(e < 0 or e >= self.alphabet_size for e in entries):
            raise ValueError(f"query entries {entries} outside [0, {self.alphabet_size - 1}]")
        if self.partition is not None and self.partition < 1:
            raise ValueError("partition index is 1-based")

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def weight(self) -> int:
        return sum(1 for e in self.entries if e != 0)

    def is_zero(self) -> bool:
        return not any(self.entries)

    def sort_key(self) -> tuple:
        return (self.entries, self.partition or 0)


# ---------------------------------------------------------------------------
# Conditional query distributions


@dataclass(frozen=True, eq=False)
class ServerQueryDist:
    """P(Q_l = q | M = m) for one server: an M x |support| row-stochastic matrix."""

    support: tuple[Query, ...]
    matrix: np.ndarray

    def __post_init__(self) -> None:
        mat = np.array(self.matrix, dtype=float)
        if mat.ndim != 2 or mat.shape[1] != len(self.support):
            raise ValueError("matrix must be M x |support|")
        if len(set(self.support)) != len(self.support):
            raise ValueError("support queries must be pairwise distinct")
        if np.any(mat < 0) or np.any(np.abs(mat.sum(axis=1) - 1.0) > PMF_TOL):
            raise ValueError("every row must be a probability vector")
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)

    @property
    def M(self) -> int:
        return self.matrix.shape[0]

    def row(self, m: int) -> Pmf:
        return Pmf(self.support, self.matrix[m - 1])


@dataclass(frozen=True, eq=False)
class CondQueryDist:
    """Per-server conditional query distributions of one scheme."""

    servers: tuple[ServerQueryDist, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "servers", tuple(self.servers))
        if not self.servers:
            raise ValueError("need at least one server")
        if len({s.M for s in self.servers}) != 1:
            raise ValueError("all servers must share the same number of files")

    @property
    def M(self) -> int:
        return self.servers[0].M

    @property
    def n(self) -> int:
        return len(self.servers)

    def __getitem__(self, l: int) -> ServerQueryDist:
        """Server ``l`` (1-based)."""
        return self.servers[l - 1]

    @classmethod
    def from_counts(cls, M: int, per_server: Sequence[dict[int, dict[Query, float]]]) -> "CondQueryDist":
        """Build from ``per_server[l][m][q] = mass``; rows are normalized per m."""
        servers = []
        for table in per_server:
            support = sorted({q for row in table.values() for q in row}, key=Query.sort_key)
            col = {q: i for i, q in enumerate(support)}
            mat = np.zeros((M, len(support)))
            for m, row in table.items():
                for q, mass in row.items():
                    mat[m - 1, col[q]] += mass
            totals = mat.sum(axis=1, keepdims=True)
            if np.any(totals <= 0):
                raise ValueError("every file index needs at least one query")
            servers.append(ServerQueryDist(tuple(support), mat / totals))
        return cls(tuple(servers))


def marginal_query_dist(d: CondQueryDist, p_m: Pmf | Sequence[float] | None = None) -> list[Pmf]:
    """P(Q_l = q) = sum_m p_m(m) P(Q_l = q | M = m), one Pmf per server."""
    weights = np.full(d.M, 1.0 / d.M) if p_m is None else _as_probs(p_m)
    if weights.shape[0] != d.M:
        raise ValueError(f"p_m has {weights.shape[0]} entries but the scheme has {d.M} files")
    return [Pmf(s.support, weights @ s.matrix) for s in d.servers]


# ---------------------------------------------------------------------------
# Performance summary


@dataclass(frozen=True)
class TradeoffPoint:
    """Rate, upload (bits), access (symbols) and the four leakages.

    MI, WIL and MaxL are in bits; epsilon-privacy is in nats and may be inf.
    """

    rate: float
    upload: float
    access: float
    rho_mi: float
    rho_wil: float
    rho_maxl: float
    rho_epsp: float

    def as_dict(self) -> dict[str, float]:
        return {
            "rate": self.rate,
            "upload": self.upload,
            "access": self.access,
            "mi": self.rho_mi,
            "wil": self.rho_wil,
            "maxl": self.rho_maxl,
            "epsp": self.rho_epsp,
        }

    def max_abs_diff(self, other: "TradeoffPoint") -> float:
        """Largest coordinate difference; matching infinities count as zero."""
        worst = 0.0
        for a, b in zip(self.as_dict().values(), other.as_dict().values()):
            if math.isinf(a) or math.isinf(b):
                if a != b:
                    return math.inf
                continue
            worst = max(worst, abs(a - b))
        return worst


# ---------------------------------------------------------------------------
# Scheme contract


class Scheme(ABC):
    """An (M, n) retrieval scheme with file length ``beta``.

    Subclasses provide query generation, answers and decoding. ``answer``
    accepts a single :class:`Database` or a batch array of shape
    (..., M, beta) and returns symbols of shape (..., answer_len(q)).
    Queries depend only on (m, s), never on the stored files.
    """

    scheme_id: int = 0
    name: str = "scheme"

    def __init__(self, M: int, n: int, beta: int, strategy: Pmf) -> None:
        if M < 1 or n < 2 or beta < 1:
            raise ValueError(f"invalid scheme dimensions M={M}, n={n}, beta={beta}")
        self.M = M
        self.n = n
        self.beta = beta
        self.strategy = strategy

    def __repr__(self) -> str:
        return f"{type(self).__name__}(M={self.M}, n={self.n})"

    @property
    @abstractmethod
    def query_alphabet(self) -> int:
        """Per-entry alphabet size of the queries this scheme emits."""

    @abstractmethod
    def queries(self, m: int, s: Any) -> tuple[Query, ...]:
        """The n queries for requested file ``m`` and strategy realization ``s``."""

    @abstractmethod
    def answer(self, l: int, q: Query, db: Database | np.ndarray) -> np.ndarray:
        """Answer of server ``l`` to query ``q``."""

    @abstractmethod
    def decode(self, m: int, queries: Sequence[Query], answers: Sequence[np.ndarray]) -> np.ndarray:
        """Recover file ``m`` (shape (..., beta)) from one round."""

    def answer_len(self, q: Query) -> int:
        return 1

    def access_count(self, q: Query) -> int:
        return q.weight

    def check_file(self, m: int) -> None:
        if not 1 <= m <= self.M:
            raise ValueError(f"file index {m} outside [1, {self.M}]")

    def check_database(self, db: Database | np.ndarray) -> np.ndarray:
        sym = db_symbols(db)
        if sym.shape[-2:] != (self.M, self.beta):
            raise ValueError(f"database shape {sym.shape[-2:]} does not match ({self.M}, {self.beta})")
        return sym
