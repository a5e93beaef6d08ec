"""Execute retrieval rounds between a client and n stateless servers.

Queries and answers cross a little-endian byte format:

QUERY:  b"WQ", u8 version, u8 scheme_id, u16 M, u16 n, u16 server (1-based),
        u32 payload_len, payload, then u16 partition only when scheme_id == 3.
ANSWER: b"WA", u8 version, u32 payload_len, payload.

``payload_len`` counts elements: query entries (one u8 each) or bits. Scheme
B queries (scheme_id 2) and all answers are packed LSB-first with zero
padding in the last byte.
"""

from __future__ import annotations

import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .core import (
    CapacityError,
    CondQueryDist,
    Database,
    ProtocolError,
    Query,
    Scheme,
    ServerQueryDist,
    TradeoffPoint,
    entropy,
)
from .metrics import epsp_leakage, maxl_leakage, mi_leakage, wil_leakage
from .wrappers import PartitionScheme, TimeShareScheme

VERSION = 1
QUERY_MAGIC = b"WQ"
ANSWER_MAGIC = b"WA"
_QHEAD = struct.Struct("<2sBBHHHI")
_AHEAD = struct.Struct("<2sBI")
_U16 = struct.Struct("<H")
DEFAULT_CAP = 2**24

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


class WireError(ProtocolError):
    """A byte message does not follow the wire format."""


# ---------------------------------------------------------------------------
# Random numbers


class SplitMix64:
    """Counter-based SplitMix64: output i is mix(seed + (i + 1) * golden_gamma).

    Every draw is a pure function of (seed, counter), so streams reproduce
    bit-for-bit across platforms and can be generated in vectorized blocks.
    """

    def __init__(self, seed: int) -> None:
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.counter = 0

    @staticmethod
    def _mix(z: np.ndarray) -> np.ndarray:
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        return z ^ (z >> np.uint64(31))

    def next_u64(self, size: int) -> np.ndarray:
        """The next ``size`` raw 64-bit outputs."""
        k = np.arange(self.counter + 1, self.counter + size + 1, dtype=np.uint64)
        self.counter += size
        with np.errstate(over="ignore"):
            return self._mix(np.uint64(self.seed) + k * _GAMMA)

    def uniform(self, size: int) -> np.ndarray:
        """Doubles in [0, 1) built from the top 53 bits."""
        return (self.next_u64(size) >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def integers(self, high: int, size: int) -> np.ndarray:
        """Integers in [0, high) by scaling uniforms."""
        return np.minimum((self.uniform(size) * high).astype(np.int64), high - 1)

    def bits(self, size: int) -> np.ndarray:
        """Fair bits taken from the top bit of each output."""
        return (self.next_u64(size) >> np.uint64(63)).astype(np.uint8)

    def choice(self, probs: np.ndarray, size: int) -> np.ndarray:
        """Indices drawn from ``probs`` by inverse CDF."""
        cdf = np.cumsum(probs)
        cdf[-1] = 1.0
        return np.minimum(np.searchsorted(cdf, self.uniform(size), side="right"), len(probs) - 1)


def random_databases(M: int, beta: int, count: int, seed: int) -> np.ndarray:
    """``count`` uniform databases as a (count, M, beta) uint8 array."""
    return SplitMix64(seed).bits(count * M * beta).reshape(count, M, beta)


# ---------------------------------------------------------------------------
# Wire format


def pack_bits(bits: Sequence[int]) -> bytes:
    arr = np.asarray(bits, dtype=np.uint8)
    return np.packbits(arr, bitorder="little").tobytes() if arr.size else b""


def unpack_bits(data: bytes, count: int) -> np.ndarray:
    need = (count + 7) // 8
    if len(data) != need:
        raise WireError(f"expected {need} payload bytes for {count} bits, got {len(data)}")
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8), bitorder="little")
    if np.any(bits[count:]):
        raise WireError("nonzero padding bits")
    return bits[:count].copy()


@dataclass(frozen=True)
class QueryMessage:
    scheme_id: int
    M: int
    n: int
    server: int
    entries: tuple[int, ...]
    partition: int | None = None

    @property
    def packed(self) -> bool:
        return self.scheme_id == 2

    def encode(self) -> bytes:
        if self.scheme_id not in (1, 2, 3, 4):
            raise WireError(f"unknown scheme id {self.scheme_id}")
        if (self.scheme_id == 3) != (self.partition is not None):
            raise WireError("a partition index travels exactly with scheme id 3")
        if self.packed:
            payload = pack_bits(self.entries)
        else:
            if any(not 0 <= e <= 255 for e in self.entries):
                raise WireError("query entries must fit in one byte")
            payload = bytes(self.entries)
        out = _QHEAD.pack(QUERY_MAGIC, VERSION, self.scheme_id, self.M, self.n, self.server, len(self.entries)) + payload
        if self.partition is not None:
            out += _U16.pack(self.partition)
        return out

    @classmethod
    def decode(cls, data: bytes) -> "QueryMessage":
        if len(data) < _QHEAD.size:
            raise WireError("query message too short")
        magic, version, sid, M, n, server, count = _QHEAD.unpack_from(data)
        if magic != QUERY_MAGIC:
            raise WireError(f"bad query magic {magic!r}")
        if version != VERSION:
            raise WireError(f"unsupported version {version}")
        if sid not in (1, 2, 3, 4):
            raise WireError(f"unknown scheme id {sid}")
        body = data[_QHEAD.size :]
        size = (count + 7) // 8 if sid == 2 else count
        tail = _U16.size if sid == 3 else 0
        if len(body) != size + tail:
            raise WireError(f"query body has {len(body)} bytes, expected {size + tail}")
        payload = body[:size]
        entries = tuple(int(x) for x in unpack_bits(payload, count)) if sid == 2 else tuple(payload)
        partition = _U16.unpack_from(body, size)[0] if sid == 3 else None
        return cls(sid, M, n, server, entries, partition)


@dataclass(frozen=True)
class AnswerMessage:
    bits: tuple[int, ...]

    def encode(self) -> bytes:
        return _AHEAD.pack(ANSWER_MAGIC, VERSION, len(self.bits)) + pack_bits(self.bits)

    @classmethod
    def decode(cls, data: bytes) -> "AnswerMessage":
        if len(data) < _AHEAD.size:
            raise WireError("answer message too short")
        magic, version, count = _AHEAD.unpack_from(data)
        if magic != ANSWER_MAGIC:
            raise WireError(f"bad answer magic {magic!r}")
        if version != VERSION:
            raise WireError(f"unsupported version {version}")
        bits = unpack_bits(data[_AHEAD.size :], count)
        return cls(tuple(int(b) for b in bits))


def wire_scheme_id(scheme: Scheme) -> int:
    """Scheme id written into query headers.

    A time-shared partition scheme still needs the partition trailer, so it
    travels as id 3.
    """
    if isinstance(scheme, TimeShareScheme) and isinstance(scheme.base, PartitionScheme):
        return 3
    return scheme.scheme_id


def encode_query(scheme: Scheme, server: int, q: Query) -> bytes:
    sid = wire_scheme_id(scheme)
    return QueryMessage(sid, scheme.M, scheme.n, server, q.entries, q.partition if sid == 3 else None).encode()


# ---------------------------------------------------------------------------
# Parties


class Server:
    """Stateless handler holding a replica of the database.

    A server sees only its own query bytes; there is no channel between
    servers, which models the non-colluding setting.
    """

    def __init__(self, index: int, scheme: Scheme, db: Database | np.ndarray) -> None:
        self.index = index
        self.scheme = scheme
        self.db = db

    def handle(self, data: bytes) -> bytes:
        msg = QueryMessage.decode(data)
        if (msg.M, msg.n) != (self.scheme.M, self.scheme.n) or msg.server != self.index:
            raise WireError("query header does not match this server")
        q = Query(msg.entries, self.scheme.query_alphabet, msg.partition)
        ans = self.scheme.answer(self.index, q, self.db)
        if len(ans) != self.scheme.answer_len(q):
            raise ProtocolError("answer length disagrees with the length function")
        return AnswerMessage(tuple(int(x) for x in ans)).encode()


@dataclass
class Transcript:
    """One executed retrieval round."""

    m: int
    s: Any
    t: int | None
    queries: tuple[Query, ...]
    answers: tuple[np.ndarray, ...]
    decoded: np.ndarray | None
    downloaded_bits: int
    accessed_symbols: int
    uploaded_bits: int
    query_bytes: tuple[bytes, ...] = field(repr=False, default=())
    answer_bytes: tuple[bytes, ...] = field(repr=False, default=())
    ok: bool | None = None


def sample_strategy(scheme: Scheme, rng: SplitMix64) -> Any:
    return scheme.strategy.support[int(rng.choice(scheme.strategy.probs, 1)[0])]


def run_round(
    scheme: Scheme,
    db: Database | np.ndarray,
    m: int,
    s: Any = None,
    rng_seed: int = 0,
    parallel: bool = False,
    verify: bool = True,
) -> Transcript:
    """Run one full round over the wire format.

    When ``s`` is None it is drawn from the strategy with a SplitMix64
    stream seeded by ``rng_seed``. Servers answer independently, optionally
    on a thread pool; the client then decodes.

    Raises:
        ProtocolError: if decoding fails or (with ``verify``) returns the wrong file.
            The exception carries the transcript.
    """
    scheme.check_file(m)
    if s is None:
        s = sample_strategy(scheme, SplitMix64(rng_seed))
    sym = scheme.check_database(db)
    if sym.ndim != 2:
        raise ValueError("run_round takes a single database")
    queries = scheme.queries(m, s)
    servers = [Server(l, scheme, sym) for l in range(1, scheme.n + 1)]
    q_bytes = tuple(encode_query(scheme, l, q) for l, q in enumerate(queries, start=1))
    if parallel:
        with ThreadPoolExecutor(max_workers=scheme.n) as pool:
            a_bytes = tuple(pool.map(lambda pair: pair[0].handle(pair[1]), zip(servers, q_bytes)))
    else:
        a_bytes = tuple(srv.handle(b) for srv, b in zip(servers, q_bytes))
    answers = tuple(np.array(AnswerMessage.decode(b).bits, dtype=np.uint8) for b in a_bytes)
    tr = Transcript(
        m=m,
        s=s,
        t=s[1] if isinstance(scheme, TimeShareScheme) else None,
        queries=queries,
        answers=answers,
        decoded=None,
        downloaded_bits=sum(scheme.answer_len(q) for q in queries),
        accessed_symbols=sum(scheme.access_count(q) for q in queries),
        uploaded_bits=8 * sum(len(b) for b in q_bytes),
        query_bytes=q_bytes,
        answer_bytes=a_bytes,
    )
    try:
        tr.decoded = scheme.decode(m, queries, answers)
    except ProtocolError as exc:
        tr.ok = False
        raise ProtocolError(f"decode failed: {exc}", tr) from exc
    tr.ok = bool(np.array_equal(tr.decoded, sym[m - 1]))
    if verify and not tr.ok:
        raise ProtocolError(f"decoded file {m} does not match the database", tr)
    return tr


# ---------------------------------------------------------------------------
# Exhaustive and sampled runs


@dataclass(frozen=True)
class Failure:
    m: int
    s: Any
    db: np.ndarray
    reason: str


@dataclass(frozen=True)
class ExhaustiveReport:
    """Outcome of running every (m, s) against a batch of databases.

    Costs are exact expectations over uniform m and the strategy law.
    """

    rounds: int
    failures: tuple[Failure, ...]
    expected_download: float
    expected_access: float
    rate: float

    @property
    def passed(self) -> bool:
        return not self.failures


def run_exhaustive(
    scheme: Scheme, db_samples: int, rng_seed: int = 0, cap: int = DEFAULT_CAP, max_failures: int = 10
) -> ExhaustiveReport:
    """Decode every (m, s) with P_S(s) > 0 against ``db_samples`` random databases.

    Databases are processed as one numpy batch per (m, s).

    Raises:
        CapacityError: if support size x M x db_samples exceeds ``cap``.
    """
    if db_samples < 1:
        raise ValueError("db_samples must be at least 1")
    pos = scheme.strategy.positive()
    work = len(pos) * scheme.M * db_samples
    if work > cap:
        raise CapacityError(f"{work} decode checks exceed the cap of {cap}")
    dbs = random_databases(scheme.M, scheme.beta, db_samples, rng_seed)
    failures: list[Failure] = []
    down = acc = 0.0
    rounds = 0
    for s, ps in pos:
        for m in range(1, scheme.M + 1):
            queries = scheme.queries(m, s)
            down += ps * sum(scheme.answer_len(q) for q in queries) / scheme.M
            acc += ps * sum(scheme.access_count(q) for q in queries) / scheme.M
            rounds += db_samples
            try:
                answers = [scheme.answer(l, q, dbs) for l, q in enumerate(queries, start=1)]
                got = scheme.decode(m, queries, answers)
            except Exception as exc:  # a broken decoder is a finding, not a crash
                if len(failures) < max_failures:
                    failures.append(Failure(m, s, dbs[0].copy(), f"{type(exc).__name__}: {exc}"))
                continue
            bad = np.flatnonzero(np.any(got != dbs[:, m - 1, :], axis=-1))
            if bad.size and len(failures) < max_failures:
                failures.append(Failure(m, s, dbs[bad[0]].copy(), "decoded file differs"))
    return ExhaustiveReport(rounds, tuple(failures), down, acc, scheme.beta / down)


@dataclass(frozen=True)
class MonteCarloResult:
    """Sample means with standard errors and plug-in leakage estimates.

    Leakage fields are nan when some file index was never sampled.
    """

    trials: int
    download_mean: float
    download_stderr: float
    access_mean: float
    access_stderr: float
    point: TradeoffPoint


def run_monte_carlo(scheme: Scheme, trials: int, rng_seed: int = 0, cap: int = DEFAULT_CAP) -> MonteCarloResult:
    """Sample (m, s) and estimate costs and leakages from the sampled queries.

    Query generation is tabulated once per (m, s); sampling then only
    draws table rows, so millions of trials stay cheap.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    support = scheme.strategy.support
    if len(support) * scheme.M > cap:
        raise CapacityError("strategy table exceeds the cap")
    M, n = scheme.M, scheme.n
    K = len(support)
    qid = np.empty((M, K, n), dtype=np.int64)
    length = np.empty((M, K))
    access = np.empty((M, K))
    catalog: list[dict[Query, int]] = [{} for _ in range(n)]
    for k, s in enumerate(support):
        for m in range(1, M + 1):
            qs = scheme.queries(m, s)
            length[m - 1, k] = sum(scheme.answer_len(q) for q in qs)
            access[m - 1, k] = sum(scheme.access_count(q) for q in qs)
            for l, q in enumerate(qs):
                qid[m - 1, k, l] = catalog[l].setdefault(q, len(catalog[l]))
    rng = SplitMix64(rng_seed)
    ms = rng.integers(M, trials)
    ks = rng.choice(scheme.strategy.probs, trials)
    dl = length[ms, ks]
    ac = access[ms, ks]

    def stats(x: np.ndarray) -> tuple[float, float]:
        sd = float(x.std(ddof=1)) if trials > 1 else 0.0
        return float(x.mean()), sd / math.sqrt(trials)

    d_mean, d_se = stats(dl)
    a_mean, a_se = stats(ac)
    seen = np.bincount(ms, minlength=M)
    servers = []
    upload = 0.0
    for l in range(n):
        counts = np.zeros((M, len(catalog[l])))
        np.add.at(counts, (ms, qid[ms, ks, l]), 1.0)
        upload += entropy(counts.sum(axis=0) / trials)
        if np.all(seen > 0):
            keep = counts.sum(axis=0) > 0
            sup = tuple(q for q, i in sorted(catalog[l].items(), key=lambda kv: kv[1]) if keep[i])
            servers.append(ServerQueryDist(sup, counts[:, keep] / seen[:, None]))
    if servers:
        d = CondQueryDist(tuple(servers))
        leaks = (mi_leakage(d), wil_leakage(d), maxl_leakage(d), epsp_leakage(d))
    else:
        leaks = (math.nan,) * 4
    point = TradeoffPoint(
        rate=scheme.beta / d_mean if d_mean > 0 else math.inf,
        upload=upload,
        access=a_mean,
        rho_mi=leaks[0],
        rho_wil=leaks[1],
        rho_maxl=leaks[2],
        rho_epsp=leaks[3],
    )
    return MonteCarloResult(trials, d_mean, d_se, a_mean, a_se, point)


__all__ = [
    "AnswerMessage",
    "ExhaustiveReport",
    "Failure",
    "MonteCarloResult",
    "QueryMessage",
    "Server",
    "SplitMix64",
    "Transcript",
    "WireError",
    "encode_query",
    "pack_bits",
    "random_databases",
    "run_exhaustive",
    "run_monte_carlo",
    "run_round",
    "unpack_bits",
    "wire_scheme_id",
]
