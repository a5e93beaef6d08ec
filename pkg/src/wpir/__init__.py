"""Weakly-private information retrieval laboratory.

Retrieval schemes over replicated servers, exact leakage and cost metrics,
a leakage optimizer for time-shared schemes, converse bounds and a
byte-level protocol simulator.
"""

from .core import (
    CapacityError,
    CondQueryDist,
    Database,
    InfeasibleError,
    Pmf,
    ProtocolError,
    Query,
    Scheme,
    ServerQueryDist,
    TradeoffPoint,
    WPIRError,
    binary_entropy,
    capacity,
    entropy,
    inv_binary_entropy,
    marginal_query_dist,
)
from .metrics import evaluate_tradeoff
from .scheme_a import SchemeA
from .scheme_b import SchemeB
from .wrappers import PartitionScheme, PartitionSchemeA, TimeShareScheme, partition_wrap, timeshare_wrap

__version__ = "0.1.0"

__all__ = [
    "CapacityError",
    "CondQueryDist",
    "Database",
    "InfeasibleError",
    "PartitionScheme",
    "PartitionSchemeA",
    "Pmf",
    "ProtocolError",
    "Query",
    "Scheme",
    "SchemeA",
    "SchemeB",
    "ServerQueryDist",
    "TimeShareScheme",
    "TradeoffPoint",
    "WPIRError",
    "binary_entropy",
    "capacity",
    "entropy",
    "evaluate_tradeoff",
    "inv_binary_entropy",
    "marginal_query_dist",
    "partition_wrap",
    "timeshare_wrap",
]
