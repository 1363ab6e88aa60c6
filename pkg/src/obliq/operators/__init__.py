"""Oblivious physical operators."""

from __future__ import annotations

from .aggregate import AggSpec, aggregate, group_aggregate
from .join import JOINS, join_hash, join_opaque, join_zero_om
from .result import ResultTable, materialize_client_result, pad_result
from .select import SELECTS, select_continuous, select_hash, select_large, select_naive, select_small
from .sources import ExecContext, FlatSource, IndexRangeSource, OramScanSource, Source

__all__ = [
    "AggSpec",
    "ExecContext",
    "FlatSource",
    "IndexRangeSource",
    "JOINS",
    "OramScanSource",
    "ResultTable",
    "SELECTS",
    "Source",
    "aggregate",
    "group_aggregate",
    "join_hash",
    "join_opaque",
    "join_zero_om",
    "materialize_client_result",
    "pad_result",
    "select_continuous",
    "select_hash",
    "select_large",
    "select_naive",
    "select_small",
]
