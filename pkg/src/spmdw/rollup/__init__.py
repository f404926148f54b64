"""Hierarchical rollup, indicator computation, and pivot analytics."""

from .backend import backend_name
from .engine import (
    AggregateCell,
    AnalyticsEngine,
    AnalyticsQuery,
    AnalyticsTable,
    QueryDim,
    format_value,
)

__all__ = [
    "AggregateCell",
    "AnalyticsEngine",
    "AnalyticsQuery",
    "AnalyticsTable",
    "QueryDim",
    "backend_name",
    "format_value",
]
