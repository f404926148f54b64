"""Aggregate public-health data warehouse: hierarchical collection of the 12
minimum-service (SPM) indicators, single-entry authority, 4C quality gates,
phased review workflows, offline-first sync, and pivot analytics."""

__version__ = "0.1.0"

from .model import (  # noqa: F401
    Aggregation,
    DataElement,
    DataSet,
    DataValue,
    Indicator,
    MetadataBundle,
    OrgLevel,
    OrgUnit,
    Program,
    Role,
    Status,
    User,
    ValueType,
    build_org_tree,
    check_authority,
)
from .periods import Period, PeriodType, parse_period, period_children  # noqa: F401
from .store import Store  # noqa: F401
from .workflow import POLICIES, FlowPolicy, PolicyName, ReviewAction, Warehouse  # noqa: F401
