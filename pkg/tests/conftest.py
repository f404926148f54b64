import pytest

from spmdw.fixtures import build_fixture, fill_store, new_warehouse
from spmdw.model import OrgLevel
from spmdw.store import Store
from spmdw.workflow import POLICIES, PolicyName, Warehouse


@pytest.fixture(scope="session")
def bundle():
    return build_fixture()


@pytest.fixture
def warehouse(bundle):
    return Warehouse(bundle, Store(), POLICIES[PolicyName.PHASE2_C])


@pytest.fixture(scope="session")
def filled_warehouse(bundle):
    """Three months of complete submissions, first month fully validated."""
    wh = Warehouse(bundle, Store(), POLICIES[PolicyName.PHASE2_C])
    fill_store(wh, ["2021-01"], upto_status="VALIDATED")
    fill_store(wh, ["2021-02", "2021-03"], upto_status="SUBMITTED")
    return wh


@pytest.fixture(scope="session")
def city_warehouse():
    """Phase 1 style: entry at the admin-city level."""
    wh = new_warehouse(policy=PolicyName.PHASE1_B, entry_level=OrgLevel.ADMIN_CITY)
    return wh
