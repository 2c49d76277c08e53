import numpy as np
import pytest

from biasprobe_lib.synthgen.models.mechanism import Population
from biasprobe_lib.synthgen.services.cohort_service import generate_cohort
from biasprobe_lib.synthgen.services.mechanism_service import make_mechanism_spec
from biasprobe_lib.synthgen.services.table_service import build_tables


def pytest_addoption(parser):
    parser.addoption(
        "--runslow", action="store_true", default=False, help="run slow reproductions"
    )


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def make_run():
    """Builds a spec, its tables and the three cohorts of a small synthetic run."""

    def _make(kinds, d=3, n_rct=20000, n_os=20000, n_val=4000, p=0.3, seed=0, **kwargs):
        rng = np.random.default_rng(seed)
        spec = make_mechanism_spec(kinds, 2**d, p, rng, **kwargs)
        tables = build_tables(spec, d, rng)
        rct = generate_cohort(tables, spec, Population.RCT, n_rct, rng)
        os_train = generate_cohort(tables, spec, Population.OS, n_os, rng)
        os_val = generate_cohort(tables, spec, Population.OS, n_val, rng)
        return spec, tables, rct, os_train, os_val

    return _make
