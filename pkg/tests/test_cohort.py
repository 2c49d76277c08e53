import numpy as np
import pytest
from pydantic import ValidationError

from biasprobe_lib.synthgen.models.cohort import Cohort, CovariateType
from biasprobe_lib.synthgen.models.mechanism import Downstream, Population, UModel
from biasprobe_lib.synthgen.services.cohort_service import (
    generate_cohort,
    sample_covariates,
    sample_latent,
)
from biasprobe_lib.synthgen.services.mechanism_service import make_mechanism_spec
from biasprobe_lib.synthgen.services.table_service import build_tables, draw_tables
from biasprobe_lib.utils.errors import ConfigurationError, EstimationError


def _setup(kinds, d=2, seed=0, **kwargs):
    rng = np.random.default_rng(seed)
    spec = make_mechanism_spec(kinds, 2**d, 0.3, rng, **kwargs)
    return spec, build_tables(spec, d, rng)


@pytest.mark.parametrize("population, mean", [(Population.OS, 0.6), (Population.RCT, 0.4)])
def test_covariate_rates(rng, population, mean):
    """Test that covariates are Bernoulli(0.6) in the OS and Bernoulli(0.4) in the RCT."""
    x = sample_covariates(50000, population, 6, rng)
    np.testing.assert_allclose(x.mean(axis=0), mean, atol=0.01)


def test_zero_dimension(rng):
    """Test that d=0 gives empty covariate rows in a single cell."""
    spec, tables = _setup("confounding", d=0)
    cohort = generate_cohort(tables, spec, Population.OS, 100, rng)
    assert cohort.x.shape == (100, 0)
    assert set(cohort.cells) == {0}


def test_invalid_size(rng):
    """Test that a non-positive cohort size raises a ConfigurationError."""
    with pytest.raises(ConfigurationError, match="Cohort size must be >= 1"):
        sample_covariates(0, Population.OS, 3, rng)


def test_continuous_latent_law(rng):
    """Test that a continuous U falls in the upper half with probability p_u."""
    u = sample_latent(np.full(200_000, 0.8), UModel.CONTINUOUS, rng)
    assert ((u >= 0.0) & (u <= 1.0)).all()
    assert np.mean(u >= 0.5) == pytest.approx(0.8, abs=0.01)
    assert u.mean() == pytest.approx(0.25 + 0.4, abs=0.01)


def test_rct_internal_validity(rng):
    """Test that RCT cohorts are fully selected and treated with probability 1/2."""
    spec, tables = _setup("confounding", d=3)
    rct = generate_cohort(tables, spec, Population.RCT, 50000, rng)
    assert (rct.s == 1).all()
    assert rct.a.mean() == pytest.approx(0.5, abs=0.01)
    for cell in range(8):
        rows = rct.cells == cell
        assert rct.a[rows].mean() == pytest.approx(0.5, abs=0.05)


def test_masking(rng):
    """Test that treatment and outcome are hidden exactly on unselected rows."""
    spec, tables = _setup("selection_type1", d=3)
    os = generate_cohort(tables, spec, Population.OS, 5000, rng)
    unselected = os.s == 0
    assert unselected.any()
    assert np.isnan(os.a[unselected]).all()
    assert not np.isnan(os.y[~unselected]).any()
    latent = os.oracle()
    np.testing.assert_array_equal(latent.a[~unselected], os.a[~unselected])


def test_no_bias_outcome_matches_table():
    """Test that without bias the observed outcome rate in each cell is the table entry."""
    spec, tables = _setup("no_bias", d=2, seed=1)
    os = generate_cohort(tables, spec, Population.OS, 1_000_000, np.random.default_rng(2))
    treated = (os.s == 1) & (np.nan_to_num(os.a) == 1)
    cells = os.cells
    truth = tables.low[Downstream.Y1.index]
    for cell in range(4):
        rows = treated & (cells == cell)
        se = np.sqrt(truth[cell] * (1 - truth[cell]) / rows.sum())
        assert os.y[rows].mean() == pytest.approx(truth[cell], abs=max(0.01, 5 * se))


def test_type2_selection_rate(rng):
    """Test that P(S=1 | Y=1, A=1) matches the type 2 selection table."""
    spec, tables = _setup("selection_type2", d=2)
    os = generate_cohort(tables, spec, Population.OS, 200_000, rng)
    latent = os.oracle()
    rows = (latent.a == 1) & (latent.y == 1)
    assert os.s[rows].mean() == pytest.approx(0.9, abs=0.01)
    rows = (latent.a == 0) & (latent.y == 1)
    assert os.s[rows].mean() == pytest.approx(0.1, abs=0.01)


def test_unflagged_selection_ignores_u(rng):
    """Test that selection does not depend on U under confounding."""
    spec, tables = _setup("confounding", d=2)
    os = generate_cohort(tables, spec, Population.OS, 100_000, rng)
    u = os.oracle().u
    gap = os.s[u == 1].mean() - os.s[u == 0].mean()
    assert abs(gap) < 0.02


def test_transportability_shifts_latent_between_cohorts():
    """Test that the empirical P(U=1 | x) follows each population's own latent table."""
    spec, tables = _setup("transportability", d=3, seed=4)
    rng = np.random.default_rng(5)
    rct = generate_cohort(tables, spec, Population.RCT, 60000, rng)
    os = generate_cohort(tables, spec, Population.OS, 60000, rng)
    gaps = []
    for cell in range(8):
        u_rct = rct.oracle().u[rct.cells == cell].mean()
        u_os = os.oracle().u[os.cells == cell].mean()
        assert u_rct == pytest.approx(spec.p_u_rct[cell], abs=0.04)
        assert u_os == pytest.approx(spec.p_u_os[cell], abs=0.04)
        gaps.append(abs(u_rct - u_os))
    assert max(gaps) > 0.3


def test_reproducible():
    """Test that identical inputs and seeds give identical cohorts."""
    spec, tables = _setup("transportability", d=3)
    first = generate_cohort(tables, spec, Population.OS, 1000, np.random.default_rng(9))
    second = generate_cohort(tables, spec, Population.OS, 1000, np.random.default_rng(9))
    for name in ("x", "s", "a", "y"):
        np.testing.assert_array_equal(getattr(first, name), getattr(second, name))
    np.testing.assert_array_equal(first.oracle().u, second.oracle().u)


def test_tables_without_dimension(rng):
    """Test that generating from tables with no covariate dimension raises."""
    spec = make_mechanism_spec("confounding", 4, 0.3, rng)
    tables = draw_tables(spec, 4, rng)
    with pytest.raises(ConfigurationError, match="over \\{0,1\\}\\^d cells"):
        generate_cohort(tables, spec, Population.OS, 10, rng)


def test_masked_cohort_hides_latent(rng):
    """Test that a masked cohort refuses oracle access."""
    spec, tables = _setup("confounding")
    os = generate_cohort(tables, spec, Population.OS, 100, rng).masked()
    assert not os.is_synthetic
    with pytest.raises(EstimationError, match="no latent columns"):
        os.oracle()


def test_subset_keeps_rows(rng):
    """Test that a subset carries covariates, outcomes and latent columns together."""
    spec, tables = _setup("confounding")
    os = generate_cohort(tables, spec, Population.OS, 100, rng)
    part = os.subset(np.array([3, 7, 11]))
    assert part.n == 3
    np.testing.assert_array_equal(part.x, os.x[[3, 7, 11]])
    np.testing.assert_array_equal(part.oracle().u, os.oracle().u[[3, 7, 11]])


def test_rct_must_be_selected():
    """Test that an RCT cohort with an unselected row raises a ValidationError."""
    with pytest.raises(ValidationError, match="fully selected"):
        Cohort(
            population=Population.RCT,
            x=np.zeros((2, 1), dtype=np.int8),
            s=[1, 0],
            a=[1.0, np.nan],
            y=[0.0, np.nan],
        )


def test_outcome_on_unselected_row():
    """Test that an outcome on an unselected row raises a ValidationError."""
    with pytest.raises(ValidationError, match="present exactly on selected rows"):
        Cohort(
            population=Population.OS,
            x=np.zeros((2, 1), dtype=np.int8),
            s=[1, 0],
            a=[1.0, np.nan],
            y=[0.0, 1.0],
        )


def test_continuous_cells_refused():
    """Test that continuous covariates cannot be enumerated as cells."""
    cohort = Cohort(
        population=Population.OS,
        x=np.array([[0.3], [1.7]]),
        s=[1, 1],
        a=[1.0, 0.0],
        y=[0.0, 1.0],
        covariate_type=CovariateType.CONTINUOUS,
    )
    assert cohort.names == ["x_0"]
    with pytest.raises(EstimationError, match="cannot be enumerated"):
        cohort.cells
