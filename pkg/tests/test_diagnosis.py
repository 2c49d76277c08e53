import numpy as np
import pytest
from pydantic import ValidationError

from biasprobe_lib.diagnosis.models.options import DiagnoseOptions
from biasprobe_lib.diagnosis.services.diagnosis_service import (
    diagnose,
    diagnose_cohorts,
    resolve_model_kind,
    split_os,
)
from biasprobe_lib.nuisance.models.estimator import ModelKind
from biasprobe_lib.signals.models.report import SignalUnit, Verdict
from biasprobe_lib.synthgen.models.cohort import CovariateType
from biasprobe_lib.synthgen.models.mechanism import Population, Target, UModel
from biasprobe_lib.synthgen.models.tables import ProbabilityTables
from biasprobe_lib.synthgen.services.cohort_service import generate_cohort
from biasprobe_lib.synthgen.services.mechanism_service import make_mechanism_spec
from biasprobe_lib.utils.errors import EstimationError


def test_split_sizes_and_determinism(make_run):
    """Test that the split holds out the requested share and depends only on the seed."""
    _, _, _, os, _ = make_run("confounding", d=2, n_os=1000, u_model=UModel.CONTINUOUS)
    train, val = split_os(os, 0.2, split_seed=3)
    assert (train.n, val.n) == (800, 200)
    again_train, _ = split_os(os, 0.2, split_seed=3)
    np.testing.assert_array_equal(train.x, again_train.x)
    other_train, _ = split_os(os, 0.2, split_seed=4)
    assert not np.array_equal(train.oracle().u, other_train.oracle().u)


def test_split_is_a_partition(make_run):
    """Test that training and validation rows are disjoint and cover the cohort."""
    _, _, _, os, _ = make_run("confounding", d=2, n_os=500, u_model=UModel.CONTINUOUS)
    train, val = split_os(os, 0.3, split_seed=0)
    u = np.sort(np.r_[train.oracle().u, val.oracle().u])
    np.testing.assert_array_equal(u, np.sort(os.oracle().u))


def test_split_too_small(make_run):
    """Test that a split leaving no validation row raises an EstimationError."""
    _, _, _, os, _ = make_run("confounding", d=1, n_os=3)
    with pytest.raises(EstimationError, match="Cannot hold out"):
        split_os(os, 0.1, split_seed=0)


def test_options_validation():
    """Test that out-of-range options raise a ValidationError."""
    with pytest.raises(ValidationError, match="must lie in \\(0, 1\\)"):
        DiagnoseOptions(alpha=1.5)
    with pytest.raises(ValidationError, match="extra"):
        DiagnoseOptions(unknown=1)
    with pytest.raises(ValidationError, match="min_cell_rows"):
        DiagnoseOptions(min_cell_rows=0)
    with pytest.raises(ValidationError):
        DiagnoseOptions(unit="block")
    assert DiagnoseOptions(unit="cell").unit is SignalUnit.CELL
    assert DiagnoseOptions().debias


def test_model_kind_resolution(make_run):
    """Test that synthetic binary cohorts default to frequency tables and others to logistic."""
    _, _, rct, os, _ = make_run("confounding", d=2, n_rct=100, n_os=100)
    options = DiagnoseOptions()
    assert resolve_model_kind(rct, os, options) is ModelKind.FREQUENCY
    assert resolve_model_kind(rct.masked(), os.masked(), options) is ModelKind.LOGISTIC
    forced = DiagnoseOptions(model_kind=ModelKind.LOGISTIC)
    assert resolve_model_kind(rct, os, forced) is ModelKind.LOGISTIC


def test_channel_row_counts(make_run):
    """Test that each channel is scored on its conditioning rows."""
    _, _, rct, os, val = make_run("selection_type1", d=3)
    report = diagnose_cohorts(rct, os, val)
    selected = val.s == 1
    treated = selected & (np.nan_to_num(val.a) == 1)
    assert report.channels[Target.S].n_used == val.n
    assert report.channels[Target.A].n_used == selected.sum()
    assert report.channels[Target.Y].n_used == treated.sum()
    assert report.n_val == val.n
    assert report.n_rct == rct.n
    assert report.split_seed is None


def test_report_flags(make_run):
    """Test that the report carries positivity and convergence diagnostics."""
    _, _, rct, os, val = make_run("confounding", d=3)
    report = diagnose_cohorts(rct, os, val)
    assert set(report.flags["empty_cells"]) == {"g1", "eta_S", "eta_A", "eta_Y"}
    assert report.flags["non_converged"] == []
    assert report.flags["unsupported_validation_rows"] == 0
    assert report.flags["undefined_channels"] == []


def test_diagnose_matches_cohort_path(make_run):
    """Test that diagnose equals fitting on its own seeded split."""
    _, _, rct, os, _ = make_run("transportability", d=3, n_os=10000)
    options = DiagnoseOptions(split_seed=7)
    report = diagnose(rct, os, options)
    train, val = split_os(os, options.val_fraction, 7)
    direct = diagnose_cohorts(
        rct, train, val, options.model_copy(update={"model_kind": ModelKind.FREQUENCY}), 7
    )
    assert report.to_record() == direct.to_record()
    assert report.split_seed == 7
    assert report.n_train == 8000


def test_no_bias_verdict(make_run):
    """Test that unbiased cohorts are diagnosed as unbiased in most seeds."""
    verdicts = []
    for seed in range(3):
        _, _, rct, os, val = make_run(
            "no_bias", d=4, n_rct=50000, n_os=50000, n_val=2000, seed=seed
        )
        verdicts.append(diagnose_cohorts(rct, os, val).verdict)
    assert verdicts.count(Verdict.NO_BIAS) >= 2


def test_logistic_diagnosis(make_run):
    """Test that the logistic estimator runs end to end."""
    _, _, rct, os, val = make_run("confounding", d=3, n_rct=5000, n_os=5000, n_val=1000)
    report = diagnose_cohorts(rct, os, val, DiagnoseOptions(model_kind=ModelKind.LOGISTIC))
    assert report.model_kind == "logistic"
    assert set(report.channels) == set(Target)


def test_permutation_diagnosis(make_run):
    """Test that the permutation test option produces valid p-values."""
    _, _, rct, os, val = make_run("confounding", d=2, n_rct=5000, n_os=5000, n_val=500)
    report = diagnose_cohorts(rct, os, val, DiagnoseOptions(permutations=99))
    assert all(1e-5 <= c.p_value <= 1.0 for c in report.channels.values())


def test_population_order(make_run):
    """Test that passing the cohorts in the wrong roles raises an EstimationError."""
    _, _, rct, os, val = make_run("confounding", d=2, n_rct=100, n_os=100, n_val=50)
    with pytest.raises(EstimationError, match="Expected an RCT cohort"):
        diagnose_cohorts(os, rct, val)


def test_dimension_mismatch(make_run):
    """Test that cohorts with different dimensions raise an EstimationError."""
    _, _, rct, _, _ = make_run("confounding", d=2, n_rct=100, n_os=100, n_val=50)
    _, _, _, os, val = make_run("confounding", d=3, n_rct=100, n_os=100, n_val=50)
    with pytest.raises(EstimationError, match="share the covariate dimension"):
        diagnose_cohorts(rct, os, val)


def test_cell_unit_diagnosis(make_run):
    """Test that the cell unit scores every channel over covariate cells."""
    _, _, rct, os, val = make_run("confounding", d=3, n_rct=20000, n_os=20000, n_val=4000)
    report = diagnose_cohorts(rct, os, val, DiagnoseOptions(unit=SignalUnit.CELL))
    assert report.unit is SignalUnit.CELL
    assert report.debiased
    for channel in report.channels.values():
        assert 3 <= channel.n_units <= 8
    by_row = diagnose_cohorts(rct, os, val)
    for target in Target:
        assert report.channels[target].cov_hat == pytest.approx(by_row.channels[target].cov_hat)


def test_cell_unit_refuses_continuous(make_run):
    """Test that continuous covariates cannot be scored over cells."""
    _, _, rct, os, val = make_run("confounding", d=2, n_rct=500, n_os=500, n_val=200)
    continuous = {"covariate_type": CovariateType.CONTINUOUS}
    options = DiagnoseOptions(model_kind=ModelKind.LOGISTIC, unit=SignalUnit.CELL)
    with pytest.raises(EstimationError, match="cannot be enumerated as cells"):
        diagnose_cohorts(
            rct.model_copy(update=continuous),
            os.model_copy(update=continuous),
            val.model_copy(update=continuous),
            options,
        )


def test_debias_option(make_run):
    """Test that the noise correction changes the scored magnitude but not the reported mean."""
    _, _, rct, os, val = make_run("no_bias", d=4, n_rct=20000, n_os=20000, seed=1)
    raw = diagnose_cohorts(rct, os, val, DiagnoseOptions(debias=False))
    corrected = diagnose_cohorts(rct, os, val)
    assert not raw.debiased
    assert corrected.debiased
    assert corrected.mean_abs_bias == raw.mean_abs_bias
    assert corrected.channels[Target.S].cov_hat != raw.channels[Target.S].cov_hat
    assert corrected.to_record()["debiased"] is True


@pytest.mark.slow
def test_confounding_pair_across_splits():
    """Test that one confounded pair at n = 50000 is diagnosed as confounding in 80% of 50 splits."""
    # cells with x_1 = 1 have U-dependent treatment and outcome, S is flat at 0.5
    low = [[0.5] * 4, [0.9, 0.9, 0.1, 0.1], [0.5] * 4, [0.9, 0.9, 0.1, 0.1]]
    high = [[0.5] * 4, [0.9] * 4, [0.5] * 4, [0.9] * 4]
    rng = np.random.default_rng(2024)
    spec = make_mechanism_spec("confounding", 4, 0.3, rng)
    tables = ProbabilityTables(low=low, high=high, f_param=0.3, d=2)
    rct = generate_cohort(tables, spec, Population.RCT, 50000, rng)
    os = generate_cohort(tables, spec, Population.OS, 50000, rng)
    verdicts = [
        diagnose(rct, os, DiagnoseOptions(split_seed=seed)).verdict for seed in range(50)
    ]
    assert verdicts.count(Verdict.CONFOUNDING) >= 40
