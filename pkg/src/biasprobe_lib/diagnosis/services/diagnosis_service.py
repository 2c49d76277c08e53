import numpy as np

from typing import Optional
from loguru import logger

from ...nuisance.models.estimator import ConditioningSpec, ModelKind
from ...nuisance.services.estimator_service import estimate_bias, fit_estimator
from ...signals.models.report import SignalReport
from ...signals.services.signal_service import compute_signal_report
from ...synthgen.models.cohort import Cohort, CovariateType
from ...synthgen.models.mechanism import Population, Target
from ...utils.cell_utils import MAX_DIMENSION
from ...utils.errors import EstimationError
from ..models.options import DiagnoseOptions


def resolve_model_kind(rct: Cohort, os: Cohort, options: DiagnoseOptions) -> ModelKind:
    """Frequency tables for synthetic binary cohorts, logistic regression otherwise."""
    if options.model_kind is not None:
        return options.model_kind
    binary = all(
        c.covariate_type is CovariateType.BINARY and c.d <= MAX_DIMENSION
        for c in (rct, os)
    )
    if binary and rct.is_synthetic and os.is_synthetic:
        return ModelKind.FREQUENCY
    return ModelKind.LOGISTIC


def split_os(
    os: Cohort, val_fraction: float, split_seed: int
) -> tuple[Cohort, Cohort]:
    """
    Shuffles OS rows with ``split_seed`` and holds out ``val_fraction`` of them.

    Returns:
        tuple[Cohort, Cohort]: Training and validation cohorts.

    Raises:
        EstimationError: If either side would be empty.
    """
    n_val = int(round(val_fraction * os.n))
    if n_val < 1 or n_val >= os.n:
        raise EstimationError(
            f"Cannot hold out {val_fraction:.0%} of {os.n} OS rows for validation"
        )
    order = np.random.default_rng(split_seed).permutation(os.n)
    return os.subset(np.sort(order[n_val:])), os.subset(np.sort(order[:n_val]))


def diagnose(
    rct: Cohort, os: Cohort, options: Optional[DiagnoseOptions] = None
) -> SignalReport:
    """
    Runs the full diagnosis on an RCT cohort and an OS cohort.

    The OS is split into training and validation rows by a seeded shuffle, then
    ``diagnose_cohorts`` fits and scores.

    Args:
        rct (Cohort): The RCT cohort.
        os (Cohort): The OS cohort.
        options (Optional[DiagnoseOptions]): Defaults when omitted.

    Returns:
        SignalReport: Signals, verdict, split seed and diagnostics.
    """
    options = options or DiagnoseOptions()
    os_train, os_val = split_os(os, options.val_fraction, options.split_seed)
    logger.debug(
        "Split OS into {} training and {} validation rows (seed {})",
        os_train.n,
        os_val.n,
        options.split_seed,
    )
    model_kind = resolve_model_kind(rct, os, options)
    return diagnose_cohorts(
        rct,
        os_train,
        os_val,
        options.model_copy(update={"model_kind": model_kind}),
        split_seed=options.split_seed,
    )


def diagnose_cohorts(
    rct: Cohort,
    os_train: Cohort,
    os_val: Cohort,
    options: Optional[DiagnoseOptions] = None,
    split_seed: Optional[int] = None,
) -> SignalReport:
    """
    Fits g1_hat on the RCT and eta_S, eta_A, eta_Y (with f1_hat = eta_Y) on OS training
    rows, then scores the signals on OS validation rows.

    Args:
        rct (Cohort): The RCT cohort.
        os_train (Cohort): OS rows used for fitting.
        os_val (Cohort): OS rows used for scoring.
        options (Optional[DiagnoseOptions]): Estimator and test options.
        split_seed (Optional[int]): Recorded in the report when the split was seeded.

    Returns:
        SignalReport: Signals, verdict and diagnostics.

    Raises:
        EstimationError: If populations or covariate dimensions do not line up.
    """
    options = options or DiagnoseOptions()
    populations = (rct.population, os_train.population, os_val.population)
    if populations != (Population.RCT, Population.OS, Population.OS):
        raise EstimationError("Expected an RCT cohort and two OS cohorts")
    if not rct.d == os_train.d == os_val.d:
        raise EstimationError("Cohorts must share the covariate dimension")

    model_kind = resolve_model_kind(rct, os_train, options)
    fit_options = dict(
        model_kind=model_kind,
        smoothing=options.smoothing,
        l2=options.l2,
        max_iters=options.max_iters,
        tol=options.tol,
    )
    estimate = estimate_bias(rct, os_train, **fit_options)
    nuisances = {
        Target.S: fit_estimator(os_train, ConditioningSpec.for_target(Target.S), **fit_options),
        Target.A: fit_estimator(os_train, ConditioningSpec.for_target(Target.A), **fit_options),
        Target.Y: estimate.f1_hat,
    }

    fitted = {"g1": estimate.g1_hat, **{f"eta_{t.value}": m for t, m in nuisances.items()}}
    flags = {
        "empty_cells": {name: len(m.empty_cells) for name, m in fitted.items()},
        "non_converged": [name for name, m in fitted.items() if not m.converged],
    }
    return compute_signal_report(
        estimate,
        nuisances,
        os_val,
        alpha=options.alpha,
        permutations=options.permutations,
        rng=options.split_seed,
        n_rct=rct.n,
        n_train=os_train.n,
        split_seed=split_seed,
        flags=flags,
        debias=options.debias,
        unit=options.unit,
        min_cell_rows=options.min_cell_rows,
    )
