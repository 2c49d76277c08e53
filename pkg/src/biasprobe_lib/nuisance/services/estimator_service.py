import warnings

import numpy as np

from loguru import logger
from sklearn.exceptions import ConvergenceWarning
from sklearn.linear_model import LogisticRegression

from ...synthgen.models.cohort import Cohort, CovariateType
from ...synthgen.models.mechanism import Population, Target
from ...utils.cell_utils import MAX_DIMENSION
from ...utils.errors import CapacityError, EstimationError
from ..models.estimator import (
    BiasEstimate,
    ConditioningSpec,
    FittedEstimator,
    ModelKind,
)


def fit_frequency(
    cohort: Cohort, cond: ConditioningSpec, smoothing: float = 0.5
) -> FittedEstimator:
    """
    Fits a smoothed per-cell mean of the target on the filtered rows.

    Each cell predicts ``(k + smoothing) / (m + 2 smoothing)`` for k successes among m
    rows. Cells with m = 0 predict the raw mean of all filtered rows and are flagged.

    Args:
        cohort (Cohort): Training cohort with binary covariates.
        cond (ConditioningSpec): Target and filters.
        smoothing (float): Pseudo-count, 0 for raw stratum means.

    Returns:
        FittedEstimator: The frequency table.

    Raises:
        EstimationError: If the cohort does not match the conditioning population, has
            continuous covariates, or no row survives the filters.
        CapacityError: If d > 20.
    """
    _check_population(cohort, cond)
    if cohort.covariate_type is CovariateType.CONTINUOUS:
        raise EstimationError("Frequency estimators need binary covariates")
    if cohort.d > MAX_DIMENSION:
        raise CapacityError(f"Frequency tables are capped at d <= {MAX_DIMENSION}", key="d")
    if smoothing < 0:
        raise EstimationError(f"Smoothing must be >= 0, got {smoothing}")

    mask = cond.mask(cohort)
    response = cond.response(cohort)
    if response.size == 0:
        raise EstimationError(
            f"No {cohort.population.value} rows left to fit target {cond.target.value}"
        )

    n_cells = 2**cohort.d
    cells = cohort.cells[mask]
    successes = np.bincount(cells, weights=response, minlength=n_cells)
    counts = np.bincount(cells, minlength=n_cells)
    global_mean = float(response.mean())
    empty = counts == 0
    means = np.full(n_cells, global_mean)
    means[~empty] = (successes[~empty] + smoothing) / (counts[~empty] + 2.0 * smoothing)

    empty_cells = np.flatnonzero(empty).tolist()
    if empty_cells:
        logger.warning(
            "{} of {} cells have no rows for {} ({}), using the global mean",
            len(empty_cells),
            n_cells,
            cond.target.value,
            cond.population.value,
        )
    return FittedEstimator(
        model_kind=ModelKind.FREQUENCY,
        conditioning=cond,
        d=cohort.d,
        n_train=int(response.size),
        cell_means=means.tolist(),
        cell_counts=counts.tolist(),
        empty_cells=empty_cells,
        global_mean=global_mean,
        smoothing=smoothing,
    )


def fit_logistic(
    cohort: Cohort,
    cond: ConditioningSpec,
    l2: float = 1.0,
    max_iters: int = 1000,
    tol: float = 1e-4,
) -> FittedEstimator:
    """
    Fits an L2-penalized logistic regression of the target on the covariates.

    Uses the deterministic full-batch L-BFGS solver of scikit-learn with ``C = 1 / l2``
    (unpenalized when ``l2 = 0``). Hitting ``max_iters`` keeps the last iterate and marks
    the estimator as not converged.

    Args:
        cohort (Cohort): Training cohort, binary or continuous covariates.
        cond (ConditioningSpec): Target and filters.
        l2 (float): Penalty strength.
        max_iters (int): Iteration cap.
        tol (float): Gradient tolerance.

    Returns:
        FittedEstimator: Weights, intercept and convergence status.

    Raises:
        EstimationError: If the filtered rows do not contain both classes.
    """
    _check_population(cohort, cond)
    if l2 < 0:
        raise EstimationError(f"L2 penalty must be >= 0, got {l2}")
    mask = cond.mask(cohort)
    response = cond.response(cohort)
    if np.unique(response).size < 2:
        raise EstimationError(
            f"Logistic fit of {cond.target.value} needs both positive and negative rows"
        )

    model = LogisticRegression(
        C=np.inf if l2 == 0 else 1.0 / l2,
        solver="lbfgs",
        max_iter=max_iters,
        tol=tol,
    )
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ConvergenceWarning)
        model.fit(cohort.x[mask].astype(float), response.astype(int))
    converged = not any(issubclass(w.category, ConvergenceWarning) for w in caught)
    if not converged:
        logger.warning(
            "Logistic fit of {} ({}) did not converge in {} iterations",
            cond.target.value,
            cond.population.value,
            max_iters,
        )
    return FittedEstimator(
        model_kind=ModelKind.LOGISTIC,
        conditioning=cond,
        d=cohort.d,
        n_train=int(response.size),
        coef=model.coef_[0].tolist(),
        intercept=float(model.intercept_[0]),
        l2=l2,
        converged=converged,
        n_iter=int(model.n_iter_[0]),
    )


def fit_estimator(
    cohort: Cohort,
    cond: ConditioningSpec,
    model_kind: ModelKind = ModelKind.FREQUENCY,
    smoothing: float = 0.5,
    l2: float = 1.0,
    max_iters: int = 1000,
    tol: float = 1e-4,
) -> FittedEstimator:
    """Fits the requested model kind on ``cohort``."""
    if model_kind is ModelKind.FREQUENCY:
        return fit_frequency(cohort, cond, smoothing)
    return fit_logistic(cohort, cond, l2, max_iters, tol)


def estimate_bias(
    rct: Cohort,
    os: Cohort,
    model_kind: ModelKind = ModelKind.FREQUENCY,
    smoothing: float = 0.5,
    l2: float = 1.0,
    max_iters: int = 1000,
    tol: float = 1e-4,
) -> BiasEstimate:
    """
    Fits g1_hat on RCT rows with S=1, A=1 and f1_hat on OS rows with S=1, A=1.

    Args:
        rct (Cohort): The RCT cohort.
        os (Cohort): The OS training cohort.
        model_kind (ModelKind): Estimator used for both outcome models.
        smoothing (float): Frequency table pseudo-count.
        l2 (float): Logistic penalty strength.
        max_iters (int): Logistic iteration cap.
        tol (float): Logistic gradient tolerance.

    Returns:
        BiasEstimate: The pair of outcome models.

    Raises:
        EstimationError: If the cohorts do not share a covariate dimension.
    """
    if rct.d != os.d:
        raise EstimationError(f"RCT has d={rct.d} but OS has d={os.d}")
    options = dict(
        model_kind=model_kind, smoothing=smoothing, l2=l2, max_iters=max_iters, tol=tol
    )
    g1_hat = fit_estimator(
        rct, ConditioningSpec.for_target(Target.Y, Population.RCT), **options
    )
    f1_hat = fit_estimator(
        os, ConditioningSpec.for_target(Target.Y, Population.OS), **options
    )
    return BiasEstimate(g1_hat=g1_hat, f1_hat=f1_hat)


def _check_population(cohort: Cohort, cond: ConditioningSpec) -> None:
    if cohort.population is not cond.population:
        raise EstimationError(
            f"Conditioning is for the {cond.population.value} but the cohort is "
            f"{cohort.population.value}"
        )
