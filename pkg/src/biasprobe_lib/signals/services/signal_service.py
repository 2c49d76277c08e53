import numpy as np

from typing import Literal, Mapping, Optional
from loguru import logger
from scipy import stats

from ...nuisance.models.estimator import BiasEstimate, ConditioningSpec, FittedEstimator
from ...synthgen.models.cohort import Cohort
from ...synthgen.models.mechanism import Population, Target
from ...utils.errors import EstimationError, UndefinedCorrelationError
from ...utils.rng_utils import make_rng
from ..models.report import (
    P_VALUE_FLOOR,
    Sign,
    SignalChannel,
    SignalReport,
    SignalUnit,
    Verdict,
)

Pairing = Literal["cross", "matched"]

PATTERNS: dict[tuple[bool, bool, bool], Verdict] = {
    (False, False, False): Verdict.NO_BIAS,
    (False, False, True): Verdict.TRANSPORTABILITY,
    (False, True, True): Verdict.CONFOUNDING,
    (True, False, True): Verdict.SELECTION_TYPE1,
}


def covariance_estimate(
    bias_abs, targets, preds, pairing: Pairing = "cross"
) -> float:
    """
    Estimates the covariance between |b1_hat(X)| and the conditional variance of T.

    With ``pairing="cross"`` this is
    ``n/(n-1) [ (1/n) sum_i |b_i| (T_i - eta_i)^2 - (1/n^2) sum_i sum_j |b_i| (T_j - eta_i)^2 ]``
    evaluated in O(n) through ``sum_j (T_j - eta_i)^2 = sum T^2 - 2 eta_i sum T + n eta_i^2``.
    With ``pairing="matched"`` the second term pairs ``T_j`` with ``eta_j``, which is the
    unbiased sample covariance of |b_i| and (T_i - eta_i)^2.

    Args:
        bias_abs: Per-row |b1_hat|.
        targets: Per-row observed T.
        preds: Per-row eta_hat.
        pairing: ``"cross"`` or ``"matched"``.

    Returns:
        float: The covariance estimate.

    Raises:
        EstimationError: If the inputs differ in length or have fewer than 2 rows.

    Example:
        >>> round(covariance_estimate([0.0, 1.0], [0, 1], [0.2, 0.8]), 12)
        -0.3
    """
    b, t, eta = (np.asarray(v, dtype=float) for v in (bias_abs, targets, preds))
    if not b.shape == t.shape == eta.shape or b.ndim != 1:
        raise EstimationError("Covariance inputs must be equal-length vectors")
    n = b.size
    if n < 2:
        raise EstimationError(f"Covariance needs at least 2 rows, got {n}")

    sq = (t - eta) ** 2
    if pairing == "matched":
        return float(np.sum((b - b.mean()) * sq) / (n - 1))
    if pairing != "cross":
        raise ValueError(f"Unknown pairing '{pairing}'")
    spread = np.sum(t * t) - 2.0 * eta * np.sum(t) + n * eta**2
    return float(n / (n - 1) * (np.mean(b * sq) - np.sum(b * spread) / n**2))


def correlation_p_value(r: float, n: int) -> float:
    """
    Two-sided p-value of a Pearson r under the t-distribution with n - 2 degrees of freedom.

    The result is clipped to [1e-5, 1].
    """
    if n < 3:
        raise EstimationError(f"Correlation test needs at least 3 rows, got {n}")
    if abs(r) >= 1.0:
        return P_VALUE_FLOOR
    t_stat = r * np.sqrt((n - 2) / (1.0 - r * r))
    p = 2.0 * stats.t.sf(abs(t_stat), df=n - 2)
    return float(np.clip(p, P_VALUE_FLOOR, 1.0))


def pearson_signal(
    bias_abs,
    sq_errors,
    permutations: int = 0,
    rng: Optional[np.random.Generator | int] = None,
) -> tuple[float, float]:
    """
    Pearson correlation between |b1_hat| and squared errors with its p-value.

    Args:
        bias_abs: Per-row |b1_hat|.
        sq_errors: Per-row (T - eta_hat)^2.
        permutations (int): When positive, use a permutation test with this many
            resamples instead of the t-test.
        rng: Generator or seed for the permutation test.

    Returns:
        tuple[float, float]: ``(r, p_value)`` with p clipped at 1e-5.

    Raises:
        EstimationError: If fewer than 3 rows are given.
        UndefinedCorrelationError: If either input is constant.
    """
    x = np.asarray(bias_abs, dtype=float)
    y = np.asarray(sq_errors, dtype=float)
    if x.shape != y.shape or x.size < 3:
        raise EstimationError("Pearson signal needs two equal-length vectors of >= 3 rows")
    if np.ptp(x) == 0.0 or np.ptp(y) == 0.0:
        raise UndefinedCorrelationError("Correlation is undefined for constant input")

    r = float(np.clip(stats.pearsonr(x, y).statistic, -1.0, 1.0))
    if permutations > 0:
        result = stats.permutation_test(
            (x, y),
            lambda a, b: stats.pearsonr(a, b).statistic,
            permutation_type="pairings",
            n_resamples=permutations,
            alternative="two-sided",
            rng=make_rng(rng),
        )
        return r, float(np.clip(result.pvalue, P_VALUE_FLOOR, 1.0))
    return r, correlation_p_value(r, x.size)


def classify(channels: Mapping[Target, SignalChannel], alpha: float) -> Verdict:
    """
    Maps the significance pattern of the S, A and Y channels to a mechanism.

    A significant negative channel means type 2 selection. Otherwise the pattern of
    significant channels is matched: none is no bias, Y only is transportability, A and Y
    is confounding, S and Y is type 1 selection. Every other pattern, including all three
    and any undefined channel, is indeterminate.

    Args:
        channels (Mapping[Target, SignalChannel]): The three channels.
        alpha (float): Significance level.

    Returns:
        Verdict: The classified mechanism.
    """
    if set(channels) != set(Target):
        raise ValueError("classify needs the S, A and Y channels")
    significant = {t: channels[t].significant(alpha) for t in Target}
    if any(significant[t] and channels[t].pearson_r < 0 for t in Target):
        return Verdict.SELECTION_TYPE2
    if not all(channels[t].defined for t in Target):
        return Verdict.INDETERMINATE
    pattern = tuple(significant[t] for t in Target)
    return PATTERNS.get(pattern, Verdict.INDETERMINATE)


def aggregate_cells(
    cells: np.ndarray, bias_abs: np.ndarray, sq_errors: np.ndarray, min_rows: int = 5
) -> tuple[np.ndarray, np.ndarray]:
    """
    Averages |b1_hat| and the squared errors within each covariate cell.

    Rows of one cell share their nuisance and bias predictions, so the cell is the
    independent unit of the correlation test.

    Args:
        cells (np.ndarray): Cell index of each row.
        bias_abs (np.ndarray): Per-row bias magnitude.
        sq_errors (np.ndarray): Per-row squared errors.
        min_rows (int): Cells with fewer rows are dropped.

    Returns:
        tuple[np.ndarray, np.ndarray]: Per-cell mean magnitude and mean squared error.
    """
    cells = np.asarray(cells, dtype=np.int64)
    counts = np.bincount(cells)
    keep = np.flatnonzero(counts >= max(min_rows, 1))
    magnitude = np.bincount(cells, weights=bias_abs)[keep] / counts[keep]
    variance = np.bincount(cells, weights=sq_errors)[keep] / counts[keep]
    return magnitude, variance


def score_channel(
    target: Target,
    bias_abs: np.ndarray,
    targets: np.ndarray,
    preds: np.ndarray,
    alpha: float,
    permutations: int = 0,
    rng: Optional[np.random.Generator] = None,
    cells: Optional[np.ndarray] = None,
    min_cell_rows: int = 5,
) -> SignalChannel:
    """
    Builds one ``SignalChannel``, marking it undefined instead of raising.

    The covariance estimates always use rows. When ``cells`` is given the Pearson test
    runs over per-cell means instead, with one point per cell holding at least
    ``min_cell_rows`` rows.
    """
    n = int(np.asarray(bias_abs).size)
    if n < 3:
        logger.warning("{} channel has {} rows, marking it undefined", target.value, n)
        return SignalChannel(target=target, n_used=n, defined=False)

    sq = (np.asarray(targets, dtype=float) - np.asarray(preds, dtype=float)) ** 2
    cov_hat = covariance_estimate(bias_abs, targets, preds, pairing="matched")
    cov_cross = covariance_estimate(bias_abs, targets, preds, pairing="cross")
    x_corr, y_corr, n_units = np.asarray(bias_abs, dtype=float), sq, None
    if cells is not None:
        x_corr, y_corr = aggregate_cells(cells, x_corr, sq, min_cell_rows)
        n_units = int(x_corr.size)
    try:
        r, p = pearson_signal(x_corr, y_corr, permutations=permutations, rng=rng)
    except (UndefinedCorrelationError, EstimationError):
        logger.warning(
            "{} channel has a constant or too short input, marking it undefined",
            target.value,
        )
        return SignalChannel(
            target=target,
            n_used=n,
            n_units=n_units,
            cov_hat=cov_hat,
            cov_cross=cov_cross,
            defined=False,
        )

    sign = Sign.ZERO
    if p < alpha:
        sign = Sign.POSITIVE if r > 0 else Sign.NEGATIVE
    return SignalChannel(
        target=target,
        n_used=n,
        n_units=n_units,
        cov_hat=cov_hat,
        cov_cross=cov_cross,
        pearson_r=r,
        p_value=p,
        sign=sign,
    )


def compute_signal_report(
    estimate: BiasEstimate,
    nuisances: Mapping[Target, FittedEstimator],
    validation: Cohort,
    alpha: float = 0.01,
    permutations: int = 0,
    rng: Optional[np.random.Generator | int] = None,
    n_rct: int = 0,
    n_train: int = 0,
    split_seed: Optional[int] = None,
    flags: Optional[dict] = None,
    debias: bool = False,
    unit: SignalUnit = SignalUnit.ROW,
    min_cell_rows: int = 5,
) -> SignalReport:
    """
    Scores the three covariance signals on an OS validation cohort and classifies them.

    The S channel uses every validation row, the A channel rows with S=1 and the Y channel
    rows with S=1 and A=1.

    With ``debias`` the bias magnitude of frequency estimates is reduced by the
    level their sampling noise alone would produce. With the cell unit each channel is
    tested over per-cell means of binary covariate cells.

    Args:
        estimate (BiasEstimate): The fitted bias function.
        nuisances (Mapping[Target, FittedEstimator]): eta_hat for S, A and Y.
        validation (Cohort): Held-out OS rows.
        alpha (float): Significance level.
        permutations (int): Permutation resamples, 0 for the t-test.
        rng: Generator or seed for permutation tests.
        n_rct (int): RCT size, recorded in the report.
        n_train (int): OS training size, recorded in the report.
        split_seed (Optional[int]): Seed of the train/validation split.
        flags (Optional[dict]): Extra diagnostics to carry into the report.
        debias (bool): Subtract the expected noise magnitude from |b1_hat|.
        unit (SignalUnit): Test over validation rows or over covariate cells.
        min_cell_rows (int): Smallest cell kept by the cell unit.

    Returns:
        SignalReport: Channels, verdict and diagnostics.

    Raises:
        EstimationError: If the validation rows are not from the OS, or the cell unit is
            asked to score continuous covariates.
    """
    if validation.population is not Population.OS:
        raise EstimationError("Signals are scored on OS validation rows")
    rng = make_rng(rng) if permutations > 0 else None
    abs_b = estimate.abs_bias(validation)
    magnitude = estimate.noise_corrected_abs_bias(validation) if debias else abs_b
    cells = validation.cells if unit is SignalUnit.CELL else None

    channels = {}
    for target in Target:
        cond = ConditioningSpec.for_target(target, Population.OS)
        mask = cond.mask(validation)
        preds = nuisances[target].predict(validation.x[mask])
        channels[target] = score_channel(
            target,
            magnitude[mask],
            cond.response(validation),
            preds,
            alpha,
            permutations=permutations,
            rng=rng,
            cells=None if cells is None else cells[mask],
            min_cell_rows=min_cell_rows,
        )

    report_flags = dict(flags or {})
    report_flags["unsupported_validation_rows"] = int(
        estimate.unsupported(validation).sum()
    )
    report_flags["undefined_channels"] = [
        t.value for t in Target if not channels[t].defined
    ]
    verdict = classify(channels, alpha)
    logger.debug(
        "Verdict {} from r=({}) p=({})",
        verdict.value,
        ", ".join(f"{channels[t].pearson_r:.3f}" for t in Target),
        ", ".join(f"{channels[t].p_value:.1e}" for t in Target),
    )
    return SignalReport(
        channels=channels,
        alpha=alpha,
        verdict=verdict,
        model_kind=estimate.g1_hat.model_kind.value,
        n_rct=n_rct,
        n_train=n_train,
        n_val=validation.n,
        split_seed=split_seed,
        unit=unit,
        debiased=debias,
        mean_abs_bias=float(abs_b.mean()) if abs_b.size else 0.0,
        flags=report_flags,
    )
