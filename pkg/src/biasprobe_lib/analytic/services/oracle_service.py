import numpy as np

from typing import Iterable, Optional
from loguru import logger

from ...synthgen.models.mechanism import SelectionTable, Target, UModel
from ...synthgen.services.mechanism_service import make_mechanism_spec
from ...synthgen.services.table_service import draw_tables
from ...utils.errors import ConfigurationError
from ...utils.rng_utils import make_rng
from ..models.profile import TheoreticalChannel, TheoreticalSignals
from .moment_service import analytic_bias_profile, conditional_moments

MIN_MC_SAMPLES = 10_000
DEFAULT_MC_SAMPLES = 1_000_000


def theoretical_signals(
    kind,
    p: float,
    n_mc: int = DEFAULT_MC_SAMPLES,
    rng: Optional[np.random.Generator | int] = None,
    selection_table: Optional[SelectionTable] = None,
    u_model: UModel = UModel.BINARY,
    n_batches: int = 50,
) -> TheoreticalSignals:
    """
    Monte-Carlo estimate of corr(|b1|, V(T | .)) for T in S, A, Y.

    Every one of the ``n_mc`` samples is an independent draw of all cell parameters from
    F(p), evaluated with the closed-form bias and moments. Standard errors come from batch
    means over ``n_batches`` equal shards. A channel whose bias or variance is constant
    across draws is reported as undefined with rho 0.

    Args:
        kind: Mechanism, combination label or list of kinds.
        p (float): The F(p) parameter.
        n_mc (int): Number of parameter draws, at least 10^4.
        rng: Generator or seed.
        selection_table (Optional[SelectionTable]): Type 2 selection table.
        u_model (UModel): Binary or continuous U.
        n_batches (int): Shards used for the standard error.

    Returns:
        TheoreticalSignals: Correlations and standard errors per channel.

    Raises:
        ConfigurationError: If ``n_mc`` is below 10^4 or p is out of range.

    Example:
        >>> signals = theoretical_signals("confounding", 0.3, n_mc=100_000, rng=0)
        >>> signals.signs()
        (0, 1, 1)
    """
    if n_mc < MIN_MC_SAMPLES:
        raise ConfigurationError(
            f"Monte-Carlo oracle needs at least {MIN_MC_SAMPLES} samples", key="mc"
        )
    rng = make_rng(rng)
    spec = make_mechanism_spec(
        kind, n_mc, p, rng, selection_table=selection_table, u_model=u_model
    )
    tables = draw_tables(spec, n_mc, rng)
    abs_b = analytic_bias_profile(spec, tables).abs_bias
    moments = conditional_moments(spec, tables)

    channels = {
        target: _correlate(abs_b, moments.variance(target), n_batches)
        for target in Target
    }
    for target, channel in channels.items():
        if not channel.defined:
            logger.debug("{} channel undefined for {} at p={}", target.value, spec.label, p)
    return TheoreticalSignals(
        mechanism=spec.label,
        p=p,
        mc_samples=n_mc,
        channels=channels,
        selection_table=(
            spec.selection_table.as_tuple() if spec.selection_table is not None else None
        ),
    )


def oracle_table(
    kinds: Iterable,
    ps: Iterable[float],
    n_mc: int = DEFAULT_MC_SAMPLES,
    seed: int = 0,
    selection_table: Optional[SelectionTable] = None,
    u_model: UModel = UModel.BINARY,
) -> list[TheoreticalSignals]:
    """
    Evaluates ``theoretical_signals`` over a mechanism-by-p grid.

    Each grid point gets its own child stream of ``seed`` so adding points does not
    change existing results.
    """
    points = [(kind, p) for kind in kinds for p in ps]
    children = np.random.SeedSequence(seed).spawn(len(points))
    return [
        theoretical_signals(
            kind,
            p,
            n_mc=n_mc,
            rng=np.random.default_rng(child),
            selection_table=selection_table,
            u_model=u_model,
        )
        for (kind, p), child in zip(points, children)
    ]


def _correlate(x: np.ndarray, y: np.ndarray, n_batches: int) -> TheoreticalChannel:
    if np.ptp(x) == 0.0 or np.ptp(y) == 0.0:
        return TheoreticalChannel(rho=0.0, standard_error=0.0, defined=False)
    rho = float(np.clip(np.corrcoef(x, y)[0, 1], -1.0, 1.0))
    shard_rhos = [
        np.corrcoef(xs, ys)[0, 1] if np.ptp(xs) > 0 and np.ptp(ys) > 0 else np.nan
        for xs, ys in zip(np.array_split(x, n_batches), np.array_split(y, n_batches))
    ]
    se = float(np.nanstd(shard_rhos, ddof=1) / np.sqrt(np.sum(~np.isnan(shard_rhos))))
    return TheoreticalChannel(rho=rho, standard_error=se)
