import numpy as np

from loguru import logger

from ...utils.cell_utils import MAX_DIMENSION
from ...utils.errors import CapacityError, ConfigurationError
from ..models.mechanism import Downstream, MechanismSpec, UModel
from ..models.tables import ProbabilityTables
from .distribution_service import as_distribution, sample_from_f


def draw_tables(
    spec: MechanismSpec, n_cells: int, rng: np.random.Generator, d: int | None = None
) -> ProbabilityTables:
    """
    Draws the Bernoulli parameters of every downstream variable for ``n_cells`` cells.

    Each parameter at U=0 is an F(p) draw. The U=1 parameter is a second independent
    draw when the variable depends on U and a copy otherwise.

    Args:
        spec (MechanismSpec): The mechanism of the run.
        n_cells (int): Number of cells; need not be a power of two.
        rng (np.random.Generator): Source of randomness.
        d (int | None): Covariate dimension when the cells enumerate {0,1}^d.

    Returns:
        ProbabilityTables: The drawn tables.
    """
    dist = as_distribution(spec.f_param)
    low = np.empty((len(Downstream), n_cells))
    high = np.empty((len(Downstream), n_cells))
    for target in Downstream:
        i = target.index
        low[i] = sample_from_f(dist, rng, size=n_cells)
        if spec.u_bias_flags[target]:
            high[i] = sample_from_f(dist, rng, size=n_cells)
        else:
            high[i] = low[i]
    return ProbabilityTables(
        low=low, high=high, u_model=spec.u_model, f_param=spec.f_param, d=d
    )


def build_tables_binary(
    spec: MechanismSpec, d: int, rng: np.random.Generator
) -> ProbabilityTables:
    """
    Draws tables for a binary latent U over all 2^d covariate cells.

    Args:
        spec (MechanismSpec): A spec with ``u_model = BINARY``.
        d (int): Covariate dimension.
        rng (np.random.Generator): Source of randomness.

    Returns:
        ProbabilityTables: Parameters ``p_T[x][u]`` for u in {0, 1}.

    Raises:
        CapacityError: If d > 20.
        ConfigurationError: If the spec is for a continuous U or covers another cell count.
    """
    if spec.u_model is not UModel.BINARY:
        raise ConfigurationError("build_tables_binary requires a binary U", key="u_model")
    return _build(spec, d, rng)


def build_tables_continuous(
    spec: MechanismSpec, d: int, rng: np.random.Generator
) -> ProbabilityTables:
    """
    Draws tables for a continuous latent U in [0, 1].

    The stored rows are the endpoints p0 and p1; the parameter at U=u is
    ``u * p1 + (1 - u) * p0``, constant in u when the variable does not depend on U.

    Raises:
        CapacityError: If d > 20.
        ConfigurationError: If the spec is for a binary U or covers another cell count.
    """
    if spec.u_model is not UModel.CONTINUOUS:
        raise ConfigurationError(
            "build_tables_continuous requires a continuous U", key="u_model"
        )
    return _build(spec, d, rng)


def build_tables(spec: MechanismSpec, d: int, rng: np.random.Generator) -> ProbabilityTables:
    """Dispatches to the builder matching ``spec.u_model``."""
    if spec.u_model is UModel.CONTINUOUS:
        return build_tables_continuous(spec, d, rng)
    return build_tables_binary(spec, d, rng)


def check_dimension(d: int) -> int:
    """
    Validates a covariate dimension for cell enumeration.

    Raises:
        ConfigurationError: If d is negative.
        CapacityError: If d exceeds the enumeration cap.
    """
    if d < 0:
        raise ConfigurationError(f"Covariate dimension must be >= 0, got {d}", key="d")
    if d > MAX_DIMENSION:
        raise CapacityError(
            f"Covariate dimension {d} exceeds the enumeration cap of {MAX_DIMENSION}",
            key="d",
        )
    return d


def _build(spec: MechanismSpec, d: int, rng: np.random.Generator) -> ProbabilityTables:
    check_dimension(d)
    n_cells = 2**d
    if spec.n_cells != n_cells:
        raise ConfigurationError(
            f"Mechanism spec covers {spec.n_cells} cells but d={d} needs {n_cells}"
        )
    tables = draw_tables(spec, n_cells, rng, d=d)
    logger.debug(
        "Drew {} tables for {} cells (mechanism={}, p={:.3f})",
        spec.u_model.value,
        n_cells,
        spec.label,
        spec.f_param,
    )
    return tables
