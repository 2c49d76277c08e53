import numpy as np

from loguru import logger

from ...utils.cell_utils import encode_cells
from ...utils.errors import ConfigurationError
from ..models.cohort import Cohort, CovariateType, LatentColumns
from ..models.mechanism import (
    Downstream,
    MechanismKind,
    MechanismSpec,
    Population,
    UModel,
)
from ..models.tables import ProbabilityTables

COVARIATE_PROB = {Population.RCT: 0.4, Population.OS: 0.6}
RCT_TREATMENT_PROB = 0.5


def sample_covariates(
    n: int, population: Population, d: int, rng: np.random.Generator
) -> np.ndarray:
    """
    Draws binary covariates, each coordinate Bernoulli(0.4) in the RCT and Bernoulli(0.6) in the OS.

    Args:
        n (int): Number of rows.
        population (Population): RCT or OS.
        d (int): Covariate dimension; 0 gives empty rows in a single cell.
        rng (np.random.Generator): Source of randomness.

    Returns:
        np.ndarray: An ``(n, d)`` int8 array.
    """
    if n < 1:
        raise ConfigurationError(f"Cohort size must be >= 1, got {n}", key="n")
    return (rng.random((n, d)) < COVARIATE_PROB[population]).astype(np.int8)


def sample_latent(
    p_u: np.ndarray, u_model: UModel, rng: np.random.Generator
) -> np.ndarray:
    """
    Draws the latent U of each row given its P(U=1 | x, r).

    A binary U is Bernoulli(p_u). A continuous U is drawn from Uniform(1/2, 1) with
    probability p_u and from Uniform(0, 1/2) otherwise, which is Uniform(0, 1) at p_u = 1/2.
    """
    p_u = np.asarray(p_u, dtype=float)
    if u_model is UModel.BINARY:
        return (rng.random(p_u.shape) < p_u).astype(float)
    upper = rng.random(p_u.shape) < p_u
    return 0.5 * rng.random(p_u.shape) + np.where(upper, 0.5, 0.0)


def selection_probability(
    spec: MechanismSpec,
    tables: ProbabilityTables,
    u,
    cells,
    y,
    a,
) -> np.ndarray:
    """
    P(S=1 | x, u, y, a) in the OS.

    Without type 2 selection this is ``p_S[x][u]``. With it, the selection table entry is
    multiplied by ``p_S[x][u]`` when S also depends on U.
    """
    if spec.has(MechanismKind.SELECTION_TYPE2):
        prob = spec.selection_table.prob(y, a)
        if spec.u_bias_flags[Downstream.S]:
            prob = prob * tables.param(Downstream.S, u, cells)
        return prob
    return tables.param(Downstream.S, u, cells)


def generate_cohort(
    tables: ProbabilityTables,
    spec: MechanismSpec,
    population: Population,
    n: int,
    rng: np.random.Generator,
) -> Cohort:
    """
    Samples a cohort from the generative law of the mechanism.

    RCT rows are all selected, treated with probability 1/2 and have Y = Y^A. OS rows draw
    A and both potential outcomes from their tables at the row's U, then S from
    ``selection_probability``. The returned cohort hides A and Y where S=0 and keeps the
    full columns behind ``Cohort.oracle()``.

    Args:
        tables (ProbabilityTables): Tables drawn for ``spec``.
        spec (MechanismSpec): The mechanism of the run.
        population (Population): RCT or OS.
        n (int): Number of rows.
        rng (np.random.Generator): Source of randomness.

    Returns:
        Cohort: The sampled cohort.

    Raises:
        ConfigurationError: If the tables do not match the spec or a type 2 spec has no table.
    """
    if tables.d is None:
        raise ConfigurationError("Cohort generation needs tables over {0,1}^d cells")
    if tables.n_cells != spec.n_cells or tables.u_model is not spec.u_model:
        raise ConfigurationError("Tables were not built for this mechanism spec")
    if spec.has(MechanismKind.SELECTION_TYPE2) and spec.selection_table is None:
        raise ConfigurationError(
            "selection_type2 requires a selection table", key="selection_table"
        )

    x = sample_covariates(n, population, tables.d, rng)
    cells = encode_cells(x)
    p_u = spec.p_u_rct if population is Population.RCT else spec.p_u_os
    u = sample_latent(p_u[cells], spec.u_model, rng)

    if population is Population.RCT:
        a = rng.random(n) < RCT_TREATMENT_PROB
    else:
        a = rng.random(n) < tables.param(Downstream.A, u, cells)
    y1 = rng.random(n) < tables.param(Downstream.Y1, u, cells)
    y0 = rng.random(n) < tables.param(Downstream.Y0, u, cells)
    y = np.where(a, y1, y0)

    if population is Population.RCT:
        s = np.ones(n, dtype=bool)
    else:
        s = rng.random(n) < selection_probability(spec, tables, u, cells, y, a)

    logger.debug(
        "Generated {} cohort: n={}, selected={}, mechanism={}",
        population.value,
        n,
        int(s.sum()),
        spec.label,
    )
    return Cohort(
        population=population,
        x=x,
        s=s.astype(np.int8),
        a=np.where(s, a, np.nan),
        y=np.where(s, y, np.nan),
        covariate_type=CovariateType.BINARY,
        latent=LatentColumns(u=u, a=a, y=y),
    )
