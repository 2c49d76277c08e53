import numpy as np

from typing import Iterable, Optional
from loguru import logger

from ...utils.errors import ConfigurationError
from ..models.mechanism import (
    MechanismKind,
    MechanismSpec,
    SelectionTable,
    UModel,
    flags_for,
)
from .distribution_service import as_distribution, sample_from_f

_ALIASES = {
    "nobias": MechanismKind.NO_BIAS,
    "none": MechanismKind.NO_BIAS,
    "transport": MechanismKind.TRANSPORTABILITY,
    "selection1": MechanismKind.SELECTION_TYPE1,
    "selection2": MechanismKind.SELECTION_TYPE2,
    "sel1": MechanismKind.SELECTION_TYPE1,
    "sel2": MechanismKind.SELECTION_TYPE2,
}


def parse_mechanism(value: str | MechanismKind) -> MechanismKind:
    """
    Parses one mechanism name such as ``confounding`` or ``selection-type2``.

    Raises:
        ConfigurationError: If the name is unknown.
    """
    if isinstance(value, MechanismKind):
        return value
    key = value.strip().lower().replace("-", "_")
    try:
        return MechanismKind(key)
    except ValueError:
        pass
    if key.replace("_", "") in _ALIASES:
        return _ALIASES[key.replace("_", "")]
    raise ConfigurationError(f"Unknown mechanism '{value}'", key="mechanism")


def normalize_kinds(
    kinds: str | MechanismKind | Iterable[str | MechanismKind],
) -> list[MechanismKind]:
    """
    Turns a kind, a ``+``-joined label or a list into a deduplicated kind list.

    The order follows ``MechanismKind`` declaration order so equal combinations share a label.

    Raises:
        ConfigurationError: If the list is empty or combines no_bias with another kind.
    """
    if isinstance(kinds, MechanismKind):
        parts: list[str | MechanismKind] = [kinds]
    elif isinstance(kinds, str):
        parts = [part for part in kinds.split("+") if part.strip()]
    else:
        parts = list(kinds)
    parsed = {parse_mechanism(part) for part in parts}
    if not parsed:
        raise ConfigurationError("At least one mechanism is required", key="mechanisms")
    if MechanismKind.NO_BIAS in parsed and len(parsed) > 1:
        raise ConfigurationError(
            "no_bias cannot be combined with other mechanisms", key="mechanisms"
        )
    return [kind for kind in MechanismKind if kind in parsed]


def make_mechanism_spec(
    kinds: str | MechanismKind | Iterable[str | MechanismKind],
    n_cells: int,
    f_param: float,
    rng: Optional[np.random.Generator] = None,
    selection_table: Optional[SelectionTable] = None,
    u_model: UModel = UModel.BINARY,
) -> MechanismSpec:
    """
    Builds the mechanism spec of one run.

    Under transportability P(U=1 | X=x, R=r) is drawn from F(p) independently per cell and
    per population; otherwise it is 1/2 everywhere. Type 2 selection without an explicit
    table gets ``SelectionTable.default()``.

    Args:
        kinds: The mechanism, a ``+``-joined combination label, or a list of kinds.
        n_cells (int): Number of covariate cells.
        f_param (float): The p of F(p) for this run.
        rng (Optional[np.random.Generator]): Needed when transportability is active.
        selection_table (Optional[SelectionTable]): P(S=1 | Y, A) for type 2 selection.
        u_model (UModel): Binary or continuous latent variable.

    Returns:
        MechanismSpec: The validated spec.

    Raises:
        ConfigurationError: If the kinds, p or cell count are invalid.
    """
    kinds = normalize_kinds(kinds)
    dist = as_distribution(f_param)
    if n_cells < 1:
        raise ConfigurationError("At least one covariate cell is required", key="n_cells")

    if MechanismKind.TRANSPORTABILITY in kinds:
        if rng is None:
            raise ConfigurationError(
                "Transportability needs a random generator to draw latent probabilities"
            )
        p_u_rct = sample_from_f(dist, rng, size=n_cells)
        p_u_os = sample_from_f(dist, rng, size=n_cells)
    else:
        p_u_rct = np.full(n_cells, 0.5)
        p_u_os = np.full(n_cells, 0.5)

    if MechanismKind.SELECTION_TYPE2 in kinds:
        if selection_table is None:
            selection_table = SelectionTable.default()
    elif selection_table is not None:
        logger.debug("Ignoring selection table: type 2 selection is not active")
        selection_table = None

    return MechanismSpec(
        kinds=kinds,
        u_bias_flags=flags_for(kinds),
        u_model=u_model,
        p_u_rct=p_u_rct,
        p_u_os=p_u_os,
        selection_table=selection_table,
        f_param=dist.p,
    )
