import numpy as np

from enum import Enum
from typing import Iterable, Optional
from pydantic import (
    BaseModel,
    ConfigDict,
    field_validator,
    model_validator,
)

F_LOW = 0.1
F_HIGH = 0.9


class MechanismKind(str, Enum):
    """The causal bias families a run can be generated under."""

    NO_BIAS = "no_bias"
    TRANSPORTABILITY = "transportability"
    CONFOUNDING = "confounding"
    SELECTION_TYPE1 = "selection_type1"
    SELECTION_TYPE2 = "selection_type2"


class Downstream(str, Enum):
    """Variables whose Bernoulli parameters may depend on the latent U."""

    S = "S"
    A = "A"
    Y0 = "Y0"
    Y1 = "Y1"

    @property
    def index(self) -> int:
        return list(Downstream).index(self)


class Target(str, Enum):
    """Observed variables that get a nuisance model and a covariance signal."""

    S = "S"
    A = "A"
    Y = "Y"


class UModel(str, Enum):
    BINARY = "binary"
    CONTINUOUS = "continuous"


class Population(str, Enum):
    RCT = "rct"
    OS = "os"

    @property
    def code(self) -> int:
        """The value of the population flag R."""
        return 1 if self is Population.RCT else 0


KIND_FLAGS: dict[MechanismKind, frozenset[Downstream]] = {
    MechanismKind.NO_BIAS: frozenset(),
    MechanismKind.TRANSPORTABILITY: frozenset({Downstream.Y1}),
    MechanismKind.CONFOUNDING: frozenset({Downstream.A, Downstream.Y1}),
    MechanismKind.SELECTION_TYPE1: frozenset({Downstream.S, Downstream.Y1}),
    MechanismKind.SELECTION_TYPE2: frozenset(),
}


def flags_for(kinds: Iterable[MechanismKind]) -> dict[Downstream, bool]:
    """
    Returns the U-bias flags of a mechanism or of a combination of mechanisms.

    Args:
        kinds (Iterable[MechanismKind]): The active mechanisms.

    Returns:
        dict[Downstream, bool]: The union of the per-kind flags.
    """
    active: set[Downstream] = set()
    for kind in kinds:
        active |= KIND_FLAGS[kind]
    return {target: target in active for target in Downstream}


class SelectionTable(BaseModel):
    """
    P(S=1 | Y=y, A=a) for selection bias type 2.

    Attributes:
        p00 (float): Probability of selection when Y=0 and A=0.
        p01 (float): Probability of selection when Y=0 and A=1.
        p10 (float): Probability of selection when Y=1 and A=0.
        p11 (float): Probability of selection when Y=1 and A=1.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    p00: float
    p01: float
    p10: float
    p11: float

    @model_validator(mode="before")
    @classmethod
    def accept_sequence(cls, data):
        """Accepts ``[p00, p01, p10, p11]`` in addition to a mapping."""
        if isinstance(data, (list, tuple)):
            if len(data) != 4:
                raise ValueError(
                    "Selection table must have four entries ordered p00, p01, p10, p11."
                )
            return dict(zip(("p00", "p01", "p10", "p11"), data))
        return data

    @field_validator("p00", "p01", "p10", "p11")
    def validate_probability(cls, v):
        """
        Validates one selection probability.

        Args:
            v (float): The entry.

        Returns:
            float: The validated entry.

        Raises:
            ValueError: If the entry lies outside [0, 1].
        """
        if not 0.0 <= v <= 1.0:
            raise ValueError("Selection probabilities must lie in [0, 1].")
        return v

    @classmethod
    def default(cls) -> "SelectionTable":
        """Outcome-and-treatment driven selection: 0.9 when Y=1 and A=1, 0.1 otherwise."""
        return cls(p00=0.1, p01=0.1, p10=0.1, p11=0.9)

    @classmethod
    def whi_like(cls) -> "SelectionTable":
        """The selection pattern used for the WHI-style combined setting."""
        return cls(p00=0.9, p01=0.9, p10=0.3, p11=0.1)

    @classmethod
    def uniform(cls, value: float) -> "SelectionTable":
        return cls(p00=value, p01=value, p10=value, p11=value)

    def as_array(self) -> np.ndarray:
        """Returns the table as a 2x2 array indexed ``[y, a]``."""
        return np.array([[self.p00, self.p01], [self.p10, self.p11]])

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.p00, self.p01, self.p10, self.p11)

    def prob(self, y, a):
        """Looks up P(S=1 | Y=y, A=a), elementwise for arrays."""
        return self.as_array()[np.asarray(y, dtype=np.int64), np.asarray(a, dtype=np.int64)]


class FDistribution(BaseModel):
    """
    Uniform distribution over the union of a low band [0.1, p] and a high band [1-p, 0.9].

    Attributes:
        p (float): The half-width parameter, in (0.1, 0.5].
    """

    model_config = ConfigDict(frozen=True)

    p: float

    @field_validator("p")
    def validate_p(cls, v):
        """
        Validates the F(p) parameter.

        Args:
            v (float): The parameter.

        Returns:
            float: The validated parameter.

        Raises:
            ValueError: If p lies outside (0.1, 0.5].
        """
        if not F_LOW < v <= 0.5:
            raise ValueError(f"F(p) parameter must lie in (0.1, 0.5], got {v}.")
        return v

    @property
    def band_length(self) -> float:
        return self.p - F_LOW

    @property
    def low_band(self) -> tuple[float, float]:
        return (F_LOW, self.p)

    @property
    def high_band(self) -> tuple[float, float]:
        return (1.0 - self.p, F_HIGH)


class MechanismSpec(BaseModel):
    """
    Everything needed to generate a cohort pair under one mechanism or a combination.

    Attributes:
        kinds (list[MechanismKind]): Active mechanisms, more than one for a combination.
        u_bias_flags (dict[Downstream, bool]): Which downstream variables depend on U.
        u_model (UModel): Binary or continuous latent variable.
        p_u_rct (np.ndarray): Per-cell P(U=1 | X=x, R=1).
        p_u_os (np.ndarray): Per-cell P(U=1 | X=x, R=0).
        selection_table (Optional[SelectionTable]): Required when type 2 selection is active.
        f_param (float): The p of F(p) shared by all draws of the run.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    kinds: list[MechanismKind]
    u_bias_flags: dict[Downstream, bool]
    u_model: UModel = UModel.BINARY
    p_u_rct: np.ndarray
    p_u_os: np.ndarray
    selection_table: Optional[SelectionTable] = None
    f_param: float

    @field_validator("kinds")
    def validate_kinds(cls, v):
        """
        Validates the active mechanisms.

        Args:
            v (list[MechanismKind]): The kinds.

        Returns:
            list[MechanismKind]: The validated kinds.

        Raises:
            ValueError: If the list is empty or no_bias is combined with another kind.
        """
        if not v:
            raise ValueError("At least one mechanism kind is required.")
        if MechanismKind.NO_BIAS in v and len(set(v)) > 1:
            raise ValueError("no_bias cannot be combined with other mechanisms.")
        return v

    @field_validator("p_u_rct", "p_u_os", mode="before")
    def validate_latent_probabilities(cls, v):
        """
        Validates a per-cell latent probability array and freezes it.

        Args:
            v: Array-like of P(U=1 | x) per cell.

        Returns:
            np.ndarray: The read-only probabilities.

        Raises:
            ValueError: If the array is not 1-d or an entry lies outside [0, 1].
        """
        arr = np.array(v, dtype=float)
        if arr.ndim != 1:
            raise ValueError("Latent probabilities must be a 1-d per-cell array.")
        if np.any((arr < 0.0) | (arr > 1.0)):
            raise ValueError("Latent probabilities must lie in [0, 1].")
        arr.flags.writeable = False
        return arr

    @field_validator("f_param")
    def validate_f_param(cls, v):
        """
        Validates the F(p) parameter shared by all draws of the run.

        Args:
            v (float): The parameter.

        Returns:
            float: The validated parameter.

        Raises:
            ValueError: If p lies outside (0.1, 0.5].
        """
        if not F_LOW < v <= 0.5:
            raise ValueError(f"F(p) parameter must lie in (0.1, 0.5], got {v}.")
        return v

    @model_validator(mode="after")
    def validate_consistency(self) -> "MechanismSpec":
        """
        Validates that the flags, latent tables and selection table agree with the kinds.

        Returns:
            MechanismSpec: The validated spec.

        Raises:
            ValueError: If the flags differ from the union of the kinds, the latent arrays
                differ in shape or leave 0.5 without transportability, or type 2 selection
                has no table.
        """
        if self.u_bias_flags != flags_for(self.kinds):
            raise ValueError(
                f"U-bias flags do not match mechanisms {[k.value for k in self.kinds]}."
            )
        if self.p_u_rct.shape != self.p_u_os.shape:
            raise ValueError("RCT and OS latent probabilities must cover the same cells.")
        if not self.has(MechanismKind.TRANSPORTABILITY):
            if np.any(self.p_u_rct != 0.5) or np.any(self.p_u_os != 0.5):
                raise ValueError(
                    "Latent probabilities must be 0.5 unless transportability is active."
                )
        if self.has(MechanismKind.SELECTION_TYPE2) and self.selection_table is None:
            raise ValueError("selection_type2 requires a selection table.")
        return self

    def has(self, kind: MechanismKind) -> bool:
        return kind in self.kinds

    @property
    def is_combination(self) -> bool:
        return len(self.kinds) > 1

    @property
    def n_cells(self) -> int:
        return int(self.p_u_os.shape[0])

    @property
    def label(self) -> str:
        return mechanism_label(self.kinds)


def mechanism_label(kinds: Iterable[MechanismKind]) -> str:
    """Joins mechanism values with '+', e.g. ``confounding+transportability``."""
    return "+".join(kind.value for kind in kinds)
