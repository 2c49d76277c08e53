import numpy as np

from typing import Optional
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from ...synthgen.models.mechanism import Target


def _array(v) -> np.ndarray:
    arr = np.atleast_1d(np.array(v, dtype=float))
    arr.flags.writeable = False
    return arr


class BiasProfile(BaseModel):
    """
    The bias function ``b1 = g1 - f1`` over covariate cells.

    Attributes:
        g1 (np.ndarray): E[Y | x, R=1, S=1, A=1], the RCT outcome model.
        f1 (np.ndarray): E[Y | x, R=0, S=1, A=1], the OS outcome model.
        b1 (np.ndarray): Their difference.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    g1: np.ndarray
    f1: np.ndarray
    b1: np.ndarray

    @field_validator("g1", "f1", "b1", mode="before")
    def validate_array(cls, v):
        """
        Coerces a per-cell column to a read-only float array.

        Args:
            v: Sequence or array of per-cell values.

        Returns:
            np.ndarray: The frozen array.
        """
        return _array(v)

    @model_validator(mode="after")
    def validate_bounds(self) -> "BiasProfile":
        if np.any(np.abs(self.b1) > 1.0 + 1e-12):
            raise ValueError("Bias values must lie in [-1, 1].")
        return self

    @property
    def abs_bias(self) -> np.ndarray:
        return np.abs(self.b1)


class MomentProfile(BaseModel):
    """
    Observable conditional probabilities of the OS per covariate cell.

    Attributes:
        pS (np.ndarray): P(S=1 | x, R=0).
        pA (np.ndarray): P(A=1 | x, S=1, R=0).
        pY (np.ndarray): P(Y=1 | x, S=1, A=1, R=0).
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    pS: np.ndarray
    pA: np.ndarray
    pY: np.ndarray

    @field_validator("pS", "pA", "pY", mode="before")
    def validate_probability(cls, v):
        """
        Validates that a conditional moment is a probability in every cell.

        Args:
            v: Sequence or array of per-cell probabilities.

        Returns:
            np.ndarray: The frozen array.

        Raises:
            ValueError: If an entry lies outside [0, 1].
        """
        arr = _array(v)
        if np.any((arr < -1e-12) | (arr > 1.0 + 1e-12)):
            raise ValueError("Moments must lie in [0, 1].")
        return arr

    @property
    def v_S(self) -> np.ndarray:
        return self.pS * (1.0 - self.pS)

    @property
    def v_A(self) -> np.ndarray:
        return self.pA * (1.0 - self.pA)

    @property
    def v_Y(self) -> np.ndarray:
        return self.pY * (1.0 - self.pY)

    def prob(self, target: Target) -> np.ndarray:
        return {Target.S: self.pS, Target.A: self.pA, Target.Y: self.pY}[target]

    def variance(self, target: Target) -> np.ndarray:
        return {Target.S: self.v_S, Target.A: self.v_A, Target.Y: self.v_Y}[target]


class TheoreticalChannel(BaseModel):
    """Monte-Carlo correlation between |b1| and one conditional variance."""

    rho: float
    standard_error: float
    defined: bool = True

    @field_validator("rho")
    def validate_rho(cls, v):
        """
        Validates that the correlation is in range.

        Args:
            v (float): The Monte-Carlo correlation.

        Returns:
            float: The validated correlation.

        Raises:
            ValueError: If the correlation lies outside [-1, 1].
        """
        if not -1.0 <= v <= 1.0:
            raise ValueError("Correlation must lie in [-1, 1].")
        return v


class TheoreticalSignals(BaseModel):
    """
    Pearson-normalized covariance signals of a mechanism, estimated over F(p) draws.

    Attributes:
        mechanism (str): Mechanism label.
        p (float): The F(p) parameter.
        mc_samples (int): Number of drawn parameter sets.
        channels (dict[Target, TheoreticalChannel]): One entry per S, A, Y.
        selection_table (Optional[tuple]): The type 2 table, when one was used.
    """

    mechanism: str
    p: float
    mc_samples: int
    channels: dict[Target, TheoreticalChannel]
    selection_table: Optional[tuple[float, float, float, float]] = None

    @property
    def rho_S(self) -> float:
        return self.channels[Target.S].rho

    @property
    def rho_A(self) -> float:
        return self.channels[Target.A].rho

    @property
    def rho_Y(self) -> float:
        return self.channels[Target.Y].rho

    def is_zero(self, target: Target, n_se: float = 3.0) -> bool:
        """A channel counts as zero when |rho| is below ``n_se`` standard errors."""
        channel = self.channels[target]
        if not channel.defined:
            return True
        return abs(channel.rho) < n_se * channel.standard_error

    def signs(self, n_se: float = 3.0) -> tuple[int, int, int]:
        """Returns the (S, A, Y) pattern as -1, 0 or +1 per channel."""
        return tuple(
            0 if self.is_zero(t, n_se) else int(np.sign(self.channels[t].rho))
            for t in Target
        )

    def to_row(self) -> dict:
        row: dict = {"mechanism": self.mechanism, "p": self.p}
        for target in Target:
            channel = self.channels[target]
            row[f"rho_{target.value}"] = channel.rho if channel.defined else float("nan")
            row[f"se_{target.value}"] = channel.standard_error
        return row
