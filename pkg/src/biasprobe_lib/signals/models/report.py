import json

from enum import Enum
from typing import Optional
from pydantic import BaseModel, Field, field_validator

from ...synthgen.models.mechanism import MechanismKind, Target

P_VALUE_FLOOR = 1e-5


class Sign(str, Enum):
    ZERO = "zero"
    POSITIVE = "positive"
    NEGATIVE = "negative"


class SignalUnit(str, Enum):
    ROW = "row"
    CELL = "cell"


class Verdict(str, Enum):
    NO_BIAS = "no_bias"
    TRANSPORTABILITY = "transportability"
    CONFOUNDING = "confounding"
    SELECTION_TYPE1 = "selection_type1"
    SELECTION_TYPE2 = "selection_type2"
    INDETERMINATE = "indeterminate"

    @classmethod
    def from_kind(cls, kind: MechanismKind) -> "Verdict":
        return cls(kind.value)


class SignalChannel(BaseModel):
    """
    The estimated covariance signal between |b1_hat| and one squared-error column.

    Attributes:
        target (Target): S, A or Y.
        n_used (int): Validation rows in the channel's conditioning set.
        n_units (Optional[int]): Covariate cells the correlation was computed over, None
            when it was computed over rows.
        cov_hat (Optional[float]): Covariance of |b1_hat| with (T - eta_hat(X))^2.
        cov_cross (Optional[float]): The same with every T_j paired against every eta_hat(X_i).
        pearson_r (float): Pearson correlation of the two columns.
        p_value (float): Two-sided p-value, clipped at 1e-5.
        sign (Sign): Zero unless significant, then the sign of ``pearson_r``.
        defined (bool): False when a column was constant or too short.
    """

    target: Target
    n_used: int
    n_units: Optional[int] = None
    cov_hat: Optional[float] = None
    cov_cross: Optional[float] = None
    pearson_r: float = 0.0
    p_value: float = 1.0
    sign: Sign = Sign.ZERO
    defined: bool = True

    @field_validator("pearson_r")
    def validate_r(cls, v):
        """
        Validates the Pearson correlation.

        Args:
            v (float): The correlation.

        Returns:
            float: The validated correlation.

        Raises:
            ValueError: If r lies outside [-1, 1].
        """
        if not -1.0 <= v <= 1.0:
            raise ValueError("Pearson r must lie in [-1, 1].")
        return v

    @field_validator("p_value")
    def validate_p_value(cls, v):
        """
        Validates that the p-value was clipped at the reporting floor.

        Args:
            v (float): The p-value.

        Returns:
            float: The validated p-value.

        Raises:
            ValueError: If the p-value lies outside [1e-5, 1].
        """
        if not P_VALUE_FLOOR <= v <= 1.0:
            raise ValueError("p-value must lie in [1e-5, 1].")
        return v

    def significant(self, alpha: float) -> bool:
        return self.defined and self.p_value < alpha


class SignalReport(BaseModel):
    """
    The three covariance signals of a diagnosis and the mechanism they point to.

    Attributes:
        channels (dict[Target, SignalChannel]): Signals for S, A and Y.
        alpha (float): Significance level.
        verdict (Verdict): Result of ``classify``.
        model_kind (str): Estimator used for the nuisance and outcome models.
        n_rct (int): RCT rows.
        n_train (int): OS rows used to fit the models.
        n_val (int): OS rows used to score the signals.
        split_seed (Optional[int]): Seed of the train/validation shuffle, when one was made.
        unit (SignalUnit): Whether correlations were computed over rows or cells.
        debiased (bool): Whether |b1_hat| was corrected for sampling noise.
        mean_abs_bias (float): Mean |b1_hat| over validation rows.
        flags (dict): Positivity and convergence diagnostics.
    """

    channels: dict[Target, SignalChannel]
    alpha: float
    verdict: Verdict
    model_kind: str
    n_rct: int
    n_train: int
    n_val: int
    split_seed: Optional[int] = None
    unit: SignalUnit = SignalUnit.ROW
    debiased: bool = False
    mean_abs_bias: float = 0.0
    flags: dict = Field(default_factory=dict)

    @field_validator("channels")
    def validate_channels(cls, v):
        """
        Validates that the report holds exactly the three channels.

        Args:
            v (dict[Target, SignalChannel]): Channels by target.

        Returns:
            dict[Target, SignalChannel]: The validated channels.

        Raises:
            ValueError: If a channel is missing or an extra one is present.
        """
        if set(v) != set(Target):
            raise ValueError("A report needs the S, A and Y channels.")
        return v

    def channel(self, target: Target) -> SignalChannel:
        return self.channels[target]

    def signs(self) -> tuple[Sign, Sign, Sign]:
        return tuple(self.channels[t].sign for t in Target)

    def to_record(self) -> dict:
        """Flat, JSON-ready record: per-channel target, n, cov, r, p and sign plus the verdict."""
        return {
            "verdict": self.verdict.value,
            "alpha": self.alpha,
            "model_kind": self.model_kind,
            "n_rct": self.n_rct,
            "n_train": self.n_train,
            "n_val": self.n_val,
            "split_seed": self.split_seed,
            "unit": self.unit.value,
            "debiased": self.debiased,
            "mean_abs_bias": self.mean_abs_bias,
            "channels": [
                {
                    "target": t.value,
                    "n": self.channels[t].n_used,
                    "n_units": self.channels[t].n_units,
                    "cov": self.channels[t].cov_hat,
                    "cov_cross": self.channels[t].cov_cross,
                    "r": self.channels[t].pearson_r,
                    "p": self.channels[t].p_value,
                    "sign": self.channels[t].sign.value,
                    "defined": self.channels[t].defined,
                }
                for t in Target
            ],
            "flags": self.flags,
        }

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_record(), indent=indent)
