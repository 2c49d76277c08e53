import numpy as np

from enum import Enum
from typing import Optional
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from ...utils.cell_utils import MAX_DIMENSION, encode_cells
from ...utils.errors import EstimationError
from .mechanism import Population


class CovariateType(str, Enum):
    BINARY = "binary"
    CONTINUOUS = "continuous"


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


class LatentColumns(BaseModel):
    """
    Columns a synthetic cohort keeps for oracle checks only.

    Attributes:
        u (np.ndarray): The latent U of every row.
        a (np.ndarray): Treatment of every row, including unselected ones.
        y (np.ndarray): Outcome of every row, including unselected ones.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    u: np.ndarray
    a: np.ndarray
    y: np.ndarray

    @field_validator("u", mode="before")
    def validate_u(cls, v):
        """
        Freezes the latent column as floats.

        Args:
            v: The latent values.

        Returns:
            np.ndarray: The read-only column.
        """
        return _frozen(np.array(v, dtype=float))

    @field_validator("a", "y", mode="before")
    def validate_binary(cls, v):
        """
        Freezes a full treatment or outcome column as int8.

        Args:
            v: The 0/1 values.

        Returns:
            np.ndarray: The read-only column.
        """
        return _frozen(np.array(v, dtype=np.int8))

    def subset(self, index: np.ndarray) -> "LatentColumns":
        return LatentColumns(u=self.u[index], a=self.a[index], y=self.y[index])


class Cohort(BaseModel):
    """
    An RCT or OS cohort, one row per patient.

    Treatment ``a`` and outcome ``y`` are floats that are NaN exactly where ``s = 0``.
    Synthetic cohorts also carry ``LatentColumns``, reachable only through ``oracle()``.

    Attributes:
        population (Population): RCT or OS.
        x (np.ndarray): ``(n, d)`` covariates.
        s (np.ndarray): Selection indicator.
        a (np.ndarray): Treatment, NaN where unselected.
        y (np.ndarray): Outcome, NaN where unselected.
        covariate_type (CovariateType): Binary covariates can be enumerated as cells.
        covariate_names (list[str]): Column names of ``x``.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    population: Population
    x: np.ndarray
    s: np.ndarray
    a: np.ndarray
    y: np.ndarray
    covariate_type: CovariateType = CovariateType.BINARY
    covariate_names: list[str] = []
    latent: Optional[LatentColumns] = None

    @field_validator("x", mode="before")
    def validate_x(cls, v):
        """
        Validates the covariate matrix and freezes it.

        Args:
            v: Array-like of shape ``(n, d)``.

        Returns:
            np.ndarray: The read-only covariates.

        Raises:
            ValueError: If the covariates are not 2-d.
        """
        arr = np.array(v)
        if arr.ndim != 2:
            raise ValueError("Covariates must be a 2-d array.")
        return _frozen(arr)

    @field_validator("s", mode="before")
    def validate_s(cls, v):
        """
        Validates the selection column and stores it as int8.

        Args:
            v: The selection indicators.

        Returns:
            np.ndarray: The read-only column.

        Raises:
            ValueError: If an entry is not 0 or 1.
        """
        arr = np.array(v)
        if arr.size and not np.isin(arr, (0, 1)).all():
            raise ValueError("Selection must be 0 or 1.")
        return _frozen(arr.astype(np.int8))

    @field_validator("a", "y", mode="before")
    def validate_observed(cls, v):
        """
        Validates a masked treatment or outcome column.

        Args:
            v: Values that are 0, 1 or NaN.

        Returns:
            np.ndarray: The read-only float column.

        Raises:
            ValueError: If an observed entry is not 0 or 1.
        """
        arr = np.array(v, dtype=float)
        observed = arr[~np.isnan(arr)]
        if not np.isin(observed, (0.0, 1.0)).all():
            raise ValueError("Treatment and outcome must be 0 or 1.")
        return _frozen(arr)

    @model_validator(mode="after")
    def validate_rows(self) -> "Cohort":
        """
        Validates row counts and that A and Y are observed exactly where S=1.

        Returns:
            Cohort: The validated cohort.

        Raises:
            ValueError: If a column length, the masking, RCT selection, binary covariates,
                covariate names or latent columns are inconsistent.
        """
        n = self.x.shape[0]
        for name in ("s", "a", "y"):
            if getattr(self, name).shape != (n,):
                raise ValueError(f"Column '{name}' must have {n} rows.")
        selected = self.s == 1
        for name in ("a", "y"):
            missing = np.isnan(getattr(self, name))
            if np.any(missing == selected):
                raise ValueError(
                    f"Column '{name}' must be present exactly on selected rows."
                )
        if self.population is Population.RCT and not selected.all():
            raise ValueError("RCT cohorts are fully selected.")
        if self.covariate_type is CovariateType.BINARY and self.x.size:
            if not np.isin(self.x, (0, 1)).all():
                raise ValueError("Binary covariates must be 0 or 1.")
        if self.covariate_names and len(self.covariate_names) != self.d:
            raise ValueError("One covariate name per column is required.")
        if self.latent is not None and self.latent.u.shape != (n,):
            raise ValueError("Latent columns must have one entry per row.")
        return self

    @property
    def n(self) -> int:
        return int(self.x.shape[0])

    @property
    def d(self) -> int:
        return int(self.x.shape[1])

    @property
    def r(self) -> np.ndarray:
        return np.full(self.n, self.population.code, dtype=np.int8)

    @property
    def names(self) -> list[str]:
        return self.covariate_names or [f"x_{j}" for j in range(self.d)]

    @property
    def is_synthetic(self) -> bool:
        return self.latent is not None

    @property
    def cells(self) -> np.ndarray:
        if self.covariate_type is not CovariateType.BINARY:
            raise EstimationError("Continuous covariates cannot be enumerated as cells.")
        if self.d > MAX_DIMENSION:
            raise EstimationError(f"Cell enumeration is capped at d <= {MAX_DIMENSION}.")
        return encode_cells(self.x)

    def oracle(self) -> LatentColumns:
        """Returns the latent columns hidden from estimators."""
        if self.latent is None:
            raise EstimationError("Cohort has no latent columns (ingested data).")
        return self.latent

    def masked(self) -> "Cohort":
        """Returns the same cohort without its latent columns."""
        return self.model_copy(update={"latent": None})

    def subset(self, index: np.ndarray) -> "Cohort":
        """Returns the rows at ``index`` as a new cohort."""
        index = np.asarray(index)
        return Cohort(
            population=self.population,
            x=self.x[index],
            s=self.s[index],
            a=self.a[index],
            y=self.y[index],
            covariate_type=self.covariate_type,
            covariate_names=self.covariate_names,
            latent=None if self.latent is None else self.latent.subset(index),
        )
