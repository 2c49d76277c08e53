from typing import Optional
from pydantic import BaseModel, ConfigDict, field_validator

from ...nuisance.models.estimator import ModelKind
from ...signals.models.report import SignalUnit


class DiagnoseOptions(BaseModel):
    """
    Options of an end-to-end diagnosis.

    Attributes:
        alpha (float): Significance level of each channel.
        model_kind (Optional[ModelKind]): Estimator; None picks frequency tables for
            synthetic binary cohorts and logistic regression otherwise.
        smoothing (float): Frequency table pseudo-count.
        l2 (float): Logistic penalty strength.
        max_iters (int): Logistic iteration cap.
        tol (float): Logistic gradient tolerance.
        val_fraction (float): Share of OS rows held out for scoring.
        split_seed (int): Seed of the train/validation shuffle.
        permutations (int): Permutation resamples per channel, 0 for the t-test.
        debias (bool): Subtract the sampling noise magnitude from |b1_hat| of
            frequency estimates.
        unit (SignalUnit): Correlate over validation rows or over covariate cells.
        min_cell_rows (int): Smallest cell kept when correlating over cells.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    alpha: float = 0.01
    model_kind: Optional[ModelKind] = None
    smoothing: float = 0.5
    l2: float = 1.0
    max_iters: int = 1000
    tol: float = 1e-4
    val_fraction: float = 0.2
    split_seed: int = 0
    permutations: int = 0
    debias: bool = True
    unit: SignalUnit = SignalUnit.ROW
    min_cell_rows: int = 5

    @field_validator("alpha", "val_fraction")
    def validate_open_unit(cls, v):
        """
        Validates that a level or fraction lies strictly between 0 and 1.

        Args:
            v (float): The value.

        Returns:
            float: The validated value.

        Raises:
            ValueError: If the value is not in (0, 1).
        """
        if not 0.0 < v < 1.0:
            raise ValueError("Value must lie in (0, 1).")
        return v

    @field_validator("smoothing", "l2")
    def validate_non_negative(cls, v):
        """
        Validates that a regularization strength is non-negative.

        Args:
            v (float): The value.

        Returns:
            float: The validated value.

        Raises:
            ValueError: If the value is negative.
        """
        if v < 0:
            raise ValueError("Value must be >= 0.")
        return v

    @field_validator("max_iters", "permutations")
    def validate_count(cls, v):
        """
        Validates that an iteration or resample count is non-negative.

        Args:
            v (int): The count.

        Returns:
            int: The validated count.

        Raises:
            ValueError: If the count is negative.
        """
        if v < 0:
            raise ValueError("Count must be >= 0.")
        return v

    @field_validator("min_cell_rows")
    def validate_min_cell_rows(cls, v):
        """
        Validates the smallest cell size kept when correlating over cells.

        Args:
            v (int): Rows a cell needs.

        Returns:
            int: The validated size.

        Raises:
            ValueError: If fewer than 1 row is required.
        """
        if v < 1:
            raise ValueError("min_cell_rows must be >= 1.")
        return v
