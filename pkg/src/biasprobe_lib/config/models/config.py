from enum import Enum
from pathlib import Path
from typing import Optional
from pydantic import BaseModel, ConfigDict, field_validator

from ...analytic.services.oracle_service import DEFAULT_MC_SAMPLES, MIN_MC_SAMPLES
from ...diagnosis.models.options import DiagnoseOptions
from ...harness.models.experiment import ExperimentConfig
from ...synthgen.models.mechanism import SelectionTable, UModel


class Mode(str, Enum):
    SIMULATE = "simulate"
    DIAGNOSE = "diagnose"
    ORACLE = "oracle"
    BATCH = "batch"
    GRID = "grid"
    WHI_REPLICA = "whi-replica"


class GridConfig(BaseModel):
    """
    Sweep axes of a grid run.

    Attributes:
        mechanisms (list[str]): Mechanism labels, ``+``-joined for combinations.
        dimensions (list[int]): Covariate dimensions.
        n_rct_values (list[int]): RCT sizes.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    mechanisms: list[str] = [
        "transportability",
        "confounding",
        "selection_type1",
        "selection_type2",
    ]
    dimensions: list[int] = [5, 6, 7]
    n_rct_values: list[int] = [2000, 50000]

    @field_validator("mechanisms", "dimensions", "n_rct_values")
    def validate_not_empty(cls, v):
        """
        Validates that a sweep axis has at least one value.

        Args:
            v (list): The axis values.

        Returns:
            list: The validated axis.

        Raises:
            ValueError: If the axis is empty.
        """
        if not v:
            raise ValueError("Grid axes must not be empty.")
        return v


class OracleConfig(BaseModel):
    """
    Grid of the Monte-Carlo oracle.

    Attributes:
        mechanisms (list[str]): Mechanism labels, ``+``-joined for combinations.
        p_values (list[float]): F(p) parameters.
        n_mc (int): Monte-Carlo samples per point.
        seed (int): Seed of the Monte-Carlo draws.
        u_model (UModel): Binary or continuous latent variable.
        selection_table (Optional[SelectionTable]): Type 2 table, the default when None.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    mechanisms: list[str] = [
        "no_bias",
        "transportability",
        "confounding",
        "selection_type1",
    ]
    p_values: list[float] = [0.2, 0.3, 0.4, 0.5]
    n_mc: int = DEFAULT_MC_SAMPLES
    seed: int = 0
    u_model: UModel = UModel.BINARY
    selection_table: Optional[SelectionTable] = None

    @field_validator("n_mc")
    def validate_n_mc(cls, v):
        """
        Validates the Monte-Carlo sample count.

        Args:
            v (int): Samples per point.

        Returns:
            int: The validated count.

        Raises:
            ValueError: If fewer than the minimum number of samples is requested.
        """
        if v < MIN_MC_SAMPLES:
            raise ValueError(f"n_mc must be >= {MIN_MC_SAMPLES}.")
        return v


class DiagnoseConfig(BaseModel):
    """
    Cohort files and options of a diagnosis.

    Attributes:
        rct (Path): RCT cohort CSV.
        os (Path): OS cohort CSV.
        options (DiagnoseOptions): Estimator and test options.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    rct: Path
    os: Path
    options: DiagnoseOptions = DiagnoseOptions()


class ConfigFile(BaseModel):
    """
    A biasprobe config file.

    Attributes:
        mode (Mode): The command ``biasprobe run`` dispatches to.
        experiment (ExperimentConfig): Settings of synthetic runs.
        grid (GridConfig): Sweep axes for ``grid``.
        oracle (OracleConfig): Grid of the Monte-Carlo oracle.
        diagnose (Optional[DiagnoseConfig]): Inputs of ``diagnose``.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    mode: Mode = Mode.BATCH
    experiment: ExperimentConfig = ExperimentConfig()
    grid: GridConfig = GridConfig()
    oracle: OracleConfig = OracleConfig()
    diagnose: Optional[DiagnoseConfig] = None
