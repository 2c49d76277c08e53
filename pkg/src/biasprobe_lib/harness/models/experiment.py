import math

from typing import Optional
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from ...nuisance.models.estimator import ModelKind
from ...signals.models.report import SignalReport, SignalUnit, Verdict
from ...synthgen.models.mechanism import (
    F_LOW,
    MechanismKind,
    SelectionTable,
    Target,
    UModel,
    mechanism_label,
)
from ...utils.cell_utils import MAX_DIMENSION


class ExperimentConfig(BaseModel):
    """
    Settings of a seeded batch of synthetic runs.

    Attributes:
        mechanisms (list[MechanismKind]): Generating mechanism, several for a combination.
        d (int): Covariate dimension.
        n_rct (int): RCT cohort size.
        n_os (int): OS training cohort size.
        n_val (int): OS validation cohort size.
        u_model (UModel): Binary or continuous latent variable.
        selection_table (Optional[SelectionTable]): Type 2 table, default 0.9 for
            Y=1, A=1 and 0.1 otherwise.
        p_range (tuple[float, float]): Range of the per-run F(p) parameter.
        alpha (float): Significance level.
        model_kind (ModelKind): Estimator for all nuisance models.
        smoothing (float): Frequency table pseudo-count.
        l2 (float): Logistic penalty strength.
        max_iters (int): Logistic iteration cap.
        tol (float): Logistic gradient tolerance.
        permutations (int): Permutation resamples, 0 for the t-test.
        debias (bool): Subtract the sampling noise magnitude from |b1_hat|.
        unit (SignalUnit): Correlate over validation rows or over covariate cells.
        min_cell_rows (int): Smallest cell kept when correlating over cells.
        n_seeds (int): Number of runs.
        base_seed (int): First seed; runs use base_seed .. base_seed + n_seeds - 1.
        n_jobs (int): Parallel workers, -1 for all cores.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    mechanisms: list[MechanismKind] = [MechanismKind.CONFOUNDING]
    d: int = 6
    n_rct: int = 50000
    n_os: int = 50000
    n_val: int = 2000
    u_model: UModel = UModel.BINARY
    selection_table: Optional[SelectionTable] = None
    p_range: tuple[float, float] = (0.2, 0.5)
    alpha: float = 0.01
    model_kind: ModelKind = ModelKind.FREQUENCY
    smoothing: float = 0.5
    l2: float = 1.0
    max_iters: int = 1000
    tol: float = 1e-4
    permutations: int = 0
    debias: bool = True
    unit: SignalUnit = SignalUnit.ROW
    min_cell_rows: int = 5
    n_seeds: int = 200
    base_seed: int = 0
    n_jobs: int = 1

    @field_validator("mechanisms", mode="before")
    def validate_mechanisms(cls, v):
        """
        Normalizes the mechanisms into canonical order.

        A ``+``-joined label such as ``selection_type2+transportability`` is split first.

        Args:
            v (str | list): Mechanism names or a combination label.

        Returns:
            list[MechanismKind]: The distinct kinds in enum order.

        Raises:
            ValueError: If no mechanism is given, a name is unknown or no_bias is combined.
        """
        if isinstance(v, str):
            v = [part for part in v.split("+") if part.strip()]
        if not v:
            raise ValueError("At least one mechanism is required.")
        kinds = {MechanismKind(k) for k in v}
        if MechanismKind.NO_BIAS in kinds and len(kinds) > 1:
            raise ValueError("no_bias cannot be combined with other mechanisms.")
        return [k for k in MechanismKind if k in kinds]

    @field_validator("d")
    def validate_d(cls, v):
        """
        Validates the covariate dimension.

        Args:
            v (int): The dimension.

        Returns:
            int: The validated dimension.

        Raises:
            ValueError: If d lies outside [0, MAX_DIMENSION].
        """
        if not 0 <= v <= MAX_DIMENSION:
            raise ValueError(f"d must lie in [0, {MAX_DIMENSION}].")
        return v

    @field_validator("n_rct", "n_os", "n_val", "n_seeds")
    def validate_size(cls, v):
        """
        Validates that a cohort size or seed count is positive.

        Args:
            v (int): The size.

        Returns:
            int: The validated size.

        Raises:
            ValueError: If the size is below 1.
        """
        if v < 1:
            raise ValueError("Sizes must be >= 1.")
        return v

    @field_validator("p_range")
    def validate_p_range(cls, v):
        """
        Validates the interval the per-seed F(p) parameter is drawn from.

        Args:
            v (tuple[float, float]): Lower and upper bound.

        Returns:
            tuple[float, float]: The validated interval.

        Raises:
            ValueError: If the bounds do not satisfy 0.1 < low <= high <= 0.5.
        """
        low, high = v
        if not (F_LOW < low <= high <= 0.5):
            raise ValueError("p_range must satisfy 0.1 < low <= high <= 0.5.")
        return v

    @field_validator("alpha")
    def validate_alpha(cls, v):
        """
        Validates the significance level.

        Args:
            v (float): The level.

        Returns:
            float: The validated level.

        Raises:
            ValueError: If alpha is not in (0, 1).
        """
        if not 0.0 < v < 1.0:
            raise ValueError("alpha must lie in (0, 1).")
        return v

    @model_validator(mode="after")
    def validate_sizes(self) -> "ExperimentConfig":
        if self.n_val > self.n_os:
            raise ValueError("n_val must not exceed n_os.")
        return self

    @property
    def label(self) -> str:
        return mechanism_label(self.mechanisms)

    @property
    def expected_verdict(self) -> Optional[Verdict]:
        """The verdict a run should produce, None for combinations."""
        if len(self.mechanisms) > 1:
            return None
        return Verdict.from_kind(self.mechanisms[0])

    @property
    def resolved_selection_table(self) -> Optional[SelectionTable]:
        if MechanismKind.SELECTION_TYPE2 not in self.mechanisms:
            return None
        return self.selection_table or SelectionTable.default()

    def with_updates(self, **updates) -> "ExperimentConfig":
        """Returns a validated copy with ``updates`` applied."""
        return ExperimentConfig(**{**self.model_dump(), **updates})


class RunRecord(BaseModel):
    """
    Outcome of one seeded run, one CSV row.

    Attributes:
        seed (int): The run seed.
        mechanism (str): Generating mechanism label.
        p (float): The drawn F(p) parameter.
        r_S, p_S, r_A, p_A, r_Y, p_Y (float): Pearson r and p-value per channel.
        verdict (Optional[Verdict]): Classified mechanism, None for failed runs.
        mean_abs_bias (float): Mean |b1_hat| over validation rows.
        unsupported_rows (int): Validation rows in cells empty in the RCT fit.
        empty_cells (int): Empty cells summed over the fitted models.
        non_converged (int): Fitted models that did not converge.
        undefined_channels (int): Channels with constant input.
        error (Optional[str]): Failure message.
    """

    seed: int
    mechanism: str
    p: float = math.nan
    r_S: float = math.nan
    p_S: float = math.nan
    r_A: float = math.nan
    p_A: float = math.nan
    r_Y: float = math.nan
    p_Y: float = math.nan
    verdict: Optional[Verdict] = None
    mean_abs_bias: float = math.nan
    unsupported_rows: int = 0
    empty_cells: int = 0
    non_converged: int = 0
    undefined_channels: int = 0
    error: Optional[str] = None

    @classmethod
    def from_report(
        cls, seed: int, mechanism: str, p: float, report: SignalReport
    ) -> "RunRecord":
        values = {}
        for target in Target:
            channel = report.channels[target]
            values[f"r_{target.value}"] = channel.pearson_r if channel.defined else math.nan
            values[f"p_{target.value}"] = channel.p_value if channel.defined else math.nan
        return cls(
            seed=seed,
            mechanism=mechanism,
            p=p,
            verdict=report.verdict,
            mean_abs_bias=report.mean_abs_bias,
            unsupported_rows=report.flags.get("unsupported_validation_rows", 0),
            empty_cells=sum(report.flags.get("empty_cells", {}).values()),
            non_converged=len(report.flags.get("non_converged", [])),
            undefined_channels=len(report.flags.get("undefined_channels", [])),
            **values,
        )

    @property
    def failed(self) -> bool:
        return self.error is not None

    def r(self, target: Target) -> float:
        return getattr(self, f"r_{target.value}")

    def p_value(self, target: Target) -> float:
        return getattr(self, f"p_{target.value}")

    def significant(self, target: Target, alpha: float) -> bool:
        p = self.p_value(target)
        return not math.isnan(p) and p < alpha


class BatchSummary(BaseModel):
    """
    Aggregate of a batch of runs.

    Attributes:
        mechanism (str): Generating mechanism label.
        alpha (float): Significance level.
        n_runs (int): Runs attempted.
        n_failed (int): Runs that raised.
        match_fraction (Optional[float]): Share of verdicts equal to the generating
            mechanism, None for combinations.
        all_nonsignificant_fraction (float): Share with no significant channel.
        any_significant_fraction (float): Share with at least one significant channel.
        significant_fraction (dict[Target, float]): Per-channel significance rate.
        positive_fraction (dict[Target, float]): Per-channel rate of significant r > 0.
        negative_fraction (dict[Target, float]): Per-channel rate of significant r < 0.
        median_r (dict[Target, float]): Per-channel median Pearson r.
        verdict_counts (dict[str, int]): Runs per verdict.
    """

    mechanism: str
    alpha: float
    n_runs: int
    n_failed: int
    match_fraction: Optional[float] = None
    all_nonsignificant_fraction: float
    any_significant_fraction: float
    significant_fraction: dict[Target, float]
    positive_fraction: dict[Target, float]
    negative_fraction: dict[Target, float]
    median_r: dict[Target, float]
    verdict_counts: dict[str, int]

    @field_validator(
        "all_nonsignificant_fraction", "any_significant_fraction", "match_fraction"
    )
    def validate_fraction(cls, v):
        """
        Validates a batch fraction, allowing None or NaN when nothing was counted.

        Args:
            v (Optional[float]): The fraction.

        Returns:
            Optional[float]: The validated fraction.

        Raises:
            ValueError: If a defined fraction lies outside [0, 1].
        """
        if v is not None and not math.isnan(v) and not 0.0 <= v <= 1.0:
            raise ValueError("Fractions must lie in [0, 1].")
        return v


class GridCell(BaseModel):
    """One (mechanism, d, n_rct) cell of a sweep."""

    mechanism: str
    d: int
    n_rct: int
    summary: BatchSummary


class WhiReplicaSummary(BaseModel):
    """
    Combined type 2 selection plus transportability batch and its selection-corrected twin.

    Attributes:
        combined (BatchSummary): Batch under the WHI-like selection table.
        corrected (BatchSummary): Batch with every selection probability raised.
        median_shift (dict[Target, float]): corrected minus combined median r per channel.
    """

    combined: BatchSummary
    corrected: BatchSummary
    median_shift: dict[Target, float]
