import numpy as np
import yaml

from enum import Enum
from pathlib import Path
from typing import Optional
from pydantic import BaseModel, ConfigDict, field_validator, model_validator
from scipy import stats
from scipy.special import expit

from ...synthgen.models.cohort import Cohort, CovariateType
from ...synthgen.models.mechanism import Population, Target
from ...utils.cell_utils import encode_cells
from ...utils.errors import EstimationError
from ...utils.file_utils import write_file


class ModelKind(str, Enum):
    FREQUENCY = "frequency"
    LOGISTIC = "logistic"


REQUIRED_FILTERS: dict[Target, tuple[Target, ...]] = {
    Target.S: (),
    Target.A: (Target.S,),
    Target.Y: (Target.S, Target.A),
}


class ConditioningSpec(BaseModel):
    """
    Which rows a nuisance model is fitted on and what it predicts.

    Attributes:
        target (Target): The predicted variable.
        population (Population): The cohort the model belongs to.
        filters (tuple[Target, ...]): Variables fixed to 1 before fitting.
    """

    model_config = ConfigDict(frozen=True)

    target: Target
    population: Population = Population.OS
    filters: tuple[Target, ...] = ()

    @model_validator(mode="after")
    def validate_filters(self) -> "ConditioningSpec":
        if set(self.filters) != set(REQUIRED_FILTERS[self.target]):
            required = [t.value for t in REQUIRED_FILTERS[self.target]]
            raise ValueError(
                f"Target {self.target.value} must be conditioned on {required}."
            )
        return self

    @classmethod
    def for_target(
        cls, target: Target, population: Population = Population.OS
    ) -> "ConditioningSpec":
        return cls(target=target, population=population, filters=REQUIRED_FILTERS[target])

    def mask(self, cohort: Cohort) -> np.ndarray:
        """Rows satisfying the filters: all rows, S=1 rows, or S=1 and A=1 rows."""
        keep = np.ones(cohort.n, dtype=bool)
        if Target.S in self.filters:
            keep &= cohort.s == 1
        if Target.A in self.filters:
            keep &= np.nan_to_num(cohort.a, nan=0.0) == 1.0
        return keep

    def response(self, cohort: Cohort) -> np.ndarray:
        """The target column on the filtered rows."""
        column = {Target.S: cohort.s, Target.A: cohort.a, Target.Y: cohort.y}[self.target]
        return np.asarray(column[self.mask(cohort)], dtype=float)


class FittedEstimator(BaseModel):
    """
    A fitted nuisance model, either a smoothed frequency table or a logistic regression.

    Attributes:
        model_kind (ModelKind): Frequency table or logistic regression.
        conditioning (ConditioningSpec): Training rows and target.
        d (int): Covariate dimension.
        n_train (int): Number of filtered training rows.
        cell_means (list[float]): Frequency table prediction per cell.
        cell_counts (list[int]): Training rows behind each frequency cell mean.
        empty_cells (list[int]): Cells without training rows.
        global_mean (Optional[float]): Raw filtered mean used for empty cells.
        smoothing (float): Pseudo-count added to each outcome.
        coef (list[float]): Logistic weights.
        intercept (float): Logistic intercept.
        l2 (float): Logistic penalty strength.
        converged (bool): Whether the solver met its tolerance.
        n_iter (int): Solver iterations.
    """

    model_config = ConfigDict(frozen=True)

    model_kind: ModelKind
    conditioning: ConditioningSpec
    d: int
    n_train: int
    cell_means: list[float] = []
    cell_counts: list[int] = []
    empty_cells: list[int] = []
    global_mean: Optional[float] = None
    smoothing: float = 0.0
    coef: list[float] = []
    intercept: float = 0.0
    l2: float = 0.0
    converged: bool = True
    n_iter: int = 0

    @field_validator("cell_means")
    def validate_cell_means(cls, v):
        """
        Validates the frequency table predictions.

        Args:
            v (list[float]): One mean per cell.

        Returns:
            list[float]: The validated means.

        Raises:
            ValueError: If a mean lies outside [0, 1].
        """
        if any(not 0.0 <= m <= 1.0 for m in v):
            raise ValueError("Cell means must lie in [0, 1].")
        return v

    @model_validator(mode="after")
    def validate_parameters(self) -> "FittedEstimator":
        if self.model_kind is ModelKind.FREQUENCY and len(self.cell_means) != 2**self.d:
            raise ValueError(f"Frequency table needs {2**self.d} cell means.")
        if self.model_kind is ModelKind.LOGISTIC and len(self.coef) != self.d:
            raise ValueError(f"Logistic model needs {self.d} coefficients.")
        return self

    def predict(self, x: Cohort | np.ndarray) -> np.ndarray:
        """
        Predicted probabilities for covariate rows.

        Raises:
            EstimationError: If covariates do not match the fitted dimension, or a
                frequency table is asked to score continuous covariates.
        """
        x = self._covariates(x, require_binary=self.model_kind is ModelKind.FREQUENCY)
        if self.model_kind is ModelKind.FREQUENCY:
            return np.asarray(self.cell_means)[encode_cells(x)]
        return expit(x.astype(float) @ np.asarray(self.coef, dtype=float) + self.intercept)

    def sampling_variance(self, x: Cohort | np.ndarray) -> np.ndarray:
        """
        Binomial variance ``m (1 - m) / n`` of each row's frequency cell mean.

        Cells without training rows count as a single row. Logistic models return zeros.

        Args:
            x (Cohort | np.ndarray): Covariate rows to score.

        Returns:
            np.ndarray: One variance per row.

        Raises:
            EstimationError: If a frequency table has no recorded cell counts.
        """
        if self.model_kind is not ModelKind.FREQUENCY:
            return np.zeros(len(self._covariates(x, False)))
        if len(self.cell_counts) != len(self.cell_means):
            raise EstimationError("Frequency estimator has no cell counts recorded")
        cells = encode_cells(self._covariates(x, require_binary=True))
        means = np.asarray(self.cell_means)[cells]
        counts = np.maximum(np.asarray(self.cell_counts)[cells], 1)
        return means * (1.0 - means) / counts

    def unsupported(self, x: Cohort | np.ndarray) -> np.ndarray:
        """Rows whose cell had no training support (always False for logistic models)."""
        if self.model_kind is not ModelKind.FREQUENCY or not self.empty_cells:
            return np.zeros(len(self._covariates(x, False)), dtype=bool)
        x = self._covariates(x, require_binary=True)
        return np.isin(encode_cells(x), self.empty_cells)

    def _covariates(self, x: Cohort | np.ndarray, require_binary: bool) -> np.ndarray:
        if isinstance(x, Cohort):
            if require_binary and x.covariate_type is CovariateType.CONTINUOUS:
                raise EstimationError(
                    "Frequency estimators cannot score continuous covariates"
                )
            x = x.x
        x = np.asarray(x)
        if x.ndim != 2 or x.shape[1] != self.d:
            raise EstimationError(
                f"Estimator was fitted on d={self.d}, got covariates of shape {x.shape}"
            )
        if require_binary and x.size and not np.isin(x, (0, 1)).all():
            raise EstimationError("Frequency estimators cannot score continuous covariates")
        return x

    def to_yaml(self, yaml_file: Path, verbose: bool = False) -> None:
        """Writes the estimator as a YAML artifact for audit and re-scoring."""
        content = yaml.safe_dump(self.model_dump(mode="json"), sort_keys=False)
        write_file(yaml_file, content, verbose)

    @classmethod
    def from_yaml(cls, yaml_file: Path) -> "FittedEstimator":
        """
        Loads an estimator written by ``to_yaml``.

        Raises:
            FileNotFoundError: If the YAML file doesn't exist.
            ValueError: If the file does not contain a mapping.
        """
        if not yaml_file.exists():
            raise FileNotFoundError(f"YAML file not found: {yaml_file}")
        with yaml_file.open("r") as f:
            data = yaml.safe_load(f)
        if not isinstance(data, dict):
            raise ValueError("YAML file must contain a dictionary")
        return cls(**data)


class BiasEstimate(BaseModel):
    """
    The estimated bias function ``b1_hat = g1_hat - f1_hat``.

    Attributes:
        g1_hat (FittedEstimator): Outcome model fitted on RCT rows with S=1, A=1.
        f1_hat (FittedEstimator): Outcome model fitted on OS rows with S=1, A=1.
    """

    model_config = ConfigDict(frozen=True)

    g1_hat: FittedEstimator
    f1_hat: FittedEstimator

    @model_validator(mode="after")
    def validate_pair(self) -> "BiasEstimate":
        if self.g1_hat.d != self.f1_hat.d:
            raise ValueError("RCT and OS outcome models must share covariates.")
        if self.g1_hat.conditioning.population is not Population.RCT:
            raise ValueError("g1_hat must be fitted on the RCT.")
        if self.f1_hat.conditioning.population is not Population.OS:
            raise ValueError("f1_hat must be fitted on the OS.")
        return self

    def b1(self, x: Cohort | np.ndarray) -> np.ndarray:
        return self.g1_hat.predict(x) - self.f1_hat.predict(x)

    def abs_bias(self, x: Cohort | np.ndarray) -> np.ndarray:
        return np.abs(self.b1(x))

    def sampling_sd(self, x: Cohort | np.ndarray) -> np.ndarray:
        """Standard deviation of ``b1_hat`` per row from the two cell sample sizes."""
        return np.sqrt(self.g1_hat.sampling_variance(x) + self.f1_hat.sampling_variance(x))

    def noise_corrected_abs_bias(self, x: Cohort | np.ndarray) -> np.ndarray:
        """
        ``|b1_hat|`` minus the magnitude pure sampling noise would produce.

        Under a zero bias ``b1_hat`` is roughly normal with the per-cell sampling sd, so
        ``|b1_hat|`` has the half-normal mean ``sd * sqrt(2 / pi)``. Subtracting it keeps
        thinly supported cells from looking biased just because their estimates are noisy.
        Logistic estimates carry no per-cell sd and are returned unchanged.

        Args:
            x (Cohort | np.ndarray): Covariate rows to score.

        Returns:
            np.ndarray: The corrected magnitude, possibly negative.
        """
        return self.abs_bias(x) - stats.halfnorm.mean() * self.sampling_sd(x)

    def unsupported(self, x: Cohort | np.ndarray) -> np.ndarray:
        """Rows whose cell is empty in the RCT fit and use the fallback prediction."""
        return self.g1_hat.unsupported(x)
