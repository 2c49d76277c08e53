import numpy as np
import pandas as pd

from pathlib import Path
from typing import Optional
from loguru import logger
from pydantic import ValidationError

from ...synthgen.models.cohort import Cohort, CovariateType
from ...synthgen.models.mechanism import Population
from ...utils.errors import SchemaError
from ...utils.file_utils import write_file
from ..models.dataset import ColumnMapping, IngestedDataset

LATENT_COLUMN = "u"


def cohort_frame(cohort: Cohort) -> pd.DataFrame:
    """Tabulates a cohort as ``r, s, a, y, x_0 .. x_{d-1}`` with nullable a and y."""
    frame = pd.DataFrame(
        {
            "r": cohort.r.astype(np.int64),
            "s": cohort.s.astype(np.int64),
            "a": pd.array(_nullable(cohort.a), dtype="Int64"),
            "y": pd.array(_nullable(cohort.y), dtype="Int64"),
        }
    )
    covariates = cohort.x.astype(np.int64) if cohort.covariate_type is CovariateType.BINARY else cohort.x
    for j, name in enumerate(cohort.names):
        frame[name] = covariates[:, j]
    return frame


def write_cohort_csv(
    cohort: Cohort,
    path: Path,
    latent_path: Optional[Path] = None,
    verbose: bool = False,
) -> None:
    """
    Writes a cohort CSV, and optionally a sidecar CSV with the latent columns.

    The sidecar has one row per cohort row with ``u`` and the unmasked ``a`` and ``y``.

    Args:
        cohort (Cohort): The cohort to export.
        path (Path): Destination of the cohort CSV.
        latent_path (Optional[Path]): Destination of the latent sidecar.
        verbose (bool): Log the written content.

    Raises:
        SchemaError: If a sidecar is requested for a cohort without latent columns.
    """
    write_file(path, cohort_frame(cohort).to_csv(index=False, lineterminator="\n"), verbose)
    if latent_path is not None:
        if cohort.latent is None:
            raise SchemaError("Cohort has no latent columns to export")
        latent = pd.DataFrame(
            {
                LATENT_COLUMN: cohort.latent.u,
                "a": cohort.latent.a.astype(np.int64),
                "y": cohort.latent.y.astype(np.int64),
            }
        )
        write_file(latent_path, latent.to_csv(index=False, lineterminator="\n"), verbose)


def read_cohort_csv(
    path: Path,
    population: Optional[Population] = None,
    columns: Optional[ColumnMapping] = None,
    covariate_type: Optional[CovariateType] = None,
) -> Cohort:
    """
    Reads and validates one cohort CSV.

    Args:
        path (Path): The CSV file.
        population (Optional[Population]): Expected population; inferred from ``r`` when None.
        columns (Optional[ColumnMapping]): Column names, default ``r, s, a, y`` plus the rest.
        covariate_type (Optional[CovariateType]): Forced typing, inferred when None.

    Returns:
        Cohort: A cohort without latent columns.

    Raises:
        SchemaError: On a latent ``u`` column, missing columns, non-binary r/s/a/y,
            a or y present on an unselected row or missing on a selected one, or
            non-numeric covariates.
    """
    columns = columns or ColumnMapping()
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"Cohort file not found: {path}")
    try:
        frame = pd.read_csv(path, float_precision="round_trip")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise SchemaError(f"Cannot parse {path}: {e}") from e

    if LATENT_COLUMN in frame.columns:
        raise SchemaError(f"{path}: latent column '{LATENT_COLUMN}' is not accepted")
    missing = [c for c in columns.reserved if c not in frame.columns]
    if missing:
        raise SchemaError(f"{path}: missing columns {missing}")
    covariate_names = columns.covariates
    if covariate_names is None:
        covariate_names = [c for c in frame.columns if c not in columns.reserved]
    absent = [c for c in covariate_names if c not in frame.columns]
    if absent:
        raise SchemaError(f"{path}: missing covariate columns {absent}")

    r = _binary_column(frame, columns.r, path, allow_missing=False)
    s = _binary_column(frame, columns.s, path, allow_missing=False)
    a = _binary_column(frame, columns.a, path, allow_missing=True)
    y = _binary_column(frame, columns.y, path, allow_missing=True)

    selected = s == 1
    for name, values in ((columns.a, a), (columns.y, y)):
        present = ~np.isnan(values)
        bad = np.flatnonzero(present != selected)
        if bad.size:
            row = int(bad[0]) + 2
            raise SchemaError(
                f"{path}: column '{name}' must be present exactly when s=1 (line {row})"
            )

    populations = np.unique(r)
    if populations.size > 1:
        raise SchemaError(f"{path}: mixes RCT and OS rows")
    if populations.size == 0:
        raise SchemaError(f"{path}: has no rows")
    found = Population.RCT if populations[0] == 1 else Population.OS
    if population is not None and found is not population:
        raise SchemaError(f"{path}: expected {population.value} rows, found {found.value}")

    x = frame[covariate_names].apply(pd.to_numeric, errors="coerce").to_numpy(dtype=float)
    if np.isnan(x).any():
        raise SchemaError(f"{path}: covariates must be numeric and non-missing")
    if covariate_type is None:
        covariate_type = (
            CovariateType.BINARY if np.isin(x, (0.0, 1.0)).all() else CovariateType.CONTINUOUS
        )
    if covariate_type is CovariateType.BINARY:
        x = x.astype(np.int8)

    try:
        cohort = Cohort(
            population=found,
            x=x.reshape(len(frame), len(covariate_names)),
            s=s.astype(np.int8),
            a=a,
            y=y,
            covariate_type=covariate_type,
            covariate_names=covariate_names,
        )
    except ValidationError as e:
        raise SchemaError(f"{path}: {e.errors()[0]['msg']}") from e
    logger.debug(
        "Read {} cohort from {}: n={}, d={}, {} covariates",
        found.value,
        path,
        cohort.n,
        cohort.d,
        covariate_type.value,
    )
    return cohort


def load_cohorts(dataset: IngestedDataset) -> tuple[Cohort, Cohort]:
    """
    Reads the RCT and OS files of a dataset and checks they share covariates.

    If either file has continuous covariates both cohorts are typed continuous, which
    restricts them to the logistic estimator.

    Args:
        dataset (IngestedDataset): Paths and column mapping.

    Returns:
        tuple[Cohort, Cohort]: The RCT and OS cohorts.

    Raises:
        SchemaError: If a file is invalid or the covariate columns differ.
    """
    rct = read_cohort_csv(
        dataset.rct_path, Population.RCT, dataset.columns, dataset.covariate_type
    )
    os = read_cohort_csv(
        dataset.os_path, Population.OS, dataset.columns, dataset.covariate_type
    )
    if rct.names != os.names:
        raise SchemaError(
            f"Covariate columns differ between RCT ({rct.names}) and OS ({os.names})"
        )
    if rct.covariate_type is not os.covariate_type:
        rct, os = (
            _as_continuous(c) if c.covariate_type is CovariateType.BINARY else c
            for c in (rct, os)
        )
    return rct, os


def _as_continuous(cohort: Cohort) -> Cohort:
    return Cohort(
        population=cohort.population,
        x=cohort.x.astype(float),
        s=cohort.s,
        a=cohort.a,
        y=cohort.y,
        covariate_type=CovariateType.CONTINUOUS,
        covariate_names=cohort.covariate_names,
    )


def _nullable(values: np.ndarray) -> list:
    return [None if np.isnan(v) else int(v) for v in values]


def _binary_column(
    frame: pd.DataFrame, name: str, path: Path, allow_missing: bool
) -> np.ndarray:
    values = pd.to_numeric(frame[name], errors="coerce").to_numpy(dtype=float)
    raw_missing = frame[name].isna().to_numpy()
    if np.any(np.isnan(values) & ~raw_missing):
        raise SchemaError(f"{path}: column '{name}' must be numeric")
    if not allow_missing and raw_missing.any():
        raise SchemaError(f"{path}: column '{name}' has missing values")
    observed = values[~np.isnan(values)]
    if not np.isin(observed, (0.0, 1.0)).all():
        raise SchemaError(f"{path}: column '{name}' must be 0 or 1")
    return values
