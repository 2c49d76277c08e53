from pathlib import Path
from typing import Optional
from pydantic import BaseModel, ConfigDict, model_validator

from ...synthgen.models.cohort import CovariateType


class ColumnMapping(BaseModel):
    """
    Names of the cohort columns in a CSV file.

    Attributes:
        r (str): Population flag, 1 for the RCT and 0 for the OS.
        s (str): Selection indicator.
        a (str): Treatment, empty where s=0.
        y (str): Outcome, empty where s=0.
        covariates (Optional[list[str]]): Covariate columns; None uses every other column.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    r: str = "r"
    s: str = "s"
    a: str = "a"
    y: str = "y"
    covariates: Optional[list[str]] = None

    @model_validator(mode="after")
    def validate_distinct(self) -> "ColumnMapping":
        names = [self.r, self.s, self.a, self.y, *(self.covariates or [])]
        if len(names) != len(set(names)):
            raise ValueError("Column names must be distinct.")
        return self

    @property
    def reserved(self) -> list[str]:
        return [self.r, self.s, self.a, self.y]


class IngestedDataset(BaseModel):
    """
    A pair of externally supplied cohort files.

    Attributes:
        rct_path (Path): RCT cohort CSV.
        os_path (Path): OS cohort CSV.
        columns (ColumnMapping): Column names shared by both files.
        covariate_type (Optional[CovariateType]): Forced typing; None infers binary when
            every covariate value is 0 or 1 in both files.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    rct_path: Path
    os_path: Path
    columns: ColumnMapping = ColumnMapping()
    covariate_type: Optional[CovariateType] = None
