import numpy as np

from typing import Optional
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from .mechanism import F_HIGH, F_LOW, Downstream, UModel


class ProbabilityTables(BaseModel):
    """
    Bernoulli parameters of S, A, Y0 and Y1 for every covariate cell.

    Row ``Downstream.index`` of ``low`` holds the parameter at U=0 and the same row of
    ``high`` the parameter at U=1. Under a continuous U these are the endpoints of the
    convex combination ``u * high + (1 - u) * low``. Where a variable does not depend on
    U both rows are equal.

    Attributes:
        low (np.ndarray): ``(4, n_cells)`` parameters at U=0.
        high (np.ndarray): ``(4, n_cells)`` parameters at U=1.
        u_model (UModel): How the latent U is distributed.
        f_param (float): The p of F(p) the entries were drawn from.
        d (Optional[int]): Covariate dimension when cells enumerate {0,1}^d.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    low: np.ndarray
    high: np.ndarray
    u_model: UModel = UModel.BINARY
    f_param: float
    d: Optional[int] = None

    @field_validator("low", "high", mode="before")
    def validate_entries(cls, v):
        """
        Validates a low or high table and freezes it.

        Args:
            v: Array-like of shape ``(4, n_cells)`` indexed by ``Downstream``.

        Returns:
            np.ndarray: The read-only table.

        Raises:
            ValueError: If the shape is wrong or an entry falls outside the F(p) support [0.1, 0.9].
        """
        arr = np.array(v, dtype=float)
        if arr.ndim != 2 or arr.shape[0] != len(Downstream):
            raise ValueError("Tables must have shape (4, n_cells).")
        # tolerance for the float mapping into the F(p) bands
        if np.any(arr < F_LOW - 1e-12) or np.any(arr > F_HIGH + 1e-12):
            raise ValueError("Table entries must lie in [0.1, 0.9].")
        arr.flags.writeable = False
        return arr

    @model_validator(mode="after")
    def validate_shape(self) -> "ProbabilityTables":
        if self.low.shape != self.high.shape:
            raise ValueError("Low and high tables must have the same shape.")
        if self.d is not None and self.low.shape[1] != 2**self.d:
            raise ValueError(f"Expected {2**self.d} cells for d={self.d}.")
        return self

    @property
    def n_cells(self) -> int:
        return int(self.low.shape[1])

    def depends_on_u(self, target: Downstream) -> bool:
        i = target.index
        return not np.array_equal(self.low[i], self.high[i])

    def row(self, target: Downstream) -> np.ndarray:
        """Returns ``p_T[x][u]`` as an ``(n_cells, 2)`` array."""
        i = target.index
        return np.stack([self.low[i], self.high[i]], axis=1)

    def param(self, target: Downstream, u, cells=None) -> np.ndarray:
        """
        Realized Bernoulli parameter of ``target`` at latent value(s) ``u``.

        Args:
            target (Downstream): The downstream variable.
            u: Latent values, broadcastable against the selected cells.
            cells: Cell indices, or None for every cell.

        Returns:
            np.ndarray: ``u * high + (1 - u) * low`` for the selected cells.
        """
        i = target.index
        low = self.low[i] if cells is None else self.low[i][cells]
        high = self.high[i] if cells is None else self.high[i][cells]
        u = np.asarray(u, dtype=float)
        return u * high + (1.0 - u) * low
