import numpy as np

MAX_DIMENSION = 20


def encode_cells(x: np.ndarray) -> np.ndarray:
    """
    Encodes binary covariate rows as integer cell indices.

    Coordinate ``j`` contributes bit ``j``, so ``[1, 0, 1]`` maps to cell 5.

    Args:
        x (np.ndarray): An ``(n, d)`` array of 0/1 covariates.

    Returns:
        np.ndarray: An ``(n,)`` int64 array of cell indices.
    """
    x = np.asarray(x)
    if x.ndim != 2:
        raise ValueError(f"Covariates must be a 2-d array, got shape {x.shape}")
    weights = np.left_shift(1, np.arange(x.shape[1], dtype=np.int64))
    return x.astype(np.int64) @ weights


def decode_cells(cells: np.ndarray, d: int) -> np.ndarray:
    """
    Inverse of ``encode_cells``.

    Args:
        cells (np.ndarray): Integer cell indices.
        d (int): Covariate dimension.

    Returns:
        np.ndarray: An ``(n, d)`` int8 array of bits.
    """
    cells = np.asarray(cells, dtype=np.int64)
    return ((cells[:, None] >> np.arange(d, dtype=np.int64)) & 1).astype(np.int8)


def cell_weights(d: int, prob_one: float) -> np.ndarray:
    """
    Returns the probability of every cell when each coordinate is Bernoulli(prob_one).

    Args:
        d (int): Covariate dimension.
        prob_one (float): Per-coordinate probability of a one.

    Returns:
        np.ndarray: A ``(2**d,)`` array summing to one.
    """
    ones = decode_cells(np.arange(2**d), d).sum(axis=1)
    return prob_one**ones * (1.0 - prob_one) ** (d - ones)
