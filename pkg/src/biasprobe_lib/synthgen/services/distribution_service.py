import numpy as np

from typing import Optional
from pydantic import ValidationError

from ...utils.errors import ConfigurationError
from ..models.mechanism import F_HIGH, F_LOW, FDistribution


def as_distribution(dist: FDistribution | float) -> FDistribution:
    """
    Coerces a bare parameter into an ``FDistribution``.

    Raises:
        ConfigurationError: If the parameter is outside (0.1, 0.5].
    """
    if isinstance(dist, FDistribution):
        return dist
    try:
        return FDistribution(p=float(dist))
    except ValidationError as e:
        raise ConfigurationError(
            f"F(p) parameter must lie in (0.1, 0.5], got {dist}", key="p"
        ) from e


def sample_from_f(
    dist: FDistribution | float,
    rng: np.random.Generator,
    size: Optional[int | tuple[int, ...]] = None,
) -> float | np.ndarray:
    """
    Samples uniformly from [0.1, p] ∪ [1-p, 0.9].

    Both bands have length p - 0.1, so one uniform draw on [0, 2(p - 0.1)) is folded
    onto the low band when it falls in the first half and onto the high band otherwise.

    Args:
        dist (FDistribution | float): The distribution or its parameter p.
        rng (np.random.Generator): Source of randomness.
        size: Output shape, or None for a single float.

    Returns:
        float | np.ndarray: The sample(s).

    Raises:
        ConfigurationError: If p is outside (0.1, 0.5].

    Example:
        >>> rng = np.random.default_rng(0)
        >>> value = sample_from_f(0.3, rng)
        >>> 0.1 <= value <= 0.3 or 0.7 <= value <= 0.9
        True
    """
    dist = as_distribution(dist)
    length = dist.band_length
    v = rng.uniform(0.0, 2.0 * length, size=size)
    values = np.where(v < length, F_LOW + v, (1.0 - dist.p) + (v - length))
    values = np.clip(values, F_LOW, F_HIGH)
    if size is None:
        return float(values)
    return values
