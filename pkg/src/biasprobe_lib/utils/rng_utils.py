import numpy as np

from typing import Dict, Sequence

RUN_STREAMS = ("params", "tables", "rct", "os_train", "os_val")


def make_rng(seed: int | Sequence[int] | np.random.Generator | None) -> np.random.Generator:
    """
    Returns a numpy Generator, passing an existing one through untouched.

    Args:
        seed: An integer seed, a seed sequence entropy list, a Generator or None.

    Returns:
        np.random.Generator: The seeded generator.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def spawn_streams(
    entropy: int | Sequence[int], names: Sequence[str] = RUN_STREAMS
) -> Dict[str, np.random.Generator]:
    """
    Derives one independent named generator per stage from a single entropy value.

    The streams only depend on the entropy and the position of the name, so runs
    are reproducible regardless of which worker executes them.

    Args:
        entropy: Seed entropy, typically the run seed.
        names: Stream names in a fixed order.

    Returns:
        Dict[str, np.random.Generator]: Generators keyed by stream name.

    Example:
        >>> streams = spawn_streams([0, 7])
        >>> streams["tables"].random() == spawn_streams([0, 7])["tables"].random()
        True
    """
    children = np.random.SeedSequence(entropy).spawn(len(names))
    return {name: np.random.default_rng(child) for name, child in zip(names, children)}
