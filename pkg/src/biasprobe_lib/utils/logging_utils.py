import sys

from loguru import logger


def configure_logging(verbose: bool = False) -> None:
    """
    Replaces the default loguru sink with a stderr sink.

    Args:
        verbose (bool): Log at DEBUG level when True, WARNING otherwise.
    """
    logger.remove()
    logger.add(
        sys.stderr,
        level="DEBUG" if verbose else "WARNING",
        format="<green>{time:HH:mm:ss}</green> | <level>{level: <8}</level> | {name}:{function} - {message}",
    )
