from pathlib import Path

from loguru import logger


def write_file(file_path: Path, content: str, verbose: bool = False) -> None:
    """
    Write content to a file at the specified path, creating parent directories.

    Args:
        file_path (Path): The path to the file.
        content (str): The content to write to the file.
        verbose (bool): If True, log the written content at debug level.
    """
    file_path.parent.mkdir(parents=True, exist_ok=True)
    with open(file_path, "w", encoding="utf-8", newline="\n") as file:
        file.write(content)
    logger.debug("Wrote {} ({} bytes)", file_path, len(content.encode("utf-8")))
    if verbose:
        logger.debug("\n##### {} #####\n{}", file_path, content)
