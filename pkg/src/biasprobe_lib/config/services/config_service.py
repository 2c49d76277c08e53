import yaml

from pathlib import Path
from typing import Iterable, Optional
from pydantic import ValidationError

from ...harness.models.experiment import ExperimentConfig
from ...utils.errors import ConfigurationError
from ..models.config import ConfigFile


def load_config_file(path: Path | str) -> ConfigFile:
    """
    Reads and validates a config file.

    Args:
        path (Path | str): The YAML file.

    Returns:
        ConfigFile: The validated config with defaults filled in.

    Raises:
        ConfigurationError: If the file is missing, malformed or holds an invalid value.
            The message names the offending key and its line.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigurationError(f"Cannot read config file {path}: {e}") from e

    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        raise ConfigurationError(
            f"Malformed YAML in {path}", line=mark.line + 1 if mark else None
        ) from e
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigurationError(f"Config file {path} must contain a mapping", line=1)

    try:
        return ConfigFile(**data)
    except ValidationError as e:
        error = e.errors()[0]
        loc = [str(part) for part in error["loc"]]
        raise ConfigurationError(
            f"Invalid config in {path}: {error['msg']}",
            key=".".join(loc) or None,
            line=_find_line(text, loc),
        ) from e


def parse_config(path: Path | str) -> ExperimentConfig:
    """
    Reads the experiment settings of a config file.

    An empty file yields every default: d=6, n_rct=n_os=50000, n_val=2000, 200 seeds
    and alpha=0.01.

    Raises:
        ConfigurationError: If the file is malformed or a value is out of range.
    """
    return load_config_file(path).experiment


def dump_config(config: ExperimentConfig | ConfigFile) -> str:
    """
    Serializes a config to YAML that ``parse_config``/``load_config_file`` read back
    to an equal object.
    """
    if isinstance(config, ExperimentConfig):
        config = ConfigFile(experiment=config)
    return yaml.safe_dump(config.model_dump(mode="json"), sort_keys=False)


def _find_line(text: str, loc: Iterable[str]) -> Optional[int]:
    # deepest mapping key on the error path that exists in the document
    try:
        node = yaml.compose(text)
    except yaml.YAMLError:
        return None
    line = None
    for part in loc:
        if not isinstance(node, yaml.MappingNode):
            break
        match = next(
            ((k, v) for k, v in node.value if getattr(k, "value", None) == part), None
        )
        if match is None:
            break
        line = match[0].start_mark.line + 1
        node = match[1]
    return line
