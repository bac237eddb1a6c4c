import logging
from importlib import resources
from pathlib import Path
from typing import Dict, Mapping, Union

from ..errors import ConfigError, IoError

logger = logging.getLogger(__name__)


def parse_config_text(text: str, source: str = "<text>") -> Dict[str, str]:
    """
    Parses ``key = value`` lines. Blank lines and ``#`` comments are skipped.

    Later duplicates win; values keep inner whitespace but are stripped at
    both ends.
    """

    values = {}
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue

        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"{source}:{n}", f"expected 'key = value', got {line!r}")

        if key in values:
            logger.warning(f"{source}:{n}: '{key}' set more than once, keeping the last value")
        values[key] = value.strip()

    return values


def read_config_file(path: Union[str, Path]) -> Dict[str, str]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise IoError(path, e)

    return parse_config_text(text, str(path))


def read_packaged_config(name: str) -> Dict[str, str]:
    """Reads a config fixture shipped in ``groundloop.data``."""

    text = resources.files("groundloop.data").joinpath(name).read_text(encoding="utf-8")
    return parse_config_text(text, name)


def render_config_text(values: Mapping[str, str], header: str = "") -> str:
    lines = [f"# {line}" for line in header.splitlines()]
    lines.extend(f"{key} = {value}" for key, value in values.items())
    return "\n".join(lines) + "\n"
