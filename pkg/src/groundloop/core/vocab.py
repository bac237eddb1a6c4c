import logging
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import FrozenSet, Iterable, Optional, Tuple, Union

from ..errors import ConfigError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def _read_entries(text: str) -> Tuple[str, ...]:
    """One entry per line; blank lines and '#' comments ignored."""

    entries = []
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            entries.append(line)

    return tuple(entries)


def _read(path: Optional[PathLike], packaged: str) -> Tuple[str, ...]:
    if path is None:
        text = resources.files("groundloop.data").joinpath(packaged).read_text(encoding="utf-8")
    else:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(str(path), f"cannot read word list: {exc}")

    return _read_entries(text)


@lru_cache(maxsize=8)
def load_vocabulary(path: Optional[PathLike] = None) -> Tuple[str, ...]:
    """Closed class vocabulary, in file order. Defaults to the 80 COCO labels."""

    labels = _read(path, "coco_classes.txt")
    if len(set(labels)) != len(labels):
        raise ConfigError(str(path or "coco_classes.txt"), "vocabulary has duplicate labels")

    logger.debug(f"Loaded {len(labels)} class label(s)")
    return labels


@lru_cache(maxsize=8)
def load_whitelist(path: Optional[PathLike] = None) -> FrozenSet[str]:
    """Template-word whitelist, lower-cased."""

    return frozenset(w.lower() for w in _read(path, "template_words.txt"))


def label_words(labels: Iterable[str]) -> FrozenSet[str]:
    """Lower-cased labels plus every whitespace-separated word of multi-word labels."""

    words = set()
    for label in labels:
        low = label.lower()
        words.add(low)
        words.update(low.split())

    return frozenset(words)
