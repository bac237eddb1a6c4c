import base64
import enum
import json
import logging
from typing import Any, Dict, Optional, Type, Union, get_args, get_origin
from collections.abc import Hashable

from ..errors import InvalidConfigValueError

logger = logging.getLogger(__name__)

# ---------------------------------------------------------------------------
# Flat record codec (stream files and the adapter wire format)
# ---------------------------------------------------------------------------

LIST_LEN_SUFFIX = "#n"
BYTES_SUFFIX = "#b64"


def _flatten_into(out: Dict[str, Any], prefix: str, obj: Any) -> None:

    if isinstance(obj, dict):
        for k, v in obj.items():
            _flatten_into(out, f"{prefix}.{k}" if prefix else str(k), v)
        return

    if isinstance(obj, (list, tuple)):
        out[f"{prefix}{LIST_LEN_SUFFIX}"] = len(obj)
        for i, item in enumerate(obj):
            _flatten_into(out, f"{prefix}.{i}", item)
        return

    if isinstance(obj, (bytes, bytearray)):
        out[f"{prefix}{BYTES_SUFFIX}"] = base64.b64encode(bytes(obj)).decode("ascii")
        return

    if isinstance(obj, enum.Enum):
        out[prefix] = obj.value
        return

    if isinstance(obj, (str, int, float, bool, type(None))):
        out[prefix] = obj
        return

    logger.warning(f"skipping non-serializable value of type {type(obj).__name__} at '{prefix}' (replaced with None)")
    out[prefix] = None


def flatten_record(record: Dict[str, Any]) -> Dict[str, Any]:
    """Flatten nested dicts/lists into dotted keys; lists carry an explicit length."""

    out: Dict[str, Any] = {}
    _flatten_into(out, "", record)
    return out


def _insert(tree: Dict[str, Any], path: str, value: Any) -> None:
    parts = path.split(".")
    node = tree
    for part in parts[:-1]:
        node = node.setdefault(part, {})
    node[parts[-1]] = value


def _listify(node: Any) -> Any:
    """Turn the ``{"#n": k, "0": …}`` placeholders back into lists."""

    if not isinstance(node, dict):
        return node

    if LIST_LEN_SUFFIX in node:
        n = node[LIST_LEN_SUFFIX]
        return [_listify(node[str(i)]) for i in range(n)]

    return {k: _listify(v) for k, v in node.items()}


def unflatten_record(flat: Dict[str, Any]) -> Dict[str, Any]:
    """Inverse of :func:`flatten_record`."""

    tree: Dict[str, Any] = {}
    for key, value in flat.items():

        if key.endswith(BYTES_SUFFIX):
            _insert(tree, key[: -len(BYTES_SUFFIX)], base64.b64decode(value))

        elif key.endswith(LIST_LEN_SUFFIX):
            base = key[: -len(LIST_LEN_SUFFIX)]
            if base:
                _insert(tree, f"{base}.{LIST_LEN_SUFFIX}", value)
            else:
                tree[LIST_LEN_SUFFIX] = value

        else:
            _insert(tree, key, value)

    return _listify(tree)


def encode_record(record: Dict[str, Any]) -> str:
    """Encode a record as one flat JSON object on a single line (no terminator)."""

    return json.dumps(flatten_record(record), ensure_ascii=False, separators=(",", ":"))


def decode_record(line: str) -> Dict[str, Any]:
    """Decode a single line produced by :func:`encode_record`."""

    flat = json.loads(line)
    if not isinstance(flat, dict):
        raise ValueError(f"expected a JSON object, got {type(flat).__name__}")

    return unflatten_record(flat)


# ---------------------------------------------------------------------------
# Config value conversion (config files and CLI flags)
# ---------------------------------------------------------------------------

SEPARATOR = ","
NONE_TEXT = "none"


def _is_optional(target_type: Any) -> bool:
    return get_origin(target_type) is Union and type(None) in get_args(target_type)


def convert_from_text(key: str, value: str, target_type: Type, value_map: Optional[dict] = None) -> Any:
    """Converts a config/CLI string to a Python object with error handling."""

    try:

        # ---
        # Value mapping handling.
        # e.g.: value_map = {ControllerMode.BUMP: "bump"} will convert "bump" to the enum member.
        if value_map is not None and isinstance(value, Hashable):

            # Reversing the map, so we can map from text value to internal value
            reverse_map = {v: k for k, v in value_map.items()}

            if value in reverse_map:
                return reverse_map[value]

        value = value.strip()

        # Optional[...] types accept "none"
        if _is_optional(target_type):
            if value.lower() == NONE_TEXT:
                return None
            target_type = next(a for a in get_args(target_type) if a is not type(None))

        # Simple types
        if target_type == bool:
            if value.lower() in ("true", "1", "t", "yes", "on"):
                return True
            if value.lower() in ("false", "0", "f", "no", "off"):
                return False
            raise ValueError("not a boolean")
        if target_type == int:
            return int(value)
        if target_type == float:
            return float(value)
        if isinstance(target_type, type) and issubclass(target_type, enum.Enum):
            return target_type(value)

        # ---
        # Iterable types handling
        origin = get_origin(target_type)  # If the type is "Tuple[int, int]" returns "tuple"

        if origin in (list, tuple):

            items_str = [v for v in value.split(SEPARATOR) if v.strip()]
            variadic = Ellipsis in get_args(target_type)
            type_args = [a for a in get_args(target_type) if a is not Ellipsis]

            # Positional item types for fixed tuples, otherwise the first arg
            items_converted = []
            for i, item in enumerate(items_str):
                if origin == tuple and not variadic and i < len(type_args):
                    item_type = type_args[i]
                else:
                    item_type = type_args[0] if type_args else str
                items_converted.append(convert_from_text(f"{key}[{i}]", item, item_type))

            if origin == tuple:
                return tuple(items_converted)

            return items_converted

        return value  # Fallback to string

    except InvalidConfigValueError:
        raise

    except Exception as e:

        # Raise package-specific error
        raise InvalidConfigValueError(key, value, target_type, e)


def convert_to_text(key: str, value: Any, value_map: Optional[dict] = None) -> str:
    """Converts a Python object to its config-file string form."""

    try:

        if value_map is not None and isinstance(value, Hashable) and value in value_map:
            return value_map[value]

        if value is None:
            return NONE_TEXT
        if isinstance(value, bool):
            return "true" if value else "false"
        if isinstance(value, enum.Enum):
            return str(value.value)
        if isinstance(value, float):
            return repr(value)
        if isinstance(value, (list, tuple)):
            return SEPARATOR.join(convert_to_text(f"{key}[{i}]", item) for i, item in enumerate(value))

        return str(value)

    except Exception as e:
        raise InvalidConfigValueError(key, repr(value), str, e)
