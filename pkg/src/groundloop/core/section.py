import copy
from typing import Any, Dict, Mapping

from .meta import ConfigSectionMeta
from ..errors import ConfigError
from ..utils.converters import convert_from_text, convert_to_text


class ConfigSection(metaclass=ConfigSectionMeta):
    """
    Base class for configuration sections.

    Inheriting from this class enables the `ConfigSectionMeta` capabilities:
    fields are declared with `ConfigVar`, instances are immutable once built,
    and every instance is checked by :meth:`validate` on construction.
    """

    def __init__(self, **values: Any):

        unknown = set(values) - set(self._model_metadata)
        if unknown:
            raise ConfigError(sorted(unknown)[0], f"unknown field for {type(self).__name__}")

        for field, metadata in self._model_metadata.items():
            if field in values:
                value = values[field]
            else:
                # Using deep copy to avoid shared references
                value = copy.deepcopy(metadata["default"])
            object.__setattr__(self, field, value)

        object.__setattr__(self, "_frozen", True)
        self.validate()

    def __setattr__(self, key, value):
        if getattr(self, "_frozen", False):
            raise AttributeError(f"{type(self).__name__} is immutable; use replace({key}=...)")
        object.__setattr__(self, key, value)

    def __eq__(self, other):
        return type(self) is type(other) and self.dump() == other.dump()

    def __hash__(self):
        return hash((type(self).__name__, tuple(sorted((k, repr(v)) for k, v in self.dump().items()))))

    def __repr__(self):
        fields = ", ".join(f"{k}={v!r}" for k, v in self.dump().items())
        return f"{type(self).__name__}({fields})"

    # ---
    # Hooks

    def validate(self) -> None:
        """Checks section invariants. Subclasses raise ``ConfigError`` naming the key."""

        pass

    # ---
    # Schema and views

    @classmethod
    def schema(cls) -> Dict[str, Dict[str, Any]]:
        """Returns the metadata definition of the section."""

        return cls._model_metadata

    @classmethod
    def key_of(cls, field: str) -> str:
        """Flat key (prefix included) of a field."""

        metadata = cls._model_metadata.get(field)
        if not metadata:
            raise ValueError(f"Field '{field}' is not defined in {cls.__name__}.")

        return metadata["key"]

    @classmethod
    def keys(cls) -> Dict[str, str]:
        """Maps every flat key to its field name."""

        return {m["key"]: field for field, m in cls._model_metadata.items()}

    def dump(self) -> Dict[str, Any]:
        """Returns a dict copy of the field values."""

        return {field: getattr(self, field) for field in self._model_metadata}

    def dump_text(self) -> Dict[str, str]:
        """Returns the flat-key -> text form used by config files."""

        return {
            m["key"]: convert_to_text(m["key"], getattr(self, field), m["value_map"])
            for field, m in self._model_metadata.items()
        }

    def replace(self, **changes: Any) -> "ConfigSection":
        """Returns a new validated instance with some fields changed."""

        values = self.dump()
        values.update(changes)
        return type(self)(**values)

    # ---
    # Construction from text

    @classmethod
    def from_text(cls, raw: Mapping[str, str], base: "ConfigSection" = None) -> "ConfigSection":
        """
        Builds an instance from flat-key text values.

        Keys not owned by this section are ignored; values are converted with
        the field's annotation and value map.

        :param raw: Mapping of flat key to string value.
        :param base: (Optional) Instance providing values for keys absent in ``raw``.
        """

        values = base.dump() if base is not None else {}
        owned = cls.keys()

        for key, text in raw.items():
            field = owned.get(key)
            if field is None:
                continue

            metadata = cls._model_metadata[field]
            values[field] = convert_from_text(key, text, metadata["dtype"], metadata["value_map"])

        return cls(**values)
