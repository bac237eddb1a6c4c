import logging
import typing

from .var import ConfigVar

# Basic logger setup
logger = logging.getLogger(__name__)

# Registry to track all ConfigSection classes
_SECTION_REGISTRY = {}


class ConfigSectionMeta(type):
    """
    Metaclass for declarative configuration sections.

    This metaclass intercepts class creation to scan for `ConfigVar` attributes and
    builds the `_model_metadata` dictionary (default, flat key, value map, dtype).
    The placeholders are removed from the class so that instances carry the
    actual values, and the section is registered under its name.

    Key Features:
    - **Declarative Syntax**: Use `ConfigVar` to define fields with defaults.
    - **Flat keys**: Every field gets a `<key_prefix><key>` name shared by
      config files and CLI flags.
    - **Value Mapping**: Map internal values to friendly text spellings.

    Example:
        class GroundingConfig(ConfigSection):
            class Config:
                key_prefix = "grounding."

            window: int = ConfigVar(default=30, help="rate window (frames)")
    """

    def __init__(cls, name, bases, dct):

        # 1. Calling "type" to initialize the class properly
        super().__init__(name, bases, dct)

        # 2. Avoid processing the base class itself
        if name == "ConfigSection":
            return

        # Register the class
        _SECTION_REGISTRY[name] = cls

        # ---
        # 3. Config class processing
        default_config = {
            "key_prefix": "",
        }

        user_config = dct.get("Config", None)
        cls._config = default_config.copy()

        if user_config:
            for key in default_config:
                if hasattr(user_config, key):
                    cls._config[key] = getattr(user_config, key)

        # ---
        # 4. _model_metadata initialization and ConfigVar scanning.
        # Inherited fields are copied so subclasses can extend a section.
        cls._model_metadata = dict(getattr(cls, "_model_metadata", {}))

        try:
            hints = typing.get_type_hints(cls)
        except Exception:
            hints = dict(getattr(cls, "__annotations__", {}))

        for attr_name, attr_value in dct.items():
            if isinstance(attr_value, ConfigVar):

                if attr_name in hints:
                    attr_type = hints[attr_name]
                else:
                    # Fallback to the type of the default value, or str if None
                    attr_type = type(attr_value.default) if attr_value.default is not None else str

                cls._model_metadata[attr_name] = {
                    "default": attr_value.default,
                    "key": f"{cls._config['key_prefix']}{attr_value.key or attr_name}",
                    "value_map": attr_value.value_map,
                    "dtype": attr_type,
                    "help": attr_value.help,
                }

                # Remove the placeholder so instances own the value
                if attr_name in cls.__dict__:
                    delattr(cls, attr_name)

        logger.debug(f"Registered config section '{name}' with {len(cls._model_metadata)} field(s)")


def registered_sections():
    """Returns the registry of config sections keyed by class name."""

    return dict(_SECTION_REGISTRY)
