from typing import Any, Dict, Optional


class ConfigVar:
    """
    Helper class for declaring configuration fields.

    This class acts as a placeholder that `ConfigSectionMeta` uses to build the
    section schema: default value, flat key used in config files and on the
    command line, and an optional value map for friendly spellings.

    Example:
        class ControllerConfig(ConfigSection):

            class Config:
                key_prefix = "controller."

            #### Readable as 'controller.lambda = 0.05' or '--controller.lambda 0.05'
            lam: float = ConfigVar(default=0.05, key="lambda")
    """

    def __init__(
        self,
        default: Any,
        key: Optional[str] = None,
        value_map: Optional[Dict[Any, str]] = None,
        help: str = "",
    ):
        """
        :param default: The default value for the field.
        :param key: (Optional) Flat key (without section prefix). Defaults to the attribute name.
        :param value_map: (Optional) Mapping from internal values to their text spelling,
                          e.g. {ControllerMode.BUMP: "bump"}.
        :param help: Short description shown in ``--help``.
        """

        self.default = default
        self.key = key
        self.value_map = value_map
        self.help = help
