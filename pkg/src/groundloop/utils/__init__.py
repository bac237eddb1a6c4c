from .config_file import parse_config_text, read_config_file, read_packaged_config, render_config_text
from .converters import (
    convert_from_text,
    convert_to_text,
    decode_record,
    encode_record,
    flatten_record,
    unflatten_record,
)

__all__ = [
    "parse_config_text",
    "read_config_file",
    "read_packaged_config",
    "render_config_text",
    "convert_from_text",
    "convert_to_text",
    "decode_record",
    "encode_record",
    "flatten_record",
    "unflatten_record",
]
