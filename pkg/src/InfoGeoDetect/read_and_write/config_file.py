"""Flat `key = value` experiment configuration files.

```
# desk-scale sweep
n_rx = 64
n_users = 16
snr_db = 0, 2, 4, 6
detectors = iga, lmmse
damping = 0.5
```

Every non-blank line holds one key and one value or a comma-separated list of
values. `#` starts a comment. Values are returned as text and converted by
[`ExperimentConfig.from_config_file`][InfoGeoDetect.experiment.ExperimentConfig.from_config_file],
which knows the type of each key.
"""

from __future__ import annotations

from pathlib import Path
from typing import IO, NamedTuple

import pyparsing

from InfoGeoDetect.exceptions import ConfigFileError

pp_key = pyparsing.Word(pyparsing.alphas + "_", pyparsing.alphanums + "_")
pp_value = pyparsing.Word(pyparsing.printables, exclude_chars=",#=")
pp_equals = pyparsing.Suppress("=")
pp_comma = pyparsing.Suppress(",")
pp_config_line = (
    pp_key("key")
    + pp_equals
    + pyparsing.Group(pp_value + pyparsing.ZeroOrMore(pp_comma + pp_value))("values")
    + pyparsing.StringEnd()
)
pp_config_line.ignore(pyparsing.python_style_comment)


class ConfigEntry(NamedTuple):
    """One `key = value` line."""

    line: int
    """1-based line number, for error messages."""

    values: tuple[str, ...]
    """The value, or the items of a comma-separated list."""


def parse_config(source: str | Path | IO[str]) -> dict[str, ConfigEntry]:
    """Read a configuration file into its raw entries.

    Args:
        source: A path or an open text stream

    Returns:
        The entries by key, in file order

    Raises:
        ConfigFileError: On a malformed or repeated key, naming the line
    """
    if isinstance(source, (str, Path)):
        path: str | Path | None = source
        with Path(source).open("r", encoding="utf-8") as f:
            lines = f.read().splitlines()
    else:
        path = None
        lines = source.read().splitlines()

    entries: dict[str, ConfigEntry] = {}
    for lineno, raw in enumerate(lines, start=1):
        text = raw.split("#", 1)[0].strip()
        if not text:
            continue
        try:
            parsed = pp_config_line.parse_string(text, parse_all=True)
        except pyparsing.ParseException as e:
            raise ConfigFileError(
                path,
                lineno,
                f"expected 'key = value[, value ...]', got {raw.strip()!r}",
            ) from e

        key = str(parsed["key"])
        if key in entries:
            raise ConfigFileError(
                path,
                lineno,
                f"{key!r} is already set on line {entries[key].line}",
            )
        entries[key] = ConfigEntry(lineno, tuple(str(v) for v in parsed["values"]))

    return entries
