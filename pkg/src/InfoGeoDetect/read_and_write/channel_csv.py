"""Plain-text formats for channel matrices and received signals.

Channel file:

```
<Nr>,<K>
re,im        # Nr * K lines, row-major
```

Received-signal file:

```
<Nr>
re,im        # Nr lines
```

Numbers are written with 17 significant digits so a write followed by a read
reproduces every double exactly. Parsing is done with pyparsing and does not
depend on the locale.
"""

from __future__ import annotations

from pathlib import Path
from typing import IO, TYPE_CHECKING

import numpy as np
import pyparsing

from InfoGeoDetect.exceptions import ChannelFileError, SignalFileError
from InfoGeoDetect.types import c128

if TYPE_CHECKING:
    from InfoGeoDetect.exceptions import _LineError
    from InfoGeoDetect.types import Array

pp_digits = "0123456789"
pp_plusorminus = pyparsing.Literal("+") | pyparsing.Literal("-")
pp_uint = pyparsing.Word(pp_digits).set_parse_action(lambda t: int(t[0]))
pp_int = pyparsing.Combine(
    pyparsing.Optional(pp_plusorminus) + pyparsing.Word(pp_digits),
)
pp_float = pyparsing.Combine(
    pyparsing.Optional(pp_plusorminus)
    + pyparsing.Optional(pyparsing.Word(pp_digits))
    + "."
    + pyparsing.Word(pp_digits),
)
pp_eorE = pyparsing.Literal("e") | pyparsing.Literal("E")
pp_e_notation = pyparsing.Combine((pp_float | pp_int) + pp_eorE + pp_int)
pp_number = (pp_e_notation | pp_float | pp_int).set_parse_action(
    lambda t: float(t[0]),
)
pp_comma = pyparsing.Suppress(",")

pp_dims_line = pp_uint("n_rx") + pp_comma + pp_uint("n_users") + pyparsing.StringEnd()
pp_count_line = pp_uint("n_rx") + pyparsing.StringEnd()
pp_entry_line = pp_number("re") + pp_comma + pp_number("im") + pyparsing.StringEnd()


def _lines(source: str | Path | IO[str]) -> tuple[list[str], str | Path | None]:
    if isinstance(source, (str, Path)):
        path = Path(source)
        with path.open("r", encoding="ascii") as f:
            text = f.read()
        return text.splitlines(), source
    return source.read().splitlines(), None


def _parse_line(
    expr: pyparsing.ParserElement,
    line: str,
    lineno: int,
    path: str | Path | None,
    error: type[_LineError],
) -> pyparsing.ParseResults:
    try:
        return expr.parse_string(line, parse_all=True)
    except pyparsing.ParseException as e:
        raise error(path, lineno, f"could not parse {line!r} ({e.msg})") from e


def _parse_entries(
    body: list[str],
    expected: int,
    path: str | Path | None,
    error: type[_LineError],
) -> Array[c128]:
    # Trailing blank lines are tolerated, nothing else is
    while body and not body[-1].strip():
        body.pop()

    if len(body) > expected:
        raise error(path, expected + 2, f"expected {expected} entries, found more")

    values = np.empty(expected, dtype=c128)
    for i, line in enumerate(body):
        parsed = _parse_line(pp_entry_line, line, i + 2, path, error)
        values[i] = complex(parsed["re"], parsed["im"])

    if len(body) < expected:
        raise error(
            path,
            len(body) + 2,
            f"expected {expected} entries, file ends after {len(body)}",
        )

    if not np.all(np.isfinite(values)):
        bad = int(np.flatnonzero(~np.isfinite(values))[0])
        raise error(path, bad + 2, "entries must be finite")

    return values


def parse_channel(source: str | Path | IO[str]) -> Array[c128]:
    """Read a complex channel matrix.

    Args:
        source: A path or an open text stream

    Returns:
        The `(Nr, K)` complex matrix

    Raises:
        ChannelFileError: On malformed content, naming the 1-based line
    """
    lines, path = _lines(source)
    if not lines:
        raise ChannelFileError(path, 1, "missing '<Nr>,<K>' header")

    dims = _parse_line(pp_dims_line, lines[0], 1, path, ChannelFileError)
    n_rx, n_users = int(dims["n_rx"]), int(dims["n_users"])
    if n_rx < 1 or n_users < 1:
        raise ChannelFileError(
            path,
            1,
            f"dimensions must be positive, got {n_rx},{n_users}",
        )

    values = _parse_entries(lines[1:], n_rx * n_users, path, ChannelFileError)
    return values.reshape(n_rx, n_users)


def parse_signal(source: str | Path | IO[str]) -> Array[c128]:
    """Read a complex received-signal vector.

    Args:
        source: A path or an open text stream

    Returns:
        The length-`Nr` complex vector

    Raises:
        SignalFileError: On malformed content, naming the 1-based line
    """
    lines, path = _lines(source)
    if not lines:
        raise SignalFileError(path, 1, "missing '<Nr>' header")

    count = _parse_line(pp_count_line, lines[0], 1, path, SignalFileError)
    n_rx = int(count["n_rx"])
    if n_rx < 1:
        raise SignalFileError(path, 1, f"length must be positive, got {n_rx}")

    return _parse_entries(lines[1:], n_rx, path, SignalFileError)


def _format_entries(values: Array[c128]) -> list[str]:
    return [f"{v.real:.17g},{v.imag:.17g}" for v in values.ravel()]


def format_channel(matrix: Array[c128]) -> str:
    """Render a complex channel matrix in the channel file format."""
    m = np.asarray(matrix, dtype=c128)
    lines = [f"{m.shape[0]},{m.shape[1]}", *_format_entries(m)]
    return "\n".join(lines) + "\n"


def format_signal(vector: Array[c128]) -> str:
    """Render a complex received-signal vector in the signal file format."""
    v = np.asarray(vector, dtype=c128).ravel()
    lines = [f"{v.size}", *_format_entries(v)]
    return "\n".join(lines) + "\n"


def write_text(text: str, destination: str | Path | IO[str]) -> None:
    """Write `text` to a path or an open stream."""
    if isinstance(destination, (str, Path)):
        with Path(destination).open("w", encoding="ascii", newline="\n") as f:
            f.write(text)
    else:
        destination.write(text)
