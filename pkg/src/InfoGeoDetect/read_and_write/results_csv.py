"""CSV output of sweeps, convergence traces and diagnostics.

All files start with a header row and have a fixed column order. Floats are
written with 17 significant digits. Wall-time columns are only present when
asked for, so by default the bytes of a file depend on the configuration and
seed alone.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import IO, TYPE_CHECKING, Any

if TYPE_CHECKING:
    from collections.abc import Iterable, Sequence

    from InfoGeoDetect.experiment import BerRecord
    from InfoGeoDetect.harness import DiagnosticRow, TraceRow

BER_COLUMNS = (
    "detector",
    "snr_db",
    "bit_errors",
    "bits_total",
    "ber",
    "symbol_errors",
    "symbols_total",
    "ser",
    "trials",
    "mean_iterations",
)
TRACE_COLUMNS = (
    "snr_db",
    "iteration",
    "bit_errors",
    "bits_total",
    "ber",
    "active_trials",
)
DIAGNOSTIC_COLUMNS = ("section", "key", "value")
TIMING_COLUMN = "mean_wall_time"


def format_value(value: Any) -> str:
    """Text of one cell; floats get 17 significant digits."""
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def _render(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_value(v) for v in row])
    return buffer.getvalue()


def _write(text: str, destination: str | Path | IO[str]) -> None:
    if isinstance(destination, (str, Path)):
        with Path(destination).open("w", encoding="utf-8", newline="") as f:
            f.write(text)
    else:
        destination.write(text)


def ber_csv(records: Iterable[BerRecord], *, record_timing: bool = False) -> str:
    """Render sweep records."""
    header = BER_COLUMNS + ((TIMING_COLUMN,) if record_timing else ())
    rows = []
    for r in records:
        row: list[Any] = [
            r.detector,
            r.snr_db,
            r.bit_errors,
            r.bits_total,
            r.ber,
            r.symbol_errors,
            r.symbols_total,
            r.ser,
            r.trials,
            r.mean_iterations,
        ]
        if record_timing:
            row.append(r.mean_wall_time)
        rows.append(row)
    return _render(header, rows)


def trace_csv(rows: Iterable[TraceRow], *, record_timing: bool = False) -> str:
    """Render a convergence trace, one row per SNR point and iteration."""
    header = TRACE_COLUMNS + ((TIMING_COLUMN,) if record_timing else ())
    out = []
    for r in rows:
        row: list[Any] = [
            r.snr_db,
            r.iteration,
            r.bit_errors,
            r.bits_total,
            r.ber,
            r.active_trials,
        ]
        if record_timing:
            row.append(r.mean_wall_time)
        out.append(row)
    return _render(header, out)


def diagnostics_csv(rows: Iterable[DiagnosticRow]) -> str:
    """Render diagnostics in long `section,key,value` form."""
    return _render(DIAGNOSTIC_COLUMNS, [(r.section, r.key, r.value) for r in rows])


def write_ber_csv(
    records: Iterable[BerRecord],
    destination: str | Path | IO[str],
    *,
    record_timing: bool = False,
) -> None:
    """Write sweep records to a path or stream."""
    _write(ber_csv(records, record_timing=record_timing), destination)


def write_trace_csv(
    rows: Iterable[TraceRow],
    destination: str | Path | IO[str],
    *,
    record_timing: bool = False,
) -> None:
    """Write a convergence trace to a path or stream."""
    _write(trace_csv(rows, record_timing=record_timing), destination)


def write_diagnostics_csv(
    rows: Iterable[DiagnosticRow],
    destination: str | Path | IO[str],
) -> None:
    """Write diagnostics to a path or stream."""
    _write(diagnostics_csv(rows), destination)
