"""CSV schemas and helpers shared by the pipeline stages.

Numbers are written with Python's shortest round-trip ``repr`` so every
stage reads back exactly the floats the previous one produced.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import IO, Iterable, Iterator, Sequence, Union

from .errors import SchemaError

ACQUISITION = ("timestamp_s", "channel_id", "raw_code", "gain", "bit_depth")
CONDUCTANCE = ("timestamp_s", "channel_id", "g_rel", "g")
FILTERED = ("timestamp_s", "channel_id", "g_hat", "v_hat", "a_hat", "o")
EVENTS = ("timestamp_s", "channel_id", "source", "polarity", "value")
GROUND_TRUTH = ("trial_id", "puff_index", "side", "onset_time_s", "direction", "expected_delay_s")
MANIFEST = ("trial_id", "stimulus_time_s", "true_direction")
DELAYS = ("trial_id", "sensor_pair", "delay_s", "outlier", "inferred_direction")

PathLike = Union[str, Path]


def fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if value is None:
        return ""
    return str(value)


def open_out(path: PathLike) -> IO[str]:
    return open(path, "w", encoding="utf-8", newline="")


def writer(fh: IO[str]):
    return csv.writer(fh, lineterminator="\n")


def write_rows(path: PathLike, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open_out(path) as fh:
        w = writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def read_table(source: Union[PathLike, IO[str]], expected: Sequence[str]) -> Iterator[tuple[int, list[str]]]:
    """Yield ``(line_number, fields)`` for each data row after checking the header."""
    fh = open(source, encoding="utf-8", newline="") if isinstance(source, (str, Path)) else source
    try:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise SchemaError(f"{_name(source)}: missing header row (expected {','.join(expected)})")
        if tuple(h.strip() for h in header) != tuple(expected):
            raise SchemaError(
                f"{_name(source)}: header {','.join(header)!r} does not match {','.join(expected)!r}")
        n = len(expected)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != n:
                raise SchemaError(f"{_name(source)}: row {lineno}: expected {n} columns, got {len(row)}")
            yield lineno, row
    finally:
        if fh is not source:
            fh.close()


def read_header(path: PathLike) -> tuple[str, ...]:
    with open(path, encoding="utf-8", newline="") as fh:
        row = next(csv.reader(fh), None)
    if row is None:
        raise SchemaError(f"{path}: missing header row")
    return tuple(h.strip() for h in row)


def _name(source) -> str:
    return str(source) if isinstance(source, (str, Path)) else getattr(source, "name", "<stream>")


def parse_float(text: str, column: str, lineno: int) -> float:
    try:
        return float(text)
    except ValueError:
        raise SchemaError(f"row {lineno}: column {column}: not a number: {text!r}") from None


def parse_int(text: str, column: str, lineno: int) -> int:
    try:
        return int(text)
    except ValueError:
        raise SchemaError(f"row {lineno}: column {column}: not an integer: {text!r}") from None


def to_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = writer(buf)
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()
