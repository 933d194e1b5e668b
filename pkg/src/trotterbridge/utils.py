"""Shared utility functions."""

import csv
import io
import json
import math
from pathlib import Path
from typing import Any, Iterable


def parse_int_list(text: str) -> list[int]:
    """Parse a comma separated list of integers.

    Supports formats:
        - "8" -> [8]
        - "4,8,16" -> [4, 8, 16]
        - "4, 8 ,16" -> [4, 8, 16]

    Args:
        text: The list as typed on the command line.

    Returns:
        The parsed integers, in the given order.

    Raises:
        ValueError: If the text is empty or an item is not an integer.
    """
    items = [item.strip() for item in text.split(",")]
    items = [item for item in items if item]
    if not items:
        raise ValueError(f"Invalid integer list: {text!r}")

    try:
        return [int(item) for item in items]
    except ValueError:
        raise ValueError(f"Invalid integer list: {text!r}")


def format_float(value: float) -> str:
    """Format a double with 17 significant digits (exact round trip).

    Raises:
        ValueError: If the value is NaN or infinite.
    """
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"Cannot format non-finite number: {value}")
    # normalise negative zero so byte comparisons are stable
    if value == 0.0:
        value = 0.0
    return format(value, ".17g")


def _canonical(value: Any, indent: int) -> str:
    pad = "  " * indent
    inner = "  " * (indent + 1)

    if isinstance(value, bool) or value is None:
        return json.dumps(value)
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return format_float(value)
    if isinstance(value, complex):
        return _canonical({"re": value.real, "im": value.imag}, indent)
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, dict):
        if not value:
            return "{}"
        body = ",\n".join(
            f"{inner}{json.dumps(str(k))}: {_canonical(v, indent + 1)}" for k, v in value.items()
        )
        return "{\n" + body + "\n" + pad + "}"
    if isinstance(value, (list, tuple)):
        if not value:
            return "[]"
        body = ",\n".join(f"{inner}{_canonical(v, indent + 1)}" for v in value)
        return "[\n" + body + "\n" + pad + "]"

    # numpy scalars and the like
    if hasattr(value, "item"):
        return _canonical(value.item(), indent)
    raise TypeError(f"Cannot serialise {type(value).__name__}")


def canonical_json(document: Any) -> str:
    """Render a JSON document with 17-significant-digit numbers.

    Keys keep their insertion order; complex numbers become {"re", "im"}
    objects. The output ends with a newline.
    """
    return _canonical(document, 0) + "\n"


def render_csv(rows: Iterable[dict[str, Any]], columns: list[str]) -> str:
    """Render dict rows as CSV text with 17-significant-digit floats.

    Missing or None values become empty cells.
    """
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        cells = []
        for column in columns:
            value = row.get(column)
            if value is None:
                cells.append("")
            elif isinstance(value, float):
                cells.append(format_float(value))
            else:
                cells.append(str(value))
        writer.writerow(cells)
    return buffer.getvalue()


def write_text(path: Path, text: str) -> Path:
    """Write text to a file, creating parent directories.

    Returns:
        The path written.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    return path
