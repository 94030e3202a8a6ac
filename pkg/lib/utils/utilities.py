import csv
import io
import logging
import os
from typing import Any, Dict, Iterable, Sequence

logger = logging.getLogger(__name__)


def read_key_value_file(file_path: str) -> Dict[str, str]:
    """
    Read a flat ``key=value`` text file.

    Blank lines and lines starting with ``#`` are skipped. Whitespace around
    keys and values is stripped. A repeated key keeps its last value.

    :param file_path: Path of the file to read.
    :return: Mapping from key to raw string value.
    :raises ValueError: If a non-comment line has no ``=``.
    """
    values: Dict[str, str] = {}
    with open(file_path, "r", encoding="utf-8") as file:
        for line_number, raw_line in enumerate(file, start=1):
            line = raw_line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                logger.error(f"Malformed line {line_number} in {file_path}: {line!r}")
                raise ValueError(f"line {line_number}: expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            values[key.strip()] = value.strip()
    logger.debug(f"Read {len(values)} keys from {file_path}")
    return values


def ensure_parent_dir(file_path: str) -> None:
    """Create the directory that will hold ``file_path`` if it is missing."""
    parent = os.path.dirname(os.path.abspath(file_path))
    os.makedirs(parent, exist_ok=True)


def write_text_file(text: str, file_path: str) -> None:
    """
    Writes a text report, creating parent directories when needed.
    """
    ensure_parent_dir(file_path)
    with open(file_path, "w", encoding="utf-8") as file:
        file.write(text)
        if text and not text.endswith("\n"):
            file.write("\n")
    logger.info(f"Wrote text report to {file_path}")


def write_csv_rows(header: Sequence[str], rows: Iterable[Sequence[Any]], file_path: str) -> None:
    """
    Writes rows to a CSV file with a header line.
    """
    ensure_parent_dir(file_path)
    with open(file_path, "w", newline="", encoding="utf-8") as file:
        writer = csv.writer(file, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)
    logger.info(f"Wrote CSV report to {file_path}")


def render_csv(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    """Render rows as CSV text (used when a report goes to standard output)."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(row)
    return buffer.getvalue()


def format_float(value: Any, digits: int = 6) -> str:
    """Format a float for reports; ``None`` becomes ``n/a``."""
    if value is None:
        return "n/a"
    return f"{float(value):.{digits}f}"
