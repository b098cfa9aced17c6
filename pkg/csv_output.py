"""
CSV writer used by every dataset the package emits.

Numbers are written with 17 significant digits (round-trip safe). Optional
`# ...` comment lines precede the column header; the timestamp line is the
only line that differs between two runs of the same configuration.
"""

import csv
import logging
import math
import sys
from contextlib import contextmanager
from datetime import datetime, timezone
from typing import Any, Iterable, Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)


def format_value(value: Any) -> str:
    """Render one CSV cell; None and NaN become empty cells"""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        if math.isnan(value):
            return ""
        return format(float(value), ".17g")
    return str(value)


@contextmanager
def _open_destination(destination: Optional[str]):
    if destination is None or destination == "-":
        yield sys.stdout
        return
    with open(destination, "w", newline="") as handle:
        yield handle


def write_csv(destination: Optional[str], columns: Sequence[str], rows: Iterable[Sequence[Any]],
              comments: Sequence[str] = (), timestamp: bool = False) -> int:
    """
    Write a CSV dataset.

    Args:
        destination: file path, or None / "-" for stdout
        columns: column names
        rows: row values, rendered with format_value
        comments: lines written as "# <line>" before the header
        timestamp: prepend a "# generated_at: ..." line

    Returns: number of data rows written
    """
    count = 0
    with _open_destination(destination) as handle:
        if timestamp:
            handle.write(f"# generated_at: {datetime.now(timezone.utc).isoformat()}\n")
        for line in comments:
            handle.write(f"# {line}\n")
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_value(v) for v in row])
            count += 1
    logger.debug(f"Wrote {count} rows to {destination or 'stdout'}")
    return count
