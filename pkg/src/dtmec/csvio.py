"""CSV writing/reading with provenance comments and atomic replace."""

from __future__ import annotations

import csv
import io
import os
import tempfile
from pathlib import Path


def format_value(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path, fieldnames, rows, comments=None) -> None:
    """Write rows (sequences or dicts) with optional leading '# ' comment lines.

    The file is written to a temp sibling and renamed into place, so readers
    never observe a partial file.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    for line in comments or []:
        buf.write(f"# {line}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(fieldnames)
    for row in rows:
        if isinstance(row, dict):
            row = [row[name] for name in fieldnames]
        writer.writerow([format_value(v) for v in row])
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(buf.getvalue())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_csv(path):
    """Returns (fieldnames, rows-as-dicts-of-strings, comment lines)."""
    comments = []
    with open(path, newline="") as fh:
        lines = []
        for line in fh:
            if line.startswith("#"):
                comments.append(line[1:].strip())
            else:
                lines.append(line)
    reader = csv.reader(lines)
    try:
        fieldnames = next(reader)
    except StopIteration:
        return [], [], comments
    rows = [dict(zip(fieldnames, row)) for row in reader]
    return fieldnames, rows, comments
