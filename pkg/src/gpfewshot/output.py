"""Text output shared by the CLI and the validation report.

Numbers are written with 12 significant digits, ``.`` as decimal
separator and ``\\n`` line endings; files are replaced atomically.
"""

import json
import math
import os
import tempfile

import numpy as np

SCHEMA_VERSION = 1
DIGITS = 12


def clean(obj, digits=DIGITS):
    """JSON-ready copy of ``obj`` with floats rounded to ``digits`` significant digits.

    Non-finite floats become ``None``; numpy scalars and arrays become
    plain Python values.
    """
    if isinstance(obj, dict):
        return {str(k): clean(v, digits) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v, digits) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist(), digits)
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return float(f"{x:.{digits}g}") if math.isfinite(x) else None
    return obj


def to_json(obj):
    """Canonical JSON text: sorted keys, two-space indent, trailing newline."""
    return json.dumps(clean(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def format_cell(x):
    """One CSV field; integers beyond 12 digits switch to exponent notation."""
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)) and abs(int(x)) < 10**DIGITS:
        return str(int(x))
    return f"{float(x):.{DIGITS}g}"


def csv_text(header, rows):
    lines = [",".join(header)]
    lines += [",".join(format_cell(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def write_atomic(path, text):
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
