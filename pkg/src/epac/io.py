"""CSV emission with a ``#``-prefixed metadata header.

Data rows never contain timestamps, so two runs of the same configuration
produce byte-identical data sections.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

UNITS_NOTE = "hbar=kB=1"


def config_hash(obj) -> str:
    """Stable short hash of a JSON-serialisable object."""
    blob = json.dumps(obj, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


def render_csv(columns: Sequence[str], rows: Iterable[Sequence], meta: Mapping | None = None) -> str:
    buf = io.StringIO()
    meta = dict(meta or {})
    meta.setdefault("units", UNITS_NOTE)
    for key in sorted(meta):
        buf.write(f"# {key}: {meta[key]}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def write_csv(path, columns, rows, meta=None) -> Path:
    """Write atomically: the file appears only once its content is complete."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = render_csv(columns, rows, meta)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)
    return path


def read_csv(path) -> tuple[dict, list[str], list[list[str]]]:
    meta: dict[str, str] = {}
    lines = Path(path).read_text().splitlines()
    body = []
    for line in lines:
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition(":")
            meta[key.strip()] = val.strip()
        else:
            body.append(line)
    rows = list(csv.reader(body))
    return meta, rows[0], rows[1:]


def data_section(path) -> str:
    """The file content with metadata lines stripped."""
    return "\n".join(l for l in Path(path).read_text().splitlines() if not l.startswith("#"))
