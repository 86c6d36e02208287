"""Matrix CSV and JSON report I/O with atomic writes."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import tempfile
from fractions import Fraction
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .space import FiniteDissimilarity


def labels_path(path: str | Path) -> Path:
    """Sidecar holding a JSON list of labels: ``h.csv`` -> ``h.labels.json``."""
    p = Path(path)
    return p.with_name(p.stem + ".labels.json")


def parse_matrix(text: str, name: str = "<input>") -> np.ndarray:
    """First line ``n``, then ``n`` rows of ``n`` comma-separated decimals."""
    rows = [r for r in csv.reader(io.StringIO(text)) if any(c.strip() for c in r)]
    if not rows:
        raise ValidationError(f"{name}: empty matrix file")
    try:
        n = int(rows[0][0])
    except ValueError:
        raise ValidationError(f"{name}: first line must be the matrix size") from None
    if len(rows[0]) != 1 or n < 1:
        raise ValidationError(f"{name}: first line must be a single positive integer")
    body = rows[1:]
    if len(body) != n:
        raise ValidationError(f"{name}: expected {n} rows, found {len(body)}")
    out = np.empty((n, n))
    for i, row in enumerate(body):
        if len(row) != n:
            raise ValidationError(f"{name}: row {i + 1} has {len(row)} values, expected {n}")
        try:
            out[i] = [float(c) for c in row]
        except ValueError as exc:
            raise ValidationError(f"{name}: row {i + 1}: {exc}") from None
    return out


def read_matrix(path: str | Path) -> FiniteDissimilarity:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read {p}: {exc.strerror}") from None
    values = parse_matrix(text, str(p))
    labels = None
    side = labels_path(p)
    if side.exists():
        labels = json.loads(side.read_text())
        if not isinstance(labels, list):
            raise ValidationError(f"{side}: labels must be a JSON list")
    return FiniteDissimilarity(values, labels)


def format_matrix(values: np.ndarray) -> str:
    lines = [str(values.shape[0])]
    lines.extend(",".join(repr(float(v)) for v in row) for row in values)
    return "\n".join(lines) + "\n"


def atomic_write(path: str | Path, text: str) -> None:
    """Write via a temporary file in the target directory and ``os.replace``."""
    p = Path(path)
    fd, tmp = tempfile.mkstemp(dir=p.parent or ".", prefix=f".{p.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, p)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_matrix(path: str | Path, d: FiniteDissimilarity) -> None:
    atomic_write(path, format_matrix(d.values))
    if d.labels != tuple(str(i) for i in range(d.n)):
        atomic_write(labels_path(path), json.dumps(list(d.labels)) + "\n")


def _default(obj):
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(data) -> str:
    """JSON in insertion order; infinities are not allowed."""
    return json.dumps(data, indent=2, default=_default, allow_nan=False) + "\n"


def write_json(path: str | Path, data) -> None:
    atomic_write(path, dumps(data))


def read_json(path: str | Path):
    p = Path(path)
    try:
        return json.loads(p.read_text())
    except OSError as exc:
        raise ValidationError(f"cannot read {p}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{p}: invalid JSON ({exc.msg} at line {exc.lineno})") from None


def file_digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def provenance(inputs, flags: dict, version: str) -> dict:
    return {
        "inputs": {str(p): file_digest(p) for p in inputs},
        "flags": flags,
        "version": version,
    }
