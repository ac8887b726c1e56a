"""File formats for fields, marginal sets and reports.

A field file is a JSON header next to a payload file holding the values in
row-major order (axis 0 slowest), either as little-endian float64 or as a
one-column CSV.  Marginal and multiplier sets are self-contained JSON.  The
layouts are documented in ``docs/formats.md``.

All JSON is written by :func:`dumps`, which sorts keys and prints floats with
17 significant digits so that reruns produce byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .errors import ConfigurationError, ShapeError
from .grid import GridSpec, MarginalSet, ScalarField

FIELD_FORMAT = "marginbound.field"
MARGINALS_FORMAT = "marginbound.marginals"
FORMAT_VERSION = 1


def _encode(obj: Any, indent: int, level: int) -> str:
    pad = "\n" + " " * (indent * (level + 1)) if indent else ""
    end = "\n" + " " * (indent * level) if indent else ""
    sep = "," if indent else ", "
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x) or math.isinf(x):
            return "null"
        s = f"{x:.17g}"
        if not any(c in s for c in ".en"):
            s += ".0"
        return s
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, Mapping):
        if not obj:
            return "{}"
        items = [f"{json.dumps(str(k))}: {_encode(obj[k], indent, level + 1)}" for k in sorted(obj, key=str)]
        return "{" + pad + (sep + pad if indent else sep).join(items) + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        return "[" + ", ".join(_encode(v, 0, 0) for v in obj) + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj: Any, indent: int = 2) -> str:
    """Deterministic JSON: sorted keys, 17-significant-digit floats, NaN -> null."""
    return _encode(obj, indent, 0) + "\n"


def config_hash(config: Mapping[str, Any]) -> str:
    return hashlib.sha256(dumps(config, indent=0).encode()).hexdigest()


def save_field(path: str | Path, field: ScalarField, encoding: str = "binary",
               extra: Mapping[str, Any] | None = None) -> Path:
    """Write ``<path>.json`` plus ``<path>.bin`` (or ``.csv``); return the header path."""
    path = Path(path)
    if path.suffix == ".json":
        path = path.with_suffix("")
    if encoding not in ("binary", "csv"):
        raise ConfigurationError(f"unknown field encoding {encoding!r}")
    payload = path.with_suffix(".bin" if encoding == "binary" else ".csv")
    flat = np.ascontiguousarray(field.values, dtype="<f8").ravel()
    if encoding == "binary":
        payload.write_bytes(flat.tobytes())
    else:
        payload.write_text("".join(f"{v:.17g}\n" for v in flat))
    header = {
        "format": FIELD_FORMAT,
        "version": FORMAT_VERSION,
        "grid": field.grid.to_dict(),
        "dtype": "float64",
        "byteorder": "little",
        "encoding": encoding,
        "payload": payload.name,
        "meta": _plain(dict(field.meta)),
    }
    if extra:
        header.update(extra)
    hp = path.with_suffix(".json")
    hp.write_text(dumps(header))
    return hp


def load_field(path: str | Path) -> ScalarField:
    path = Path(path)
    if path.suffix != ".json":
        path = path.with_suffix(".json")
    header = json.loads(path.read_text())
    if header.get("format") != FIELD_FORMAT:
        raise ConfigurationError(f"{path}: not a field header (format={header.get('format')!r})")
    grid = GridSpec.from_dict(header["grid"])
    payload = path.parent / header["payload"]
    if header["encoding"] == "binary":
        vals = np.frombuffer(payload.read_bytes(), dtype="<f8")
    elif header["encoding"] == "csv":
        vals = np.loadtxt(payload, dtype=float, ndmin=1)
    else:
        raise ConfigurationError(f"{path}: unknown encoding {header['encoding']!r}")
    if vals.size != grid.size:
        raise ShapeError(f"{payload}: {vals.size} values for a grid of {grid.size} nodes")
    return ScalarField(grid, vals.astype(float), header.get("meta") or {})


def save_marginals(path: str | Path, g: MarginalSet, kind: str = "marginals",
                   extra: Mapping[str, Any] | None = None) -> Path:
    doc = {
        "format": MARGINALS_FORMAT,
        "version": FORMAT_VERSION,
        "kind": kind,
        "grid": g.grid.to_dict(),
        "values": [a.tolist() for a in g.arrays],
    }
    if extra:
        doc.update(extra)
    path = Path(path)
    path.write_text(dumps(doc))
    return path


def load_marginals(path: str | Path) -> MarginalSet:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != MARGINALS_FORMAT:
        raise ConfigurationError(f"{path}: not a marginal-set file")
    return MarginalSet(GridSpec.from_dict(doc["grid"]), tuple(np.asarray(v, float) for v in doc["values"]))


def _plain(obj):
    if isinstance(obj, Mapping):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj
