"""JSON snapshots of filter banks and plants.

Schema (one JSON object)::

    {
      "schema": "mvanc.snapshot/1",
      "kind": "filterbanks" | "pathset",
      "dims": {"J": 4, "K": 2, "M": 4, "Q": 4},      # optional for filterbanks
      "meta": {...},                                   # free-form
      "banks": {
        "<name>": {"rows": R, "cols": C, "length": N,
                   "coeffs": [[[c_0, ..., c_{N-1}], ...], ...]}
      }
    }

``coeffs[r][c]`` is the filter from input ``c`` to output ``r``.  Floats are
written with full round-trip precision, so a reload is bit-exact.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from .adaptive import SystemDims
from .dsp_core import FilterBank
from .errors import SnapshotParseError

SCHEMA = "mvanc.snapshot/1"


def _bank_to_json(bank: FilterBank) -> dict:
    return {"rows": bank.rows, "cols": bank.cols, "length": bank.length,
            "coeffs": bank.coeffs.tolist()}


def _bank_from_json(name: str, obj) -> FilterBank:
    where = f"banks.{name}"
    if not isinstance(obj, dict):
        raise SnapshotParseError(f"{where}: expected an object")
    for key in ("rows", "cols", "length", "coeffs"):
        if key not in obj:
            raise SnapshotParseError(f"{where}: missing field '{key}'")
    try:
        coeffs = np.array(obj["coeffs"], dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise SnapshotParseError(f"{where}.coeffs: not a rectangular numeric array ({exc})") from None
    expected = (obj["rows"], obj["cols"], obj["length"])
    if coeffs.shape != expected:
        raise SnapshotParseError(f"{where}.coeffs: shape {coeffs.shape} does not match "
                                 f"rows/cols/length {expected}")
    if not np.all(np.isfinite(coeffs)):
        raise SnapshotParseError(f"{where}.coeffs: non-finite coefficient")
    return FilterBank(coeffs)


def dumps(banks: dict[str, FilterBank], kind: str = "filterbanks",
          dims: SystemDims | None = None, meta: dict | None = None) -> str:
    doc = {"schema": SCHEMA, "kind": kind}
    if dims is not None:
        doc["dims"] = {"J": dims.J, "K": dims.K, "M": dims.M, "Q": dims.Q}
    doc["meta"] = meta or {}
    doc["banks"] = {name: _bank_to_json(b) for name, b in banks.items()}
    return json.dumps(doc, indent=1) + "\n"


def loads(text: str, source: str = "<string>") -> tuple[dict[str, FilterBank], dict]:
    """Parse a snapshot; returns ``(banks, document-without-banks)``."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SnapshotParseError(f"{source}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise SnapshotParseError(f"{source}: top level must be an object")
    if doc.get("schema") != SCHEMA:
        raise SnapshotParseError(f"{source}: field 'schema' must be {SCHEMA!r}, got {doc.get('schema')!r}")
    banks_obj = doc.get("banks")
    if not isinstance(banks_obj, dict) or not banks_obj:
        raise SnapshotParseError(f"{source}: field 'banks' must be a non-empty object")
    try:
        banks = {name: _bank_from_json(name, obj) for name, obj in banks_obj.items()}
    except SnapshotParseError as exc:
        raise SnapshotParseError(f"{source}: {exc}") from None
    header = {k: v for k, v in doc.items() if k != "banks"}
    return banks, header


def save(path, banks: dict[str, FilterBank], **kwargs) -> Path:
    """Write atomically (temp file + rename)."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(dumps(banks, **kwargs))
    os.replace(tmp, path)
    return path


def load(path) -> tuple[dict[str, FilterBank], dict]:
    path = Path(path)
    return loads(path.read_text(), source=str(path))


def save_pathset(path, plant) -> Path:
    return save(path, plant.banks(), kind="pathset", dims=plant.dims, meta=plant.meta)


def load_pathset(path):
    from .acoustics import PathSet

    banks, header = load(path)
    if header.get("kind") != "pathset":
        raise SnapshotParseError(f"{path}: field 'kind' must be 'pathset'")
    try:
        dims = SystemDims(**header["dims"])
    except (KeyError, TypeError, ValueError) as exc:
        raise SnapshotParseError(f"{path}: field 'dims' invalid ({exc})") from None
    missing = [name for name in PathSet.BANKS if name not in banks]
    if missing:
        raise SnapshotParseError(f"{path}: missing banks {missing}")
    return PathSet(dims=dims, meta=header.get("meta", {}),
                   **{name: banks[name] for name in PathSet.BANKS})
