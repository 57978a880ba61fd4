"""CSV export of run traces.

Trace CSV, schema ``mvanc.trace/1``::

    # schema=mvanc.trace/1 stage=control algorithm=mcalms sample_rate=16000 mu=1.7e-05 nr_window=4096 stride=16
    sample,d_v1,...,d_vQ,e_v1,...,e_vQ,d_p1,...,e_pM,e_h1,...,nr_v1,...,nr_p1,...

Signal columns appear only for signals the stage records.  ``nr_v*`` is the
virtual-mic noise reduction (d_v vs e_v), ``nr_p*`` the physical-mic one
(d_p vs e_p), both in dB and empty until the smoothing window has filled.
Raw errors are exported so squared-error curves can be rebuilt.  Rows are
every ``stride``-th sample; numbers use ``%.10g`` so output is byte-stable.
"""

from __future__ import annotations

import csv
import io
import os
from pathlib import Path

import numpy as np

from .pipeline import RunTrace

TRACE_SCHEMA = "mvanc.trace/1"
SIGNALS = ("d_v", "e_v", "d_p", "e_p", "e_h")


def _fmt(v: float) -> str:
    return "" if np.isnan(v) else "%.10g" % v


def _write_atomic(path: Path, text: str) -> Path:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)
    return path


def trace_columns(trace: RunTrace) -> dict[str, np.ndarray]:
    """Full-resolution columns of a trace, in CSV order."""
    n = trace.n_samples
    cols: dict[str, np.ndarray] = {"sample": np.arange(n, dtype=np.float64)}
    for sig in SIGNALS:
        if sig in trace.series:
            for c, row in enumerate(trace.series[sig], start=1):
                cols[f"{sig}{c}"] = row
    for tag, d, e in (("nr_v", "d_v", "e_v"), ("nr_p", "d_p", "e_p")):
        if d in trace.series and e in trace.series:
            curves, _ = trace.nr_curve(d, e)
            for c, curve in enumerate(curves, start=1):
                full = np.full(n, np.nan)
                full[trace.nr_window - 1:] = curve
                cols[f"{tag}{c}"] = full
    return cols


def write_trace_csv(trace: RunTrace, path, stride: int = 1) -> Path:
    if stride < 1:
        raise ValueError("stride must be >= 1")
    cols = trace_columns(trace)
    names = list(cols)
    table = np.column_stack([cols[k] for k in names])[::stride]
    buf = io.StringIO()
    buf.write(f"# schema={TRACE_SCHEMA} stage={trace.stage} algorithm={trace.algorithm} "
              f"sample_rate={trace.sample_rate:g} mu={trace.mu!r} nr_window={trace.nr_window} "
              f"stride={stride}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(names)
    for row in table:
        w.writerow([str(int(row[0]))] + [_fmt(v) for v in row[1:]])
    return _write_atomic(Path(path), buf.getvalue())


def read_trace_csv(path) -> tuple[dict[str, str], dict[str, np.ndarray]]:
    """``(header fields, columns)``; empty cells read as NaN."""
    path = Path(path)
    with path.open(newline="") as fh:
        first = fh.readline()
        if not first.startswith("#"):
            raise ValueError(f"{path}: missing schema line")
        header = dict(item.split("=", 1) for item in first[1:].split())
        if header.get("schema") != TRACE_SCHEMA:
            raise ValueError(f"{path}: unsupported trace schema {header.get('schema')!r}")
        reader = csv.reader(fh)
        names = next(reader)
        rows = [[float(v) if v else np.nan for v in r] for r in reader]
    data = np.array(rows, dtype=np.float64).reshape(-1, len(names))
    return header, {name: data[:, i] for i, name in enumerate(names)}


def write_csv(path, header: list[str], rows) -> Path:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return _write_atomic(Path(path), buf.getvalue())
