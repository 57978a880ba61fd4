"""Spectrum and complexity reports, and the SVG views drawn from their CSVs."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from . import complexity, snapshots
from .acoustics import magnitude_response_db
from .dsp_core import FilterBank
from .exports import read_trace_csv, write_csv

FLOOR_DB = -120.0
SPECTRUM_POINTS = 1024
SPECTRUM_SCHEMA = "mvanc.spectrum/1"


def band_level_db(taps, band, sample_rate: float) -> float:
    """Mean magnitude (dB) of ``taps`` over the closed band."""
    f, m = magnitude_response_db(taps, sample_rate, SPECTRUM_POINTS, FLOOR_DB)
    sel = (f >= band[0]) & (f <= band[1])
    return float(m[sel].mean())


def magnitude_mad_db(taps_a, taps_b, band, sample_rate: float) -> float:
    """Mean absolute magnitude-response difference (dB) over the band."""
    f, a = magnitude_response_db(taps_a, sample_rate, SPECTRUM_POINTS, FLOOR_DB)
    _, b = magnitude_response_db(taps_b, sample_rate, SPECTRUM_POINTS, FLOOR_DB)
    sel = (f >= band[0]) & (f <= band[1])
    return float(np.abs(a[sel] - b[sel]).mean())


def spectrum_table(banks: dict[str, FilterBank], sample_rate: float,
                   n_points: int = SPECTRUM_POINTS) -> tuple[list[str], np.ndarray]:
    """Columns ``freq_hz`` then ``<label>[r,c]`` in dB, floored at -120 dB."""
    names = ["freq_hz"]
    cols = []
    freqs = None
    for label, bank in banks.items():
        for r in range(bank.rows):
            for c in range(bank.cols):
                freqs, db = magnitude_response_db(bank.coeffs[r, c], sample_rate, n_points, FLOOR_DB)
                names.append(f"{label}[{r + 1},{c + 1}]")
                cols.append(db)
    return names, np.column_stack([freqs] + cols)


def spectrum_report(snapshot_paths, out_dir, bank: str | None = None,
                    band=None, sample_rate: float = 16000.0,
                    labels=None, plot: bool = True) -> Path:
    """Magnitude responses of the filters in one or more snapshots.

    ``bank`` selects one bank by name from every snapshot (default: all of
    them).  Writes ``spectrum.csv`` and, with ``plot``, ``spectrum.svg``.
    Malformed snapshots raise :class:`~mvanc.errors.SnapshotParseError`.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    selected: dict[str, FilterBank] = {}
    labels = labels or [Path(p).stem for p in snapshot_paths]
    for label, path in zip(labels, snapshot_paths):
        banks, _ = snapshots.load(path)
        if bank is not None:
            if bank not in banks:
                raise snapshots.SnapshotParseError(
                    f"{path}: no bank named {bank!r} (has {', '.join(banks)})")
            banks = {bank: banks[bank]}
        for name, b in banks.items():
            selected[f"{label}:{name}"] = b
    names, table = spectrum_table(selected, sample_rate)
    csv_path = write_csv(out_dir / "spectrum.csv", names,
                         [[f"{row[0]:.6f}"] + [f"{v:.6f}" for v in row[1:]] for row in table])
    if plot:
        plot_spectrum(csv_path, out_dir / "spectrum.svg", band=band)
    return csv_path


def complexity_report(N_x: int, N_h: int, L: int, ch_max: int, out_dir, plot: bool = True) -> Path:
    """Channel-sweep CSV (and log-scale SVG) for J = K = M = 1 .. ch_max."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = complexity.channel_sweep(N_x, N_h, L, ch_max)
    csv_path = complexity.write_sweep_csv(rows, out_dir / "complexity.csv")
    if plot:
        plot_complexity(csv_path, out_dir / "complexity.svg", title=f"N_x={N_x}, N_h={N_h}, L={L}")
    return csv_path


def reconciliation_text(J, K, M, N_x, N_h, L) -> str:
    """Plain-text table: closed-form terms against counted kernel tallies."""
    lines = [f"per-sample operation counts, J={J} K={K} M={M} N_x={N_x} N_h={N_h} L={L}"]
    for algo, closed in (("mcfxlms", complexity.ops_mcfxlms), ("mcalms", complexity.ops_mcalms)):
        total = closed(J, K, M, N_x, N_h, L)
        lines.append("")
        lines.append(f"{algo}: closed form mult={total.multiplications} add={total.additions}")
        lines.append(f"  {'term':34s} {'kernel':22s} {'table mult/add':>20s} {'counted mult/add':>20s}  delta")
        for r in complexity.reconcile(algo, J, K, M, N_x, N_h, L):
            lines.append(f"  {r.term:34s} {r.kernel:22s} "
                         f"{r.table.multiplications:>9d}/{r.table.additions:<10d} "
                         f"{r.counted.multiplications:>9d}/{r.counted.additions:<10d}  "
                         f"{'ok' if r.matches else r.delta}")
        counted = complexity.instrumented_counts(algo, J, K, M, N_x, N_h, L)
        lines.append(f"  counted total mult={counted.multiplications} add={counted.additions}")
    return "\n".join(lines) + "\n"


# -- plots (views over CSVs only) --------------------------------------------

def _pyplot():
    import matplotlib

    matplotlib.use("svg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "mvanc"
    return plt


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None})


def plot_nr(csv_paths, out_path, labels=None, channel: int = 1, kind: str = "v") -> Path:
    """NR of one channel against time for each trace CSV."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(7, 3.5))
    labels = labels or [Path(p).stem for p in csv_paths]
    for label, path in zip(labels, csv_paths):
        header, cols = read_trace_csv(path)
        key = f"nr_{kind}{channel}"
        if key not in cols:
            continue
        t = cols["sample"] / float(header["sample_rate"])
        ax.plot(t, cols[key], label=label, lw=1)
    ax.set_xlabel("time (s)")
    ax.set_ylabel(f"noise reduction, {'virtual' if kind == 'v' else 'physical'} mic {channel} (dB)")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, out_path)
    plt.close(fig)
    return Path(out_path)


def plot_spectrum(csv_path, out_path, band=None, columns=None) -> Path:
    import csv as _csv

    plt = _pyplot()
    with open(csv_path, newline="") as fh:
        reader = _csv.reader(fh)
        names = next(reader)
        data = np.array([[float(v) for v in row] for row in reader])
    fig, ax = plt.subplots(figsize=(7, 3.5))
    for i, name in enumerate(names[1:], start=1):
        if columns is None or name in columns:
            ax.plot(data[:, 0], data[:, i], lw=1, label=name)
    if band is not None:
        ax.axvspan(band[0], band[1], color="0.9", zorder=0)
    ax.set_xlabel("frequency (Hz)")
    ax.set_ylabel("magnitude (dB)")
    ax.set_ylim(max(FLOOR_DB, np.nanmin(data[:, 1:]) - 5), np.nanmax(data[:, 1:]) + 5)
    ax.grid(True, alpha=0.3)
    if len(names) <= 17:
        ax.legend(fontsize=6, ncol=2)
    fig.tight_layout()
    _save(fig, out_path)
    plt.close(fig)
    return Path(out_path)


def plot_complexity(csv_path, out_path, title: str = "") -> Path:
    import csv as _csv

    plt = _pyplot()
    with open(csv_path, newline="") as fh:
        rows = list(_csv.DictReader(fh))
    c = [int(r["channels"]) for r in rows]
    fig, axes = plt.subplots(1, 2, figsize=(8, 3.5))
    for ax, what in zip(axes, ("mult", "add")):
        ax.semilogy(c, [int(r[f"mcfxlms_{what}"]) for r in rows], "o-", label="MCFxLMS")
        ax.semilogy(c, [int(r[f"mcalms_{what}"]) for r in rows], "s-", label="MCALMS")
        ax.set_xlabel("channels (J = K = M)")
        ax.set_ylabel("multiplications" if what == "mult" else "additions")
        ax.grid(True, which="both", alpha=0.3)
        ax.legend(fontsize=8)
    if title:
        fig.suptitle(title, fontsize=9)
    fig.tight_layout()
    _save(fig, out_path)
    plt.close(fig)
    return Path(out_path)
