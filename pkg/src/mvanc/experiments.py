"""End-to-end experiment runs: pipeline, artifacts, summary.

Run directory layout (``<out>/<preset name>/``)::

    plant.json                      acoustic paths used by every algorithm
    summary.json                    steady-state NR per channel, derived metrics, expectations
    <algorithm>/trace_<stage>.csv   per-stage traces (see :mod:`mvanc.exports`)
    <algorithm>/W_tuning.json       controllers at the end of the tuning stage
    <algorithm>/H.json              auxiliary filters
    <algorithm>/W_control.json      controllers at the end of the control stage
    nr_virtual.svg, nr_physical.svg NR-vs-time views of the control-stage CSVs
    spectrum/                       w_1j magnitude responses of every snapshot
    complexity/                     channel sweep and reconciliation for these lengths
"""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import reports, snapshots
from .acoustics import PathSet, synth_pathset
from .dsp_core import FilterBank
from .exports import write_trace_csv
from .pipeline import PipelineResult, run_pipeline
from .presets import ExperimentPreset

log = logging.getLogger(__name__)

SUMMARY_SCHEMA = "mvanc.summary/1"
STAGE_MAD_BAND = (900.0, 1700.0)
LOW_BAND = (800.0, 1000.0)
UPPER_BAND = (1100.0, 1700.0)


def override(preset: ExperimentPreset, seed=None, n_samples=None, mu_scale=None,
             algorithms=None, plant_seed=None) -> ExperimentPreset:
    """Copy of ``preset`` with the command-line overrides applied."""
    stage = preset.stage
    if seed is not None:
        stage = replace(stage, seed=seed)
    if n_samples is not None:
        stage = replace(stage, n_samples=n_samples)
    if mu_scale is not None:
        stage = replace(stage, mu_scale=mu_scale)
    plant = preset.plant if plant_seed is None else replace(preset.plant, seed=plant_seed)
    return replace(preset, stage=stage, plant=plant,
                   algorithms=tuple(algorithms) if algorithms else preset.algorithms)


def _bank_row(bank: FilterBank, row: int = 0) -> FilterBank:
    return FilterBank(bank.coeffs[row:row + 1].copy())


def _metrics(preset: ExperimentPreset, results: dict[str, PipelineResult]) -> dict:
    fs = preset.stage.sample_rate
    per_alg = {}
    for alg, res in results.items():
        t1, t3 = res.tuning_controllers, res.control
        w11_tune, w11_ctl = t1.W.coeffs[0, 0], t3.W.coeffs[0, 0]
        per_alg[alg] = {
            "mu": {"tuning_controllers": t1.mu, "tuning_aux": res.tuning_aux.mu, "control": t3.mu},
            "tuning_virtual_nr_db": t1.steady_state_nr().tolist(),
            "control_virtual_nr_db": t3.steady_state_nr().tolist(),
            "control_physical_nr_db": t3.steady_state_nr("d_p", "e_p").tolist(),
            "aux_residual_nr_db": res.tuning_aux.steady_state_nr("e_p", "e_h").tolist(),
            "w11_stage_mad_db": reports.magnitude_mad_db(w11_tune, w11_ctl, STAGE_MAD_BAND, fs),
            "w11_upper_band_attenuation_db": (reports.band_level_db(w11_ctl, LOW_BAND, fs)
                                              - reports.band_level_db(w11_ctl, UPPER_BAND, fs)),
        }
        per_alg[alg]["min_virtual_nr_db"] = min(per_alg[alg]["control_virtual_nr_db"])
    out = {"algorithms": per_alg}
    if len(results) >= 2:
        a, b = list(results)[:2]
        na = np.array(per_alg[a]["control_virtual_nr_db"])
        nb = np.array(per_alg[b]["control_virtual_nr_db"])
        wa, wb = results[a].control.W, results[b].control.W
        band = preset.stage.control_noise.band
        out["algorithm_gap_db"] = float(np.max(np.abs(na - nb)))
        out["filter_mad_db"] = [reports.magnitude_mad_db(wa.coeffs[0, j], wb.coeffs[0, j], band, fs)
                                for j in range(wa.cols)]
    return out


# expectation key -> (metric extractor, comparison)
def _check_expectations(expect: dict, metrics: dict) -> dict:
    algs = metrics["algorithms"]
    checks = {}
    for key, threshold in expect.items():
        if key == "min_virtual_nr_db":
            value = min(m["min_virtual_nr_db"] for m in algs.values())
            ok = value >= threshold
        elif key == "max_algorithm_gap_db":
            value = metrics.get("algorithm_gap_db")
            ok = value is not None and value <= threshold
        elif key == "max_filter_mad_db":
            value = max(metrics["filter_mad_db"]) if "filter_mad_db" in metrics else None
            ok = value is not None and value <= threshold
        elif key == "max_stage_filter_mad_db":
            value = max(m["w11_stage_mad_db"] for m in algs.values())
            ok = value <= threshold
        elif key == "min_upper_band_attenuation_db":
            value = min(m["w11_upper_band_attenuation_db"] for m in algs.values())
            ok = value >= threshold
        else:
            # needs another preset's result (e.g. a scenario margin); checked by the acceptance suite
            checks[key] = {"threshold": threshold, "value": None, "passed": None}
            continue
        checks[key] = {"threshold": threshold, "value": value, "passed": bool(ok)}
    return checks


def _write_algorithm(out: Path, alg: str, res: PipelineResult, stride: int) -> list[Path]:
    d = out / alg
    d.mkdir(parents=True, exist_ok=True)
    for stage, trace in res.traces().items():
        write_trace_csv(trace, d / f"trace_{stage}.csv", stride=stride)
    meta = {"algorithm": alg}
    snaps = [
        snapshots.save(d / "W_tuning.json", {"W": res.tuning_controllers.W}, kind="controllers", meta=meta),
        snapshots.save(d / "H.json", {"H": res.tuning_aux.H}, kind="auxiliary", meta=meta),
        snapshots.save(d / "W_control.json", {"W": res.control.W}, kind="controllers", meta=meta),
    ]
    return snaps


def run_experiment(preset: ExperimentPreset, out_dir, stride: int = 16, threads: int = 1,
                   plant: PathSet | None = None, plots: bool = True) -> dict:
    """Run every algorithm of ``preset`` and write the run directory.

    Returns the summary dict that is also written to ``summary.json``.
    Raises :class:`~mvanc.errors.DivergenceError` if any stage diverges and
    ``OSError`` if the output directory cannot be written.
    """
    out = Path(out_dir) / preset.name
    out.mkdir(parents=True, exist_ok=True)
    plant = plant or synth_pathset(preset.stage.dims, preset.plant)
    snapshots.save_pathset(out / "plant.json", plant)

    def one(alg):
        log.info("%s: running %s", preset.name, alg)
        return alg, run_pipeline(preset.config_for(alg), plant)

    workers = max(1, min(threads, len(preset.algorithms)))
    if workers == 1:
        results = dict(map(one, preset.algorithms))
    else:
        with ThreadPoolExecutor(workers) as ex:
            results = dict(ex.map(one, preset.algorithms))

    snaps = []
    for alg, res in results.items():
        snaps += _write_algorithm(out, alg, res, stride)

    metrics = _metrics(preset, results)
    summary = {
        "schema": SUMMARY_SCHEMA,
        "preset": preset.name,
        "seed": preset.stage.seed,
        "plant_seed": preset.plant.seed,
        "n_samples": preset.stage.n_samples,
        "mu_scale": preset.stage.mu_scale,
        **metrics,
        "expectations": _check_expectations(preset.expect, metrics),
    }
    _write_json(out / "summary.json", summary)

    st = preset.stage
    d = st.dims
    cdir = reports.complexity_report(st.n_x, st.n_h, st.path_len, 10, out / "complexity", plot=plots).parent
    (cdir / "reconciliation.txt").write_text(
        reports.reconciliation_text(d.J, d.K, d.M, st.n_x, st.n_h, st.path_len))

    if plots:
        for kind, name in (("v", "nr_virtual.svg"), ("p", "nr_physical.svg")):
            csvs = [out / alg / "trace_control.csv" for alg in results]
            reports.plot_nr(csvs, out / name, labels=list(results), kind=kind)
    # w_1j of every controller snapshot, one overlay
    w_snaps = [p for p in snaps if p.name.startswith("W_")]
    tmp_dir = out / "spectrum"
    tmp_dir.mkdir(exist_ok=True)
    row_paths, labels = [], []
    for p in w_snaps:
        banks, meta = snapshots.load(p)
        rp = tmp_dir / f"{p.parent.name}_{p.stem}_row1.json"
        snapshots.save(rp, {"W": _bank_row(banks["W"])}, kind="controllers", meta=meta)
        row_paths.append(rp)
        labels.append(f"{p.parent.name}/{p.stem}")
    reports.spectrum_report(row_paths, tmp_dir, band=st.control_noise.band,
                            sample_rate=st.sample_rate, labels=labels, plot=plots)
    return summary


def _write_json(path: Path, obj) -> Path:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(obj, indent=2, sort_keys=False) + "\n")
    os.replace(tmp, path)
    return path
