"""Per-sample arithmetic cost of the control stage.

Closed-form counts for both update rules, a channel sweep, and tallies taken
from an actual control-stage sample so the two can be reconciled term by
term.

The control stage is split into five kernels:

====================  ==============================  =====================
kernel                adjoint (MCALMS)                filtered-ref (MCFxLMS)
====================  ==============================  =====================
control_output        y_k = sum_j w_kj . x_j          same
aux_filtering         e_h = e_p - sum_j h_mj . xbar_j same
time_reversed_filter  e'_km over L error lags         --
reference_filtering   --                              x'_jkm over L ref lags
error_summation       sum_m e'_km                     -- (inside the update)
weight_update         w_kj -= mu x_j(n-L+1) sum e'    w_kj -= mu sum_m e_m x'
====================  ==============================  =====================

The published closed forms leave out ``control_output`` and count the
auxiliary-filter and error-summation additions differently; :func:`reconcile`
lists every such difference instead of folding it into a fudge term.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .opcount import OpCount, counting

__all__ = ["OpCount", "ops_mcfxlms", "ops_mcalms", "channel_sweep", "SweepRow",
           "write_sweep_csv", "instrumented_counts", "instrumented_breakdown",
           "reconcile", "ReconRow", "SWEEP_COLUMNS"]

_INT64_MAX = 2 ** 63 - 1


def _check(**kw):
    for name, v in kw.items():
        if isinstance(v, bool) or not isinstance(v, (int, np.integer)) or v < 1:
            raise ConfigurationError(f"{name} must be a positive integer, got {v!r}")
    return [int(v) for v in kw.values()]


def _count(mults, adds) -> OpCount:
    if mults > _INT64_MAX or adds > _INT64_MAX:
        raise OverflowError("operation count exceeds the 64-bit range")
    return OpCount(mults, adds)


def ops_mcfxlms(J, K, M, N_x, N_h, L) -> OpCount:
    """Multiplications/additions per sample, filtered-reference controller."""
    J, K, M, N_x, N_h, L = _check(J=J, K=K, M=M, N_x=N_x, N_h=N_h, L=L)
    return _count(J * K * M * (L + N_x + 1) + M * J * N_h,
                  J * K * M * (L + N_x - 1) + M * (J + N_h - 1))


def ops_mcalms(J, K, M, N_x, N_h, L) -> OpCount:
    """Multiplications/additions per sample, adjoint controller."""
    J, K, M, N_x, N_h, L = _check(J=J, K=K, M=M, N_x=N_x, N_h=N_h, L=L)
    return _count(K * (L * M + J * N_x + 1) + M * J * N_h,
                  K * ((L - 1) * M + J * (N_x + M - 1)) + M * (J + N_h - 1))


@dataclass(frozen=True)
class SweepRow:
    channels: int
    mcfxlms: OpCount
    mcalms: OpCount

    @property
    def mult_ratio(self) -> float:
        return self.mcfxlms.multiplications / self.mcalms.multiplications

    @property
    def add_ratio(self) -> float:
        return self.mcfxlms.additions / self.mcalms.additions


SWEEP_COLUMNS = ("channels", "mcfxlms_mult", "mcfxlms_add", "mcalms_mult", "mcalms_add",
                 "mult_ratio", "add_ratio")


def channel_sweep(N_x: int, N_h: int, L: int, ch_max: int) -> list[SweepRow]:
    """Counts for J = K = M = c, c = 1 .. ch_max."""
    _check(N_x=N_x, N_h=N_h, L=L, ch_max=ch_max)
    return [SweepRow(c, ops_mcfxlms(c, c, c, N_x, N_h, L), ops_mcalms(c, c, c, N_x, N_h, L))
            for c in range(1, ch_max + 1)]


def write_sweep_csv(rows: list[SweepRow], path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for r in rows:
            w.writerow([r.channels, r.mcfxlms.multiplications, r.mcfxlms.additions,
                        r.mcalms.multiplications, r.mcalms.additions,
                        f"{r.mult_ratio:.6f}", f"{r.add_ratio:.6f}"])
    return path


def _one_control_sample(algorithm, J, K, M, N_x, N_h, L, seed=0):
    # imported here: pipeline depends on this module's siblings, not the reverse
    from .adaptive import AuxState
    from .dsp_core import FilterBank, TapBuffer
    from .pipeline import _controller_state, controller_sample, StageConfig
    from .adaptive import SystemDims

    rng = np.random.default_rng(seed)
    cfg = StageConfig(dims=SystemDims(J, K, M, 1), n_x=N_x, n_h=N_h, path_len=L,
                      n_samples=max(N_x, 1), algorithm=algorithm)
    s_est = FilterBank(rng.standard_normal((M, K, L)))
    state = _controller_state(cfg, s_est, algorithm, ref_capacity=N_h)
    state.W.coeffs[:] = rng.standard_normal(state.W.shape)
    aux = AuxState(J, M, N_h, refs=state.refs,
                   weights=FilterBank(rng.standard_normal((M, J, N_h))))
    ybuf = TapBuffer(L, channels=K)
    s_true = rng.standard_normal((M, K, L))
    # warm the delay lines so every kernel sees non-trivial data
    for _ in range(N_x + L):
        state.refs.push(rng.standard_normal(J))
    return lambda: controller_sample(state, rng.standard_normal(J), rng.standard_normal(M),
                                     s_true, ybuf, algorithm, 1e-6, aux)


def instrumented_breakdown(algorithm: str, J, K, M, N_x, N_h, L) -> dict[str, OpCount]:
    """Per-kernel tallies from one real control-stage sample."""
    step = _one_control_sample(algorithm, J, K, M, N_x, N_h, L)
    with counting() as counter:
        step()
    return counter.by_kernel()


def instrumented_counts(algorithm: str, J, K, M, N_x, N_h, L, enabled: bool = True) -> OpCount:
    """Total tallies of one control-stage sample; zero when counting is off."""
    step = _one_control_sample(algorithm, J, K, M, N_x, N_h, L)
    if not enabled:
        step()
        return OpCount(0, 0)
    with counting() as counter:
        step()
    return counter.total()


@dataclass(frozen=True)
class ReconRow:
    term: str
    kernel: str
    table: OpCount
    counted: OpCount

    @property
    def delta(self) -> tuple[int, int]:
        return self.counted - self.table

    @property
    def matches(self) -> bool:
        return self.delta == (0, 0)


def _table_terms(algorithm, J, K, M, N_x, N_h, L):
    aux = ("auxiliary filtering", "aux_filtering", OpCount(M * J * N_h, M * (J + N_h - 1)))
    ctl = ("control filtering (not in table)", "control_output", OpCount(0, 0))
    if algorithm == "mcfxlms":
        return [
            ("reference filtering", "reference_filtering", OpCount(J * K * M * L, J * K * M * (L - 1))),
            ("weight update", "weight_update", OpCount(J * K * M * (N_x + 1), J * K * M * N_x)),
            aux, ctl,
        ]
    return [
        ("error-window filtering", "time_reversed_filter", OpCount(K * M * L, K * (L - 1) * M)),
        ("error summation", "error_summation", OpCount(0, K * J * (M - 1))),
        ("weight update", "weight_update", OpCount(K * (J * N_x + 1), K * J * N_x)),
        aux, ctl,
    ]


def reconcile(algorithm: str, J, K, M, N_x, N_h, L) -> list[ReconRow]:
    """Table terms next to counted kernel tallies for one control-stage sample.

    The table column of the rows sums to the closed form of the chosen
    algorithm; rows with ``matches == False`` are the itemised discrepancies.
    """
    counted = instrumented_breakdown(algorithm, J, K, M, N_x, N_h, L)
    return [ReconRow(term, kernel, table, counted.get(kernel, OpCount()))
            for term, kernel, table in _table_terms(algorithm, J, K, M, N_x, N_h, L)]
