"""Two-stage virtual-sensing workflow.

Stage A trains the controllers against the virtual microphones.  Stage B
freezes them and identifies the auxiliary filters that map the references to
the physical-mic residual.  The control stage then adapts fresh controllers
against the physical mics, corrected by the frozen auxiliary filters.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import signal

from . import adaptive
from .acoustics import NoiseSpec, PathSet, add_measurement_noise, filter_bank_signals, generate_noise
from .adaptive import AuxState, ControlState, StepSizes, SystemDims
from .dsp_core import FilterBank, TapBuffer
from .errors import ConfigurationError, DivergenceError

log = logging.getLogger(__name__)

ALGORITHMS = ("mcalms", "mcfxlms")
NR_CLAMP_DB = 80.0
STEADY_FRACTION = 0.1

# noise streams per stage so each stage sees its own realisation
_STREAM = {"tuning_controllers": 0, "tuning_aux": 1, "control": 2}


@dataclass(frozen=True)
class StageConfig:
    """Parameters shared by the three stages of one experiment.

    ``steps=None`` derives every step size from the stage's reference power
    (see :func:`auto_step_size`) scaled by ``mu_scale``.
    """

    dims: SystemDims = SystemDims(4, 2, 4, 4)
    n_x: int = 512
    n_h: int = 256
    path_len: int = 32
    n_samples: int = 200_000
    tuning_noise: NoiseSpec = NoiseSpec()
    control_noise: NoiseSpec = NoiseSpec()
    steps: StepSizes | None = None
    mu_scale: float = 1.5
    algorithm: str = "mcalms"
    nr_window: int = 4096
    seed: int = 0

    def __post_init__(self):
        for name in ("n_x", "n_h", "path_len", "nr_window"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1")
        if self.n_samples < self.n_x:
            raise ConfigurationError("n_samples must be at least n_x so the transient fits")
        if self.algorithm not in ALGORITHMS:
            raise ConfigurationError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if not self.mu_scale > 0:
            raise ConfigurationError("mu_scale must be positive")
        if self.tuning_noise.sample_rate != self.control_noise.sample_rate:
            raise ConfigurationError("tuning and control noise must share a sample rate")

    @property
    def sample_rate(self) -> float:
        return self.tuning_noise.sample_rate


@dataclass
class RunTrace:
    """Per-sample record of one stage.

    ``series`` maps a signal name (``d_v``, ``e_v``, ``d_p``, ``e_p``,
    ``e_h``) to a ``(channels, n)`` array; absent signals are simply missing.
    ``d_v``/``e_v`` in a control-stage trace are evaluation only.
    """

    stage: str
    algorithm: str
    sample_rate: float
    mu: float
    nr_window: int
    series: dict[str, np.ndarray] = field(default_factory=dict)
    W: FilterBank | None = None
    H: FilterBank | None = None

    @property
    def n_samples(self) -> int:
        return next(iter(self.series.values())).shape[1]

    def nr_curve(self, disturbance: str = "d_v", error: str = "e_v"):
        """Smoothed NR per channel; see :func:`noise_reduction_db`."""
        d, e = self.series[disturbance], self.series[error]
        curves, flags = zip(*(noise_reduction_db(d[c], e[c], self.nr_window) for c in range(d.shape[0])))
        return np.array(curves), np.array(flags)

    def steady_state_nr(self, disturbance: str = "d_v", error: str = "e_v") -> np.ndarray:
        curves, _ = self.nr_curve(disturbance, error)
        return np.array([steady_state(c) for c in curves])


def noise_reduction_db(disturbance, error, window: int):
    """``10 log10(movavg(d^2) / movavg(e^2))`` from the first full window on.

    Returns ``(curve, clamped)``; ``curve[i]`` belongs to sample
    ``window - 1 + i``.  Windows with zero residual power are clamped to
    +80 dB (and zero disturbance power to -80 dB) and marked in ``clamped``.
    """
    d = np.asarray(disturbance, dtype=np.float64)
    e = np.asarray(error, dtype=np.float64)
    if d.shape != e.shape or d.ndim != 1:
        raise ConfigurationError("disturbance and error must be 1-D series of equal length")
    if window < 1 or window > d.size:
        raise ConfigurationError(f"window must be in [1, {d.size}]")
    pd = _moving_sum(d * d, window)
    pe = _moving_sum(e * e, window)
    with np.errstate(divide="ignore", invalid="ignore"):
        nr = 10 * np.log10(pd / pe)
    clamped = (pe <= 0) | (pd <= 0)
    nr = np.where(pe <= 0, NR_CLAMP_DB, nr)
    nr = np.where((pd <= 0) & (pe > 0), -NR_CLAMP_DB, nr)
    return np.clip(nr, -NR_CLAMP_DB, NR_CLAMP_DB), clamped


def _moving_sum(v, window):
    c = np.concatenate(([0.0], np.cumsum(v)))
    s = c[window:] - c[:-window]
    # cumsum differences can leave tiny negative residue
    return np.maximum(s, 0.0)


def steady_state(curve) -> float:
    """Median of the last 10 % of an NR curve."""
    curve = np.asarray(curve)
    tail = max(1, int(round(STEADY_FRACTION * curve.size)))
    return float(np.median(curve[-tail:]))


def auto_step_size(refs: np.ndarray, n_taps: int, path_est: FilterBank | None, mu_scale: float,
                   sample_rate: float = 16000.0) -> float:
    """``mu_scale / (n_taps * P)`` with ``P`` the peak filtered-reference power.

    ``P = max_f sum_j p_j(f) * G(f)`` where ``p_j`` is the Welch spectrum of
    reference ``j`` scaled to have mean equal to its power and ``G`` is the
    summed squared magnitude of the estimated path bank (1 without a path).
    For white references and flat paths this is ``P_x * |s|^2``; for
    band-limited references it tracks the largest eigenvalue, which keeps one
    ``mu_scale`` stable across noise bandwidths.
    """
    refs = np.atleast_2d(refs)
    nperseg = min(1024, refs.shape[1])
    freqs, psd = signal.welch(refs, fs=sample_rate, nperseg=nperseg, axis=-1)
    power = psd.sum(axis=0) * sample_rate / 2
    if not np.any(power > 0):
        raise ConfigurationError("reference power is zero; cannot derive a step size")
    if path_est is not None:
        lags = np.arange(path_est.length)
        kernel = np.exp(-2j * np.pi * np.outer(lags, freqs) / sample_rate)
        h = path_est.coeffs.reshape(-1, path_est.length) @ kernel
        power = power * np.sum(np.abs(h) ** 2, axis=0)
    return mu_scale / (n_taps * float(power.max()))


def stage_signals(noise: NoiseSpec, n_refs: int, n_samples: int, stage: str, run_seed: int = 0):
    """``(clean sources, measured references)``, each ``(J, n)``.

    Every reference mic observes its own band-limited source; measurement
    noise at ``noise.snr_db`` is added to the references only.  The
    realisation is a pure function of ``(run_seed, noise.seed, stage)``.
    """
    children = np.random.SeedSequence([run_seed, noise.seed, _STREAM[stage]]).spawn(2 * n_refs)
    seeds = [int(c.generate_state(1)[0]) for c in children]
    clean = np.stack([generate_noise(replace(noise, seed=seeds[2 * j]), n_samples)
                      for j in range(n_refs)])
    refs = np.stack([add_measurement_noise(clean[j], noise.snr_db, seeds[2 * j + 1])
                     for j in range(n_refs)])
    return clean, refs


def _check_plant(cfg: StageConfig, plant: PathSet):
    if plant.dims != cfg.dims:
        raise ConfigurationError(f"plant dims {plant.dims} do not match config dims {cfg.dims}")
    if plant.secondary_length != cfg.path_len:
        raise ConfigurationError(
            f"plant secondary paths have {plant.secondary_length} taps, config says L={cfg.path_len}")


def controller_sample(state: ControlState, x_n, d_n, s_true, ybuf: TapBuffer,
                      algorithm: str, mu: float, aux: AuxState | None = None):
    """Advance one sample: output, plant response, inner error, update.

    Returns ``(sensor error, inner error or None, source output lags)``.
    The plant superposition ``d + s * y`` is simulation, not controller
    arithmetic, and is not tallied.
    """
    state.refs.push(x_n)
    ybuf.push(adaptive.control_output(state))
    ylags = ybuf.vector(s_true.shape[2])
    e = d_n + np.einsum("ekl,kl->e", s_true, ylags)
    inner = None
    used = e
    if aux is not None:
        used = inner = adaptive.control_stage_inner_error(e, aux)
    if algorithm == "mcalms":
        state.errors.push(used)
        adaptive.mcalms_step(state, adaptive.filtered_error_sums(state), mu)
    else:
        adaptive.mcfxlms_step(state, used, mu)
    return e, inner, ylags


def _adapt(x, d, s_true, state: ControlState, algorithm: str, mu: float,
           aux: AuxState | None = None, eval_d=None, eval_s=None):
    """Sample loop shared by the tuning and control stages.

    ``d``/``s_true`` define the sensors the controller sees.  With ``aux``
    the controller adapts on the inner error.  ``eval_d``/``eval_s`` only
    feed the returned evaluation series and never the update.
    """
    n = x.shape[1]
    ybuf = TapBuffer(s_true.shape[2], channels=state.W.rows)
    e_seen = np.empty((d.shape[0], n))
    e_inner = np.empty_like(e_seen) if aux is not None else None
    e_eval = np.empty((eval_d.shape[0], n)) if eval_d is not None else None
    i = 0
    try:
        for i in range(n):
            e, inner, ylags = controller_sample(state, x[:, i], d[:, i], s_true, ybuf,
                                                algorithm, mu, aux)
            e_seen[:, i] = e
            if aux is not None:
                e_inner[:, i] = inner
            if e_eval is not None:
                e_eval[:, i] = eval_d[:, i] + np.einsum("qkl,kl->q", eval_s, ylags)
            if i % 1024 == 1023 and not state.W.is_finite():
                raise DivergenceError("controller weights became non-finite", mu=mu)
    except DivergenceError as exc:
        raise DivergenceError(str(exc.args[0]), sample=i, mu=mu) from None
    if not state.W.is_finite():
        raise DivergenceError("controller weights became non-finite", sample=n - 1, mu=mu)
    return e_seen, e_inner, e_eval


def _controller_state(cfg: StageConfig, path_est: FilterBank, algorithm: str,
                      ref_capacity: int | None = None) -> ControlState:
    capacity = max(cfg.n_x + cfg.path_len - 1, ref_capacity or 0)
    return ControlState(cfg.dims.J, cfg.n_x, path_est,
                        filtered_reference=(algorithm == "mcfxlms"),
                        refs=TapBuffer(capacity, channels=cfg.dims.J))


def run_tuning_controllers(cfg: StageConfig, plant: PathSet) -> tuple[FilterBank, RunTrace]:
    """Adapt controllers against the virtual mics; returns the final bank."""
    _check_plant(cfg, plant)
    clean, x = stage_signals(cfg.tuning_noise, cfg.dims.J, cfg.n_samples, "tuning_controllers", cfg.seed)
    d_v = filter_bank_signals(plant.primary_virtual, clean)
    mu = cfg.steps.mu1 if cfg.steps else auto_step_size(
        x, cfg.n_x, plant.secondary_virtual_est, cfg.mu_scale, cfg.sample_rate)
    state = _controller_state(cfg, plant.secondary_virtual_est, cfg.algorithm)
    log.info("tuning controllers: %s, mu=%.4g, %d samples", cfg.algorithm, mu, cfg.n_samples)
    e_v, _, _ = _adapt(x, d_v, plant.secondary_virtual.coeffs, state, cfg.algorithm, mu)
    trace = RunTrace("tuning_controllers", cfg.algorithm, cfg.sample_rate, mu, cfg.nr_window,
                     {"d_v": d_v, "e_v": e_v}, W=state.W.copy())
    return state.W.copy(), trace


def run_tuning_aux(cfg: StageConfig, plant: PathSet, optimal_W: FilterBank) -> tuple[FilterBank, RunTrace]:
    """Identify the auxiliary filters with the controllers frozen at ``optimal_W``."""
    _check_plant(cfg, plant)
    d = cfg.dims
    if optimal_W.shape != (d.K, d.J, cfg.n_x):
        raise ConfigurationError(f"controller bank {optimal_W.shape} does not match config")
    clean, x = stage_signals(cfg.tuning_noise, d.J, cfg.n_samples, "tuning_aux", cfg.seed)
    d_p = filter_bank_signals(plant.primary_physical, clean)
    y = filter_bank_signals(optimal_W, x)
    e_p = d_p + filter_bank_signals(plant.secondary_physical, y)
    mu = cfg.steps.mu2 if cfg.steps else auto_step_size(x, cfg.n_h, None, cfg.mu_scale, cfg.sample_rate)
    aux = AuxState(d.J, d.M, cfg.n_h)
    e_h = np.empty_like(e_p)
    log.info("tuning auxiliary filters: mu=%.4g, %d samples", mu, cfg.n_samples)
    try:
        for i in range(cfg.n_samples):
            aux.refs.push(x[:, i])
            _, e_h[:, i] = adaptive.aux_lms_step(aux, e_p[:, i], mu)
    except DivergenceError as exc:
        raise DivergenceError(str(exc.args[0]), sample=i, mu=mu) from None
    if not aux.H.is_finite():
        raise DivergenceError("auxiliary filters became non-finite", sample=cfg.n_samples - 1, mu=mu)
    trace = RunTrace("tuning_aux", cfg.algorithm, cfg.sample_rate, mu, cfg.nr_window,
                     {"d_p": d_p, "e_p": e_p, "e_h": e_h}, W=optimal_W.copy(), H=aux.H.copy())
    return aux.H.copy(), trace


def run_control_stage(cfg: StageConfig, plant: PathSet, h_o: FilterBank,
                      evaluate_virtual: bool = True) -> RunTrace:
    """Adapt fresh controllers on the auxiliary-corrected physical error.

    The virtual paths are read only to fill the evaluation series ``d_v`` and
    ``e_v`` and are skipped entirely with ``evaluate_virtual=False``.
    """
    _check_plant(cfg, plant)
    d = cfg.dims
    if h_o.shape != (d.M, d.J, cfg.n_h):
        raise ConfigurationError(f"auxiliary bank {h_o.shape} does not match config")
    clean, x = stage_signals(cfg.control_noise, d.J, cfg.n_samples, "control", cfg.seed)
    d_p = filter_bank_signals(plant.primary_physical, clean)
    mu = cfg.steps.mu3 if cfg.steps else auto_step_size(
        x, cfg.n_x, plant.secondary_physical_est, cfg.mu_scale, cfg.sample_rate)
    state = _controller_state(cfg, plant.secondary_physical_est, cfg.algorithm, ref_capacity=cfg.n_h)
    aux = AuxState(d.J, d.M, cfg.n_h, refs=state.refs, weights=h_o.copy())
    eval_d = eval_s = None
    if evaluate_virtual:
        eval_d = filter_bank_signals(plant.primary_virtual, clean)
        eval_s = plant.secondary_virtual.coeffs
    log.info("control stage: %s, mu=%.4g, %d samples", cfg.algorithm, mu, cfg.n_samples)
    e_p, e_h, e_v = _adapt(x, d_p, plant.secondary_physical.coeffs, state, cfg.algorithm, mu,
                           aux=aux, eval_d=eval_d, eval_s=eval_s)
    series = {"d_p": d_p, "e_p": e_p, "e_h": e_h}
    if evaluate_virtual:
        series.update(d_v=eval_d, e_v=e_v)
    return RunTrace("control", cfg.algorithm, cfg.sample_rate, mu, cfg.nr_window, series,
                    W=state.W.copy(), H=h_o.copy())


@dataclass
class PipelineResult:
    tuning_controllers: RunTrace
    tuning_aux: RunTrace
    control: RunTrace

    def traces(self) -> dict[str, RunTrace]:
        return {"tuning_controllers": self.tuning_controllers,
                "tuning_aux": self.tuning_aux, "control": self.control}


def run_pipeline(cfg: StageConfig, plant: PathSet) -> PipelineResult:
    """Tuning controllers, then auxiliary filters, then the control stage."""
    w_opt, t1 = run_tuning_controllers(cfg, plant)
    h_o, t2 = run_tuning_aux(cfg, plant, w_opt)
    t3 = run_control_stage(cfg, plant, h_o)
    return PipelineResult(t1, t2, t3)
