"""Synthetic plant: band-pass acoustic paths, noise sources, sensor noise."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from .adaptive import SystemDims
from .dsp_core import FilterBank, FirFilter
from .errors import ConfigurationError

_GRID = 8192


def _check_band(f_low, f_high, sample_rate):
    if not (0 < f_low < f_high < sample_rate / 2):
        raise ConfigurationError(
            f"band ({f_low}, {f_high}) Hz is not inside (0, {sample_rate / 2}) Hz")


def design_bandpass_fir(f_low: float, f_high: float, sample_rate: float, n_taps: int,
                        seed: int = 0, jitter: bool = True) -> FirFilter:
    """Windowed-sinc band-pass FIR normalised to unit peak gain.

    With ``jitter`` the response is given a seeded bulk delay (up to a quarter
    of the length), a fractional centre offset, a gain in [0.6, 1] and a random
    polarity, so filters drawn with different seeds behave like distinct
    acoustic paths with the same pass band.  Without it the result is the
    linear-phase prototype and ``seed`` is ignored.

    Design mask (checked by the test suite for 128 taps, 500-5000 Hz at
    16 kHz): passband ripple at most 0.5 dB peak to peak over the band shrunk
    by 200 Hz per edge, passband level within [-5, 0] dB, and at least 40 dB
    of attenuation below f_low - 400 Hz and above f_high + 1500 Hz.
    """
    _check_band(f_low, f_high, sample_rate)
    if n_taps < 8:
        raise ConfigurationError("band-pass design needs at least 8 taps")
    rng = np.random.default_rng(seed)
    if jitter:
        max_delay = n_taps // 4
        delay = int(rng.integers(0, max_delay + 1))
        frac = rng.uniform(-0.5, 0.5)
        gain = rng.uniform(0.6, 1.0)
        polarity = rng.choice([-1.0, 1.0])
    else:
        max_delay, delay, frac, gain, polarity = 0, 0, 0.0, 1.0, 1.0

    proto_len = n_taps - max_delay
    m = np.arange(proto_len) - ((proto_len - 1) / 2 + frac)
    lo, hi = f_low / sample_rate, f_high / sample_rate
    proto = 2 * hi * np.sinc(2 * hi * m) - 2 * lo * np.sinc(2 * lo * m)
    proto *= signal.windows.hamming(proto_len, sym=True)
    proto /= np.abs(np.fft.rfft(proto, _GRID)).max()

    taps = np.zeros(n_taps)
    taps[delay:delay + proto_len] = polarity * gain * proto
    return FirFilter(taps)


def magnitude_response_db(taps, sample_rate: float, n_points: int = 1024,
                          floor_db: float = -120.0) -> tuple[np.ndarray, np.ndarray]:
    """``(freqs, |H| in dB)`` on ``n_points`` bins from DC to Nyquist, floored."""
    taps = np.asarray(taps, dtype=np.float64)
    freqs, h = signal.freqz(taps, worN=n_points, fs=sample_rate)
    mag = np.abs(h)
    with np.errstate(divide="ignore"):
        db = 20 * np.log10(mag)
    return freqs, np.maximum(db, floor_db)


@dataclass(frozen=True)
class NoiseSpec:
    distribution: str = "gaussian"
    band: tuple[float, float] = (800.0, 1800.0)
    sample_rate: float = 16000.0
    seed: int = 0
    snr_db: float | None = 40.0
    shaping_taps: int = 513

    def __post_init__(self):
        if self.distribution not in ("gaussian", "uniform"):
            raise ConfigurationError(f"unknown noise distribution {self.distribution!r}")
        _check_band(self.band[0], self.band[1], self.sample_rate)


def white_noise(distribution: str, n_samples: int, rng: np.random.Generator) -> np.ndarray:
    """Zero-mean, unit-variance white noise."""
    if distribution == "gaussian":
        return rng.standard_normal(n_samples)
    if distribution == "uniform":
        r = np.sqrt(3.0)
        return rng.uniform(-r, r, n_samples)
    raise ConfigurationError(f"unknown noise distribution {distribution!r}")


def generate_noise(spec: NoiseSpec, n_samples: int) -> np.ndarray:
    """Band-limited noise, scaled so the shaped sequence has unit variance in theory.

    The shaping filter is primed with ``shaping_taps`` extra samples so the
    sequence starts in steady state.
    """
    if n_samples < 1:
        raise ConfigurationError("n_samples must be >= 1")
    rng = np.random.default_rng(spec.seed)
    shaping = design_bandpass_fir(*spec.band, spec.sample_rate, spec.shaping_taps, jitter=False)
    warm = spec.shaping_taps
    raw = white_noise(spec.distribution, n_samples + warm, rng)
    shaped = signal.lfilter(shaping.taps, 1.0, raw)[warm:]
    return shaped / np.sqrt(np.sum(shaping.taps ** 2))


def add_measurement_noise(clean, snr_db: float | None, seed: int) -> np.ndarray:
    """Add white Gaussian noise at exactly ``snr_db`` (measured over the vector).

    ``snr_db`` of ``None`` or ``inf`` returns an unmodified copy.
    """
    clean = np.asarray(clean, dtype=np.float64)
    if snr_db is None or np.isposinf(snr_db):
        return clean.copy()
    p_clean = np.mean(clean ** 2)
    if p_clean == 0:
        raise ConfigurationError("SNR is undefined for a zero-power signal")
    noise = np.random.default_rng(seed).standard_normal(clean.shape)
    noise *= np.sqrt(p_clean / 10 ** (snr_db / 10) / np.mean(noise ** 2))
    return clean + noise


@dataclass(frozen=True)
class PlantConfig:
    """How a synthetic plant is drawn.

    ``virtual_primary="span"`` builds each virtual primary path as
    ``sum_k s_v[q, k] * g[k, j]`` with seeded band-pass ``g``, which gives the
    K-source controller an exact optimum at the virtual mics even when K < Q.
    ``"independent"`` draws them like every other path.
    ``physical_secondary_gain_db`` scales the sources-to-physical-mic paths,
    modelling physical mics that sit closer to the loudspeakers than the
    virtual ones.  ``estimate_jitter_db`` is the spread of a per-tap
    multiplicative gain error applied to the secondary-path estimates; 0
    means exact copies.  ``response_taps`` caps the non-zero part of every
    drawn response (delay jitter included) and zero-pads it to the stated
    path length; ``None`` lets each response fill its whole length.
    """

    primary_taps: int = 128
    secondary_taps: int = 32
    band: tuple[float, float] = (500.0, 5000.0)
    sample_rate: float = 16000.0
    seed: int = 1
    virtual_primary: str = "span"
    physical_secondary_gain_db: float = 6.0
    estimate_jitter_db: float = 0.0
    response_taps: int | None = None

    def __post_init__(self):
        if self.virtual_primary not in ("span", "independent"):
            raise ConfigurationError(f"unknown virtual_primary mode {self.virtual_primary!r}")
        if self.primary_taps < 8 or self.secondary_taps < 8:
            raise ConfigurationError("path lengths must be >= 8 taps")
        if self.virtual_primary == "span" and self.primary_taps - self.secondary_taps + 1 < 8:
            raise ConfigurationError("span mode needs primary_taps >= secondary_taps + 7")
        if self.estimate_jitter_db < 0:
            raise ConfigurationError("estimate_jitter_db must be >= 0")
        if self.response_taps is not None and self.response_taps < 8:
            raise ConfigurationError("response_taps must be >= 8")
        _check_band(self.band[0], self.band[1], self.sample_rate)


@dataclass
class PathSet:
    """All acoustic paths of one plant, each bank indexed (sensor, source)."""

    dims: SystemDims
    primary_physical: FilterBank     # M x J
    primary_virtual: FilterBank      # Q x J
    secondary_physical: FilterBank   # M x K
    secondary_physical_est: FilterBank
    secondary_virtual: FilterBank    # Q x K
    secondary_virtual_est: FilterBank
    meta: dict = field(default_factory=dict)

    BANKS = ("primary_physical", "primary_virtual", "secondary_physical",
             "secondary_physical_est", "secondary_virtual", "secondary_virtual_est")

    def __post_init__(self):
        d = self.dims
        expected = {
            "primary_physical": (d.M, d.J),
            "primary_virtual": (d.Q, d.J),
            "secondary_physical": (d.M, d.K),
            "secondary_physical_est": (d.M, d.K),
            "secondary_virtual": (d.Q, d.K),
            "secondary_virtual_est": (d.Q, d.K),
        }
        for name, shape in expected.items():
            bank = getattr(self, name)
            if (bank.rows, bank.cols) != shape:
                raise ConfigurationError(f"{name} is {bank.rows}x{bank.cols}, expected {shape[0]}x{shape[1]}")
        if self.secondary_physical_est.length != self.secondary_physical.length:
            raise ConfigurationError("physical secondary estimate length differs from the true path")
        if self.secondary_virtual_est.length != self.secondary_virtual.length:
            raise ConfigurationError("virtual secondary estimate length differs from the true path")
        if self.secondary_physical.length != self.secondary_virtual.length:
            raise ConfigurationError("physical and virtual secondary paths must share one length L")

    @property
    def secondary_length(self) -> int:
        return self.secondary_physical.length

    def banks(self) -> dict[str, FilterBank]:
        return {name: getattr(self, name) for name in self.BANKS}


def _draw_bank(rows, cols, n_taps, cfg: PlantConfig, seeds) -> FilterBank:
    n_resp = min(n_taps, cfg.response_taps or n_taps)
    coeffs = np.zeros((rows, cols, n_taps))
    for r in range(rows):
        for c in range(cols):
            coeffs[r, c, :n_resp] = design_bandpass_fir(*cfg.band, cfg.sample_rate, n_resp,
                                                        seed=next(seeds)).taps
    return FilterBank(coeffs)


def _perturb(bank: FilterBank, spread_db: float, rng: np.random.Generator) -> FilterBank:
    if spread_db == 0:
        return bank.copy()
    gains = 10 ** (spread_db * rng.standard_normal(bank.shape) / 20)
    return FilterBank(bank.coeffs * gains)


def synth_pathset(dims: SystemDims, cfg: PlantConfig = PlantConfig()) -> PathSet:
    """Draw a full plant; a pure function of ``(dims, cfg)``."""
    ss = np.random.SeedSequence(cfg.seed)
    seeds = iter(int(s.generate_state(1)[0]) for s in ss.spawn(
        dims.M * dims.J + dims.Q * dims.J + (dims.M + dims.Q) * dims.K + dims.K * dims.J))
    primary_physical = _draw_bank(dims.M, dims.J, cfg.primary_taps, cfg, seeds)
    secondary_physical = _draw_bank(dims.M, dims.K, cfg.secondary_taps, cfg, seeds)
    secondary_physical.coeffs *= 10 ** (cfg.physical_secondary_gain_db / 20)
    secondary_virtual = _draw_bank(dims.Q, dims.K, cfg.secondary_taps, cfg, seeds)
    if cfg.virtual_primary == "span":
        g_len = cfg.primary_taps - cfg.secondary_taps + 1
        g = _draw_bank(dims.K, dims.J, g_len, cfg, seeds).coeffs
        pv = np.zeros((dims.Q, dims.J, cfg.primary_taps))
        for q in range(dims.Q):
            for j in range(dims.J):
                for k in range(dims.K):
                    pv[q, j] += np.convolve(secondary_virtual.coeffs[q, k], g[k, j])
        primary_virtual = FilterBank(pv)
    else:
        primary_virtual = _draw_bank(dims.Q, dims.J, cfg.primary_taps, cfg, seeds)

    est_rng = np.random.default_rng(ss.spawn(1)[0])
    return PathSet(
        dims=dims,
        primary_physical=primary_physical,
        primary_virtual=primary_virtual,
        secondary_physical=secondary_physical,
        secondary_physical_est=_perturb(secondary_physical, cfg.estimate_jitter_db, est_rng),
        secondary_virtual=secondary_virtual,
        secondary_virtual_est=_perturb(secondary_virtual, cfg.estimate_jitter_db, est_rng),
        meta={"band": list(cfg.band), "sample_rate": cfg.sample_rate, "seed": cfg.seed,
              "virtual_primary": cfg.virtual_primary,
              "physical_secondary_gain_db": cfg.physical_secondary_gain_db,
              "estimate_jitter_db": cfg.estimate_jitter_db, "response_taps": cfg.response_taps},
    )


def filter_bank_signals(bank: FilterBank, inputs: np.ndarray) -> np.ndarray:
    """Drive a ``(rows, cols)`` bank with ``(cols, n)`` inputs; returns ``(rows, n)``."""
    inputs = np.atleast_2d(inputs)
    if inputs.shape[0] != bank.cols:
        raise ConfigurationError(f"bank has {bank.cols} inputs, got {inputs.shape[0]} signals")
    out = np.zeros((bank.rows, inputs.shape[1]))
    for r in range(bank.rows):
        for c in range(bank.cols):
            out[r] += signal.lfilter(bank.coeffs[r, c], 1.0, inputs[c])
    return out
