"""FIR primitives: tap vectors, tapped delay lines and the adjoint kernel.

Conventions used everywhere in the package:

* samples before the start of a stream are zero;
* tap vectors read out of a :class:`TapBuffer` are newest-first,
  ``[u(n), u(n-1), ...]``, so a filter output is a plain dot product;
* the error window fed to :func:`time_reversed_filter` is oldest-first,
  ``[e(n-L+1), ..., e(n)]``, so that index ``i`` of the window pairs with
  path coefficient ``i``.  :meth:`TapBuffer.window` does that conversion.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .opcount import tally


@dataclass
class FirFilter:
    """A single FIR response (control, auxiliary or path filter)."""

    taps: np.ndarray

    def __post_init__(self):
        taps = np.asarray(self.taps, dtype=np.float64)
        if taps.ndim != 1 or taps.size < 1:
            raise ConfigurationError("an FIR filter needs a 1-D tap vector of length >= 1")
        if not np.all(np.isfinite(taps)):
            raise ConfigurationError("FIR taps must be finite")
        self.taps = taps

    @property
    def length(self) -> int:
        return self.taps.size

    def __len__(self):
        return self.taps.size

    @classmethod
    def impulse(cls, length: int, at: int = 0) -> "FirFilter":
        taps = np.zeros(length)
        taps[at] = 1.0
        return cls(taps)


class FilterBank:
    """Grid of equal-length FIR filters indexed ``(destination, source)``.

    Coefficients live in one ``(rows, cols, length)`` array so the adaptive
    updates can work on the whole bank at once.  Indexing a bank returns a
    :class:`FirFilter` that shares memory with the bank.
    """

    def __init__(self, coeffs):
        coeffs = np.array(coeffs, dtype=np.float64)
        if coeffs.ndim != 3 or min(coeffs.shape) < 1:
            raise ConfigurationError(
                f"filter bank coefficients must be (rows, cols, length), got shape {coeffs.shape}")
        self.coeffs = coeffs

    @classmethod
    def zeros(cls, rows: int, cols: int, length: int) -> "FilterBank":
        return cls(np.zeros((rows, cols, length)))

    @classmethod
    def from_filters(cls, grid) -> "FilterBank":
        lengths = {len(f) for row in grid for f in row}
        if len(lengths) != 1:
            raise ConfigurationError(f"filters in a bank must share one length, got {sorted(lengths)}")
        return cls([[f.taps for f in row] for row in grid])

    @property
    def rows(self) -> int:
        return self.coeffs.shape[0]

    @property
    def cols(self) -> int:
        return self.coeffs.shape[1]

    @property
    def length(self) -> int:
        return self.coeffs.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.coeffs.shape

    def __getitem__(self, index) -> FirFilter:
        r, c = index
        f = FirFilter.__new__(FirFilter)
        f.taps = self.coeffs[r, c]
        return f

    def copy(self) -> "FilterBank":
        return FilterBank(self.coeffs.copy())

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.coeffs)))

    def __eq__(self, other):
        if not isinstance(other, FilterBank):
            return NotImplemented
        return self.coeffs.shape == other.coeffs.shape and np.array_equal(self.coeffs, other.coeffs)

    def __repr__(self):
        return f"FilterBank(rows={self.rows}, cols={self.cols}, length={self.length})"


class TapBuffer:
    """Sliding window over the most recent ``capacity`` samples.

    With ``channels`` set, one buffer holds that many parallel streams and
    every read returns a ``(channels, n)`` array.  Storage is doubled so that
    every window is a contiguous, newest-first view; reads are views and must
    be copied by callers that keep them across a push.
    """

    def __init__(self, capacity: int, channels: int | None = None):
        if capacity < 1:
            raise ConfigurationError("tap buffer capacity must be >= 1")
        if channels is not None and channels < 1:
            raise ConfigurationError("tap buffer channel count must be >= 1")
        self.capacity = int(capacity)
        self.channels = channels
        shape = (2 * capacity,) if channels is None else (channels, 2 * capacity)
        self._data = np.zeros(shape)
        self._pos = 0
        self.count = 0

    def push(self, sample) -> None:
        cap = self.capacity
        self._pos = (self._pos - 1) % cap
        self._data[..., self._pos] = sample
        self._data[..., self._pos + cap] = sample
        self.count += 1

    def require(self, n: int) -> None:
        """Raise unless ``n`` lags fit.  Meant for construction-time checks."""
        if n > self.capacity:
            raise ConfigurationError(
                f"tap buffer holds {self.capacity} samples but {n} lags are needed")

    def vector(self, n: int, delay: int = 0) -> np.ndarray:
        """Newest-first lags ``delay .. delay+n-1`` (a view)."""
        start = self._pos + delay
        return self._data[..., start:start + n]

    def window(self, n: int) -> np.ndarray:
        """Oldest-first window ``[u(n-N+1), ..., u(n)]`` (a view)."""
        start = self._pos
        return self._data[..., start + n - 1 : (start - 1 if start > 0 else None) : -1]

    def history(self) -> np.ndarray:
        return self.vector(self.capacity).copy()


def convolve_stream(buffer: TapBuffer, fir: FirFilter) -> float:
    """Current output of ``fir`` driven by the stream held in ``buffer``."""
    n = fir.length
    buffer.require(n)
    tally("convolve", n, n - 1)
    return float(np.dot(fir.taps, buffer.vector(n)))


def delayed_reference(buffer: TapBuffer, delay: int, n_taps: int) -> np.ndarray:
    """``[u(n-delay), ..., u(n-delay-n_taps+1)]`` as a fresh array."""
    if delay < 0 or n_taps < 1:
        raise ConfigurationError("delay must be >= 0 and n_taps >= 1")
    buffer.require(delay + n_taps)
    return buffer.vector(n_taps, delay).copy()


def time_reversed_filter(error_window, path: FirFilter) -> float:
    """Adjoint filtering of an error window through a path estimate.

    ``error_window`` is ``[e(n-L+1), ..., e(n)]``; the result is
    ``sum_i error_window[i] * path[i]``, i.e. the error run backwards through
    the path and delayed by ``L-1`` samples so it stays causal.
    """
    window = np.asarray(error_window, dtype=np.float64)
    if window.shape != (path.length,):
        raise ValueError(
            f"error window of shape {window.shape} does not match a path of length {path.length}")
    tally("time_reversed_filter", path.length, path.length - 1)
    return float(np.dot(window, path.taps))
