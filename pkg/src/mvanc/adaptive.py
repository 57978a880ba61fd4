"""Single-sample adaptive updates for the multichannel controller.

All steppers act on explicit state objects and mutate the filter banks in
place; given the same state and inputs they produce the same successor
state bit for bit.

Sign convention: the simulated plant superposes anti-noise on the
disturbance, ``e = d + sum_k s * y_k``, so subtracting ``mu * x * e'`` is a
descent step.  Both the adjoint (filtered-error) and the filtered-reference
update follow it, which makes them identical for a pure-gain path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dsp_core import FilterBank, TapBuffer
from .errors import ConfigurationError, DivergenceError
from .opcount import tally


@dataclass(frozen=True)
class SystemDims:
    """Channel counts: references J, sources K, physical mics M, virtual mics Q."""

    J: int
    K: int
    M: int
    Q: int

    def __post_init__(self):
        for name in ("J", "K", "M", "Q"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ConfigurationError(f"{name} must be a positive integer, got {value!r}")


@dataclass(frozen=True)
class StepSizes:
    mu1: float  # controller, tuning stage
    mu2: float  # auxiliary filters
    mu3: float  # controller, control stage

    def __post_init__(self):
        for name in ("mu1", "mu2", "mu3"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ConfigurationError(f"{name} must be a positive finite number, got {value!r}")


class ControlState:
    """Controller bank plus the delay lines both update rules read.

    ``path_est`` is the estimated secondary-path bank ``(E, K, L)`` from the
    sources to whichever error sensors drive adaptation (virtual mics while
    tuning, physical mics in the control stage).  The reference buffer holds
    ``N_x + L - 1`` lags so both ``x_j(n)`` and ``x_j(n-L+1)`` can be read.
    ``filtered_refs`` is only allocated for the filtered-reference update.
    """

    def __init__(self, n_refs: int, n_taps: int, path_est: FilterBank,
                 filtered_reference: bool = False, refs: TapBuffer | None = None,
                 weights: FilterBank | None = None):
        n_err, n_src, path_len = path_est.shape
        self.n_taps = n_taps
        self.path_len = path_len
        self.path_est = path_est
        if weights is None:
            weights = FilterBank.zeros(n_src, n_refs, n_taps)
        elif weights.shape != (n_src, n_refs, n_taps):
            raise ConfigurationError(
                f"controller bank shape {weights.shape} != {(n_src, n_refs, n_taps)}")
        self.W = weights
        if refs is None:
            refs = TapBuffer(n_taps + path_len - 1, channels=n_refs)
        refs.require(n_taps + path_len - 1)
        if refs.channels != n_refs:
            raise ConfigurationError("reference buffer channel count does not match J")
        self.refs = refs
        self.errors = TapBuffer(path_len, channels=n_err)
        self.filtered_refs = None
        if filtered_reference:
            self.filtered_refs = TapBuffer(n_taps, channels=n_refs * n_src * n_err)
        # path reversed along the lag axis, so it lines up with newest-first error lags
        self._path_rev = np.ascontiguousarray(path_est.coeffs[:, :, ::-1])

    @property
    def dims(self) -> tuple[int, int, int]:
        """(J, K, E)"""
        return self.W.cols, self.W.rows, self.path_est.rows


class AuxState:
    """Auxiliary filter bank ``H`` (M x J x N_h) and its reference taps."""

    def __init__(self, n_refs: int, n_err: int, n_taps: int, refs: TapBuffer | None = None,
                 weights: FilterBank | None = None):
        if weights is None:
            weights = FilterBank.zeros(n_err, n_refs, n_taps)
        elif weights.shape != (n_err, n_refs, n_taps):
            raise ConfigurationError(
                f"auxiliary bank shape {weights.shape} != {(n_err, n_refs, n_taps)}")
        self.H = weights
        self.n_taps = n_taps
        if refs is None:
            refs = TapBuffer(n_taps, channels=n_refs)
        refs.require(n_taps)
        self.refs = refs


def _finite(v: np.ndarray) -> bool:
    # cheaper than np.isfinite for the handful of channels seen per sample
    return all(map(math.isfinite, v.tolist()))


def control_output(state: ControlState) -> np.ndarray:
    """Anti-noise drive ``y_k = sum_j <w_kj, x_j(n)>`` for every source."""
    K, J, N = state.W.shape
    tally("control_output", K * J * N, K * (J * N - 1))
    x = state.refs.vector(N)
    return np.dot(state.W.coeffs.reshape(K, J * N), x.reshape(J * N))


def filtered_error_sums(state: ControlState) -> np.ndarray:
    """Per-source sum over error channels of the time-reversed filtered error.

    Uses the last ``L`` error samples pushed into ``state.errors``; entry
    ``k`` equals ``sum_e time_reversed_filter(window_e, path_est[e, k])``.
    """
    J, K, E = state.dims
    L = state.path_len
    tally("time_reversed_filter", K * E * L, K * E * (L - 1))
    tally("error_summation", 0, K * (E - 1))
    lags = state.errors.vector(L)
    return np.einsum("ekl,el->k", state._path_rev, lags)


def mcalms_step(state: ControlState, filtered_error_sums: np.ndarray, mu: float) -> ControlState:
    """Adjoint LMS update ``w_kj -= mu * x_j(n-L+1) * sum_e e'_ke(n)``."""
    K, J, N = state.W.shape
    sums = np.asarray(filtered_error_sums, dtype=np.float64)
    if not _finite(sums):
        raise DivergenceError("non-finite filtered error in adjoint update", mu=mu)
    tally("weight_update", K + K * J * N, K * J * N)
    delayed = state.refs.vector(N, state.path_len - 1)
    state.W.coeffs -= (mu * sums)[:, None, None] * delayed[None, :, :]
    return state


def push_filtered_reference(state: ControlState) -> None:
    """Advance the filtered-reference lines by one sample.

    Each ``(j, k, e)`` line receives ``sum_l path_est[e, k, l] * x_j(n-l)``.
    """
    J, K, E = state.dims
    L = state.path_len
    tally("reference_filtering", J * K * E * L, J * K * E * (L - 1))
    x = state.refs.vector(L)
    xf = np.einsum("ekl,jl->jke", state.path_est.coeffs, x)
    state.filtered_refs.push(xf.reshape(-1))


def mcfxlms_step(state: ControlState, errors: np.ndarray, mu: float) -> ControlState:
    """Filtered-reference LMS update ``w_kj -= mu * sum_e e_e(n) x'_jke(n)``.

    Advances the filtered-reference lines first, so ``state.refs`` must
    already hold ``x(n)``.
    """
    if state.filtered_refs is None:
        raise ConfigurationError("state was built without filtered-reference buffers")
    errors = np.asarray(errors, dtype=np.float64)
    if not _finite(errors):
        raise DivergenceError("non-finite error in filtered-reference update", mu=mu)
    push_filtered_reference(state)
    J, K, E = state.dims
    N = state.n_taps
    tally("weight_update", J * K * E + J * K * E * N, J * K * (E - 1) * N + J * K * N)
    xf = state.filtered_refs.vector(N).reshape(J, K, E, N)
    grad = np.einsum("e,jken->kjn", mu * errors, xf)
    state.W.coeffs -= grad
    return state


def _aux_prediction(aux: AuxState) -> np.ndarray:
    M, J, N = aux.H.shape
    tally("aux_filtering", M * J * N, M * (J * N - 1) + M)
    return np.einsum("mjn,jn->m", aux.H.coeffs, aux.refs.vector(N))


def aux_lms_step(state: AuxState, physical_errors, mu: float) -> tuple[AuxState, np.ndarray]:
    """LMS identification step for the auxiliary filters.

    The inner error ``e_h = e_p - sum_j h_mj^T xbar_j`` is formed with the
    current filters, then used to update them.
    """
    e_p = np.asarray(physical_errors, dtype=np.float64)
    if not _finite(e_p):
        raise DivergenceError("non-finite physical error in auxiliary update", mu=mu)
    inner = e_p - _aux_prediction(state)
    M, J, N = state.H.shape
    tally("aux_update", M + M * J * N, M * J * N)
    state.H.coeffs += (mu * inner)[:, None, None] * state.refs.vector(N)[None, :, :]
    if not _finite(inner):
        raise DivergenceError("non-finite inner error in auxiliary update", mu=mu)
    return state, inner


def control_stage_inner_error(physical_errors, aux: AuxState) -> np.ndarray:
    """Physical error minus the frozen auxiliary-filter prediction."""
    return np.asarray(physical_errors, dtype=np.float64) - _aux_prediction(aux)
