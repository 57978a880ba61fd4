import numpy as np
import pytest
from hypothesis import given, strategies as st

from mvanc import adaptive
from mvanc.adaptive import AuxState, ControlState, StepSizes, SystemDims
from mvanc.dsp_core import FilterBank, TapBuffer
from mvanc.errors import ConfigurationError, DivergenceError


def state(J=1, K=1, E=1, N=1, L=1, path=None, fxlms=False, W=None):
    path = FilterBank(np.ones((E, K, L)) if path is None else path)
    return ControlState(J, N, path, filtered_reference=fxlms,
                        weights=None if W is None else FilterBank(W))


def test_dims_and_steps_validate():
    with pytest.raises(ConfigurationError):
        SystemDims(0, 1, 1, 1)
    with pytest.raises(ConfigurationError):
        StepSizes(1e-3, 0.0, 1e-3)
    assert SystemDims(4, 2, 4, 4).K == 2


def test_buffer_capacity_checked_at_construction():
    with pytest.raises(ConfigurationError):
        ControlState(1, 8, FilterBank(np.ones((1, 1, 4))), refs=TapBuffer(10, channels=1))


class TestControlOutput:
    def test_zero_filters(self, rng):
        s = state(J=3, K=2, E=1, N=4)
        s.refs.push(rng.standard_normal(3))
        np.testing.assert_array_equal(adaptive.control_output(s), [0, 0])

    def test_identity(self):
        s = state(W=np.ones((1, 1, 1)))
        s.refs.push([0.7])
        assert adaptive.control_output(s)[0] == 0.7

    def test_hand_example(self):
        s = state(J=2, W=np.array([[[1.0], [2.0]]]))
        s.refs.push([3.0, 5.0])
        assert adaptive.control_output(s)[0] == 13.0


class TestMcalms:
    def test_zero_error_or_step_leaves_weights(self, rng):
        s = state(J=2, K=2, E=3, N=5, L=4, W=rng.standard_normal((2, 2, 5)),
                  path=rng.standard_normal((3, 2, 4)))
        for _ in range(9):
            s.refs.push(rng.standard_normal(2))
        before = s.W.copy()
        adaptive.mcalms_step(s, np.zeros(2), 0.3)
        adaptive.mcalms_step(s, np.ones(2), 0.0)
        assert s.W == before

    def test_hand_example(self):
        s = state()
        s.refs.push([2.0])
        adaptive.mcalms_step(s, [3.0], 0.1)
        assert s.W.coeffs[0, 0, 0] == pytest.approx(-0.6, abs=1e-15)

    def test_nonfinite_error_raises(self):
        s = state()
        with pytest.raises(DivergenceError):
            adaptive.mcalms_step(s, [np.inf], 0.1)

    def test_filtered_error_sums_match_per_channel_reference(self, rng):
        from mvanc.dsp_core import FirFilter, time_reversed_filter

        J, K, E, N, L = 2, 3, 2, 4, 5
        path = rng.standard_normal((E, K, L))
        s = state(J, K, E, N, L, path=path)
        for _ in range(7):
            s.errors.push(rng.standard_normal(E))
        want = [sum(time_reversed_filter(s.errors.window(L)[e], FirFilter(path[e, k])) for e in range(E))
                for k in range(K)]
        np.testing.assert_allclose(adaptive.filtered_error_sums(s), want, rtol=1e-12)


class TestMcfxlms:
    def test_zero_error(self, rng):
        s = state(J=2, K=2, E=2, N=3, L=2, fxlms=True, W=rng.standard_normal((2, 2, 3)))
        s.refs.push(rng.standard_normal(2))
        before = s.W.copy()
        adaptive.mcfxlms_step(s, np.zeros(2), 0.5)
        assert s.W == before

    def test_requires_filtered_reference_buffers(self):
        with pytest.raises(ConfigurationError):
            adaptive.mcfxlms_step(state(), [1.0], 0.1)

    def test_pure_gain_path_matches_adjoint_update(self, rng):
        a = state(N=4, path=np.array([[[0.8]]]))
        b = state(N=4, path=np.array([[[0.8]]]), fxlms=True)
        for _ in range(10):
            x, e = rng.standard_normal(1), rng.standard_normal(1)
            for s in (a, b):
                s.refs.push(x)
                s.errors.push(e)
            adaptive.mcalms_step(a, adaptive.filtered_error_sums(a), 0.05)
            adaptive.mcfxlms_step(b, e, 0.05)
            np.testing.assert_allclose(a.W.coeffs, b.W.coeffs, rtol=1e-12, atol=1e-15)


def accumulated_increments(x, e, s_hat, N, mu=1.0):
    """Sum of per-sample weight increments of both rules, W frozen at zero.

    The record is zero-padded by L-1 samples so the delayed adjoint update
    sees every error sample.
    """
    L = len(s_hat)
    pad = np.zeros(L - 1)
    xp, ep = np.concatenate([x, pad]), np.concatenate([e, pad])
    path = s_hat[None, None, :]
    a = state(N=N, L=L, path=path)
    b = state(N=N, L=L, path=path, fxlms=True)
    da = np.zeros(N)
    db = np.zeros(N)
    for n in range(len(xp)):
        for s in (a, b):
            s.refs.push([xp[n]])
            s.errors.push([ep[n]])
        a.W.coeffs[:] = 0
        b.W.coeffs[:] = 0
        adaptive.mcalms_step(a, adaptive.filtered_error_sums(a), mu)
        adaptive.mcfxlms_step(b, [ep[n]], mu)
        da += a.W.coeffs[0, 0]
        db += b.W.coeffs[0, 0]
    return da, db


@given(st.integers(0, 2**32 - 1), st.integers(1, 8), st.integers(1, 8))
def test_accumulated_increments_agree(seed, N, L):
    r = np.random.default_rng(seed)
    n = 64
    # errors confined to the record so the padded tail closes every sum
    x = r.standard_normal(n)
    e = np.concatenate([r.standard_normal(n - N), np.zeros(N)])
    da, db = accumulated_increments(x, e, r.standard_normal(L), N)
    assert np.max(np.abs(da - db)) <= 1e-9 * max(np.max(np.abs(db)), 1e-300)


def test_fixed_point_when_errors_vanish(rng):
    s = state(J=2, K=2, E=2, N=4, L=3, path=rng.standard_normal((2, 2, 3)), fxlms=True,
              W=rng.standard_normal((2, 2, 4)))
    before = s.W.copy()
    for _ in range(20):
        s.refs.push(rng.standard_normal(2))
        s.errors.push(np.zeros(2))
        adaptive.mcfxlms_step(s, np.zeros(2), 0.1)
    assert s.W == before


@pytest.mark.parametrize("rule", ["mcalms", "mcfxlms"])
def test_sign_sanity_one_step_reduces_error(rule):
    # scalar plant e = d + s*y with positive gain path: one step pulls s*y toward -d
    g, d, x = 0.7, 1.0, 1.0
    s = state(path=np.array([[[g]]]), fxlms=(rule == "mcfxlms"))
    s.refs.push([x])
    e0 = d + g * adaptive.control_output(s)[0]
    s.errors.push([e0])
    if rule == "mcalms":
        adaptive.mcalms_step(s, adaptive.filtered_error_sums(s), 0.1)
    else:
        adaptive.mcfxlms_step(s, [e0], 0.1)
    e1 = d + g * adaptive.control_output(s)[0]
    assert abs(e1) < abs(e0)


def test_steppers_are_pure(rng):
    def run():
        r = np.random.default_rng(7)
        s = state(J=2, K=2, E=2, N=6, L=3, path=r.standard_normal((2, 2, 3)), fxlms=True)
        for _ in range(30):
            s.refs.push(r.standard_normal(2))
            e = r.standard_normal(2)
            s.errors.push(e)
            adaptive.mcfxlms_step(s, e, 0.01)
            adaptive.mcalms_step(s, adaptive.filtered_error_sums(s), 0.01)
        return s.W.coeffs.tobytes()

    assert run() == run()


class TestAux:
    def test_converged_fixed_point(self, rng):
        aux = AuxState(2, 3, 4, weights=FilterBank(rng.standard_normal((3, 2, 4))))
        aux.refs.push(rng.standard_normal(2))
        target = adaptive.control_stage_inner_error(np.zeros(3), aux) * -1
        before = aux.H.copy()
        _, inner = adaptive.aux_lms_step(aux, target, 0.5)
        np.testing.assert_allclose(inner, 0, atol=1e-15)
        np.testing.assert_allclose(aux.H.coeffs, before.coeffs, atol=1e-15)

    def test_zero_step_still_reports_inner_error(self):
        aux = AuxState(1, 1, 1)
        aux.refs.push([1.0])
        _, inner = adaptive.aux_lms_step(aux, [3.0], 0.0)
        assert inner[0] == 3.0 and aux.H.coeffs[0, 0, 0] == 0

    def test_hand_example(self):
        mu2 = 0.01
        aux = AuxState(1, 1, 1)
        aux.refs.push([2.0])
        _, inner = adaptive.aux_lms_step(aux, [4.0], mu2)
        assert inner[0] == 4.0
        assert aux.H.coeffs[0, 0, 0] == pytest.approx(8 * mu2)

    def test_nonfinite(self):
        aux = AuxState(1, 1, 1)
        with pytest.raises(DivergenceError):
            adaptive.aux_lms_step(aux, [np.nan], 0.1)


class TestInnerError:
    def test_zero_filters_pass_through(self, rng):
        aux = AuxState(2, 3, 4)
        aux.refs.push(rng.standard_normal(2))
        e = rng.standard_normal(3)
        np.testing.assert_array_equal(adaptive.control_stage_inner_error(e, aux), e)

    def test_perfect_prediction(self, rng):
        aux = AuxState(2, 3, 4, weights=FilterBank(rng.standard_normal((3, 2, 4))))
        aux.refs.push(rng.standard_normal(2))
        pred = -adaptive.control_stage_inner_error(np.zeros(3), aux)
        np.testing.assert_allclose(adaptive.control_stage_inner_error(pred, aux), 0, atol=1e-15)

    def test_hand_example(self):
        aux = AuxState(1, 1, 1, weights=FilterBank(np.array([[[2.0]]])))
        aux.refs.push([1.5])
        assert adaptive.control_stage_inner_error([5.0], aux)[0] == 2.0
