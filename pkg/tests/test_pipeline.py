from dataclasses import replace

import numpy as np
import pytest

from mvanc.acoustics import NoiseSpec, PlantConfig, synth_pathset
from mvanc.adaptive import StepSizes, SystemDims
from mvanc.dsp_core import FilterBank
from mvanc.errors import ConfigurationError, DivergenceError
from mvanc.pipeline import (StageConfig, auto_step_size, noise_reduction_db, run_control_stage,
                            run_pipeline, run_tuning_aux, run_tuning_controllers, stage_signals,
                            steady_state)

DIMS = SystemDims(2, 1, 2, 2)
PLANT_CFG = PlantConfig(primary_taps=48, secondary_taps=16, seed=3)


def small_cfg(**kw):
    base = dict(dims=DIMS, n_x=32, n_h=64, path_len=16, n_samples=6000, nr_window=256,
                tuning_noise=NoiseSpec(seed=1), control_noise=NoiseSpec(seed=2))
    base.update(kw)
    return StageConfig(**base)


@pytest.fixture(scope="module")
def plant():
    return synth_pathset(DIMS, PLANT_CFG)


def silent(plant, which):
    return replace(plant, **{name: FilterBank.zeros(*getattr(plant, name).shape) for name in which})


class TestNoiseReduction:
    def test_no_control(self, rng):
        d = rng.standard_normal(1000)
        curve, flags = noise_reduction_db(d, d, 100)
        np.testing.assert_allclose(curve, 0.0, atol=1e-9)
        assert not flags.any() and len(curve) == 901

    def test_exact_ratio(self, rng):
        d = rng.standard_normal(1000)
        curve, _ = noise_reduction_db(d, d / 10, 100)
        np.testing.assert_allclose(curve, 20.0, atol=1e-9)

    def test_clamp(self, rng):
        d = rng.standard_normal(500)
        curve, flags = noise_reduction_db(d, np.zeros(500), 50)
        assert np.all(curve == 80.0) and flags.all()
        curve, flags = noise_reduction_db(np.zeros(500), d, 50)
        assert np.all(curve == -80.0) and flags.all()

    def test_bad_window(self):
        with pytest.raises(ConfigurationError):
            noise_reduction_db(np.ones(10), np.ones(10), 11)

    def test_steady_state_is_median_of_last_tenth(self):
        curve = np.concatenate([np.zeros(90), np.arange(10.0)])
        assert steady_state(curve) == 4.5


class TestStepSize:
    def test_inverse_in_taps_and_power(self, rng):
        x = rng.standard_normal((2, 20000))
        mu = auto_step_size(x, 64, None, 1.0)
        assert auto_step_size(x, 128, None, 1.0) == pytest.approx(mu / 2)
        assert auto_step_size(2 * x, 64, None, 1.0) == pytest.approx(mu / 4)

    def test_path_gain(self, rng):
        x = rng.standard_normal((1, 20000))
        path = FilterBank(np.array([[[3.0]]]))
        assert auto_step_size(x, 8, path, 1.0) == pytest.approx(auto_step_size(x, 8, None, 1.0) / 9)

    def test_zero_power(self):
        with pytest.raises(ConfigurationError):
            auto_step_size(np.zeros((1, 4096)), 8, None, 1.0)


def test_stage_signals_are_seeded_per_stage():
    spec = NoiseSpec(seed=4)
    a, xa = stage_signals(spec, 2, 2000, "tuning_controllers")
    b, xb = stage_signals(spec, 2, 2000, "tuning_controllers")
    c, _ = stage_signals(spec, 2, 2000, "control")
    np.testing.assert_array_equal(xa, xb)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a[0], a[1])
    snr = 10 * np.log10(np.mean(a ** 2) / np.mean((xa - a) ** 2))
    assert 39.9 <= snr <= 40.1


def test_config_validation(plant):
    with pytest.raises(ConfigurationError):
        small_cfg(n_samples=10)
    with pytest.raises(ConfigurationError):
        small_cfg(algorithm="nlms")
    with pytest.raises(ConfigurationError):
        small_cfg(tuning_noise=NoiseSpec(sample_rate=8000, band=(800, 1800)))
    with pytest.raises(ConfigurationError):
        run_tuning_controllers(small_cfg(path_len=8), plant)
    with pytest.raises(ConfigurationError):
        run_tuning_aux(small_cfg(), plant, FilterBank.zeros(1, 2, 8))


@pytest.mark.parametrize("algorithm", ["mcalms", "mcfxlms"])
def test_nothing_to_cancel_leaves_controllers_at_zero(plant, algorithm):
    quiet = silent(plant, ["primary_virtual", "primary_physical"])
    W, _ = run_tuning_controllers(small_cfg(algorithm=algorithm), quiet)
    assert np.max(np.abs(W.coeffs)) < 1e-8


def test_degenerate_aux_stays_zero(plant):
    quiet = silent(plant, ["primary_physical"])
    H, trace = run_tuning_aux(small_cfg(), quiet, FilterBank.zeros(1, 2, 32))
    assert np.all(trace.series["e_p"] == 0)
    assert np.all(H.coeffs == 0)


@pytest.mark.parametrize("algorithm", ["mcalms", "mcfxlms"])
def test_pipeline_is_deterministic(plant, algorithm):
    cfg = small_cfg(algorithm=algorithm)
    a, b = run_pipeline(cfg, plant), run_pipeline(cfg, plant)
    for stage in ("tuning_controllers", "tuning_aux", "control"):
        ta, tb = a.traces()[stage], b.traces()[stage]
        for key in ta.series:
            assert ta.series[key].tobytes() == tb.series[key].tobytes()
    assert a.control.W == b.control.W and a.tuning_aux.H == b.tuning_aux.H


@pytest.mark.parametrize("algorithm", ["mcalms", "mcfxlms"])
def test_short_pipeline_reduces_noise(plant, algorithm):
    res = run_pipeline(small_cfg(algorithm=algorithm, n_samples=20000), plant)
    assert np.all(res.tuning_controllers.steady_state_nr() > 10)
    assert np.all(res.control.steady_state_nr() > 10)


def test_control_update_path_ignores_virtual_paths(plant):
    cfg = small_cfg()
    W, _ = run_tuning_controllers(cfg, plant)
    H, _ = run_tuning_aux(cfg, plant, W)
    with_eval = run_control_stage(cfg, plant, H, evaluate_virtual=True)
    # scramble the virtual paths: with evaluation off they must not matter at all
    r = np.random.default_rng(0)
    scrambled = replace(plant, primary_virtual=FilterBank(r.standard_normal(plant.primary_virtual.shape)),
                        secondary_virtual=FilterBank(r.standard_normal(plant.secondary_virtual.shape)),
                        secondary_virtual_est=FilterBank(r.standard_normal(plant.secondary_virtual.shape)))
    without = run_control_stage(cfg, scrambled, H, evaluate_virtual=False)
    assert with_eval.W.coeffs.tobytes() == without.W.coeffs.tobytes()
    for key in ("d_p", "e_p", "e_h"):
        assert with_eval.series[key].tobytes() == without.series[key].tobytes()
    assert "e_v" not in without.series


def test_divergence_reports_sample_and_mu(plant):
    cfg = small_cfg(mu_scale=200.0)
    with pytest.raises(DivergenceError) as info:
        run_tuning_controllers(cfg, plant)
    assert info.value.sample is not None and info.value.mu > 0
    assert "sample" in str(info.value)


def test_explicit_steps_are_used(plant):
    cfg = small_cfg(steps=StepSizes(1e-4, 2e-4, 3e-4), n_samples=2000)
    res = run_pipeline(cfg, plant)
    assert (res.tuning_controllers.mu, res.tuning_aux.mu, res.control.mu) == (1e-4, 2e-4, 3e-4)
