"""Experiment presets and the YAML config format.

A config file mirrors :class:`ExperimentPreset`::

    name: my-run
    description: free text
    algorithms: [mcalms, mcfxlms]
    stage:
      dims: {J: 4, K: 2, M: 4, Q: 4}
      n_x: 512
      n_h: 256
      path_len: 32
      n_samples: 200000
      mu_scale: 1.5
      steps: null                # or {mu1: ..., mu2: ..., mu3: ...}
      nr_window: 4096
      seed: 0
      tuning_noise:  {distribution: gaussian, band: [800, 1800], sample_rate: 16000,
                      seed: 10, snr_db: 40, shaping_taps: 513}
      control_noise: {distribution: uniform, band: [800, 1800], ...}
    plant:
      primary_taps: 128
      secondary_taps: 32
      band: [500, 5000]
      sample_rate: 16000
      seed: 1
      virtual_primary: span
      physical_secondary_gain_db: 6.0
      estimate_jitter_db: 0.0
    expect:                      # optional threshold annotations
      min_virtual_nr_db: 25

Missing keys take the defaults printed by ``mvanc show-config``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import yaml

from .acoustics import NoiseSpec, PlantConfig
from .adaptive import StepSizes, SystemDims
from .errors import ConfigurationError
from .pipeline import ALGORITHMS, StageConfig

CONFIG_SCHEMA = "mvanc.config/1"

BROADBAND = (800.0, 1800.0)
NARROWBAND = (800.0, 1000.0)

# (N_x, N_h, L): simulation lengths and the lengths used for the complexity sweep
SIMULATION_LENGTHS = (512, 256, 32)
COMPLEXITY_LENGTHS = (512, 128, 256)


@dataclass(frozen=True)
class ExperimentPreset:
    name: str
    description: str
    stage: StageConfig
    plant: PlantConfig = PlantConfig()
    algorithms: tuple[str, ...] = ("mcalms",)
    expect: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.algorithms:
            raise ConfigurationError("a preset needs at least one algorithm")
        for a in self.algorithms:
            if a not in ALGORITHMS:
                raise ConfigurationError(f"unknown algorithm {a!r}")
        if self.plant.secondary_taps != self.stage.path_len:
            raise ConfigurationError("plant secondary_taps must equal stage path_len")

    def config_for(self, algorithm: str) -> StageConfig:
        return replace(self.stage, algorithm=algorithm)


def _noise(distribution, band, seed):
    return NoiseSpec(distribution=distribution, band=band, seed=seed)


def _preset(name, description, tuning, control, n_samples, algorithms=("mcalms",), expect=None):
    stage = StageConfig(n_samples=n_samples, tuning_noise=tuning, control_noise=control)
    return ExperimentPreset(name, description, stage, PlantConfig(), algorithms, expect or {})


PRESETS: dict[str, ExperimentPreset] = {p.name: p for p in [
    _preset("fig6-comparison",
            "4x2x4 system, 800-1800 Hz Gaussian noise in every stage, adjoint vs filtered-reference",
            _noise("gaussian", BROADBAND, 10), _noise("gaussian", BROADBAND, 20), 200_000,
            algorithms=("mcalms", "mcfxlms"),
            expect={"min_virtual_nr_db": 25.0, "max_algorithm_gap_db": 3.0,
                    "max_filter_mad_db": 3.0}),
    _preset("scenario-1",
            "Gaussian 800-1800 Hz tuning noise, uniform 800-1800 Hz control noise",
            _noise("gaussian", BROADBAND, 10), _noise("uniform", BROADBAND, 20), 400_000,
            expect={"min_virtual_nr_db": 25.0, "max_stage_filter_mad_db": 3.0}),
    _preset("scenario-2",
            "broadband (800-1800 Hz) tuning noise, narrowband (800-1000 Hz) control noise",
            _noise("gaussian", BROADBAND, 10), _noise("gaussian", NARROWBAND, 20), 400_000,
            expect={"min_virtual_nr_db": 30.0, "min_margin_over_scenario_3_db": 8.0}),
    _preset("scenario-3",
            "narrowband (800-1000 Hz) tuning noise, broadband (800-1800 Hz) control noise",
            _noise("gaussian", NARROWBAND, 10), _noise("gaussian", BROADBAND, 20), 400_000,
            expect={"min_upper_band_attenuation_db": 3.0}),
]}

# The complexity lengths also run as a simulation.  Longer secondary paths need
# longer primaries for the virtual primary paths to stay in the span of the
# secondaries.  Responses are kept to 64 non-zero taps: when they fill all 256
# (384) taps the physical-error response outgrows the 128-tap auxiliary
# filters, which then remove only ~2 dB and the control stage stalls.
PRESETS["comparison-long-paths"] = ExperimentPreset(
    "comparison-long-paths",
    "fig6-comparison with N_h=128 and L=256 (the complexity-sweep lengths)",
    StageConfig(n_x=512, n_h=128, path_len=256, n_samples=200_000,
                tuning_noise=_noise("gaussian", BROADBAND, 10),
                control_noise=_noise("gaussian", BROADBAND, 20)),
    PlantConfig(primary_taps=384, secondary_taps=256, response_taps=64),
    ("mcalms", "mcfxlms"),
    expect={"min_virtual_nr_db": 25.0, "max_algorithm_gap_db": 3.0},
)


def get_preset(name: str) -> ExperimentPreset:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}") from None


# -- YAML round trip ---------------------------------------------------------

def _plain(obj):
    if isinstance(obj, tuple):
        return [_plain(v) for v in obj]
    if isinstance(obj, list):
        return [_plain(v) for v in obj]
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    return obj


def preset_to_dict(preset: ExperimentPreset) -> dict:
    stage = asdict(preset.stage)
    stage.pop("algorithm")
    return _plain({
        "schema": CONFIG_SCHEMA,
        "name": preset.name,
        "description": preset.description,
        "algorithms": list(preset.algorithms),
        "stage": stage,
        "plant": asdict(preset.plant),
        "expect": dict(preset.expect),
    })


def dump_preset(preset: ExperimentPreset) -> str:
    return yaml.safe_dump(preset_to_dict(preset), sort_keys=False, default_flow_style=None)


def _build(cls, data, where):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigurationError(f"{where}: expected a mapping")
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigurationError(f"{where}: unknown keys {sorted(unknown)}")
    kwargs = {k: tuple(v) if isinstance(v, list) else v for k, v in data.items()}
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigurationError(f"{where}: {exc}") from None


def preset_from_dict(data: dict, default_name: str = "custom") -> ExperimentPreset:
    if not isinstance(data, dict):
        raise ConfigurationError("config: top level must be a mapping")
    schema = data.get("schema", CONFIG_SCHEMA)
    if schema != CONFIG_SCHEMA:
        raise ConfigurationError(f"config: unsupported schema {schema!r}")
    stage_data = dict(data.get("stage") or {})
    if "dims" in stage_data:
        stage_data["dims"] = _build(SystemDims, stage_data["dims"], "stage.dims")
    for key in ("tuning_noise", "control_noise"):
        if key in stage_data:
            stage_data[key] = _build(NoiseSpec, stage_data[key], f"stage.{key}")
    if stage_data.get("steps") is not None:
        stage_data["steps"] = _build(StepSizes, stage_data["steps"], "stage.steps")
    if "algorithm" in stage_data:
        raise ConfigurationError("stage.algorithm: use the top-level 'algorithms' list")
    stage = _build(StageConfig, stage_data, "stage")
    plant = _build(PlantConfig, data.get("plant"), "plant")
    algorithms = tuple(data.get("algorithms") or ("mcalms",))
    return ExperimentPreset(name=str(data.get("name", default_name)),
                            description=str(data.get("description", "")),
                            stage=stage, plant=plant, algorithms=algorithms,
                            expect=dict(data.get("expect") or {}))


def load_config(path) -> ExperimentPreset:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"{path}: {exc}") from None
    return preset_from_dict(data, default_name=path.stem)


def resolve(name_or_path: str) -> ExperimentPreset:
    """A preset name, or the path of a YAML config."""
    if name_or_path in PRESETS:
        return PRESETS[name_or_path]
    path = Path(name_or_path)
    if path.suffix in (".yaml", ".yml") or path.exists():
        return load_config(path)
    return get_preset(name_or_path)
