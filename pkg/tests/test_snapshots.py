import json

import numpy as np
import pytest

from mvanc import snapshots
from mvanc.acoustics import PlantConfig, synth_pathset
from mvanc.adaptive import SystemDims
from mvanc.dsp_core import FilterBank
from mvanc.errors import SnapshotParseError


def test_round_trip_is_bit_exact(tmp_path, rng):
    bank = FilterBank(rng.standard_normal((2, 3, 7)))
    path = snapshots.save(tmp_path / "w.json", {"W": bank}, kind="controllers", meta={"a": 1})
    banks, header = snapshots.load(path)
    assert banks["W"].coeffs.tobytes() == bank.coeffs.tobytes()
    assert header["meta"] == {"a": 1}
    assert not list(tmp_path.glob("*.tmp"))


def test_pathset_round_trip(tmp_path):
    plant = synth_pathset(SystemDims(2, 1, 2, 2), PlantConfig(primary_taps=48, secondary_taps=16))
    snapshots.save_pathset(tmp_path / "p.json", plant)
    back = snapshots.load_pathset(tmp_path / "p.json")
    for name in plant.BANKS:
        assert getattr(back, name) == getattr(plant, name)
    assert back.dims == plant.dims


def test_syntax_error_reports_line_and_column():
    with pytest.raises(SnapshotParseError, match=r"line 3, column"):
        snapshots.loads('{\n "schema": "mvanc.snapshot/1",\n "banks": {,}\n}')


def _doc(**bank):
    base = {"rows": 1, "cols": 1, "length": 2, "coeffs": [[[1.0, 2.0]]]}
    base.update(bank)
    return json.dumps({"schema": snapshots.SCHEMA, "kind": "filterbanks", "banks": {"W": base}})


@pytest.mark.parametrize("text,pattern", [
    (_doc(length=3), r"banks\.W\.coeffs: shape"),
    (_doc(coeffs=[[[1.0, "x"]]]), r"banks\.W\.coeffs"),
    (json.dumps({"schema": snapshots.SCHEMA, "banks": {"W": {"rows": 1}}}), r"banks\.W: missing field 'cols'"),
    (json.dumps({"schema": "other", "banks": {}}), r"field 'schema'"),
    (json.dumps({"schema": snapshots.SCHEMA, "banks": {}}), r"field 'banks'"),
    ("[1, 2]", r"top level"),
])
def test_field_diagnostics(text, pattern):
    with pytest.raises(SnapshotParseError, match=pattern):
        snapshots.loads(text)


def test_pathset_requires_kind(tmp_path, rng):
    snapshots.save(tmp_path / "w.json", {"W": FilterBank(rng.standard_normal((1, 1, 2)))})
    with pytest.raises(SnapshotParseError, match="kind"):
        snapshots.load_pathset(tmp_path / "w.json")
