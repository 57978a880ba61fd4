import numpy as np
import pytest

from mvanc.exports import read_trace_csv, trace_columns, write_trace_csv
from mvanc.pipeline import RunTrace


def make_trace(rng, n=300):
    d = rng.standard_normal((2, n))
    return RunTrace("control", "mcalms", 16000.0, 1e-5, 50,
                    {"d_v": d, "e_v": d / 10, "d_p": d, "e_p": d / 2, "e_h": d / 4})


def test_columns_and_round_trip(tmp_path, rng):
    tr = make_trace(rng)
    path = write_trace_csv(tr, tmp_path / "t.csv", stride=1)
    header, cols = read_trace_csv(path)
    assert header["schema"] == "mvanc.trace/1" and header["stage"] == "control"
    assert list(cols)[:3] == ["sample", "d_v1", "d_v2"]
    np.testing.assert_allclose(cols["e_v2"], tr.series["e_v"][1], rtol=1e-9)
    assert np.all(np.isnan(cols["nr_v1"][:49]))
    np.testing.assert_allclose(cols["nr_v1"][49:], 20.0, atol=1e-8)
    np.testing.assert_allclose(cols["nr_p2"][49:], 20 * np.log10(2), atol=1e-8)


def test_stride_and_determinism(tmp_path, rng):
    tr = make_trace(rng)
    a = write_trace_csv(tr, tmp_path / "a.csv", stride=7).read_bytes()
    b = write_trace_csv(tr, tmp_path / "b.csv", stride=7).read_bytes()
    assert a == b
    _, cols = read_trace_csv(tmp_path / "a.csv")
    np.testing.assert_array_equal(cols["sample"], np.arange(0, 300, 7))
    with pytest.raises(ValueError):
        write_trace_csv(tr, tmp_path / "c.csv", stride=0)


def test_only_recorded_signals_exported(rng):
    d = rng.standard_normal((1, 100))
    tr = RunTrace("tuning_controllers", "mcalms", 16000.0, 1e-5, 10, {"d_v": d, "e_v": d})
    assert set(trace_columns(tr)) == {"sample", "d_v1", "e_v1", "nr_v1"}


def test_rejects_foreign_csv(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError, match="schema"):
        read_trace_csv(p)
