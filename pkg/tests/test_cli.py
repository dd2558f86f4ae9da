import csv
import io
import json
import math
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from maxfield.cli import COMPARE_COLUMNS, main
from maxfield.fields import FieldSpec, GridRealization, KernelSpec, TailSpec, generate
from maxfield.gridfile import GridFormatError, read_grid, write_grid
from maxfield.lattice import Window

MM_FIELD = {"variant": "moving_max", "alpha": 2.0, "kernel": {"0,0": 1.0, "1,0": 0.5}}


def write_cfg(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def read_csv_rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_simulate_identity_kernel_and_reproducible(tmp_path, capsys):
    cfg = write_cfg(tmp_path, {"field": {"variant": "iid", "alpha": 1.0}, "N": [4, 4],
                               "margin": 0})
    a, b = tmp_path / "a.mxf", tmp_path / "b.mxf"
    assert main(["simulate", "--config", cfg, "--out", str(a), "--seed", "17"]) == 0
    assert "seed=17" in capsys.readouterr().out
    assert main(["--config", cfg, "--out", str(b), "--seed", "17", "simulate"]) == 0
    assert a.read_bytes() == b.read_bytes()
    g = read_grid(a)
    assert g.values.size == 16
    ref = generate(FieldSpec.iid(TailSpec(1.0), 2), Window.from_shape((4, 4)), 17, margin=0)
    assert np.array_equal(g.values, ref.values)


def test_simulate_external_exit_2(tmp_path):
    cfg = write_cfg(tmp_path, {"field": {"variant": "external", "dimension": 2}, "N": [4, 4]})
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "x.mxf")]) == 2


def test_simulate_io_error_exit_3(tmp_path):
    cfg = write_cfg(tmp_path, {"field": MM_FIELD, "N": [4, 4]})
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "no" / "dir" / "x.mxf")]) == 3


def test_missing_config_file_exit_3(tmp_path):
    assert main(["compare", "--config", str(tmp_path / "absent.json")]) == 3


@pytest.mark.parametrize("doc", [
    {"field": MM_FIELD, "N": [4, 4], "bogus": 1},
    {"field": dict(MM_FIELD, colour="red"), "N": [4, 4]},
    {"field": MM_FIELD, "N": [4, 0]},
    {"field": MM_FIELD, "N": [8, 8], "v_grid": [1.0], "replications": 0},
    {"field": dict(MM_FIELD, alpha=-1.0), "N": [8, 8], "v_grid": [1.0]},
    {"field": MM_FIELD, "N": [8, 8], "v_grid": [1.0, 0.5]},
    {"field": MM_FIELD, "N": [8, 8], "output": {"format": "xml"}},
])
def test_invalid_config_exit_2(tmp_path, doc):
    cfg = write_cfg(tmp_path, doc)
    assert main(["compare", "--config", cfg, "--out", str(tmp_path / "o.csv")]) == 2


def test_bad_json_exit_2(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("{not json")
    assert main(["compare", "--config", str(p)]) == 2


def hand_grid_file(tmp_path, hot, shape=(9, 9), margin=1, name="g.csv"):
    vals = np.zeros(tuple(s + 2 * margin for s in shape))
    for p, x in hot.items():
        vals[tuple(c + margin - 1 for c in p)] = x
    g = GridRealization(Window.from_shape(shape), margin, vals)
    path = tmp_path / name
    write_grid(g, path)
    return str(path)


def test_estimate_two_cluster_hand_grid(tmp_path):
    grid = hand_grid_file(tmp_path, {(3, 3): 5.0, (3, 4): 5.0, (6, 7): 5.0})
    cfg = write_cfg(tmp_path, {"field": {"variant": "external", "dimension": 2},
                               "v_grid": [1.0], "m": 1})
    out = tmp_path / "est.csv"
    assert main(["estimate", "--config", cfg, "--grid", grid, "--out", str(out)]) == 0
    row = read_csv_rows(out.read_text())[0]
    assert row["exceedances"] == "3" and row["clusters"] == "2"
    assert float(row["theta_cluster"]) == pytest.approx(2 / 3)
    assert row["lambda1"] == "2" and row["lambda2"] == "2"


def test_estimate_no_exceedances_undefined(tmp_path):
    grid = hand_grid_file(tmp_path, {})
    cfg = write_cfg(tmp_path, {"field": {"variant": "external", "dimension": 2},
                               "v_grid": [1.0], "m": 1})
    out = tmp_path / "est.json"
    assert main(["estimate", "--config", cfg, "--grid", grid, "--out", str(out)]) == 0
    row = json.loads(out.read_text())["rows"][0]
    assert row["theta_runs"] == row["theta_cluster"] == "undefined"
    assert row["exceedances"] == "0" and row["clusters"] == "0" and row["lambda1"] == "0"


def test_estimate_zero_margin_uses_interior(tmp_path):
    grid = hand_grid_file(tmp_path, {(1, 1): 5.0, (4, 4): 5.0}, margin=0)
    cfg = write_cfg(tmp_path, {"field": {"variant": "external", "dimension": 2},
                               "v_grid": [1.0], "m": 1})
    out = tmp_path / "e.csv"
    assert main(["estimate", "--config", cfg, "--grid", grid, "--out", str(out)]) == 0
    row = read_csv_rows(out.read_text())[0]
    assert row["exceedances"] == "2" and row["lambda1"] == "1" and row["flag"] == "interior only"


@pytest.mark.parametrize("content", [
    "# maxfield d=2 shape=3,3 margin=0\n" + "1.0\n" * 8,
    "# maxfield d=2 shape=3 margin=0\n" + "1.0\n" * 3,
    "# something else\n1.0\n",
    "# maxfield d=1 shape=2 margin=0\n1.0\nnan\n",
    "# maxfield d=1 shape=2 margin=0\n1.0\nabc\n",
])
def test_estimate_malformed_grid_exit_2(tmp_path, content):
    p = tmp_path / "bad.csv"
    p.write_text(content)
    cfg = write_cfg(tmp_path, {"field": {"variant": "external", "dimension": 2},
                               "v_grid": [1.0], "m": 1})
    assert main(["estimate", "--config", cfg, "--grid", str(p)]) == 2


def test_estimate_window_too_small_for_runs(tmp_path):
    grid = hand_grid_file(tmp_path, {(3, 3): 5.0}, shape=(8, 8))
    cfg = write_cfg(tmp_path, {"field": {"variant": "external", "dimension": 2},
                               "v_grid": [1.0], "m": 1})
    out = tmp_path / "e.csv"
    assert main(["estimate", "--config", cfg, "--grid", grid, "--out", str(out)]) == 0
    row = read_csv_rows(out.read_text())[0]
    assert row["theta_runs"] == "undefined" and "runs" in row["flag"]
    assert float(row["theta_cluster"]) == 1.0


def test_estimate_grid_with_generable_field_exit_2(tmp_path):
    grid = hand_grid_file(tmp_path, {})
    cfg = write_cfg(tmp_path, {"field": MM_FIELD, "v_grid": [1.0]})
    assert main(["estimate", "--config", cfg, "--grid", grid]) == 2


def test_estimate_simulated_grid(tmp_path):
    cfg = write_cfg(tmp_path, {"field": MM_FIELD, "N": [40, 40], "v_grid": [0.5, 1.0],
                               "master_seed": 3})
    out = tmp_path / "e.csv"
    assert main(["estimate", "--config", cfg, "--out", str(out)]) == 0
    rows = read_csv_rows(out.read_text())
    assert len(rows) == 2 and int(rows[0]["exceedances"]) >= int(rows[1]["exceedances"])


COMPARE_DOC = {"field": MM_FIELD, "N": [20, 20], "v_grid": [1.0, 1.5], "replications": 20,
               "patch_replications": 500, "master_seed": 11}


def test_compare_csv_columns_and_deterministic(tmp_path):
    cfg = write_cfg(tmp_path, COMPARE_DOC)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["compare", "--config", cfg, "--out", str(a)]) == 0
    assert main(["compare", "--config", cfg, "--out", str(b), "--threads", "3"]) == 0
    assert a.read_bytes() == b.read_bytes()
    text = a.read_text()
    assert text.splitlines()[0].split(",") == COMPARE_COLUMNS
    rows = read_csv_rows(text)
    assert len(rows) == 2 and all(rows[0][c] != "" for c in COMPARE_COLUMNS)


def test_compare_json_has_effective_config(tmp_path, monkeypatch):
    monkeypatch.setenv("MAXFIELD_THREADS", "2")
    cfg = write_cfg(tmp_path, COMPARE_DOC)
    out = tmp_path / "c.json"
    assert main(["compare", "--config", cfg, "--out", str(out), "--seed", "99"]) == 0
    doc = json.loads(out.read_text())
    assert doc["config"]["master_seed"] == 99 and doc["config"]["k"] == 4
    assert doc["config"]["m"] == 2 and doc["columns"] == COMPARE_COLUMNS
    assert doc["rows"][0]["theta_analytic"] == pytest.approx(0.8)


def test_compare_iid_analytic_theta_is_one(tmp_path):
    doc = dict(COMPARE_DOC, field={"variant": "iid", "alpha": 1.0})
    cfg = write_cfg(tmp_path, doc)
    out = tmp_path / "c.csv"
    assert main(["compare", "--config", cfg, "--out", str(out)]) == 0
    assert all(float(r["theta_analytic"]) == 1.0 for r in read_csv_rows(out.read_text()))


def test_bad_threads_env_exit_2(tmp_path, monkeypatch):
    monkeypatch.setenv("MAXFIELD_THREADS", "many")
    cfg = write_cfg(tmp_path, COMPARE_DOC)
    assert main(["compare", "--config", cfg]) == 2


def test_analytic_examples(tmp_path, capsys):
    assert main(["analytic", "--kernel", "0=1", "--kernel", "1=1", "--alpha", "1",
                 "--v", "1"]) == 0
    row = read_csv_rows(capsys.readouterr().out)[0]
    assert float(row["theta"]) == 0.5 and float(row["tail"]) == 2.0
    assert float(row["limit"]) == pytest.approx(math.exp(-1))
    assert main(["analytic", "--kernel", "0,0=1.0", "--alpha", "2", "--v", "1,2"]) == 0
    rows = read_csv_rows(capsys.readouterr().out)
    assert float(rows[0]["limit"]) == pytest.approx(math.exp(-1)) and len(rows) == 2


def test_analytic_degenerate_exit_2(capsys):
    assert main(["analytic", "--kernel", "0=-1", "--kernel", "1=-0.5", "--alpha", "1",
                 "--balance", "1"]) == 2
    assert "zero denominator" in capsys.readouterr().err


def test_analytic_from_config_json(tmp_path):
    cfg = write_cfg(tmp_path, {"field": MM_FIELD, "v_grid": [1.0]})
    out = tmp_path / "a.json"
    assert main(["analytic", "--config", cfg, "--format", "json", "--out", str(out)]) == 0
    assert json.loads(out.read_text())["rows"][0]["theta"] == "0.8"


def test_usage_error_exit_2():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


# ---- grid files


@settings(max_examples=60, deadline=None)
@given(d=st.integers(1, 3), margin=st.integers(0, 2), seed=st.integers(0, 2**64 - 1),
       data=st.data())
def test_grid_round_trip_binary_and_csv(d, margin, seed, data, tmp_path_factory):
    shape = data.draw(st.tuples(*[st.integers(1, 4)] * d))
    k = KernelSpec({(0,) * d: 1.0, (1,) + (0,) * (d - 1): -0.5})
    g = generate(FieldSpec.moving_max(k, TailSpec(0.7, balance=0.5)), Window.from_shape(shape),
                 seed, margin=margin)
    base = tmp_path_factory.mktemp("rt")
    for name in ("g.mxf", "g.csv"):
        write_grid(g, base / name)
        back = read_grid(base / name)
        assert back.window == g.window and back.margin == g.margin
        assert back.values.tobytes() == g.values.tobytes()


def test_binary_layout_bit_exact(tmp_path):
    vals = np.arange(12, dtype=float).reshape(4, 3) + 0.5
    g = GridRealization(Window.from_shape((2, 1)), 1, vals)
    write_grid(g, tmp_path / "g.bin")
    raw = (tmp_path / "g.bin").read_bytes()
    assert raw[:4] == b"MXF1"
    assert struct.unpack("<IIQQ", raw[4:28]) == (2, 1, 2, 1)
    assert np.array_equal(np.frombuffer(raw[28:], "<f8"), vals.ravel())


def test_csv_header_layout(tmp_path):
    g = GridRealization(Window.from_shape((2, 3)), 0, np.ones((2, 3)))
    write_grid(g, tmp_path / "g.csv")
    lines = (tmp_path / "g.csv").read_text().splitlines()
    assert lines[0] == "# maxfield d=2 shape=2,3 margin=0" and len(lines) == 7


@pytest.mark.parametrize("raw", [b"XXXX", b"MXF1\x01\x00", b"MXF1" + struct.pack("<IIQ", 1, 0, 3) + b"\x00" * 16])
def test_binary_malformed(tmp_path, raw):
    p = tmp_path / "g.mxf"
    p.write_bytes(raw)
    with pytest.raises(GridFormatError):
        read_grid(p)
