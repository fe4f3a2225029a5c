import json

import numpy as np
import pytest

from hyperdiff.cli import main


@pytest.fixture
def write_cfg(tmp_path):
    def make(data, name="cfg.json"):
        p = tmp_path / name
        p.write_text(json.dumps(data))
        return str(p)
    return make


FREE = {"model": {"kind": "free"}, "t_max": 20, "record": {"count": 30}}


def test_simulate_free_chain(tmp_path, write_cfg, capsys):
    out = tmp_path / "run"
    assert main(["simulate", "--config", write_cfg(FREE), "--out", str(out)]) == 0
    names = sorted(p.name for p in out.iterdir())
    assert names == ["fit.json", "metadata.json", "plot.csv", "potential.csv", "variance.csv"]
    fit = json.loads((out / "fit.json").read_text())
    assert fit["fit"]["nu"] == pytest.approx(2.0, abs=0.01) and fit["regime"] == "ballistic"
    header = (out / "variance.csv").read_text().splitlines()[0]
    assert header.startswith("t,sigma2,trace_drift,boundary_occ")
    data = np.loadtxt(out / "variance.csv", delimiter=",", skiprows=1)
    t = data[:, 0]
    np.testing.assert_allclose(data[1:, 1], 2 * t[1:] ** 2, rtol=1e-6)
    plot = (out / "plot.csv").read_text().splitlines()
    assert plot[0] == "series,log10_t,log10_sigma2"
    assert any(line.startswith("fit,") for line in plot) and any(line.startswith("data,") for line in plot)


def test_missing_model_writes_nothing(tmp_path, write_cfg, capsys):
    out = tmp_path / "run"
    code = main(["simulate", "--config", write_cfg({"gamma": 0.1}), "--out", str(out)])
    assert code == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "config" and err["field"] == "model"
    assert not out.exists()


def test_numerical_failure_exit_code(tmp_path, write_cfg, capsys):
    cfg = dict(FREE, gamma=0.1, integrator={"dt": 2.0})
    out = tmp_path / "run"
    assert main(["simulate", "--config", write_cfg(cfg), "--out", str(out)]) == 3
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "numerical" and err["time"] > 0
    assert not out.exists()
    assert not list(tmp_path.glob(".run*"))


def test_validity_guard_exit_code(tmp_path, write_cfg, capsys):
    cfg = dict(FREE, lead_length=10)
    assert main(["simulate", "--config", write_cfg(cfg), "--out", str(tmp_path / "run")]) == 4
    assert json.loads(capsys.readouterr().err)["error"] == "validity"


def test_metadata_round_trip_is_byte_identical(tmp_path, write_cfg):
    cfg = {"model": {"kind": "disordered", "L": 5, "V": 1.0}, "gamma": 0.04, "t_max": 8,
           "ensemble": {"realizations": 2, "seed": 123}}
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", "--config", write_cfg(cfg), "--out", str(a)]) == 0
    assert main(["simulate", "--config", str(a / "metadata.json"), "--out", str(b)]) == 0
    for f in sorted(a.rglob("*.csv")):
        assert f.read_bytes() == (b / f.relative_to(a)).read_bytes(), f.name
    meta = json.loads((a / "metadata.json").read_text())
    assert len(meta["seeds"]) == 2 and meta["config"]["ensemble"]["seed"] == 123


def test_seed_flag_changes_disorder(tmp_path, write_cfg):
    cfg = write_cfg({"model": {"kind": "disordered", "L": 5}, "t_max": 5, "ensemble": {"realizations": 1}})
    main(["simulate", "--config", cfg, "--out", str(tmp_path / "a"), "--seed", "1"])
    main(["simulate", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "2"])
    a = json.loads((tmp_path / "a" / "metadata.json").read_text())
    b = json.loads((tmp_path / "b" / "metadata.json").read_text())
    assert a["config"]["ensemble"]["seed"] == 1 and a["seeds"] != b["seeds"]


def test_sweep_rows_and_repeats(tmp_path, write_cfg):
    cfg = write_cfg({"model": {"kind": "harper", "Delta": 1.5, "L": 5}, "t_max": 10})
    out = tmp_path / "sweep"
    assert main(["sweep", "--config", cfg, "--out", str(out), "--axis", "gamma",
                 "--values", "0,0.04,0.04"]) == 0
    rows = (out / "summary.csv").read_text().splitlines()
    assert len(rows) == 4
    r1, r2 = rows[2].split(","), rows[3].split(",")
    assert r1[5] == r2[5]  # identical nu for the repeated value
    assert len([p for p in out.iterdir() if p.is_dir()]) == 3


def test_sweep_other_axis(tmp_path, write_cfg):
    cfg = write_cfg({"model": {"kind": "harper", "Delta": 1.5, "L": 5}, "t_max": 10})
    out = tmp_path / "sweep"
    assert main(["sweep", "--config", cfg, "--out", str(out), "--axis", "model.Delta", "--values", "0.5,2.5"]) == 0
    assert len((out / "summary.csv").read_text().splitlines()) == 3


@pytest.mark.parametrize("values,axis", [("", "gamma"), (" , ", "gamma"), ("1", "model.nothing")])
def test_sweep_bad_axis_writes_nothing(tmp_path, write_cfg, values, axis):
    out = tmp_path / "sweep"
    assert main(["sweep", "--config", write_cfg(FREE), "--out", str(out), "--axis", axis, "--values", values]) == 2
    assert not out.exists()


def test_oracle_and_corrupted_tolerance(capsys):
    assert main(["oracle", "--quick"]) == 0
    assert "max deviation" in capsys.readouterr().out
    assert main(["oracle", "--quick", "--tol-scale", "-1"]) != 0


def test_bad_arguments():
    assert main(["simulate"]) == 2
    assert main(["nonsense"]) == 2
