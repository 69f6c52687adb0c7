import json
import subprocess
import sys

import numpy as np

from spingp.cli import main

SMALL = {
    "grid": {"x_min": -20.0, "x_max": 20.0, "n_points": 512},
    "evolve_grid": {"x_min": -64.0, "x_max": 64.0, "n_points": 1024},
    "dt": 0.01,
    "store_interval": 1.0,
    "sample_times": [1.0, 2.0, 3.0, 4.0, 5.0],
    "k_grid": {"k_max": 8.0, "n": 401},
}


def write(tmp_path, d, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(d))
    return str(p)


def test_pcf_selftest(tmp_path, capsys):
    assert main(["pcf-selftest", "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    assert set(rep["checks"]) == {"recurrence", "connection", "weber", "gamma_recurrence"}
    assert json.loads(capsys.readouterr().out.strip().splitlines()[-1])["passed"]


def test_config_error_exit_code(tmp_path, capsys):
    assert main(["evolve", "--config", write(tmp_path, {"dt": 1.0})]) == 2
    assert "dt" in capsys.readouterr().err


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "spingp.cli", "evolve", "--config", write(tmp_path, {"dt": 1.0})],
                       capture_output=True, text=True)
    assert r.returncode == 2


def test_evolve_writes_fields(tmp_path):
    cfg = dict(SMALL, sample_times=[1.0, 2.0])
    assert main(["evolve", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "field_t1.csv").exists() and (tmp_path / "o" / "field_t2.csv").exists()


def test_soliton_outputs_are_reproducible(tmp_path):
    cfg = dict(SMALL, scenario="one_soliton", solitons=[{"re": 0.5, "im": 1.0, "f": [[1, [0, 0.5]], [[0, 0.5], -0.25]]}],
               sample_times=[1.0, 2.0])
    path = write(tmp_path, cfg)
    outs = []
    for name in ("a", "b"):
        assert main(["soliton", "--config", path, "--out", str(tmp_path / name), "--seed", "4"]) == 0
        outs.append(tmp_path / name)
    files = sorted(p.name for p in outs[0].glob("*.csv"))
    assert files == ["soliton_t0.csv", "soliton_t1.csv", "soliton_t2.csv"]
    for f in files:
        assert (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes()
    rep = json.loads((outs[0] / "report.json").read_text())
    assert rep["checks"]["log_det_I_plus_AAbar"]["passed"] and rep["checks"]["pde_residual"]["passed"]
    tracks = rep["values"]["peak_tracks"]
    assert tracks["2.0"] < tracks["0.0"]


def test_scatter_then_predict(tmp_path):
    out = tmp_path / "o"
    cfg = {k: v for k, v in SMALL.items() if k != "grid"}
    path = write(tmp_path, cfg)
    assert main(["scatter", "--config", path, "--out", str(out)]) == 0
    assert (out / "gamma.csv").exists()
    spec = json.loads((out / "spectrum.json").read_text())
    assert spec["poles"] == []
    assert main(["predict", "--config", write(tmp_path, dict(cfg, compare=False), "p.json"), "--out", str(out)]) == 0
    rows = (out / "predict_t3.csv").read_text().splitlines()
    assert rows[0].startswith("x,re_q1") and len(rows) == 4
    code = main(["predict", "--config", path, "--out", str(out)])
    assert code in (0, 1)
    assert (out / "errors.csv").exists()
    rep = json.loads((out / "report.json").read_text())
    assert "decay_slope" in rep["checks"] and np.all(np.array(rep["values"]["errors"]) > 0)
