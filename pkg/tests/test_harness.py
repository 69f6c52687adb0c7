import json

import numpy as np
import pytest

from spingp import harness as hz

SMALL = {
    "grid": {"x_min": -20.0, "x_max": 20.0, "n_points": 512},
    "evolve_grid": {"x_min": -64.0, "x_max": 64.0, "n_points": 1024},
    "dt": 0.01,
    "store_interval": 1.0,
    "sample_times": [1.0, 2.0, 3.0, 4.0, 5.0],
    "k_grid": {"k_max": 8.0, "n": 401},
}


def small(**over):
    d = json.loads(json.dumps(SMALL))
    d.update(over)
    return d


def test_decay_fit_exact_power_laws():
    t = np.array([20.0, 40.0, 80.0, 160.0, 320.0])
    f = hz.decay_fit(t, 3.0 * t ** -0.75)
    assert abs(f.slope + 0.75) < 1e-10 and abs(f.intercept - np.log(3.0)) < 1e-10
    assert abs(f.r_squared - 1) < 1e-12
    assert abs(hz.decay_fit(t, 0.2 * t ** -0.5).slope + 0.5) < 1e-10


def test_decay_fit_noise_monte_carlo():
    t = np.array([20.0, 40.0, 80.0, 160.0, 320.0])
    for seed in range(100):
        rng = np.random.default_rng(seed)
        e = t ** -0.75 * (1 + 0.05 * rng.standard_normal(len(t)))
        f = hz.decay_fit(t, e)
        assert -0.85 <= f.slope <= -0.65
        assert f.r_squared > 0.95


def test_decay_fit_rejects_bad_input():
    t = np.arange(1.0, 6.0)
    with pytest.raises(ValueError):
        hz.decay_fit(t[:4], t[:4])
    with pytest.raises(ValueError):
        hz.decay_fit(t, np.array([1, 2, 0, 1, 1.0]))
    with pytest.raises(ValueError):
        hz.decay_fit(t, -t)
    with pytest.raises(ValueError):
        hz.decay_fit(t[::-1], t)


def test_fit_slope_matches_decay_fit():
    t = np.array([20.0, 40.0, 80.0, 160.0, 320.0])
    e = t ** -0.6 * np.array([1.0, 1.1, 0.95, 1.02, 0.99])
    f = hz.decay_fit(t, e)
    s, r2 = hz.fit_slope(t, e)
    assert abs(s - f.slope) < 1e-12 and abs(r2 - f.r_squared) < 1e-12


def test_defaults_and_merge():
    cfg = hz.ExperimentConfig.from_dict({"dt": 0.005, "grid": {"n_points": 1024}})
    assert cfg.params["dt"] == 0.005
    assert cfg.params["grid"]["n_points"] == 1024 and cfg.params["grid"]["x_min"] == -40.0
    assert cfg.scenario == "solitonless" and "_units" not in cfg.params
    assert "_units" in hz.load_defaults()
    cfg.validate()


def test_validation_rejects_large_dt(tmp_path):
    cfg = hz.ExperimentConfig.from_dict({"dt": 1.0}, tmp_path / "run")
    with pytest.raises(hz.ConfigError, match="dt"):
        hz.run_pipeline(cfg)
    assert not (tmp_path / "run").exists()


@pytest.mark.parametrize("over,msg", [
    ({"scenario": "other"}, "scenario"),
    ({"scenario": "one_soliton"}, "needs 1 soliton"),
    ({"scenario": "two_soliton", "solitons": [{"re": 0, "im": 1, "f": [[1, 0], [0, 0]]},
                                              {"re": 1, "im": 1, "f": [[1, 0], [0, 0]]}]}, "needs a cone"),
    ({"sample_times": [20.0, 10.0]}, "sample_times"),
    ({"store_interval": 0.015}, "store_interval"),
    ({"amplitude": "x"}, "amplitude"),
    ({"dressing": "x"}, "dressing"),
    ({"search_box": [-1, 1, 0.0, 1]}, "search_box"),
    ({"grid": {"n_points": 1000}}, "grid"),
    ({"cone": {"x1": 1, "x2": 0, "v1": 0, "v2": 1}}, "cone"),
])
def test_validation_messages(over, msg):
    with pytest.raises(hz.ConfigError, match=msg):
        hz.ExperimentConfig.from_dict(over).validate()


def test_soliton_json_round_trip(tmp_path):
    from spingp.solitons import SolitonData
    sd = SolitonData([0.5 + 1j, -0.3 + 0.4j], [[[1, 0.5j], [0.5j, -0.25]], np.eye(2)])
    hz.write_spectrum_json(tmp_path / "s.json", sd, {"x": np.array([1.0 + 2j])})
    back = hz.read_spectrum_json(tmp_path / "s.json")
    assert np.array_equal(back.ks, sd.ks) and np.array_equal(back.fs, sd.fs)


def test_gamma_csv_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    ks = np.linspace(-1, 1, 7)
    g = rng.normal(size=(7, 2, 2)) + 1j * rng.normal(size=(7, 2, 2))
    hz.write_gamma_csv(tmp_path / "g.csv", ks, g)
    k2, g2 = hz.read_gamma_csv(tmp_path / "g.csv")
    assert np.array_equal(ks, k2) and np.array_equal(g, g2)


def test_errors_csv(tmp_path):
    hz.write_errors_csv(tmp_path / "e.csv", [1.0, 2.0, 4.0], [1.0, 0.5, 0.25], {"other": [3, 2, 1]})
    rows = (tmp_path / "e.csv").read_text().splitlines()
    assert rows[0] == "t,sup_error,slope_so_far,other"
    assert abs(float(rows[3].split(",")[2]) + 1) < 1e-12


def test_solitonless_report_structure(tmp_path):
    cfg = hz.ExperimentConfig.from_dict(small(), tmp_path)
    rep = hz.run_pipeline(cfg)
    data = json.loads((tmp_path / "report.json").read_text())
    assert data["stage_failed"] is None
    assert "dispersive_decay_slope" in data["checks"] and "dispersive_decay_r2" in data["checks"]
    assert data["passed"] == rep.passed
    for name in ("config.json", "gamma.csv", "errors.csv", "initial.csv"):
        assert (tmp_path / name).exists()


def test_one_soliton_report(tmp_path):
    cfg = hz.ExperimentConfig.load("configs/one_soliton.json", tmp_path)
    cfg.params["k_grid"] = {"k_max": 8.0, "n": 401}
    rep = hz.run_pipeline(cfg)
    checks = rep.data["checks"]
    assert checks["round_trip_pole_error"]["value"] < 1e-3
    assert rep.passed, checks
    assert (tmp_path / "spectrum.json").exists()


def test_failing_stage_is_named(tmp_path, monkeypatch):
    from spingp.scattering import SpectrumError

    def boom(*a, **k):
        raise SpectrumError("winding ambiguous")

    monkeypatch.setattr(hz, "find_discrete_spectrum", boom)
    cfg = hz.ExperimentConfig.from_dict(small(scenario="one_soliton",
                                              solitons=[{"re": 0.0, "im": 1.0, "f": [[1, 0], [0, 0]]}]), tmp_path)
    rep = hz.run_pipeline(cfg)
    data = json.loads((tmp_path / "report.json").read_text())
    assert data["stage_failed"] == "spectrum" and not data["passed"] and not rep.passed
    assert "winding ambiguous" in data["error"]
    # outputs of the stages that ran are kept
    assert (tmp_path / "gamma.csv").exists()
