"""Experiment configuration, end-to-end scenario runs, decay fits and report files."""
import copy
import csv
import json
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import asymptotics as asy
from .core import MatrixPotential, SpatialGrid, gaussian_potential, pde_residual, write_field_csv
from .evolver import Trajectory, evolve
from .scattering import (find_discrete_spectrum, identity_errors, norming_constants,
                         scattering_sweep)
from .solitons import ConeSpec, SolitonData, cone_filter, soliton_field

SCENARIOS = ("solitonless", "one_soliton", "two_soliton", "mixed")


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage, err):
        super().__init__(f"stage '{stage}' failed: {err}")
        self.stage = stage
        self.err = err


def load_defaults():
    return json.loads(resources.files("spingp").joinpath("defaults.json").read_text())


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def to_complex(v):
    """JSON number or [re, im] pair to complex."""
    if isinstance(v, (list, tuple)):
        if len(v) != 2:
            raise ConfigError(f"complex value must be [re, im], got {v}")
        return complex(float(v[0]), float(v[1]))
    return complex(v)


def from_complex(z):
    z = complex(z)
    return [z.real, z.imag]


def soliton_data_from(entries):
    if not entries:
        return SolitonData.empty()
    ks, fs = [], []
    for e in entries:
        ks.append(complex(e["re"], e["im"]))
        fs.append([[to_complex(v) for v in row] for row in e["f"]])
    return SolitonData(np.array(ks), np.array(fs))


def soliton_data_to(sd):
    return [{"re": float(k.real), "im": float(k.imag), "f": [[from_complex(v) for v in row] for row in f]}
            for k, f in zip(sd.ks, sd.fs)]


@dataclass
class ExperimentConfig:
    scenario: str
    params: dict
    out_dir: Path = None
    seed: int = 0
    issues: list = field(default_factory=list)

    @classmethod
    def from_dict(cls, d, out_dir=None, seed=None):
        params = _merge(load_defaults(), d)
        params.pop("_units", None)
        s = params["seed"] if seed is None else int(seed)
        params["seed"] = s
        return cls(params["scenario"], params, Path(out_dir) if out_dir else None, s)

    @classmethod
    def load(cls, path, out_dir=None, seed=None):
        with open(path) as fh:
            return cls.from_dict(json.load(fh), out_dir, seed)

    def grid(self, key="grid"):
        g = self.params[key]
        return SpatialGrid(float(g["x_min"]), float(g["x_max"]), int(g["n_points"]))

    def cone(self):
        c = self.params.get("cone")
        return None if c is None else ConeSpec(float(c["x1"]), float(c["x2"]), float(c["v1"]), float(c["v2"]))

    def solitons(self):
        return soliton_data_from(self.params.get("solitons") or [])

    def k_grid(self):
        kg = self.params["k_grid"]
        return np.linspace(-float(kg["k_max"]), float(kg["k_max"]), int(kg["n"]))

    def validate(self):
        """Check every guard before any compute; raises ConfigError listing all problems."""
        p = self.params
        bad = []
        if self.scenario not in SCENARIOS:
            bad.append(f"scenario must be one of {SCENARIOS}")
        for key in ("grid", "evolve_grid"):
            try:
                self.grid(key)
            except (ValueError, KeyError, TypeError) as e:
                bad.append(f"{key}: {e}")
        dt = float(p["dt"])
        if not 0 < dt <= 1e-2:
            bad.append(f"dt = {dt} outside (0, 1e-2]")
        sdt = float(p["soliton_dt"])
        if not 0 < sdt <= 1e-2:
            bad.append(f"soliton_dt = {sdt} outside (0, 1e-2]")
        ts = [float(t) for t in p["sample_times"]]
        si = float(p["store_interval"])
        if len(ts) < 2 or any(b <= a for a, b in zip(ts, ts[1:])) or ts[0] <= 0:
            bad.append("sample_times must be positive and increasing with at least two entries")
        if si <= 0 or abs(si / dt - round(si / dt)) > 1e-9 * si / dt:
            bad.append("store_interval must be a positive multiple of dt")
        elif any(abs(t / si - round(t / si)) > 1e-9 * max(1.0, t / si) for t in ts):
            bad.append("every sample time must be a multiple of store_interval")
        kg = p["k_grid"]
        if float(kg["k_max"]) <= 0 or int(kg["n"]) < 5:
            bad.append("k_grid needs k_max > 0 and n >= 5")
        try:
            sd = self.solitons()
        except (ValueError, KeyError, TypeError) as e:
            bad.append(f"solitons: {e}")
            sd = None
        if sd is not None:
            need = {"solitonless": 0, "one_soliton": 1, "two_soliton": 2}.get(self.scenario)
            if need is not None and sd.n != need:
                bad.append(f"scenario {self.scenario} needs {need} soliton(s), got {sd.n}")
            if self.scenario == "mixed" and sd.n < 1:
                bad.append("mixed scenario needs at least one soliton")
        try:
            cone = self.cone()
        except (ValueError, KeyError, TypeError) as e:
            bad.append(f"cone: {e}")
            cone = None
        if self.scenario in ("two_soliton", "mixed") and cone is None:
            bad.append(f"scenario {self.scenario} needs a cone")
        if p["amplitude"] not in ("paper", "channel"):
            bad.append("amplitude must be 'paper' or 'channel'")
        if p["dressing"] not in ("scalar", "matrix"):
            bad.append("dressing must be 'scalar' or 'matrix'")
        box = p["search_box"]
        if len(box) != 4 or not (box[0] < box[1] and 1e-3 <= box[2] < box[3]):
            bad.append("search_box must be [re0, re1, im0 >= 1e-3, im1] with re0 < re1, im0 < im1")
        ini = p.get("initial")
        if ini is not None and ini.get("family") not in ("gaussian", "none"):
            bad.append("initial.family must be 'gaussian' or 'none'")
        self.issues = bad
        if bad:
            raise ConfigError("; ".join(bad))
        return self


@dataclass
class DecayFit:
    times: np.ndarray
    errors: np.ndarray
    slope: float
    intercept: float
    r_squared: float


def decay_fit(times, errors) -> DecayFit:
    """Least-squares line through (log t, log error)."""
    t = np.asarray(times, dtype=float)
    e = np.asarray(errors, dtype=float)
    if t.shape != e.shape or t.ndim != 1:
        raise ValueError("times and errors must be 1-d arrays of equal length")
    if len(t) < 5:
        raise ValueError("decay_fit needs at least 5 samples")
    if np.any(e <= 0) or not np.all(np.isfinite(e)):
        raise ValueError("errors must be positive and finite")
    if np.any(t <= 0) or np.any(np.diff(t) <= 0):
        raise ValueError("times must be positive and increasing")
    X, Y = np.log(t), np.log(e)
    slope, intercept = np.polyfit(X, Y, 1)
    resid = Y - (slope * X + intercept)
    ss = np.sum((Y - Y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid ** 2) / ss if ss > 0 else 1.0
    return DecayFit(t, e, float(slope), float(intercept), float(min(max(r2, 0.0), 1.0)))


def fit_slope(times, errors):
    """Slope and r^2 for short series (fewer than five points) using the same log-log line."""
    X, Y = np.log(np.asarray(times, float)), np.log(np.asarray(errors, float))
    slope, intercept = np.polyfit(X, Y, 1)
    resid = Y - (slope * X + intercept)
    ss = np.sum((Y - Y.mean()) ** 2)
    return float(slope), float(1.0 - np.sum(resid ** 2) / ss) if ss > 0 else 1.0


def initial_field(cfg, grid, sd=None):
    """Soliton part at t = 0 plus the configured Gaussian."""
    Q = np.zeros((grid.n_points, 2, 2), complex)
    if sd is not None and sd.n:
        Q += soliton_field(sd, grid.x, 0.0)
    ini = cfg.params.get("initial")
    if ini and ini.get("family") == "gaussian":
        amp = ini["amplitude"]
        vals = tuple(to_complex(amp[key]) for key in ("q1", "q0", "qm1"))
        if any(vals):
            Q += gaussian_potential(grid, vals, width=float(ini["width"]), center=float(ini["center"])).Q
    return MatrixPotential(grid, Q)


class Report:
    def __init__(self, cfg):
        self.data = {"scenario": cfg.scenario, "seed": cfg.seed, "checks": {}, "values": {},
                     "stage_failed": None, "timings": {}}

    def check(self, name, value, limit, passed, note=None):
        entry = {"value": value, "limit": limit, "passed": bool(passed)}
        if note:
            entry["note"] = note
        self.data["checks"][name] = entry

    def value(self, name, v):
        self.data["values"][name] = v

    @property
    def passed(self):
        return self.data["stage_failed"] is None and all(c["passed"] for c in self.data["checks"].values())


def write_gamma_csv(path, ks, gamma):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k"] + [f"{p}_g{i}{j}" for i in (1, 2) for j in (1, 2) for p in ("re", "im")])
        for k, g in zip(ks, gamma):
            row = [repr(float(k))]
            for v in g.reshape(4):
                row += [repr(float(v.real)), repr(float(v.imag))]
            w.writerow(row)


def read_gamma_csv(path):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    g = (data[:, 1::2] + 1j * data[:, 2::2]).reshape(len(data), 2, 2)
    return data[:, 0], g


def write_spectrum_json(path, sd, diagnostics=None):
    with open(path, "w") as fh:
        json.dump({"poles": soliton_data_to(sd), "diagnostics": _jsonable(diagnostics or {})}, fh, indent=2,
                  sort_keys=True)


def read_spectrum_json(path):
    with open(path) as fh:
        return soliton_data_from(json.load(fh)["poles"])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (complex, np.complexfloating)):
        return from_complex(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_errors_csv(path, times, errors, extra=None):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        cols = ["t", "sup_error", "slope_so_far"] + list((extra or {}).keys())
        w.writerow(cols)
        for i, (t, e) in enumerate(zip(times, errors)):
            slope = fit_slope(times[: i + 1], errors[: i + 1])[0] if i >= 1 else float("nan")
            row = [repr(float(t)), repr(float(e)), repr(slope)]
            row += [repr(float(v[i])) for v in (extra or {}).values()]
            w.writerow(row)


def _evolve_samples(cfg, Q0):
    p = cfg.params
    dt = float(p["dt"])
    ts = [float(t) for t in p["sample_times"]]
    store = int(round(float(p["store_interval"]) / dt))
    tr = evolve(Q0, ts[-1], dt=dt, store_every=store, check_drift=False)
    snaps = {}
    for t in ts:
        i = int(np.argmin(np.abs(tr.times - t)))
        snaps[t] = tr.snapshots[i].Q
    return tr, snaps


def _scatter(cfg, Q0s, rep, out, sd_hint=None):
    ks = cfg.k_grid()
    a, b, gam = scattering_sweep(Q0s, ks)
    ident = identity_errors(a, b, gam)
    rep.value("identity_errors", ident)
    rep.value("gamma_edge", float(max(np.abs(gam[0]).max(), np.abs(gam[-1]).max())))
    if out:
        write_gamma_csv(out / "gamma.csv", ks, gam)
    return ks, gam, ident


def _find_spectrum(cfg, Q0s, rep):
    spec = find_discrete_spectrum(Q0s, search_box=tuple(cfg.params["search_box"]))
    rep.value("discrete_spectrum_count", len(spec))
    if len(spec) == 0:
        return SolitonData.empty(), spec.diagnostics
    nc = norming_constants(Q0s, spec.ks)
    diag = {"search": spec.diagnostics, "norming": nc.diagnostics}
    return SolitonData(nc.ks, nc.fs), diag


def _stage(rep, name, fn, *args, **kw):
    t0 = time.perf_counter()
    try:
        return fn(*args, **kw)
    except Exception as e:  # any module error aborts with the stage named
        rep.data["stage_failed"] = name
        rep.data["error"] = f"{type(e).__name__}: {e}"
        raise StageError(name, e) from e
    finally:
        rep.data["timings"][name] = round(time.perf_counter() - t0, 3)


def _run_solitonless(cfg, rep, out):
    g = cfg.grid()
    G = cfg.grid("evolve_grid")
    Q0s = initial_field(cfg, g)
    ks, gam, ident = _stage(rep, "scatter", _scatter, cfg, Q0s, rep, out)
    samples = asy.GammaSamples(ks, gam)
    tr, snaps = _stage(rep, "evolve", _evolve_samples, cfg, initial_field(cfg, G))
    rep.value("power_drift", tr.power_drift())
    rays = [float(r) for r in cfg.params["rays"]]
    times = sorted(snaps)

    def ray_errors(amplitude):
        errs = []
        for t in times:
            Q = snaps[t]
            e = 0.0
            for xi in rays:
                j = int(np.argmin(np.abs(G.x - xi * t)))
                pred = asy.dispersive_term(samples, G.x[j], t, amplitude=amplitude)
                e = max(e, float(np.abs(Q[j] - pred).max()))
            errs.append(e)
        return errs

    errs = _stage(rep, "predict", ray_errors, cfg.params["amplitude"])
    slope, r2 = fit_slope(times, errs)
    rep.value("ray_errors", errs)
    rep.value("sample_times", times)
    rep.check("dispersive_decay_slope", slope, -0.6, slope <= -0.6)
    rep.check("dispersive_decay_r2", r2, 0.9, r2 > 0.9)
    rep.check("power_drift", tr.power_drift(), 1e-6, tr.power_drift() < 1e-6)
    if out:
        write_errors_csv(out / "errors.csv", times, errs)
        write_field_csv(out / "initial.csv", Q0s)


def _run_soliton(cfg, rep, out):
    g = cfg.grid()
    sd = cfg.solitons()
    Q0 = initial_field(cfg, g, sd)
    if out:
        write_field_csv(out / "initial.csv", Q0)
    ks, gam, ident = _stage(rep, "scatter", _scatter, cfg, Q0, rep, out)
    rep.check("reflectionless", float(np.abs(gam).max()), 1e-3, np.abs(gam).max() < 1e-3)
    found, diag = _stage(rep, "spectrum", _find_spectrum, cfg, Q0, rep)
    if out:
        write_spectrum_json(out / "spectrum.json", found, diag)
    ok = found.n == sd.n
    rep.check("pole_count", found.n, sd.n, ok)
    if ok:
        kerr = ferr = 0.0
        for k, f in zip(sd.ks, sd.fs):
            j = int(np.argmin(np.abs(found.ks - k)))
            kerr = max(kerr, float(abs(found.ks[j] - k)))
            ferr = max(ferr, float(np.abs(found.fs[j] - f).max()))
        rep.check("round_trip_pole_error", kerr, 1e-4, kerr < 1e-4)
        rep.check("round_trip_norming_error", ferr, 1e-3, ferr < 1e-3)
    # evolution of the t = 0 slice against the closed form
    T = float(cfg.params["soliton_check_time"])
    dt = float(cfg.params["soliton_dt"])
    n_steps = int(round(T / dt))
    tr = _stage(rep, "evolve", evolve, Q0, T, dt=dt, store_every=n_steps)
    exact = soliton_field(sd, g.x, T)
    err = float(np.abs(tr.snapshots[-1].Q - exact).max())
    rep.check("evolver_vs_closed_form", err, 1e-4, err < 1e-4)
    # pde residual of the closed form sampled at three times
    h = 1e-4
    snaps = [MatrixPotential(g, soliton_field(sd, g.x, 1.0 + s * h)) for s in (-1, 0, 1)]
    res = pde_residual(Trajectory(g, np.array([1.0 - h, 1.0, 1.0 + h]), snaps, np.zeros(3)), 1)
    rep.check("pde_residual", res, 1e-5, res < 1e-5)
    if cfg.scenario == "two_soliton":
        _cone_check(cfg, rep, sd, out)


def _cone_check(cfg, rep, sd, out):
    cone = cfg.cone()
    dec = cone_filter(sd, cone, dressing=cfg.params["dressing"])
    rep.value("mu_rate", dec.mu_rate)
    n = int(cfg.params["cone_points"])
    vals = []
    for t in (10.0, 20.0):
        xs = cone.cross_section(t, n)
        vals.append(float(np.abs(soliton_field(sd, xs, t) - soliton_field(dec.modulated, xs, t)).max()))
    rep.value("cone_differences", vals)
    ratio_ok = vals[1] <= vals[0] / 10
    rep.check("cone_decrease_factor", vals[0] / vals[1] if vals[1] > 0 else float("inf"), 10.0, ratio_ok)
    small = dec.mu_rate < 0.5 or vals[1] < 1e-3
    rep.check("cone_value_t20", vals[1], 1e-3, small)


def _run_mixed(cfg, rep, out):
    g = cfg.grid()
    G = cfg.grid("evolve_grid")
    sd0 = cfg.solitons()
    Q0s = initial_field(cfg, g, sd0)
    ks, gam, ident = _stage(rep, "scatter", _scatter, cfg, Q0s, rep, out)
    found, diag = _stage(rep, "spectrum", _find_spectrum, cfg, Q0s, rep)
    if out:
        write_spectrum_json(out / "spectrum.json", found, diag)
    rep.check("pole_count", found.n, sd0.n, found.n == sd0.n)
    samples = asy.GammaSamples(ks, gam)
    cone = cfg.cone()
    dec = cone_filter(found, cone, dressing=cfg.params["dressing"])
    rep.value("mu_rate", dec.mu_rate)
    tr, snaps = _stage(rep, "evolve", _evolve_samples, cfg, initial_field(cfg, G, sd0))
    rep.value("power_drift", tr.power_drift())
    times = sorted(snaps)
    amp = cfg.params["amplitude"]

    def cone_errors():
        full, disp_only, sol_only = [], [], []
        for t in times:
            m = cone.contains(G.x, t)
            xs = G.x[m]
            Q = snaps[t][m]
            sol = soliton_field(dec.modulated, xs, t) if dec.modulated.n else np.zeros((len(xs), 2, 2), complex)
            disp = np.array([asy.dispersive_term(samples, x, t, amplitude=amp) for x in xs])
            full.append(float(np.abs(Q - sol - disp).max()))
            disp_only.append(float(np.abs(Q - disp).max()))
            sol_only.append(float(np.abs(Q - sol).max()))
        return full, disp_only, sol_only

    full, disp_only, sol_only = _stage(rep, "predict", cone_errors)
    slope, r2 = fit_slope(times, full)
    rep.value("cone_errors", full)
    rep.value("dispersive_only_errors", disp_only)
    rep.value("soliton_only_errors", sol_only)
    rep.value("sample_times", times)
    rep.check("composite_decay_slope", slope, -0.5, slope <= -0.5)
    better = all(f < d for f, d in zip(full, disp_only))
    rep.check("beats_dispersive_only", [f / d for f, d in zip(full, disp_only)], 1.0, better)
    if out:
        write_errors_csv(out / "errors.csv", times, full,
                         {"dispersive_only": disp_only, "soliton_only": sol_only})


def run_pipeline(cfg: ExperimentConfig):
    """Run the configured scenario end to end and write report.json (and intermediate files) to cfg.out_dir."""
    cfg.validate()
    out = cfg.out_dir
    if out:
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "config.json", "w") as fh:
            json.dump(cfg.params, fh, indent=2, sort_keys=True)
    rep = Report(cfg)
    runner = {"solitonless": _run_solitonless, "one_soliton": _run_soliton,
              "two_soliton": _run_soliton, "mixed": _run_mixed}[cfg.scenario]
    try:
        runner(cfg, rep, out)
    except StageError:
        pass
    finally:
        rep.data["passed"] = rep.passed
        if out:
            with open(out / "report.json", "w") as fh:
                json.dump(_jsonable(rep.data), fh, indent=2, sort_keys=True)
    return rep
