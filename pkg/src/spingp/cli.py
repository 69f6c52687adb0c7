"""Command line entry point: spingp evolve|scatter|soliton|predict|pipeline|pcf-selftest."""
import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import asymptotics as asy
from . import harness as hz
from .core import CSV_HEADER, MatrixPotential, pde_residual, write_field_csv
from .evolver import Trajectory
from .pcf import selftest
from .solitons import SolveReport, cone_filter, peak_position, soliton_field


def _finish(rep, out):
    rep.data["passed"] = rep.passed
    if out:
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "report.json", "w") as fh:
            json.dump(hz._jsonable(rep.data), fh, indent=2, sort_keys=True)
    print(json.dumps({"passed": rep.passed, "checks": {k: v["passed"] for k, v in rep.data["checks"].items()},
                      "stage_failed": rep.data["stage_failed"]}))
    return 0 if rep.passed else 1


def _prepare(cfg):
    cfg.validate()
    if cfg.out_dir:
        cfg.out_dir.mkdir(parents=True, exist_ok=True)
    return hz.Report(cfg), cfg.out_dir


def cmd_evolve(cfg):
    rep, out = _prepare(cfg)
    G = cfg.grid("evolve_grid")
    Q0 = hz.initial_field(cfg, G, cfg.solitons())
    try:
        tr, snaps = hz._stage(rep, "evolve", hz._evolve_samples, cfg, Q0)
    except hz.StageError:
        return _finish(rep, out)
    rep.check("power_drift", tr.power_drift(), 1e-6, tr.power_drift() < 1e-6)
    rep.check("boundary_decay", float(max(s.boundary_decay for s in tr.snapshots)), 1e-3,
              max(s.boundary_decay for s in tr.snapshots) < 1e-3)
    if out:
        for t, Q in snaps.items():
            write_field_csv(out / f"field_t{t:g}.csv", MatrixPotential(G, Q))
    return _finish(rep, out)


def cmd_scatter(cfg):
    rep, out = _prepare(cfg)
    g = cfg.grid()
    Q0 = hz.initial_field(cfg, g, cfg.solitons())
    try:
        _, _, ident = hz._stage(rep, "scatter", hz._scatter, cfg, Q0, rep, out)
        for name in ("unitarity", "transpose", "symmetry"):
            rep.check(name, ident[name], 1e-6, ident[name] < 1e-6)
        found, diag = hz._stage(rep, "spectrum", hz._find_spectrum, cfg, Q0, rep)
        if out:
            hz.write_spectrum_json(out / "spectrum.json", found, diag)
    except hz.StageError:
        pass
    return _finish(rep, out)


def cmd_soliton(cfg):
    rep, out = _prepare(cfg)
    sd = cfg.solitons()
    g = cfg.grid()
    srep = SolveReport()
    rng = np.random.default_rng(cfg.seed)
    tracks = {}
    for t in [0.0] + [float(t) for t in cfg.params["sample_times"]]:
        try:
            Q = hz._stage(rep, f"solve_t{t:g}", soliton_field, sd, g.x, t, srep)
        except hz.StageError:
            return _finish(rep, out)
        amp = np.abs(Q).max(axis=(1, 2))
        tracks[t] = peak_position(g.x, amp)
        if out:
            write_field_csv(out / f"soliton_t{t:g}.csv", MatrixPotential(g, Q))
    rep.value("peak_tracks", tracks)
    rep.value("condition_max", srep.cond_max)
    rep.check("log_det_I_plus_AAbar", srep.log_det_min, 0.0, srep.log_det_min > 0.0)
    h = 1e-4
    t1 = float(rng.uniform(0.5, 1.5))
    snaps = [MatrixPotential(g, soliton_field(sd, g.x, t1 + s * h)) for s in (-1, 0, 1)]
    res = pde_residual(Trajectory(g, np.array([t1 - h, t1, t1 + h]), snaps, np.zeros(3)), 1)
    rep.check("pde_residual", res, 1e-5, res < 1e-5)
    return _finish(rep, out)


def cmd_predict(cfg):
    rep, out = _prepare(cfg)
    inputs = cfg.params.get("inputs") or {}
    src = Path(inputs.get("dir", out or "."))
    ks, gam = hz.read_gamma_csv(inputs.get("gamma", src / "gamma.csv"))
    sd = hz.read_spectrum_json(inputs.get("spectrum", src / "spectrum.json"))
    samples = asy.GammaSamples(ks, gam)
    cone = cfg.cone()
    if cone is not None:
        sd = cone_filter(sd, cone, dressing=cfg.params["dressing"]).modulated
    G = cfg.grid("evolve_grid")
    amp = cfg.params["amplitude"]
    times = [float(t) for t in cfg.params["sample_times"]]
    rays = [float(r) for r in cfg.params["rays"]]

    def points(t):
        if cone is not None:
            return np.nonzero(cone.contains(G.x, t))[0]
        return np.array([int(np.argmin(np.abs(G.x - r * t))) for r in rays])

    preds = {}
    try:
        for t in times:
            idx = points(t)
            preds[t] = (idx, hz._stage(rep, f"predict_t{t:g}", asy.predict, G.x[idx], t, sd, samples, amp))
    except hz.StageError:
        return _finish(rep, out)
    if out:
        for t, (idx, P) in preds.items():
            with open(out / f"predict_t{t:g}.csv", "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(CSV_HEADER)
                for x, q in zip(G.x[idx], P):
                    w.writerow([repr(float(v)) for v in (x, q[0, 0].real, q[0, 0].imag, q[0, 1].real,
                                                         q[0, 1].imag, q[1, 1].real, q[1, 1].imag)])
    if cfg.params.get("compare", True):
        try:
            _, snaps = hz._stage(rep, "evolve", hz._evolve_samples, cfg, hz.initial_field(cfg, G, cfg.solitons()))
        except hz.StageError:
            return _finish(rep, out)
        errs = [float(np.abs(snaps[t][preds[t][0]] - preds[t][1]).max()) for t in times]
        slope, r2 = hz.fit_slope(times, errs)
        rep.value("errors", errs)
        limit = -0.5 if sd.n else -0.6
        rep.check("decay_slope", slope, limit, slope <= limit)
        if out:
            hz.write_errors_csv(out / "errors.csv", times, errs)
    return _finish(rep, out)


def cmd_pipeline(cfg):
    rep = hz.run_pipeline(cfg)
    return _finish(rep, cfg.out_dir)


def cmd_pcf_selftest(cfg):
    rep, out = _prepare(cfg)
    for name, value, limit, ok in selftest(seed=cfg.seed):
        rep.check(name, value, limit, ok)
    return _finish(rep, out)


COMMANDS = {
    "evolve": cmd_evolve,
    "scatter": cmd_scatter,
    "soliton": cmd_soliton,
    "predict": cmd_predict,
    "pipeline": cmd_pipeline,
    "pcf-selftest": cmd_pcf_selftest,
}


def main(argv=None):
    ap = argparse.ArgumentParser(prog="spingp", description="Spin-1 matrix NLS: evolution, scattering, solitons, asymptotics.")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="JSON config; missing keys fall back to the packaged defaults")
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--seed", type=int, default=None)
    args = ap.parse_args(argv)
    raw = {}
    if args.config:
        with open(args.config) as fh:
            raw = json.load(fh)
    try:
        cfg = hz.ExperimentConfig.from_dict(raw, args.out, args.seed)
        return COMMANDS[args.command](cfg)
    except hz.ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
