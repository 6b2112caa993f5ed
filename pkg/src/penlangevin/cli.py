"""Config-driven experiment runner and command-line surface.

Subcommands
-----------
``sample <config>``   run a chain, measure W2 against the target at the
                      checkpoints, evaluate requested bounds, write CSV + JSON.
``pgf <config>``      integrate the penalized gradient flow, write the
                      distance curve with its bound columns.
``bounds <config>``   evaluate bound formulas on a time grid (CSV of
                      t,value,label,params).
``verify [--suite]``  run the numerical verification suites, emit a JSON
                      report, exit nonzero on failure.

CSV files use the fixed header
``t,w2_empirical,w2_exact,bound_thm1,bound_prop1,bound_pgf2,n_paths,h,seed``
with UTF-8, LF line endings and 17 significant digits; fields that do not
apply to a run stay empty.  Reruns with the same config and seed produce
byte-identical CSV, for any thread count.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import bounds as B
from . import dynamics as dyn
from . import exactlaw as ex
from . import metrics as mt
from . import potentials as pt
from . import verify as vf
from .config import ExperimentConfig, parse_config
from .errors import ConfigError, PenLangevinError

CSV_HEADER = "t,w2_empirical,w2_exact,bound_thm1,bound_prop1,bound_pgf2,n_paths,h,seed"

SUMMARY_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["command", "passed", "rate_fits", "dominance", "params"],
    "properties": {
        "command": {"type": "string"},
        "passed": {"type": "boolean"},
        "params": {"type": "object"},
        "rate_fits": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["column", "slope", "window"],
                "properties": {
                    "column": {"type": "string"},
                    "slope": {"type": "number"},
                    "window": {"type": "array", "items": {"type": "number"}},
                    "accept_range": {"type": ["array", "null"]},
                    "passed": {"type": ["boolean", "null"]},
                },
            },
        },
        "dominance": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["bound", "column", "n_points", "violations", "passed"],
                "properties": {
                    "bound": {"type": "string"},
                    "column": {"type": "string"},
                    "n_points": {"type": "integer"},
                    "violations": {"type": "integer"},
                    "worst_margin": {"type": "number"},
                    "slack_desc": {"type": "string"},
                    "passed": {"type": "boolean"},
                },
            },
        },
        "extra": {"type": "object"},
        "runtime_s": {"type": "number"},
    },
}


def _fmt(x) -> str:
    if x is None:
        return ""
    return f"{float(x):.17g}"


def _write_csv(path: Path, rows: list[dict]) -> None:
    cols = CSV_HEADER.split(",")
    lines = [CSV_HEADER]
    for r in rows:
        lines.append(",".join(_fmt(r.get(c)) for c in cols))
    path.write_bytes(("\n".join(lines) + "\n").encode("utf-8"))


def _write_json(path: Path, obj: dict) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")


def _out_paths(cfg: ExperimentConfig, outdir: str | None, stem: str) -> tuple[Path, Path]:
    base = Path(cfg.output.get("outdir") or outdir
                or os.environ.get("PENLANGEVIN_OUTDIR", "."))
    base.mkdir(parents=True, exist_ok=True)
    csv = base / (cfg.output.get("csv") or f"{stem}.csv")
    summ = base / (cfg.output.get("summary") or f"{stem}.json")
    return csv, summ


def _target_sampler(pot: pt.Potential, n: int, key: int):
    """Deterministic iid draws from the target; None when unavailable."""
    if pot.kind == "gaussian":
        cov_sqrt = ex._psd_sqrt(np.linalg.inv(pot.H))
        def draw(tag: int) -> np.ndarray:
            g = np.random.Generator(np.random.Philox(key=[np.uint64(key),
                                                          np.uint64(tag)]))
            return pot._centre() + g.standard_normal((n, pot.dim)) @ cov_sqrt
        return draw
    if pot.dim == 1:
        def draw(tag: int) -> np.ndarray:
            g = np.random.Generator(np.random.Philox(key=[np.uint64(key),
                                                          np.uint64(tag)]))
            return mt.sample_target_1d(pot, 0.0, n, g).points
        return draw
    return None


def _bootstrap_se(sim: np.ndarray, tgt: np.ndarray, key: int, n_boot: int = 16) -> float:
    """Std error of the 1-D empirical W2 under path resampling."""
    g = np.random.Generator(np.random.Philox(key=[np.uint64(key), np.uint64(2**40)]))
    n = sim.shape[0]
    vals = []
    for _ in range(n_boot):
        idx = g.integers(0, n, size=n)
        vals.append(mt.w2_empirical_1d(sim[idx], tgt))
    return float(np.std(vals, ddof=1))


def run_experiment(cfg: ExperimentConfig, outdir: str | None = None) -> dict:
    """Simulate per config; write the checkpoint CSV and the JSON summary."""
    t_start = time.perf_counter()
    pot = cfg.build_potential()
    sched = cfg.build_schedule(pot)
    samp = {k: v for k, v in cfg.sampler.items() if not k.startswith("_")}
    scfg = dyn.SamplerConfig(**samp)
    if cfg.sampler.get("_threads"):
        dyn.set_threads(cfg.sampler["_threads"])

    snaps = dyn.run_chain(scfg, pot, sched)
    steps = np.array([s for s, _ in snaps])
    ts = steps * scfg.h

    mu2 = pot.mu2 if pot.mu2 is not None else (
        pt.target_moment(pot, 0.0, 2) if pot.dim == 1 else None)

    n_t = cfg.target_n or scfg.n_paths
    n_use = min(n_t, scfg.n_paths)
    sampler = _target_sampler(pot, n_use, key=scfg.master_seed ^ 0x5EED)

    centred_gauss = pot.kind == "gaussian" and np.allclose(pot._centre(), 0.0)
    exact_laws = None
    if centred_gauss and scfg.variant in ("ld_euler", "pld_euler", "tpld_euler"):
        sched_eff, tau_eff = dyn._effective(scfg, sched)
        init = ex.GaussianLaw(np.zeros(pot.dim), np.zeros((pot.dim, pot.dim)))
        pos = ts > 0.0
        laws = ex.propagate_gaussian_pld(pot.H, sched_eff, tau_eff, ts[pos], init)
        pi = ex.stationary_law(pot.H, 1.0 if scfg.variant != "tpld_euler" else scfg.tau)
        exact_laws = {}
        j = 0
        for i, t in enumerate(ts):
            if t > 0.0:
                exact_laws[i] = ex.w2_gaussian(laws[j], pi)
                j += 1
            else:
                exact_laws[i] = ex.w2_gaussian(
                    ex.GaussianLaw(np.zeros(pot.dim), np.zeros((pot.dim, pot.dim))), pi)

    rows, w2_emp, w2_se = [], {}, {}
    for i, (step, ens) in enumerate(snaps):
        row: dict = {"t": ts[i], "n_paths": scfg.n_paths, "h": scfg.h,
                     "seed": scfg.master_seed}
        if sampler is not None and pot.dim == 1:
            tgt = sampler(step)
            sim = ens.states[:n_use]
            w2_emp[i] = mt.w2_empirical_1d(sim, tgt)
            w2_se[i] = _bootstrap_se(sim, tgt, key=scfg.master_seed ^ step)
            row["w2_empirical"] = w2_emp[i]
        elif sampler is not None:
            # exact matching caps at 512 points; take the leading paths
            k = min(n_use, mt.ASSIGNMENT_MAX_N)
            tgt = sampler(step)
            w2_emp[i] = mt.w2_empirical_assignment(ens.states[:k], tgt[:k])
            row["w2_empirical"] = w2_emp[i]
        if exact_laws is not None:
            row["w2_exact"] = exact_laws[i]
        if "thm1" in cfg.bounds["evaluate"] and mu2 is not None and scfg.tau == 1.0:
            row["bound_thm1"] = B.bound_theorem1(sched, pot.m, mu2, float(ts[i]))
        if ("prop1" in cfg.bounds["evaluate"] and mu2 is not None
                and sched.tag == "pld_optimal" and pot.m == 0.0):
            row["bound_prop1"] = B.bound_prop1(sched.params["A"], mu2, float(ts[i]))
        rows.append(row)

    rate_fits = []
    rw = cfg.bounds.get("rate_window")
    if rw is not None:
        for col in ("w2_empirical", "w2_exact"):
            vals = np.array([r.get(col, np.nan) for r in rows], dtype=float)
            ok = np.isfinite(vals) & (ts > 0.0) & (vals > 0.0)
            if ok.sum() >= 5:
                sel = (ts >= rw[0]) & (ts <= rw[1]) & ok
                if sel.sum() >= 5:
                    slope = mt.rate_fit(ts[sel], vals[sel])
                    sr = cfg.bounds.get("slope_range")
                    rate_fits.append({
                        "column": col, "slope": slope, "window": list(rw),
                        "accept_range": list(sr) if sr else None,
                        "passed": bool(sr[0] <= slope <= sr[1]) if sr else None})

    dominance = []
    C = cfg.bounds["slack_const"]
    for bname in cfg.bounds["dominance"]:
        col = "w2_exact" if bname == "thm1" else "w2_empirical"
        bcol = f"bound_{bname}"
        viol, worst, n_pts = 0, np.inf, 0
        for i, r in enumerate(rows):
            if bcol not in r or col not in r:
                continue
            n_pts += 1
            slack = 1e-9 if col == "w2_exact" else 3.0 * (w2_se.get(i, 0.0) + C * scfg.h)
            margin = r[bcol] + slack - r[col]
            worst = min(worst, margin)
            if margin < 0.0:
                viol += 1
        dominance.append({
            "bound": bname, "column": col, "n_points": n_pts, "violations": viol,
            "worst_margin": float(worst) if np.isfinite(worst) else 0.0,
            "slack_desc": ("1e-9" if col == "w2_exact"
                           else f"3*(bootstrap SE + {C}*h)"),
            "passed": bool(viol == 0 and n_pts > 0)})

    passed = all(d["passed"] for d in dominance) and all(
        rf["passed"] is not False for rf in rate_fits)
    summary = {
        "command": "sample", "passed": bool(passed),
        "params": {"potential": pot.kind, "dim": pot.dim, "m": pot.m, "M": pot.M,
                   "mu2": mu2, "schedule": sched.tag,
                   "schedule_params": {k: float(v) for k, v in sched.params.items()},
                   "variant": scfg.variant, "h": scfg.h, "n_steps": scfg.n_steps,
                   "n_paths": scfg.n_paths, "tau": scfg.tau, "R": scfg.R,
                   "seed": scfg.master_seed},
        "rate_fits": rate_fits, "dominance": dominance,
        "extra": {}, "runtime_s": time.perf_counter() - t_start,
    }
    csv_path, summ_path = _out_paths(cfg, outdir, "experiment")
    _write_csv(csv_path, rows)
    _write_json(summ_path, summary)
    return summary


def _pgf_bound_constants(cfg: ExperimentConfig, pot: pt.Potential) -> tuple[float, float] | None:
    pgf = cfg.pgf or {}
    if pgf.get("D") is not None and pgf.get("q") is not None:
        return float(pgf["D"]), float(pgf["q"])
    r = float(np.linalg.norm(pot.minimizer)) if pot.minimizer is not None else 0.0
    if r == 0.0:
        return None
    if pot.kind == "cubic":
        return B.assumption_a_constants("cubic", norm_xstar=r)
    if pot.kind == "power":
        return B.assumption_a_constants("power", a=pot.a, norm_xstar=r)
    if pot.kind == "separable_power" and pot.a == 3.0:
        return B.assumption_a_constants("separable_cubic", weights=pot.weights,
                                        xstar=pot.minimizer)
    return None


def run_pgf(cfg: ExperimentConfig, outdir: str | None = None) -> dict:
    """Integrate the penalized flow; write distance curve and summary."""
    t_start = time.perf_counter()
    if cfg.pgf is None:
        raise ConfigError("pgf: required section for the pgf command")
    pot = cfg.build_potential()
    sched = cfg.build_schedule(pot, for_pgf=True)
    pgf = cfg.pgf
    x0 = None if pgf["x0"] is None else np.asarray(pgf["x0"], dtype=float)
    traj = dyn.integrate_pgf(pot, sched, pgf["T"], pgf["dt"], x0=x0,
                             n_records=pgf["n_records"])
    dq = _pgf_bound_constants(cfg, pot)
    nx = float(np.linalg.norm(pot.minimizer))

    rows = []
    for t, d in zip(traj.t, traj.dist):
        row = {"t": t, "w2_exact": d, "h": pgf["dt"]}
        if dq is not None and sched.tag == "pgf_optimal":
            row["bound_pgf2"] = B.bound_pgf2(sched.params["A"], dq[0], dq[1], nx,
                                             float(t))
        rows.append(row)

    rate_fits = []
    rw = cfg.bounds.get("rate_window")
    if rw is not None:
        sel = (traj.t >= rw[0]) & (traj.t <= rw[1]) & (traj.dist > 0.0)
        if sel.sum() >= 5:
            slope = mt.rate_fit(traj.t[sel], traj.dist[sel])
            sr = cfg.bounds.get("slope_range")
            rate_fits.append({"column": "distance", "slope": slope,
                              "window": list(rw),
                              "accept_range": list(sr) if sr else None,
                              "passed": bool(sr[0] <= slope <= sr[1]) if sr else None})

    dominance = []
    if dq is not None:
        viol, worst = 0, np.inf
        for t, d in zip(traj.t, traj.dist):
            bv = B.bound_pgf(dq[0], dq[1], sched, nx, float(t))
            margin = bv + 1e-9 - d
            worst = min(worst, margin)
            viol += margin < 0.0
        dominance.append({"bound": "pgf", "column": "distance",
                          "n_points": int(traj.t.size), "violations": int(viol),
                          "worst_margin": float(worst), "slack_desc": "1e-9",
                          "passed": bool(viol == 0)})

    extra = {}
    if pgf["compare_unpenalized"]:
        from .schedules import zero as zero_sched
        ref = dyn.integrate_pgf(pot, zero_sched(0.0), pgf["T"], pgf["dt"], x0=x0,
                                n_records=pgf["n_records"])
        extra["unpenalized_final_distance"] = float(ref.dist[-1])
        extra["final_distance"] = float(traj.dist[-1])
        extra["below_unpenalized"] = bool(traj.dist[-1] < ref.dist[-1])

    passed = (all(d["passed"] for d in dominance)
              and all(rf["passed"] is not False for rf in rate_fits))
    summary = {
        "command": "pgf", "passed": bool(passed),
        "params": {"potential": pot.kind, "dim": pot.dim,
                   "schedule": sched.tag,
                   "schedule_params": {k: float(v) for k, v in sched.params.items()},
                   "T": pgf["T"], "dt": pgf["dt"],
                   "Dq": list(dq) if dq else None},
        "rate_fits": rate_fits, "dominance": dominance, "extra": extra,
        "runtime_s": time.perf_counter() - t_start,
    }
    csv_path, summ_path = _out_paths(cfg, outdir, "pgf")
    _write_csv(csv_path, rows)
    _write_json(summ_path, summary)
    return summary


def run_bounds(cfg: ExperimentConfig, outdir: str | None = None) -> dict:
    """Evaluate the requested bound formulas on a log time grid; CSV output
    columns are t, value, label, params (params JSON-encoded)."""
    import csv as _csv
    pot = cfg.build_potential()
    sched = cfg.build_schedule(pot)
    bc = cfg.bounds
    if bc["t_min"] is None or bc["t_max"] is None:
        raise ConfigError("bounds.t_min and bounds.t_max: required for the "
                          "bounds command")
    tg = np.geomspace(bc["t_min"], bc["t_max"], bc["n_points"])
    mu2 = pot.mu2 if pot.mu2 is not None else (
        pt.target_moment(pot, 0.0, 2) if pot.dim == 1 else None)
    curves = []
    for label in bc["evaluate"]:
        if label == "thm1":
            vals = [B.bound_theorem1(sched, pot.m, mu2, float(t)) for t in tg]
            params = {"m": pot.m, "mu2": mu2, **sched.params}
        elif label == "prop1":
            vals = [B.bound_prop1(sched.params["A"], mu2, float(t)) for t in tg]
            params = {"A": sched.params["A"], "mu2": mu2}
        else:  # pgf2
            dq = _pgf_bound_constants(cfg, pot)
            if dq is None or sched.tag != "pgf_optimal":
                raise ConfigError("pgf2 bound needs a pgf_optimal schedule and "
                                  "(D, q) constants")
            nx = float(np.linalg.norm(pot.minimizer))
            vals = [B.bound_pgf2(sched.params["A"], dq[0], dq[1], nx, float(t))
                    for t in tg]
            params = {"A": sched.params["A"], "D": dq[0], "q": dq[1],
                      "norm_xstar": nx}
        curves.append(B.BoundCurve(tg, np.asarray(vals), label, params))

    csv_path, summ_path = _out_paths(cfg, outdir, "bounds")
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        wr = _csv.writer(fh, lineterminator="\n")
        wr.writerow(["t", "value", "label", "params"])
        for c in curves:
            pjson = json.dumps(c.params, sort_keys=True)
            for t, v in zip(c.t_grid, c.values):
                wr.writerow([_fmt(t), _fmt(v), c.label, pjson])
    summary = {"command": "bounds", "passed": True, "params": {},
               "rate_fits": [], "dominance": [],
               "extra": {"labels": list(bc["evaluate"]), "n_points": int(tg.size)}}
    _write_json(summ_path, summary)
    return summary


def run_verify(suite: str = "all", outdir: str | None = None,
               out_name: str = "verify.json") -> dict:
    """Run the verification suites; returns the aggregate report."""
    reports: list[vf.CheckReport] = []
    if suite in ("coupling", "all"):
        reports.append(vf.check_coupling_laws())
    if suite in ("mu2", "all"):
        g1 = pt.gaussian(np.eye(1))
        ph = pt.pseudo_huber(1.0, np.zeros(1))
        reports.append(vf.check_mu2_derivative(g1, [0.0, 0.5, 1.0, 2.0]))
        reports.append(vf.check_mu2_derivative(ph, [0.0, 0.5, 1.0, 2.0]))
    if suite in ("lemma1", "all"):
        reports.append(vf.check_lemma1_gaussian())
    if not reports:
        raise ConfigError(f"unknown verify suite {suite!r} "
                          "(known: coupling, mu2, lemma1, all)")
    agg = {"suite": suite, "passed": all(r.passed for r in reports),
           "checks": [r.to_dict() for r in reports]}
    base = Path(outdir or os.environ.get("PENLANGEVIN_OUTDIR", "."))
    base.mkdir(parents=True, exist_ok=True)
    _write_json(base / out_name, agg)
    return agg


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(prog="penlangevin",
                                 description="penalized Langevin sampling toolkit")
    ap.add_argument("--outdir", default=None,
                    help="output directory (default: $PENLANGEVIN_OUTDIR or .)")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("sample", "pgf", "bounds"):
        sp = sub.add_parser(name)
        sp.add_argument("config", type=Path)
    vp = sub.add_parser("verify")
    vp.add_argument("--suite", default="all")
    args = ap.parse_args(argv)

    try:
        if args.command == "verify":
            agg = run_verify(args.suite, outdir=args.outdir)
            print(json.dumps({"suite": agg["suite"], "passed": agg["passed"]}))
            return 0 if agg["passed"] else 1
        cfg = parse_config(args.config.read_text(encoding="utf-8"))
        runner = {"sample": run_experiment, "pgf": run_pgf, "bounds": run_bounds}
        summary = runner[args.command](cfg, outdir=args.outdir)
        print(json.dumps({"command": summary["command"],
                          "passed": summary["passed"]}))
        return 0 if summary["passed"] else 1
    except PenLangevinError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
