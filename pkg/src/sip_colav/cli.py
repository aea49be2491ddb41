"""Command-line entry points.

Subcommands: solve (offline OCP), mpc (closed loop), bench (randomized
suite with aggregate plots), eval (exact clearance of a saved trajectory),
sdt (dump the distance transform as a PGM).

Exit codes: 0 success (a non-converged solve is still 0, flagged in the
report), 2 bad input (schema violation, missing file), 3 solver failure.
Worker count for bench comes from SIP_COLAV_THREADS (0 or unset = auto).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from .distance_field import save_sd_pgm
from .errors import (DegeneratePath, MapExit, NoConvergence, QpFailure,
                     SchemaError, SipColavError)
from .geometry import Pose2
from .maps import get_map, random_start_cases
from .ocp import OcpProblem, Trajectory
from .scenario_io import DEFAULTS, Scenario2D, load_map, load_scenario
from .simulator import (LIMIT_PROFILES, Scenario, evaluate_min_distance,
                        generate_reference, run_mpc)
from .solver import SolveConfig, solve_nominal_ocp, solve_robust_ocp
from .svg import Chart, plot_trajectory


def _fail(code: int, msg: str) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return code


def _report_dict(rep, resolved: dict) -> dict:
    return {
        "mode": rep.mode,
        "converged": rep.converged,
        "iterations": rep.iterations,
        "kkt_residual": rep.kkt_residual,
        "wall_time": rep.wall_time,
        "phase_totals": rep.phase_totals(),
        "per_iteration": [vars(r).copy() for r in rep.records],
        "parameters": resolved,
    }


def _write_trajectory_csv(path, traj: Trajectory, dt: float, n_nu: int) -> None:
    nu_cols = "".join(f",nu{i}" for i in range(n_nu))
    with Path(path).open("w") as f:
        f.write(f"t,px,py,theta,v_cmd,w_cmd{nu_cols},a,alpha\n")
        for k in range(traj.xs.shape[0]):
            x = traj.xs[k]
            row = [repr(float(k * dt))] + [repr(float(v)) for v in x]
            if k < traj.us.shape[0]:
                row += [repr(float(v)) for v in traj.us[k]]
            else:
                row += ["", ""]
            f.write(",".join(row) + "\n")


def _read_trajectory_csv(path):
    with Path(path).open() as f:
        rows = list(csv.reader(f))
    if not rows or rows[0][0] != "t":
        raise SchemaError(f"{path}: not a trajectory CSV (missing header)")
    header = rows[0]
    n_state = len(header) - 3          # drop t, a, alpha
    xs, ts = [], []
    for r in rows[1:]:
        ts.append(float(r[0]))
        xs.append([float(v) for v in r[1:1 + n_state]])
    return np.array(ts), np.array(xs)


def _build_problem(sc: Scenario2D, x0, x_ref, u_ref) -> OcpProblem:
    n_x = sc.model.n_x
    q = np.asarray(sc.weights["Q"], dtype=float)
    qn = np.asarray(sc.weights["Q_N"], dtype=float)
    r = np.asarray(sc.weights["R"], dtype=float)
    if q.size != n_x:
        q = np.concatenate([q, np.full(n_x - q.size, q[-1])])
    if qn.size != n_x:
        qn = np.concatenate([qn, np.full(n_x - qn.size, qn[-1])])
    lb_x = np.full(n_x, -np.inf)
    ub_x = np.full(n_x, np.inf)
    lb_x[3], ub_x[3] = -sc.limits.v_max, sc.limits.v_max
    lb_x[4], ub_x[4] = -sc.limits.omega_max, sc.limits.omega_max
    return OcpProblem(
        model=sc.model, N=sc.N, dt=sc.dt, x0=x0, x_ref=x_ref, u_ref=u_ref,
        Q=np.diag(q), R=np.diag(r), Q_N=np.diag(qn),
        lb_x=lb_x, ub_x=ub_x,
        lb_u=np.array([-sc.limits.a_max, -sc.limits.alpha_max]),
        ub_u=np.array([sc.limits.a_max, sc.limits.alpha_max]),
        w_l1=float(sc.weights["slack_l1"]), w_l2=float(sc.weights["slack_l2"]))


def _reference_for(sc: Scenario2D):
    """Reference trajectory clipped/padded to the scenario horizon."""
    x_full, u_full = generate_reference(sc.waypoints, sc.limits, sc.dt,
                                        sc.model)
    n = x_full.shape[0]
    idx = np.minimum(np.arange(sc.N + 1), n - 1)
    uidx = np.minimum(np.arange(sc.N), max(n - 2, 0))
    u_ref = u_full[uidx] if u_full.shape[0] else np.zeros((sc.N, sc.model.n_u))
    return x_full[idx], u_ref


def cmd_solve(args) -> int:
    try:
        sc = load_scenario(args.scenario, map_override=args.map)
        fld = load_map(sc.map_source)
    except SchemaError as exc:
        return _fail(2, str(exc))
    cfg = sc.solve_config
    if args.mode:
        cfg.mode = args.mode
    if args.max_iter is not None:
        cfg.max_iter = args.max_iter
    if args.tol is not None:
        cfg.eps_cvg = args.tol
    sc.resolved["solver"]["mode"] = cfg.mode
    sc.resolved["solver"]["max_iter"] = cfg.max_iter
    sc.resolved["solver"]["eps_cvg"] = cfg.eps_cvg

    try:
        x_ref, u_ref = _reference_for(sc)
    except DegeneratePath as exc:
        return _fail(2, f"reference: {exc}")
    prob = _build_problem(sc, x_ref[0], x_ref, u_ref)
    guess = Trajectory(x_ref.copy(), u_ref.copy())

    try:
        if cfg.mode == "robust":
            if sc.tube is None:
                return _fail(2, "robust mode needs an 'uncertainty' section")
            traj, subsets, rep = solve_robust_ocp(prob, fld, sc.poly, sc.tube,
                                                  guess, cfg)
        else:
            traj, subsets, rep = solve_nominal_ocp(prob, fld, sc.poly, guess,
                                                   cfg)
    except (QpFailure, MapExit, NoConvergence) as exc:
        return _fail(3, f"solver: {type(exc).__name__}: {exc}")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_trajectory_csv(out / "trajectory.csv", traj, sc.dt, sc.model.n_nu)
    report = _report_dict(rep, sc.resolved)
    report["min_distance_trace"] = [
        evaluate_min_distance(fld, sc.poly, Pose2.from_state(x))
        for x in traj.xs]
    report["min_distance"] = min(report["min_distance_trace"])
    (out / "report.json").write_text(json.dumps(report, indent=1) + "\n")
    plot_trajectory(out / "trajectory.svg", fld, sc.poly, traj.xs,
                    reference=x_ref)
    flag = "" if rep.converged else " (not converged at max_iter)"
    print(f"solved{flag}: {rep.iterations} iterations, "
          f"min distance {report['min_distance']:.4f} m, "
          f"outputs in {out}")
    return 0


def cmd_mpc(args) -> int:
    try:
        sc = load_scenario(args.scenario, map_override=args.map)
        fld = load_map(sc.map_source)
    except SchemaError as exc:
        return _fail(2, str(exc))
    scenario = Scenario(
        field=fld, poly=sc.poly, model=sc.model, cfg=sc.solve_config,
        waypoints=sc.waypoints, limits=sc.limits, N=sc.N, dt=sc.dt,
        n_steps=args.steps, seed=args.seed, tube=sc.tube,
        weights=sc.weights, overrun=args.overrun,
        time_budget=sc.dt if args.overrun == "hold" else None)
    try:
        log = run_mpc(scenario)
    except SipColavError as exc:
        return _fail(3, f"mpc: {type(exc).__name__}: {exc}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    log.save_csv(out / "runlog.csv")
    log.save_summary(out / "summary.json")
    s = log.summary()
    print(f"{s['n_ticks']} ticks, negative fraction "
          f"{s['negative_fraction']:.4f}, worst distance "
          f"{s['worst_min_distance']:.4f} m, outputs in {out}")
    if log.aborted:
        print(f"aborted early: {log.aborted}", file=sys.stderr)
    return 0


_SUITE_KEYS = {"name", "map", "n_cases", "seed", "mode", "robot", "solver",
               "horizon", "limits", "uncertainty", "r_shp"}


def _case_scenario(suite: dict, case: dict) -> dict:
    """Scenario document for one suite case (shares the suite's settings)."""
    doc = {
        "robot": suite.get("robot", {
            "vertices": [[-0.18, -0.11], [0.45, -0.11], [0.45, 0.11],
                         [-0.18, 0.11], [-0.33, 0.0]],
            "r_shp": suite.get("r_shp", 0.2)}),
        "model": {"kinematic_only": True, "heading_convention": "standard"},
        "limits": suite.get("limits", "slow"),
        "horizon": suite.get("horizon", {"N": 30, "dt": 0.2}),
        "solver": suite.get("solver", {}),
        "reference": {"waypoints": np.asarray(case["waypoints"]).tolist()},
        "map": suite["map"],
    }
    if suite.get("uncertainty") is not None:
        doc["uncertainty"] = suite["uncertainty"]
    return doc


def run_suite_case(suite: dict, case: dict, fld, out_dir: Path | None,
                   idx: int) -> dict:
    """One offline OCP solve from a randomized start; returns the record."""
    import tempfile

    doc = _case_scenario(suite, case)
    with tempfile.NamedTemporaryFile("w", suffix=".json", delete=False) as f:
        json.dump(doc, f)
        tmp = f.name
    try:
        sc = load_scenario(tmp)
    finally:
        os.unlink(tmp)
    cfg = sc.solve_config
    cfg.mode = suite.get("mode", "nominal")
    x_ref, u_ref = _reference_for(sc)
    x0 = np.asarray(case["x0"], dtype=float)
    prob = _build_problem(sc, x0, x_ref, u_ref)
    guess = Trajectory(x_ref.copy(), u_ref.copy())
    guess.xs[0] = x0
    rec: dict = {"case": idx, "x0": x0.tolist()}
    t0 = time.perf_counter()
    try:
        if cfg.mode == "robust":
            traj, _, rep = solve_robust_ocp(prob, fld, sc.poly, sc.tube,
                                            guess, cfg)
        else:
            traj, _, rep = solve_nominal_ocp(prob, fld, sc.poly, guess, cfg)
        rec.update({
            "status": "converged" if rep.converged else "max_iter",
            "iterations": rep.iterations,
            "min_sd_per_iter": [r.min_signed_distance for r in rep.records],
            "final_min_sd": min(
                evaluate_min_distance(fld, sc.poly, Pose2.from_state(x))
                for x in traj.xs),
            "step_norms": [r.step_norm for r in rep.records],
            "t_subset": [r.t_subset for r in rep.records],
            "t_lower": [r.t_lower for r in rep.records],
            "t_qp": [r.t_qp for r in rep.records],
            "t_propagate": [r.t_propagate for r in rep.records],
        })
    except SipColavError as exc:
        rec.update({"status": f"failed: {type(exc).__name__}", "iterations": 0,
                    "min_sd_per_iter": [], "final_min_sd": None,
                    "step_norms": [], "t_subset": [], "t_lower": [],
                    "t_qp": [], "t_propagate": []})
    rec["wall_time"] = time.perf_counter() - t0
    if out_dir is not None:
        tmp_path = out_dir / f".case_{idx:04d}.tmp"
        final = out_dir / f"case_{idx:04d}.json"
        tmp_path.write_text(json.dumps(rec) + "\n")
        tmp_path.rename(final)
    return rec


def _worker_count(n_cases: int) -> int:
    raw = os.environ.get("SIP_COLAV_THREADS", "0")
    try:
        w = int(raw)
    except ValueError:
        w = 0
    if w <= 0:
        w = os.cpu_count() or 1
    return max(1, min(w, n_cases))


def _aggregate(records: list[dict]) -> dict:
    records = sorted(records, key=lambda r: r["case"])
    iters = [r["iterations"] for r in records if r["status"] != "failed"]
    hist: dict[int, int] = {}
    for i in iters:
        hist[i] = hist.get(i, 0) + 1
    max_len = max((len(r["min_sd_per_iter"]) for r in records), default=0)
    curves = []
    for j in range(max_len):
        vals = [r["min_sd_per_iter"][j] for r in records
                if len(r["min_sd_per_iter"]) > j
                and r["min_sd_per_iter"][j] is not None]
        if vals:
            curves.append({"iteration": j + 1,
                           "median": float(np.median(vals)),
                           "q10": float(np.quantile(vals, 0.10)),
                           "q90": float(np.quantile(vals, 0.90))})
    timing = {}
    for phase in ("t_subset", "t_lower", "t_qp", "t_propagate"):
        all_t = np.array([t for r in records for t in r[phase]])
        if all_t.size:
            timing[phase] = {q: float(np.quantile(all_t, float(q)))
                             for q in ("0.5", "0.9", "0.99")}
    return {
        "deterministic": {
            "n_cases": len(records),
            "n_failed": sum(1 for r in records
                            if r["status"].startswith("failed")),
            "iteration_histogram": {str(k): hist[k] for k in sorted(hist)},
            "min_sd_curves": curves,
            "final_min_sd": [r["final_min_sd"] for r in records],
            "statuses": [r["status"] for r in records],
        },
        "timing_quantiles": timing,
    }


def run_bench(suite: dict, out_dir: Path | None = None,
              workers: int | None = None) -> dict:
    """Run a randomized-start suite and return the aggregates."""
    unknown = set(suite) - _SUITE_KEYS
    if unknown:
        raise SchemaError(f"suite: unknown keys {sorted(unknown)}")
    if "map" not in suite:
        raise SchemaError("suite: missing 'map'")
    spec = get_map(suite["map"]) if suite["map"] in (
        "l_corridor", "docking_station", "s_corridor", "walkway") else None
    if spec is None:
        raise SchemaError(f"suite map {suite['map']!r} is not a builtin map")
    fld = spec.field()
    n_cases = int(suite.get("n_cases", 50))
    seed = int(suite.get("seed", 0))
    lim_name = suite.get("limits", "slow")
    v_max = (LIMIT_PROFILES[lim_name].v_max if isinstance(lim_name, str)
             else float(lim_name["v_max"]))
    cases = random_start_cases(spec, n_cases, seed, v_max=v_max)
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    n_workers = _worker_count(n_cases) if workers is None else workers
    if n_workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            futs = [pool.submit(run_suite_case, suite, c, fld, out_dir, i)
                    for i, c in enumerate(cases)]
            records = [f.result() for f in futs]
    else:
        records = [run_suite_case(suite, c, fld, out_dir, i)
                   for i, c in enumerate(cases)]
    agg = _aggregate(records)
    agg["suite"] = {k: suite[k] for k in sorted(suite)}
    return agg


def _bench_plots(agg: dict, out: Path) -> None:
    hist = agg["deterministic"]["iteration_histogram"]
    if hist:
        ch = Chart()
        ks = np.array(sorted(int(k) for k in hist))
        ch.bars(ks, np.array([hist[str(k)] for k in ks]), width=0.8)
        ch.title = "Iterations to convergence"
        ch.x_label = "outer iterations"
        ch.y_label = "cases"
        ch.save(out / "iteration_histogram.svg")
    curves = agg["deterministic"]["min_sd_curves"]
    if curves:
        ch = Chart()
        it = [c["iteration"] for c in curves]
        ch.line(it, [c["median"] for c in curves], "#1f77b4", "median")
        ch.line(it, [c["q10"] for c in curves], "#aec7e8", "q10")
        ch.line(it, [c["q90"] for c in curves], "#aec7e8", "q90")
        ch.line(it, [0.0] * len(it), "#d62728", "zero")
        ch.title = "Minimum signed distance vs iteration"
        ch.x_label = "outer iteration"
        ch.y_label = "min signed distance [m]"
        ch.save(out / "violation_curves.svg")


def cmd_bench(args) -> int:
    path = Path(args.suite)
    if not path.exists():
        return _fail(2, f"suite file not found: {path}")
    try:
        suite = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        return _fail(2, f"suite is not valid JSON: {exc}")
    out = Path(args.out)
    try:
        agg = run_bench(suite, out_dir=out / "cases")
    except SchemaError as exc:
        return _fail(2, str(exc))
    except SipColavError as exc:
        return _fail(3, f"bench: {type(exc).__name__}: {exc}")
    (out / "aggregates.json").write_text(json.dumps(agg, indent=1) + "\n")
    _bench_plots(agg, out)
    det = agg["deterministic"]
    print(f"{det['n_cases']} cases, {det['n_failed']} failed; "
          f"aggregates in {out}")
    return 0


def cmd_eval(args) -> int:
    try:
        fld = load_map(args.map)
        ts, xs = _read_trajectory_csv(args.trajectory)
    except SchemaError as exc:
        return _fail(2, str(exc))
    except FileNotFoundError as exc:
        return _fail(2, str(exc))
    poly = _poly_from_args(args)
    dmin = np.inf
    for t, x in zip(ts, xs):
        d = evaluate_min_distance(fld, poly, Pose2.from_state(x))
        print(f"t={t:.3f}  min_sd={d!r}")
        dmin = min(dmin, d)
    print(f"global minimum: {dmin!r}")
    return 0


def _poly_from_args(args):
    from .geometry import PaddedPolygon
    if getattr(args, "scenario", None):
        sc = load_scenario(args.scenario)
        return sc.poly
    return PaddedPolygon([[-0.18, -0.11], [0.45, -0.11], [0.45, 0.11],
                          [-0.18, 0.11], [-0.33, 0.0]],
                         getattr(args, "r_shp", 0.2) or 0.2)


def cmd_sdt(args) -> int:
    try:
        fld = load_map(args.map)
    except SchemaError as exc:
        return _fail(2, str(exc))
    save_sd_pgm(args.out, fld)
    print(f"wrote {args.out} ({fld.shape[0]}x{fld.shape[1]} cells at "
          f"{fld.resolution} m)")
    return 0


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="sip-colav",
        description="Collision-free trajectory optimization and MPC for a "
                    "padded polygon robot among point obstacles.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve one offline trajectory problem")
    p.add_argument("--scenario", required=True)
    p.add_argument("--map", default=None,
                   help="override the scenario's map (path or builtin name)")
    p.add_argument("--mode", choices=["nominal", "robust"], default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--max-iter", type=int, default=None)
    p.add_argument("--tol", type=float, default=None)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("mpc", help="closed-loop run")
    p.add_argument("--scenario", required=True)
    p.add_argument("--map", default=None)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--overrun", choices=["wait", "hold"], default="wait")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mpc)

    p = sub.add_parser("bench", help="randomized-start benchmark suite")
    p.add_argument("--suite", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("eval", help="exact clearance of a saved trajectory")
    p.add_argument("--trajectory", required=True)
    p.add_argument("--map", required=True)
    p.add_argument("--scenario", default=None,
                   help="scenario supplying the footprint (default: the "
                        "stock five-vertex footprint, r_shp 0.2)")
    p.add_argument("--r-shp", dest="r_shp", type=float, default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sdt", help="dump the signed-distance grid as PGM")
    p.add_argument("--map", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sdt)

    args = ap.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
