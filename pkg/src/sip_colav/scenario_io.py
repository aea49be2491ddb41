"""Scenario file parsing.

Scenarios are JSON documents.  Validation is strict: unknown keys are
rejected so a typo cannot silently fall back to a default.  Every value
that does fall back to a default is recorded in `resolved`, which the CLI
echoes into report.json.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .distance_field import load_occupancy_pgm, load_pointcloud_csv, build_field
from .dynamics import DiffDriveModel
from .errors import SchemaError
from .geometry import PaddedPolygon
from .maps import MAPS, get_map
from .simulator import LIMIT_PROFILES, LimitProfile
from .solver import SolveConfig
from .uncertainty import UncertaintyTube

# documented defaults for every optional parameter (echoed into reports)
DEFAULTS = {
    "horizon": {"N": 20, "dt": 0.05},
    "weights": {"Q": [10.0, 10.0, 1.0, 1.0, 1.0], "R": [1.0, 1.0],
                "Q_N": None, "slack_l1": 1e3, "slack_l2": 1e4},
    "solver": {"mode": "nominal", "max_iter": 6, "eps_cvg": 1e-5,
               "eps_cl": 0.6, "eps_inside": 0.03, "eps_gs": None,
               "boundary_spacing": 0.016, "subset_cap": 6,
               "sqp_iters_per_outer": 1},
    "limits": "medium",
    "uncertainty": None,
}

_TOP_KEYS = {"robot", "model", "limits", "horizon", "weights",
             "uncertainty", "solver", "reference", "map"}


def _require_keys(obj: dict, allowed, where: str, required=()):
    if not isinstance(obj, dict):
        raise SchemaError(f"{where} must be an object")
    unknown = set(obj) - set(allowed)
    if unknown:
        raise SchemaError(f"{where}: unknown keys {sorted(unknown)}")
    missing = set(required) - set(obj)
    if missing:
        raise SchemaError(f"{where}: missing keys {sorted(missing)}")


def _num(obj, key, where, default=None):
    v = obj.get(key, default)
    if v is None:
        raise SchemaError(f"{where}.{key} is required")
    if not isinstance(v, (int, float)) or isinstance(v, bool):
        raise SchemaError(f"{where}.{key} must be a number")
    return float(v)


@dataclass
class Scenario2D:
    """Parsed scenario: concrete objects plus the resolved raw values."""

    poly: PaddedPolygon
    model: DiffDriveModel
    limits: LimitProfile
    N: int
    dt: float
    weights: dict
    tube: UncertaintyTube | None
    solve_config: SolveConfig
    waypoints: np.ndarray
    map_source: str
    resolved: dict         # every parameter after defaulting, for reports


def _parse_robot(doc) -> PaddedPolygon:
    rb = doc.get("robot")
    if rb is None:
        raise SchemaError("missing 'robot' section")
    _require_keys(rb, {"vertices", "r_shp"}, "robot", required=("vertices", "r_shp"))
    verts = np.asarray(rb["vertices"], dtype=float)
    if verts.ndim != 2 or verts.shape[1] != 2 or verts.shape[0] < 3:
        raise SchemaError("robot.vertices must be an (n>=3, 2) array")
    return PaddedPolygon(verts, _num(rb, "r_shp", "robot"))


def _parse_model(doc) -> DiffDriveModel:
    md = doc.get("model", {"kinematic_only": True})
    _require_keys(md, {"kinematic_only", "A_nu", "B_nu", "C_nu", "D_nu",
                       "heading_convention"}, "model")
    # Scenario pipelines couple dynamics to the footprint geometry, and the
    # CCW body rotation keeps the nose on the motion direction only for the
    # cos/sin pairing, so that is the default here.  The bearing-style
    # variant stays available for external data.
    heading = md.get("heading_convention", "standard")
    if md.get("kinematic_only", False):
        extra = set(md) - {"kinematic_only", "heading_convention"}
        if extra:
            raise SchemaError(f"model: kinematic_only excludes {sorted(extra)}")
        return DiffDriveModel.kinematic(heading)
    for key in ("A_nu", "B_nu", "C_nu", "D_nu"):
        if key not in md:
            raise SchemaError(f"model.{key} required unless kinematic_only")
    try:
        return DiffDriveModel(np.asarray(md["A_nu"], dtype=float),
                              np.asarray(md["B_nu"], dtype=float),
                              np.asarray(md["C_nu"], dtype=float),
                              np.asarray(md["D_nu"], dtype=float),
                              heading_convention=heading)
    except Exception as exc:
        raise SchemaError(f"model matrices invalid: {exc}") from exc


def _parse_limits(doc, resolved) -> LimitProfile:
    lm = doc.get("limits", DEFAULTS["limits"])
    if isinstance(lm, str):
        if lm not in LIMIT_PROFILES:
            raise SchemaError(f"limits profile {lm!r} unknown; "
                              f"choices {sorted(LIMIT_PROFILES)}")
        resolved["limits"] = lm
        return LIMIT_PROFILES[lm]
    _require_keys(lm, {"v_max", "omega_max", "a_max", "alpha_max"}, "limits",
                  required=("v_max", "omega_max", "a_max", "alpha_max"))
    prof = LimitProfile(_num(lm, "v_max", "limits"),
                        _num(lm, "omega_max", "limits"),
                        _num(lm, "a_max", "limits"),
                        _num(lm, "alpha_max", "limits"))
    resolved["limits"] = vars(prof).copy()
    return prof


def _parse_uncertainty(doc, n_x: int, resolved) -> UncertaintyTube | None:
    un = doc.get("uncertainty")
    if un is None:
        resolved["uncertainty"] = None
        return None
    _require_keys(un, {"Sigma0", "W_per_50ms", "W"}, "uncertainty")
    if "W_per_50ms" in un and "W" in un:
        raise SchemaError("uncertainty: give W_per_50ms or W, not both")
    s0 = un.get("Sigma0", 0.0)
    if isinstance(s0, (int, float)):
        # scalar scale applies to the kinematic block, actuator states exact
        Sigma0 = np.zeros((n_x, n_x))
        Sigma0[:5, :5] = float(s0) * np.eye(5)
    else:
        Sigma0 = np.asarray(s0, dtype=float)
        if Sigma0.shape != (n_x, n_x):
            raise SchemaError(f"uncertainty.Sigma0 must be {n_x}x{n_x}")
    if "W" in un:
        W = np.asarray(un["W"], dtype=float)
        if W.shape != (n_x, n_x):
            raise SchemaError(f"uncertainty.W must be {n_x}x{n_x}")
    else:
        W = _num(un, "W_per_50ms", "uncertainty", 0.0)
    resolved["uncertainty"] = {
        "Sigma0": s0 if isinstance(s0, (int, float)) else Sigma0.tolist(),
        ("W" if "W" in un else "W_per_50ms"):
            W.tolist() if isinstance(W, np.ndarray) else W}
    return UncertaintyTube(Sigma0, W)


def _parse_solver(doc, resolved) -> SolveConfig:
    sv = dict(DEFAULTS["solver"])
    given = doc.get("solver", {})
    _require_keys(given, set(sv), "solver")
    sv.update(given)
    if sv["mode"] not in ("nominal", "robust"):
        raise SchemaError("solver.mode must be 'nominal' or 'robust'")
    resolved["solver"] = sv.copy()
    return SolveConfig(
        mode=sv["mode"], max_iter=int(sv["max_iter"]),
        eps_cvg=float(sv["eps_cvg"]), eps_cl=float(sv["eps_cl"]),
        eps_inside=float(sv["eps_inside"]),
        eps_gs=None if sv["eps_gs"] is None else float(sv["eps_gs"]),
        boundary_spacing=float(sv["boundary_spacing"]),
        subset_cap=int(sv["subset_cap"]),
        sqp_iters_per_outer=int(sv["sqp_iters_per_outer"]))


def _parse_reference(doc, base: Path) -> np.ndarray:
    ref = doc.get("reference")
    if ref is None:
        raise SchemaError("missing 'reference' section")
    _require_keys(ref, {"waypoints", "file"}, "reference")
    if ("waypoints" in ref) == ("file" in ref):
        raise SchemaError("reference: give exactly one of waypoints | file")
    if "waypoints" in ref:
        wp = np.asarray(ref["waypoints"], dtype=float)
    else:
        path = base / str(ref["file"])
        if not path.exists():
            raise SchemaError(f"reference file not found: {path}")
        wp = np.loadtxt(path, delimiter=",", ndmin=2)
    if wp.ndim != 2 or wp.shape[1] != 2 or wp.shape[0] < 2:
        raise SchemaError("reference waypoints must be (n>=2, 2)")
    return wp


def load_scenario(path, map_override=None) -> Scenario2D:
    """Parse and validate a scenario JSON file.

    `map_override` (a path or builtin map name) replaces the document's
    map entry, matching the CLI's --map flag.
    """
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"scenario file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"scenario is not valid JSON: {exc}") from exc
    _require_keys(doc, _TOP_KEYS, "scenario", required=("robot",))

    resolved: dict = {}
    poly = _parse_robot(doc)
    model = _parse_model(doc)
    limits = _parse_limits(doc, resolved)

    hz = dict(DEFAULTS["horizon"])
    given = doc.get("horizon", {})
    _require_keys(given, {"N", "dt"}, "horizon")
    hz.update(given)
    N = int(hz["N"])
    dt = float(hz["dt"])
    if N < 1 or dt <= 0:
        raise SchemaError("horizon: need N >= 1 and dt > 0")
    resolved["horizon"] = {"N": N, "dt": dt}

    wt = dict(DEFAULTS["weights"])
    given = doc.get("weights", {})
    _require_keys(given, set(wt), "weights")
    wt.update(given)
    if wt["Q_N"] is None:
        wt["Q_N"] = wt["Q"]
    resolved["weights"] = {k: (v.tolist() if isinstance(v, np.ndarray) else v)
                           for k, v in wt.items()}

    tube = _parse_uncertainty(doc, model.n_x, resolved)
    cfg = _parse_solver(doc, resolved)
    waypoints = _parse_reference(doc, path.parent)

    map_source = map_override if map_override is not None else doc.get("map")
    if map_source is None:
        raise SchemaError("no map given (scenario 'map' entry or --map)")
    resolved["map"] = str(map_source)

    return Scenario2D(poly=poly, model=model, limits=limits, N=N, dt=dt,
                      weights=wt, tube=tube, solve_config=cfg,
                      waypoints=waypoints, map_source=str(map_source),
                      resolved=resolved)


def load_map(source: str, *, padding: float = 1.0, resolution: float = 0.02):
    """Obstacle field from a builtin map name, a point-cloud CSV, or an
    occupancy PGM."""
    if source in MAPS:
        return get_map(source).field(padding=padding)
    path = Path(source)
    if not path.exists():
        raise SchemaError(f"map file not found: {path}")
    if path.suffix.lower() == ".pgm":
        return load_occupancy_pgm(path)
    pts = load_pointcloud_csv(path)
    return build_field(pts, resolution, padding=padding)
