"""Config-driven experiments producing CSV tables and a JSON manifest.

Each experiment receives a validated flat parameter dict and a seeded
generator and returns an ``Outcome``: named tables, JSON documents,
named boolean checks and extra manifest entries.  Nothing touches the
filesystem until ``write_outputs``, so a rejected config leaves no files.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import platform
from dataclasses import asdict, dataclass, field
from importlib import metadata
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence

import numpy as np

from .bessel import BC, bessel_root, disk_spectrum, lambda_disk
from .curve_geometry import (
    AmbientField,
    FourierCurve,
    disk_defect,
    enclosed_area,
    frame,
    p0_predicate,
    symmetry_defect,
)
from .errors import ConfigError, LengthMismatch
from .fem import solve_eigs, triangulate
from .flow import FlowConfig, perturbed_disk, run
from .riemannian import MetricSpec, connection_identity_check, hessian_form
from .shape_calculus import (
    band_limited_alpha,
    dJ2_reduced,
    dJ3,
    dJ3_classical,
    dJ_dirichlet,
    dlambda_neumann,
    fd_with_richardson,
    first_simple_index,
    fourier_alpha,
    optimality_residual,
    schiffer_residuals,
)

SEED_ENV = "SCHIFFER_LAB_SEED"
COMMON = {"seed": 0, "out": "out"}


@dataclass
class Outcome:
    tables: Dict[str, Dict[str, Sequence]] = field(default_factory=dict)
    documents: Dict[str, Any] = field(default_factory=dict)
    checks: Dict[str, bool] = field(default_factory=dict)
    info: Dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())


# ----------------------------------------------------------------------
# CSV and hashing

def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def emit_plot_data(series: Mapping[str, Sequence]) -> str:
    """RFC-4180 CSV text (CRLF line ends) with one column per key, in key order.

    Floats are written with 17 significant digits so values round-trip.

    Raises
    ------
    LengthMismatch
        If the columns differ in length.
    """
    names = list(series)
    lengths = {len(series[k]) for k in names}
    if len(lengths) > 1:
        raise LengthMismatch(f"column lengths differ: {sorted(lengths)}")
    n = lengths.pop() if lengths else 0
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(names)
    for i in range(n):
        writer.writerow([_cell(series[k][i]) for k in names])
    return buf.getvalue()


def sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def versions() -> Dict[str, str]:
    out = {"python": platform.python_version()}
    for pkg in ("numpy", "scipy", "shapely", "triangle"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = "unknown"
    return out


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def write_outputs(outcome: Outcome, out_dir: Path, manifest_head: Dict[str, Any]) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    files = {}
    for name, series in outcome.tables.items():
        path = out_dir / f"{name}.csv"
        path.write_bytes(emit_plot_data(series).encode("utf-8"))
        files[path.name] = sha256(path)
    for name, doc in outcome.documents.items():
        path = out_dir / f"{name}.json"
        path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n")
        files[path.name] = sha256(path)
    manifest = dict(manifest_head)
    manifest.update(checks=outcome.checks, passed=outcome.passed, info=outcome.info, files=files)
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


# ----------------------------------------------------------------------
# parameter parsing

def curve_from_spec(spec, rng: Optional[np.random.Generator] = None) -> FourierCurve:
    """Build a curve from a preset name, a JSON file path or a dict.

    Presets: ``circle``, ``ellipse`` (keys ``a``, ``b``), ``kidney`` and
    ``perturbed-disk`` (keys ``amplitude``, ``area``).  A dict with
    ``harmonics_max`` is read as a Fourier curve document.
    """
    if isinstance(spec, str):
        if spec in ("circle", "ellipse", "kidney", "perturbed-disk"):
            return curve_from_spec({"type": spec}, rng)
        path = Path(spec)
        if not path.is_file():
            raise ConfigError(f"unknown curve preset or missing file {spec!r}")
        try:
            return curve_from_spec(json.loads(path.read_text()), rng)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"curve file {spec!r} is not JSON: {exc}") from exc
    if not isinstance(spec, dict):
        raise ConfigError("curve must be a preset name, a path or an object")
    if "harmonics_max" in spec:
        try:
            return FourierCurve.from_dict(spec)
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"bad curve document: {exc}") from exc
    kind = spec.get("type")
    allowed = {"circle": {"radius"}, "ellipse": {"a", "b"}, "kidney": set(),
               "perturbed-disk": {"amplitude", "area"}}
    if kind not in allowed:
        raise ConfigError(f"unknown curve type {kind!r}")
    extra = set(spec) - allowed[kind] - {"type"}
    if extra:
        raise ConfigError(f"unknown curve keys {sorted(extra)}")
    if kind == "circle":
        return FourierCurve.circle(float(spec.get("radius", 1.0)))
    if kind == "ellipse":
        a = float(spec.get("a", 1.2))
        return FourierCurve.ellipse(a, float(spec.get("b", 1.0 / a)))
    if kind == "kidney":
        return FourierCurve.kidney()
    rng = np.random.default_rng(0) if rng is None else rng
    return perturbed_disk(rng, float(spec.get("amplitude", 0.05)), area=float(spec.get("area", math.pi)))


def _alphas(spec, rng: np.random.Generator, n_q: int, n_random: int) -> List[tuple]:
    """Perturbation fields: ``one``, ``random`` or ``{"cos": [...], "sin": [...]}``; lists combine."""
    specs = spec if isinstance(spec, list) else [spec]
    out = []
    for s in specs:
        if s == "one":
            out.append(("one", np.ones(n_q)))
        elif s == "random":
            out.extend((f"random{i}", band_limited_alpha(rng, n_q)) for i in range(n_random))
        elif isinstance(s, dict) and set(s) <= {"cos", "sin"}:
            out.append(("fourier", fourier_alpha(s.get("cos", []), s.get("sin", []), n_q)))
        else:
            raise ConfigError(f"bad alpha description {s!r}")
    return out


def _field(spec, rng: np.random.Generator) -> AmbientField:
    if spec == "radial":
        return AmbientField.linear(np.eye(2))
    if spec == "random":
        return AmbientField.random(rng, 2, 0.3)
    if isinstance(spec, list):
        return AmbientField.linear(np.asarray(spec, dtype=float))
    raise ConfigError(f"bad field description {spec!r}")


def _bc(value) -> BC:
    try:
        return BC(value)
    except ValueError as exc:
        raise ConfigError(f"unknown boundary condition {value!r}") from exc


# ----------------------------------------------------------------------
# experiments

def exp_disk_oracle(p: Dict[str, Any], rng) -> Outcome:
    R, h, count = float(p["radius"]), float(p["h"]), int(p["count"])
    curve = FourierCurve.circle(R)
    rows = {"bc": [], "index": [], "n": [], "m": [], "root": [], "lambda_fem": [], "lambda_oracle": [],
            "rel_err": []}
    for bc in (BC.DIRICHLET, BC.NEUMANN):
        fem = solve_eigs(triangulate(curve, h), bc, count)
        for i, (e, o) in enumerate(zip(fem, disk_spectrum(R, bc, count))):
            rows["bc"].append(bc.value)
            rows["index"].append(i)
            rows["n"].append(o.n)
            rows["m"].append(o.m)
            rows["root"].append(o.root)
            rows["lambda_fem"].append(e.eigenvalue)
            rows["lambda_oracle"].append(o.eigenvalue)
            rows["rel_err"].append(abs(e.eigenvalue - o.eigenvalue) / max(o.eigenvalue, 1e-300))
    exact = bessel_root(0, 1) ** 2 / R**2
    conv = {"h": [], "lambda1": [], "rel_err": []}
    for hh in (h, 0.5 * h):
        lam = solve_eigs(triangulate(curve, hh), BC.DIRICHLET, 1)[0].eigenvalue
        conv["h"].append(hh)
        conv["lambda1"].append(lam)
        conv["rel_err"].append(abs(lam - exact) / exact)
    ratio = conv["rel_err"][0] / conv["rel_err"][1]
    neu = [i for i, b in enumerate(rows["bc"]) if b == "neumann"]
    out = Outcome(tables={"spectrum": rows, "convergence": conv}, info={"error_ratio": ratio})
    out.checks = {
        "dirichlet_lambda1_within_0.5pct": rows["rel_err"][0] < 5e-3,
        "error_shrinks_3x": ratio >= 3.0,
        "neumann_lambda1_zero": abs(rows["lambda_fem"][neu[0]]) <= 1e-6,
        "neumann_lambda2_within_1pct": rows["rel_err"][neu[1]] < 1e-2,
    }
    return out


def exp_solve(p, rng) -> Outcome:
    curve = curve_from_spec(p["curve"], rng)
    bc = _bc(p["bc"])
    mesh = triangulate(curve, float(p["h"]))
    pairs = solve_eigs(mesh, bc, int(p["count"]), int(p["n_q"]))
    table = {"index": list(range(len(pairs))), "lambda": [e.eigenvalue for e in pairs],
             "residual": [e.residual for e in pairs]}
    fr = frame(curve, int(p["n_q"]), check=False)
    boundary = {"theta": list(fr.theta)}
    for i, e in enumerate(pairs):
        boundary[f"mode{i}"] = list(e.flux if bc == BC.DIRICHLET else e.trace)
    out = Outcome(tables={"eigenvalues": table, "boundary": boundary})
    if p["dump_mesh"]:
        nodes = {"x": list(mesh.vertices[:, 0]), "y": list(mesh.vertices[:, 1])}
        nodes.update({f"mode{i}": list(e.u) for i, e in enumerate(pairs)})
        out.tables["nodes"] = nodes
        out.tables["triangles"] = {f"v{k}": list(mesh.triangles[:, k]) for k in range(3)}
    return out


def exp_fd_check(p, rng) -> Outcome:
    curve = curve_from_spec(p["curve"], rng)
    n_q, t, quantity = int(p["n_q"]), float(p["t"]), p["quantity"]
    if quantity not in ("lambda_dirichlet", "lambda_neumann", "J2", "J3"):
        raise ConfigError(f"unknown quantity {quantity!r}")
    bc = BC.DIRICHLET if quantity in ("lambda_dirichlet", "J3") else BC.NEUMANN
    mesh = triangulate(curve, float(p["h"]))
    pairs = solve_eigs(mesh, bc, 12, n_q)
    index = p["index"]
    if index is None:
        index = 0 if bc == BC.DIRICHLET else first_simple_index(pairs)
    eig = pairs[int(index)]
    gamma = float(p["gamma"])
    rows = {"alpha": [], "formula_value": [], "half_variant": [], "fd_value": [], "fd_half_step": [],
            "rel_gap": [], "half_ratio": []}
    checks = {}
    for name, alpha in _alphas(p["alpha"], rng, n_q, int(p["n_random"])):
        if quantity == "lambda_dirichlet":
            rep = dJ_dirichlet(eig, alpha)
            formula, half = rep.value, rep.half_value
        elif quantity == "lambda_neumann":
            formula = half = dlambda_neumann(eig, alpha).value
        elif quantity == "J2":
            formula = half = dJ2_reduced(eig, gamma, alpha)
        else:
            formula, half = dJ3_classical(eig, gamma, alpha), dJ3(eig, gamma, alpha).value
        fd = fd_with_richardson(mesh, alpha, quantity, t, index=int(index), gamma=gamma,
                                n_q=n_q, reference=eig)
        gap = abs(formula - fd.value) / max(abs(fd.value), 1e-12)
        rows["alpha"].append(name)
        rows["formula_value"].append(formula)
        rows["half_variant"].append(half)
        rows["fd_value"].append(fd.value)
        rows["fd_half_step"].append(fd.half_step)
        rows["rel_gap"].append(gap)
        rows["half_ratio"].append(half / fd.value if fd.value else None)
        if quantity.startswith("lambda") and p["max_gap"] is not None:
            checks[f"{name}_gap"] = gap < float(p["max_gap"])
    return Outcome(tables={"fd_check": rows}, checks=checks,
                   info={"index": int(index), "eigenvalue": eig.eigenvalue})


def exp_schiffer_check(p, rng) -> Outcome:
    curve = curve_from_spec(p["curve"], rng)
    res = schiffer_residuals(triangulate(curve, float(p["h"])), int(p["n_modes"]), int(p["n_q"]))
    row = {k: [v] for k, v in asdict(res).items()}
    expect = p["expect"]
    if expect == "auto":
        expect = "disk" if disk_defect(curve)[2] < 1e-6 else None
    checks = {}
    if expect == "disk":
        checks = {"conj4_below_2pct": res.conj4_residual < 0.02, "conj5_below_2pct": res.conj5_residual < 0.02}
    elif expect == "non-disk":
        checks = {"conj4_above_10pct": res.conj4_residual > 0.1, "conj5_above_10pct": res.conj5_residual > 0.1}
    elif expect is not None:
        raise ConfigError(f"expect must be auto, disk, non-disk or null, got {expect!r}")
    return Outcome(tables={"schiffer": row}, checks=checks,
                   info={"conj4_mode": res.conj4_mode, "conj5_mode": res.conj5_mode})


def exp_monotonicity(p, rng) -> Outcome:
    radii = [float(r) for r in p["radii"]]
    rows = {"R": [], "Lambda_fem": [], "Lambda_oracle": [], "rel_err": [], "deviation": []}
    for R in radii:
        curve = FourierCurve.circle(R)
        eig = solve_eigs(triangulate(curve, float(p["h_rel"]) * R), BC.DIRICHLET, 1, int(p["n_q"]))[0]
        res = optimality_residual(eig)
        rows["R"].append(R)
        rows["Lambda_fem"].append(res.Lambda)
        rows["Lambda_oracle"].append(lambda_disk(R))
        rows["rel_err"].append(abs(res.Lambda - lambda_disk(R)) / lambda_disk(R))
        rows["deviation"].append(res.deviation)
    lam = rows["Lambda_fem"]
    order = np.argsort(radii)
    checks = {
        "strictly_decreasing": bool(np.all(np.diff(np.asarray(lam)[order]) < 0)),
        "within_1pct": max(rows["rel_err"]) < 1e-2,
    }
    return Outcome(tables={"monotonicity": rows}, checks=checks)


def exp_flow(p, rng) -> Outcome:
    curve = curve_from_spec(p["curve"], rng)
    try:
        cfg = FlowConfig(functional=p["functional"], gamma=p["gamma"],
                         metric=MetricSpec(p["metric"], float(p["A"])), s0=float(p["s0"]),
                         max_iter=int(p["max_iter"]), tol=float(p["tol"]), area=float(p["area"]),
                         harmonics=int(p["harmonics"]), h=float(p["h"]), variant=p["variant"],
                         remesh_every=int(p["remesh_every"]), n_q=int(p["n_q"]))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    states, verdict = run(curve, cfg)
    hist = {"iter": [s.iteration for s in states], "J": [s.value for s in states],
            "grad_norm": [s.grad_norm for s in states], "disk_defect": [s.disk_defect for s in states],
            "step": [s.step for s in states]}
    areas = [enclosed_area(s.curve) for s in states]
    checks = {
        "monotone_descent": bool(np.all(np.diff(hist["J"]) < 0)),
        "area_preserved": max(abs(a - cfg.area) for a in areas) <= 1e-8 * max(cfg.area, 1.0),
    }
    if p["max_disk_defect"] is not None:
        checks["disk_defect_reached"] = verdict.disk_defect < float(p["max_disk_defect"])
    return Outcome(tables={"flow": hist}, documents={"final_curve": states[-1].curve.to_dict()},
                   checks=checks, info={"verdict": asdict(verdict), "gamma": cfg.gamma_value})


def exp_hessian_check(p, rng) -> Outcome:
    curve = curve_from_spec(p["curve"], rng)
    functional = str(p["functional"]).upper()
    if functional not in ("J2", "J3"):
        raise ConfigError(f"functional must be j2 or j3, got {p['functional']!r}")
    conv = p["convention"]
    if conv not in ("auto", 1, -1, "+1", "-1"):
        raise ConfigError(f"convention must be auto, +1 or -1, got {conv!r}")
    conventions = (1, -1) if conv == "auto" else (int(conv),)
    n_q = int(p["n_q"])
    mesh = triangulate(curve, float(p["h"]))
    V = _field(p["field"], rng)
    bc = BC.NEUMANN if functional == "J2" else BC.DIRICHLET
    pairs = solve_eigs(mesh, bc, 12, n_q)
    if functional == "J2":
        eig = next(e for e in pairs if e.eigenvalue > 1e-6 and (np.all(e.trace > 0) or np.all(e.trace < 0)))
    else:
        eig = pairs[0]
    fr = frame(curve, n_q, check=False)
    u2 = fr.integrate(eig.trace**2) / fr.length
    gamma = p["gamma"]
    if gamma is None:
        gamma = -u2 if functional == "J2" else 0.5 * optimality_residual(eig).Lambda ** 2
    gamma = float(gamma)
    rows = {"convention": [], "lhs": [], "rhs": [], "gap": []}
    for s in conventions:
        chk = connection_identity_check(mesh, functional, gamma, V, s=s, A=float(p["A"]), n_q=n_q)
        rows["convention"].append(s)
        rows["lhs"].append(chk.lhs)
        rows["rhs"].append(chk.rhs)
        rows["gap"].append(chk.gap)
    best = int(np.argmin(rows["gap"]))
    winner = rows["convention"][best]
    out = Outcome(tables={"hessian_check": rows},
                  info={"winning_convention": winner, "gamma": gamma, "boundary_u2": u2})
    if p["max_gap"] is not None:
        out.checks["winner_gap"] = rows["gap"][best] < float(p["max_gap"])
    if functional == "J2":
        form = hessian_form(eig, "J2", gamma, winner)
        pos = {"alpha": [], "hessian": [], "bound": []}
        for i in range(int(p["n_random"])):
            a = band_limited_alpha(rng, n_q)
            pos["alpha"].append(f"random{i}")
            pos["hessian"].append(form.evaluate(a, a))
            pos["bound"].append(0.9 * u2 * fr.integrate(a * a))
        out.tables["hessian_positivity"] = pos
        out.info["max_density_j2"] = float(np.max(np.abs(fr.curvature * eig.trace**2 + gamma)))
        if p["check_positivity"]:
            out.checks["positivity"] = all(h >= b for h, b in zip(pos["hessian"], pos["bound"]))
    return out


def exp_symmetry_check(p, rng) -> Outcome:
    curve = curve_from_spec(p["curve"], rng)
    n = int(p["n_directions"])
    rows = {"angle": [], "ex": [], "ey": [], "p0": [], "violation_level": [], "symmetry_defect": []}
    for k in range(n):
        ang = math.pi * 2.0 * k / n
        e = (math.cos(ang), math.sin(ang))
        ok, level = p0_predicate(curve, e)
        rows["angle"].append(ang)
        rows["ex"].append(e[0])
        rows["ey"].append(e[1])
        rows["p0"].append(ok)
        rows["violation_level"].append(level)
        rows["symmetry_defect"].append(symmetry_defect(curve, e))
    fr = frame(curve)
    turning = fr.integrate(fr.curvature)
    checks = {"turning_number": abs(turning - 2.0 * math.pi) < 1e-6}
    expect = p["expect_p0"]
    if expect is True:
        checks["p0_all_directions"] = all(rows["p0"])
    elif expect is False:
        checks["p0_fails_somewhere"] = not all(rows["p0"])
    return Outcome(tables={"symmetry": rows}, checks=checks, info={"total_curvature": turning})


@dataclass(frozen=True)
class Experiment:
    func: Callable[[Dict[str, Any], np.random.Generator], Outcome]
    defaults: Dict[str, Any]


EXPERIMENTS: Dict[str, Experiment] = {
    "disk-oracle": Experiment(exp_disk_oracle, {"radius": 1.0, "h": 0.05, "count": 6}),
    "solve": Experiment(exp_solve, {
        "curve": "circle", "bc": "dirichlet", "count": 6, "h": 0.05, "n_q": 256, "dump_mesh": False}),
    "fd-check": Experiment(exp_fd_check, {
        "curve": "circle", "quantity": "lambda_dirichlet", "alpha": ["one", "random"], "n_random": 5,
        "t": 1e-3, "h": 0.05, "index": None, "gamma": 0.0, "max_gap": 0.02, "n_q": 256}),
    "schiffer-check": Experiment(exp_schiffer_check, {
        "curve": "circle", "h": 0.05, "n_modes": 6, "expect": "auto", "n_q": 256}),
    "monotonicity": Experiment(exp_monotonicity, {"radii": [0.5, 0.75, 1.0, 1.25], "h_rel": 0.05, "n_q": 256}),
    "flow": Experiment(exp_flow, {
        "curve": "perturbed-disk", "functional": "J3", "gamma": None, "metric": "SobolevH1", "A": 0.05,
        "s0": 0.05, "max_iter": 200, "tol": 1e-2, "area": math.pi, "harmonics": 8, "h": 0.1,
        "variant": "classical", "remesh_every": 0, "max_disk_defect": 1e-2, "n_q": 256}),
    "hessian-check": Experiment(exp_hessian_check, {
        "curve": "circle", "functional": "j2", "gamma": None, "A": 1.0, "convention": "auto",
        "field": "radial", "h": 0.05, "max_gap": 5e-2, "n_random": 20, "check_positivity": True, "n_q": 256}),
    "symmetry-check": Experiment(exp_symmetry_check, {"curve": "circle", "n_directions": 16, "expect_p0": None}),
}


def resolve_config(experiment: str, config: Mapping[str, Any], overrides: Mapping[str, Any]) -> Dict[str, Any]:
    """Merge defaults, config and overrides; unknown keys raise ``ConfigError``."""
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}")
    allowed = dict(COMMON, **EXPERIMENTS[experiment].defaults)
    unknown = sorted(set(config) - set(allowed) - {"experiment"})
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")
    if "experiment" in config and config["experiment"] != experiment:
        raise ConfigError(f"config is for {config['experiment']!r}, not {experiment!r}")
    merged = dict(allowed)
    merged.update({k: v for k, v in config.items() if k != "experiment"})
    env_seed = os.environ.get(SEED_ENV)
    if env_seed is not None:
        try:
            merged["seed"] = int(env_seed)
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV} must be an integer") from exc
    merged.update({k: v for k, v in overrides.items() if v is not None})
    try:
        merged["seed"] = int(merged["seed"])
    except (TypeError, ValueError) as exc:
        raise ConfigError("seed must be an integer") from exc
    return merged


def run_experiment(experiment: str, params: Dict[str, Any]) -> Outcome:
    rng = np.random.default_rng(params["seed"])
    try:
        return EXPERIMENTS[experiment].func(params, rng)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad parameter: {exc}") from exc


def manifest_head(experiment: str, params: Dict[str, Any], wall_time: float) -> Dict[str, Any]:
    return {"experiment": experiment, "config": params, "seed": params["seed"],
            "versions": versions(), "package_version": _own_version(), "wall_time_s": wall_time}


def _own_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"
