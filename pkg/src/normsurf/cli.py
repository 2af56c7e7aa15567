"""Command-line entry point.

Every command reads a JSON config (``--config`` or a bundled ``--scene``),
writes ``report.json`` plus CSV data into ``--out`` and exits with 0 on
success, 2 on a finding that contradicts the expected behaviour and 1 on an
operational error.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from . import calibrator as cal
from . import convexgeom as cg
from . import embedding as emb
from . import geodesics as geo
from . import norms, surfaces
from .errors import ConfigurationError, NormsurfError

EXIT_OK, EXIT_ERROR, EXIT_FINDING = 0, 1, 2
COMMON = {"command", "seed", "description"}

# allowed keys per command: name -> (required, optional)
SCHEMA = {
    "norm-check": ({"norm"}, {"n_directions", "n_samples"}),
    "classify": ({"surface"}, {"grid", "q_direction", "det_tol", "expect"}),
    "shoot": ({"surface", "x0", "v0", "T"}, {"dt", "normalize"}),
    "connect": ({"surface", "x0", "x1"}, {"dt", "max_restarts", "period", "bvp_tol"}),
    "calibrate": ({"surface", "x0", "v0", "length"},
                  {"dt", "sigma_from_search", "s_max_fraction", "n_t", "competitor", "expect_saddle"}),
    "embed": ({"metric"}, {"n_sweep", "n_random"}),
    "cone-shortcut": ({"norm"}, {"cones", "random"}),
    "refute-line": ({"norm", "body", "x0", "v0"}, {"lambdas", "dt"}),
}
SUB_SCHEMA = {
    "grid": {"n", "half_width", "center"},
    "competitor": {"n_nodes", "n_starts", "tube_fraction", "max_iter", "length"},
    "random": {"count"},
}


class _Finding(Exception):
    pass


# --- config handling -----------------------------------------------------------


def load_json(path):
    text = Path(path).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None


def scene_names():
    root = resources.files("normsurf") / "scenes"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_scene(name):
    root = resources.files("normsurf") / "scenes"
    f = root / f"{name}.json"
    if not f.is_file():
        raise ConfigurationError(f"unknown scene {name!r} (available: {', '.join(scene_names())})")
    return json.loads(f.read_text())


def validate(command, cfg):
    if not isinstance(cfg, dict):
        raise ConfigurationError("config must be a JSON object")
    if cfg.get("command", command) != command:
        raise ConfigurationError(f"field 'command': config is for {cfg['command']!r}, not {command!r}")
    required, optional = SCHEMA[command]
    allowed = required | optional | COMMON
    for key in cfg:
        if key not in allowed:
            raise ConfigurationError(f"field {key!r}: unknown key for {command} (allowed: {sorted(allowed)})")
    for key in sorted(required):
        if key not in cfg:
            raise ConfigurationError(f"field {key!r}: required for {command}")
    for key, sub in SUB_SCHEMA.items():
        if key in cfg and isinstance(cfg[key], dict):
            for k in cfg[key]:
                if k not in sub:
                    raise ConfigurationError(f"field '{key}.{k}': unknown key (allowed: {sorted(sub)})")


def _vec(cfg, key, n=None):
    try:
        v = np.asarray(cfg[key], dtype=float)
    except (TypeError, ValueError):
        raise ConfigurationError(f"field {key!r}: expected a list of numbers") from None
    if n is not None and v.shape != (n,):
        raise ConfigurationError(f"field {key!r}: expected {n} numbers")
    return v


def _num(cfg, key, default, kind=float):
    try:
        return kind(cfg.get(key, default))
    except (TypeError, ValueError):
        raise ConfigurationError(f"field {key!r}: expected a number") from None


# --- JSON output -------------------------------------------------------------------


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(doc):
    return json.dumps(_plain(doc), sort_keys=True, indent=2) + "\n"


# --- commands ------------------------------------------------------------------------


def _surface(cfg):
    return surfaces.surface_from_dict(cfg["surface"])


def cmd_norm_check(cfg, ctx):
    try:
        norm = norms.norm_from_dict(cfg["norm"])
    except ConfigurationError as exc:
        # invalid parameters still get an eigenvalue report
        doc = dict(cfg["norm"])
        params = dict(doc.get("params", {}))
        if doc.get("family") == "quartic_perturbed":
            A = params["A"]
            if "exponents" in params:
                probe = norms.QuarticPerturbedNorm(A, params["exponents"], params["coefs"], params["lam"],
                                                   check=False)
            else:
                probe = norms.QuarticPerturbedNorm.diagonal(len(A), params["lam"], params.get("weights"), A=A,
                                                            check=False)
            lo, worst = norms.hessian_sweep(probe, _num(cfg, "n_directions", 2000, int))
            ctx["result"] = {"valid": False, "min_half_hessian_eigenvalue": lo, "worst_direction": worst,
                             "error": str(exc)}
        raise
    lo, worst = norms.hessian_sweep(norm, _num(cfg, "n_directions", 2000, int))
    rng = np.random.default_rng(ctx["seed"])
    V = rng.standard_normal((_num(cfg, "n_samples", 200, int), norm.dim))
    L = norm.legendre(V)
    back = np.array([norm.legendre_inverse(ell) for ell in L])
    dual = np.array([norm.dual_value(ell) for ell in L])
    rt = float(np.max(np.abs(back - V)))
    de = float(np.max(np.abs(dual - norm.value(V))))
    res = {"valid": True, "family": norm.family, "dim": norm.dim,
           "min_half_hessian_eigenvalue": lo, "worst_direction": worst,
           "legendre_roundtrip_error": rt, "dual_value_error": de}
    ctx["result"] = res
    if not (lo > 0 and rt < 1e-8 * ctx["tol_scale"] and de < 1e-8 * ctx["tol_scale"]):
        raise _Finding("norm checks out of tolerance")


def cmd_classify(cfg, ctx):
    surf = _surface(cfg)
    grid = cfg.get("grid", {})
    xs, ys = surfaces.grid_axes(surf, int(grid.get("n", 11)), grid.get("half_width"),
                                tuple(grid.get("center", (0.0, 0.0))))
    qd = tuple(_vec(cfg, "q_direction", 2)) if "q_direction" in cfg else (1.0, 0.0)
    reg = surfaces.classify_region(surf, xs, ys, qd, det_tol=_num(cfg, "det_tol", 1e-12) * ctx["tol_scale"])
    flagged = sum(v.flagged for v in reg.verdicts)
    ctx["result"] = {"counts": reg.counts, "flagged": flagged, "n_nodes": len(reg.verdicts)}
    ctx["csv"]["classification.csv"] = reg.to_csv()
    if flagged or ("expect" in cfg and not reg.all(cfg["expect"])):
        raise _Finding("classification disagrees with the sweep or the expected class")


def cmd_shoot(cfg, ctx):
    surf = _surface(cfg)
    path = geo.shoot(surf, _vec(cfg, "x0", 2), _vec(cfg, "v0", 2), _num(cfg, "T", 1.0),
                     _num(cfg, "dt", 1e-3), bool(cfg.get("normalize", True)))
    speed, tang = path.residuals()
    ctx["result"] = {"length": path.length, "end": path.end, "truncated": path.truncated,
                     "speed_drift": float(speed.max()), "tangency_residual": float(tang.max()),
                     "n_samples": len(path.t)}
    ctx["csv"]["path.csv"] = path.to_csv()


def cmd_connect(cfg, ctx):
    surf = _surface(cfg)
    res = geo.connect(surf, _vec(cfg, "x0", 2), _vec(cfg, "x1", 2), dt=_num(cfg, "dt", 5e-3),
                      bvp_tol=_num(cfg, "bvp_tol", 1e-8) * ctx["tol_scale"],
                      max_restarts=_num(cfg, "max_restarts", 20, int), seed=ctx["seed"],
                      period=cfg.get("period"))
    ctx["result"] = {"length": res.length, "multiple": res.multiple, "restarts": res.restarts,
                     "solutions": [{"theta": s[0], "length": s[1]} for s in res.solutions]}
    ctx["csv"]["path.csv"] = res.path.to_csv()


def _search_sigma(ambient):
    """sigma from the verified search on the normalized ball of the metric at the origin."""
    phi0 = norms.PullbackNorm(ambient, np.eye(ambient.dim)[:, :2])
    par = emb.parallelogram_normalize(phi0)
    return emb.sigma_search(norms.PullbackNorm(phi0, np.linalg.inv(par.T)))[0]


def cmd_calibrate(cfg, ctx):
    sdoc = dict(cfg["surface"])
    if cfg.get("sigma_from_search"):
        if sdoc.get("chart") != "fsigma":
            raise ConfigurationError("field 'sigma_from_search': only meaningful for the fsigma chart")
        amb = norms.norm_from_dict(sdoc["ambient"])
        sdoc["params"] = dict(sdoc.get("params", {}), sigma=_search_sigma(amb))
    surf = surfaces.surface_from_dict(sdoc)
    length = _num(cfg, "length", 0.1)
    x0 = _vec(cfg, "x0", 2)
    v0 = geo.unit_direction(surf, x0, _vec(cfg, "v0", 2))
    field = cal.calibrator_for(surf, x0, v0, length, dt=_num(cfg, "dt", length / 1000))
    s_max = _num(cfg, "s_max_fraction", 0.05) * length
    n_t = _num(cfg, "n_t", 21, int)
    rho = field.verify_rho(s_max, n_t=n_t)
    coords = field.special_coordinates(s_max, n_t=n_t)
    calib = field.calibrate_correct(coords)
    comp = cfg.get("competitor", {})
    c_len = float(comp.get("length", length))
    tube = float(comp.get("tube_fraction", 0.05)) * c_len
    base = geo.shoot(surf, x0, v0, c_len, min(field.path.step, c_len / 1000))
    cr = geo.competitor_search(surf, base, tube, n_nodes=int(comp.get("n_nodes", 33)),
                               n_starts=int(comp.get("n_starts", 64)), seed=ctx["seed"], jobs=ctx["jobs"],
                               max_iter=int(comp.get("max_iter", 400)))
    ts = ctx["tol_scale"]
    ctx["result"] = {
        "chart_sigma": sdoc.get("params", {}).get("sigma"),
        "rho_s_max": rho.rho_s_max, "rho_ss_min": rho.rho_ss_min, "h_residual": rho.h_residual,
        "sigma_witness": calib.sigma_witness, "phi_star_dg_best": calib.best,
        "phi_star_dh_on_curve": calib.phi_star_dh_on_curve,
        "geodesic_length": cr.geodesic_length, "best_competitor_length": cr.best_length, "gap": cr.gap,
    }
    ctx["csv"]["rho.csv"] = _table(["t", "rho_s", "rho_ss"], [rho.t, rho.rho_s, rho.rho_ss])
    ctx["csv"]["calibration.csv"] = _table(["sigma", "phi_star_dg_max"], [calib.sigmas, calib.phi_star_dg_max])
    ok = rho.passed(1e-4 * ts) and calib.certified and cr.gap <= 1e-6 * ts
    ctx["result"]["certified"] = bool(ok)
    if cfg.get("expect_saddle", True) and not ok:
        raise _Finding("calibration certificate failed on a surface expected to be saddle")
    if not cfg.get("expect_saddle", True) and rho.rho_ss_min >= -1e-4 * ts and cr.gap <= 1e-6 * ts:
        raise _Finding("negative control not detected: no concavity of rho and no shorter competitor")


def cmd_embed(cfg, ctx):
    metric = emb.metric_from_dict(cfg["metric"])
    art = emb.embed(metric, n_sweep=_num(cfg, "n_sweep", 10_000, int), seed=ctx["seed"])
    bundle = art.to_dict()
    ctx["extra"]["bundle.json"] = bundle
    ctx["result"] = {k: v for k, v in bundle.items() if k != "norm"}
    if bundle["convexity"] is not None:
        table = ctx["result"]["convexity"] = dict(bundle["convexity"])
        rows = table.pop("radial_table")
        cols = [[r[0][i] for r in rows] for i in range(4)] + [[r[1] for r in rows]]
        ctx["csv"]["radial_table.csv"] = _table(["d1", "d2", "d3", "d4", "radius"], cols)
    if not art.certified:
        raise _Finding("embedding certificates out of tolerance")


def cmd_cone_shortcut(cfg, ctx):
    norm = norms.norm_from_dict(cfg["norm"])
    cones = []
    for c in cfg.get("cones", []):
        cones.append((cg.TrihedralCone(c["normals"]), np.asarray(c["p"], float), np.asarray(c["q"], float)))
    rng = np.random.default_rng(ctx["seed"])
    for _ in range(int(cfg.get("random", {}).get("count", 0))):
        K = cg.TrihedralCone.random(rng)
        cones.append((K, K.face_point(0, rng.uniform(0.1, 1, 2)), K.face_point(1, rng.uniform(0.1, 1, 2))))
    out, rows, bad = [], [], 0
    for i, (K, p, q) in enumerate(cones):
        try:
            r = cg.cone_shortcut(norm, K, p, q, tol=1e-12 * ctx["tol_scale"])
        except NormsurfError as exc:
            out.append({"index": i, "error": str(exc)})
            bad += 1
            continue
        err = abs(r.fd_limit - r.limit_rhs)
        bad += err > 1e-4 * ctx["tol_scale"] * max(1.0, r.limit_rhs)
        out.append({"index": i, "branch": r.branch, "length": r.length, "margin": r.margin,
                    "limit_rhs": r.limit_rhs, "fd_limit": r.fd_limit, "planarity": r.planarity})
        rows += [[i, k, *x] for k, x in enumerate(r.path)]
    ctx["result"] = {"cones": out, "failures": bad}
    ctx["csv"]["paths.csv"] = _table(["cone", "vertex", "x", "y", "z"], list(zip(*rows)) if rows else [[]] * 5)
    if bad:
        raise _Finding("shortcut missing or limit slope mismatch")


def cmd_refute_line(cfg, ctx):
    norm = norms.norm_from_dict(cfg["norm"])
    body = cg.body_from_dict(cfg["body"])
    lambdas = cfg.get("lambdas", [2.0**k for k in range(1, 9)])
    rep = cg.geodesic_line_refute(norm, body, _vec(cfg, "x0", 2), _vec(cfg, "v0", 2), lambdas,
                                  dt=_num(cfg, "dt", 0.02), tol=1e-9 * ctx["tol_scale"])
    ctx["result"] = rep.to_dict()
    ctx["csv"]["competitor.csv"] = rep.competitor_csv()
    excluded = body.contains_line or not cg.GraphCone(body).has_interior()
    if rep.status != "refuted" and not excluded:
        raise _Finding("no refutation for a body without lines")


COMMANDS = {
    "norm-check": cmd_norm_check,
    "classify": cmd_classify,
    "shoot": cmd_shoot,
    "connect": cmd_connect,
    "calibrate": cmd_calibrate,
    "embed": cmd_embed,
    "cone-shortcut": cmd_cone_shortcut,
    "refute-line": cmd_refute_line,
}


def _table(header, cols):
    lines = [",".join(header)]
    for row in zip(*cols):
        lines.append(",".join(repr(float(x)) if isinstance(x, (float, np.floating)) else str(x) for x in row))
    return "\n".join(lines) + "\n"


# --- driver ----------------------------------------------------------------------------


def build_parser():
    ap = argparse.ArgumentParser(prog="normsurf", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"normsurf {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in list(COMMANDS) + ["scenes"]:
        p = sub.add_parser(name)
        if name == "scenes":
            continue
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--scene", help="bundled scene name (see `normsurf scenes`)")
        if name == "embed":
            p.add_argument("--metric", help="JSON source metric; overrides the config's metric")
        p.add_argument("--out", default="normsurf-out", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="seed for every randomized search")
        p.add_argument("--jobs", type=int, default=os.cpu_count() or 1, help="worker pool size")
        p.add_argument("--tol-scale", type=float, default=1.0, help="multiplier for acceptance tolerances")
    return ap


def run(command, cfg, out, seed=None, jobs=1, tol_scale=1.0):
    """Execute one command; returns ``(exit code, report dict)`` and writes files into ``out``."""
    validate(command, cfg)
    seed = int(cfg.get("seed", 0) if seed is None else seed)
    if not (seed >= 0 and tol_scale > 0 and jobs >= 1):
        raise ConfigurationError("seed must be >= 0, tol-scale > 0 and jobs >= 1")
    ctx = {"seed": seed, "jobs": jobs, "tol_scale": tol_scale, "result": {}, "csv": {}, "extra": {}}
    status, code, message = "ok", EXIT_OK, ""
    try:
        COMMANDS[command](cfg, ctx)
    except _Finding as exc:
        status, code, message = "finding", EXIT_FINDING, str(exc)
    except NormsurfError as exc:
        status, code, message = "error", EXIT_ERROR, f"{type(exc).__name__}: {exc}"
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        status, code, message = "error", EXIT_ERROR, f"malformed config value: {type(exc).__name__}: {exc}"
    report = {"command": command, "config": cfg, "version": f"normsurf-{__version__}", "seed": seed,
              "tol_scale": tol_scale, "status": status, "message": message, "result": ctx["result"]}
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(dumps(report))
    for name, text in ctx["csv"].items():
        (out / name).write_text(text)
    for name, doc in ctx["extra"].items():
        (out / name).write_text(dumps(doc))
    return code, report


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "scenes":
        for name in scene_names():
            print(name)
        return EXIT_OK
    try:
        if args.config and args.scene:
            raise ConfigurationError("give either --config or --scene, not both")
        if args.config:
            cfg = load_json(args.config)
        elif args.scene:
            cfg = load_scene(args.scene)
        else:
            cfg = {}
        if args.command == "embed" and args.metric:
            cfg = dict(cfg, metric=load_json(args.metric))
        code, report = run(args.command, cfg, args.out, args.seed, args.jobs, args.tol_scale)
    except (ConfigurationError, OSError) as exc:
        print(f"normsurf {args.command}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    print(f"{args.command}: {report['status']}" + (f" ({report['message']})" if report["message"] else ""))
    return code


if __name__ == "__main__":
    sys.exit(main())
