"""Batch driver: ``levykit <subcommand> --config FILE [--seed N] [--workers N] [--out DIR]``.

Config files are TOML with one experiment each::

    seed = 7
    [kernel]                       # registry key, dim, alpha, extra params
    key = "constant"
    dim = 1
    alpha = 1.5
    drift = { kind = "linear", coef = -1.0 }
    [domain]                       # see kernels.domain_from_dict
    shape = "ball"
    center = [0.0]
    radius = 1.0
    [params]                       # operation parameters
    x = [[0.0], [0.5]]
    n_paths = 10000
    f = 1.0
    [euler]                        # EulerConfig fields
    dt = 0.005
    [sweep]                        # optional: cartesian product of lists
    "kernel.alpha" = [1.2, 1.5, 1.8]

Every run writes ``result.json`` (records), CSV tables and
``manifest.json`` (config hash, seed, sub-seeds, versions, wallclock,
files, error) to the output directory.  Exit codes: 0 success,
1 failed acceptance criteria, 2 validation error, 3 estimator error.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import itertools
import json
import os
import platform
import sys
import time

import numpy as np
import scipy

from . import __version__, fd
from .acceptance import DEFAULT_SEED, run_acceptance
from .ergodic import (
    LyapunovCandidate,
    hitting_time_table,
    invariant_measure_estimate,
    lyapunov_verify,
)
from .errors import EstimatorError, LevykitError, ValidationError
from .feynman_kac import (
    DirichletProblem,
    boundary_decay,
    cone_exit_exponent,
    dirichlet_solve,
    exit_time_moments,
    exterior_hitting_time,
    harnack_probe,
    indicator,
)
from .kernels import domain_from_dict, make_kernel, validate
from .operator import (
    apply_generator_many,
    barrier_integrals,
    gaussian_probe,
    getoor_probe,
    power_probe,
    psi_probe,
)
from .paths import EulerConfig
from .sampling import RngStream

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

EXIT_OK, EXIT_FAILED, EXIT_VALIDATION, EXIT_ESTIMATOR = 0, 1, 2, 3

SUBCOMMANDS = (
    "validate", "generator", "dirichlet", "exit-moments", "boundary-decay", "harnack", "cone",
    "hitting", "lyapunov", "invariant", "fd-solve", "barrier", "verify",
)


# ---------------------------------------------------------------- config


def load_config(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        cfg = tomllib.loads(raw.decode("utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ValidationError(f"config does not parse: {exc}") from exc
    return cfg, hashlib.sha256(raw).hexdigest()


def _canonical_hash(cfg):
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, default=_json_default).encode()).hexdigest()


def _set_path(cfg, dotted, value):
    parts = dotted.split(".")
    node = cfg
    for p in parts[:-1]:
        node = node.setdefault(p, {})
    node[parts[-1]] = value


def sweep_points(cfg):
    """List of (assignment dict, config) pairs; a single pair without [sweep]."""
    sw = cfg.get("sweep") or {}
    base = {k: v for k, v in cfg.items() if k != "sweep"}
    if not sw:
        return [({}, base)]
    keys = list(sw)
    for k in keys:
        if not isinstance(sw[k], list) or not sw[k]:
            raise ValidationError(f"sweep key {k!r} needs a nonempty list")
    out = []
    for combo in itertools.product(*(sw[k] for k in keys)):
        c = copy.deepcopy(base)
        for k, v in zip(keys, combo):
            _set_path(c, k, v)
        out.append((dict(zip(keys, combo)), c))
    return out


def build_model(cfg):
    kc = dict(cfg.get("kernel") or {})
    if "key" not in kc:
        raise ValidationError("config needs [kernel] with a 'key'")
    key = kc.pop("key")
    dim = kc.pop("dim", 1)
    alpha = kc.pop("alpha", None)
    if alpha is None:
        raise ValidationError("[kernel] needs 'alpha'")
    drift = kc.pop("drift", None)
    try:
        return make_kernel(key, dim, alpha, drift=drift, **kc)
    except TypeError as exc:
        raise ValidationError(f"bad parameters for kernel {key!r}: {exc}") from exc


def build_domain(spec, what="domain"):
    if spec is None:
        raise ValidationError(f"config needs a [{what}] table")
    try:
        return domain_from_dict(spec)
    except KeyError as exc:
        raise ValidationError(f"[{what}] is missing {exc}") from exc


def build_euler(cfg, workers):
    e = dict(cfg.get("euler") or {})
    try:
        return EulerConfig(workers=workers, **e)
    except TypeError as exc:
        raise ValidationError(f"bad [euler] field: {exc}") from exc


def build_field(spec):
    """Constant, or {kind = "indicator", lo, hi}."""
    if spec is None or isinstance(spec, (int, float)):
        return spec
    if isinstance(spec, dict) and spec.get("kind") == "indicator":
        return indicator(spec["lo"], spec["hi"])
    raise ValidationError(f"unsupported function spec {spec!r}")


PROBES = {
    "gaussian": lambda dim, p: gaussian_probe(dim, p.get("width", 1.0)),
    "getoor": lambda dim, p: getoor_probe(p["s"], dim),
    "power": lambda dim, p: power_probe(p["gamma"], dim),
    "psi": lambda dim, p: psi_probe(p["q"], dim),
}


def build_probe(spec, dim):
    spec = dict(spec or {"kind": "gaussian"})
    kind = spec.pop("kind", "gaussian")
    if kind not in PROBES:
        raise ValidationError(f"unknown probe {kind!r} (known: {', '.join(PROBES)})")
    return PROBES[kind](dim, spec)


def _need(p, key):
    if key not in p:
        raise ValidationError(f"[params] needs {key!r}")
    return p[key]


def _points(v, dim):
    a = np.asarray(v, dtype=float)
    return a.reshape(-1, dim)


# ---------------------------------------------------------------- operations
# each returns (records, tables) with tables = {name: (header, rows)}


def op_validate(cfg, rng, euler):
    model = build_model(cfg)
    p = cfg.get("params") or {}
    region = build_domain(cfg.get("domain"))
    rep = validate(model, region, n_probes=p.get("n_probes", 8), seed=rng.seed)
    return [{"op": "validate", "params": p, **rep.to_dict()}], {}


def op_generator(cfg, rng, euler):
    model = build_model(cfg)
    p = cfg.get("params") or {}
    f = build_probe(p.get("probe"), model.dim)
    xs = _points(_need(p, "x"), model.dim)
    vals, errs = apply_generator_many(model, f, xs)
    recs = [{"op": "generator", "params": {"x": x.tolist()}, "value": float(v), "error": float(e)}
            for x, v, e in zip(xs, vals, errs)]
    rows = [list(x) + [float(v), float(e)] for x, v, e in zip(xs, vals, errs)]
    return recs, {"generator": ([f"x{j}" for j in range(model.dim)] + ["value", "error"], rows)}


def _estimate_rows(op, xs, ests, dim):
    recs = [e.to_record(op, {"x": x.tolist()}) for x, e in zip(xs, ests)]
    rows = [list(x) + [e.mean, e.stderr, e.n, e.truncated_fraction] for x, e in zip(xs, ests)]
    head = [f"x{j}" for j in range(dim)] + ["mean", "stderr", "n", "truncated_fraction"]
    return recs, {op: (head, rows)}


def _problem(cfg, model):
    p = cfg.get("params") or {}
    return DirichletProblem(model, build_domain(cfg.get("domain")), build_field(p.get("f")), build_field(p.get("g")))


def op_dirichlet(cfg, rng, euler):
    model = build_model(cfg)
    p = cfg.get("params") or {}
    prob = _problem(cfg, model)
    xs = _points(_need(p, "x"), model.dim)
    n = int(_need(p, "n_paths"))
    ests = [dirichlet_solve(prob, x, n, euler, rng.child(i)) for i, x in enumerate(xs)]
    return _estimate_rows("dirichlet", xs, ests, model.dim)


def op_exit_moments(cfg, rng, euler):
    model = build_model(cfg)
    p = cfg.get("params") or {}
    prob = DirichletProblem(model, build_domain(cfg.get("domain")))
    x = _points(_need(p, "x"), model.dim)[0]
    tab = exit_time_moments(prob, x, int(p.get("m_max", 4)), int(_need(p, "n_paths")), euler, rng)
    recs = [e.to_record("exit-moments", {"x": x.tolist(), "m": m + 1}) for m, e in enumerate(tab)]
    recs.append({"op": "exit-moments-recursion", "params": {"x": x.tolist()}, "recursion": tab.recursion})
    rows = [[m + 1, e.mean, e.stderr, e.n] for m, e in enumerate(tab)]
    return recs, {"exit_moments": (["m", "mean", "stderr", "n"], rows)}


def op_boundary_decay(cfg, rng, euler):
    model = build_model(cfg)
    p = cfg.get("params") or {}
    prob = DirichletProblem(model, build_domain(cfg.get("domain")), f=1.0)
    direction = p.get("direction", [1.0] + [0.0] * (model.dim - 1))
    ds = p.get("distances", [0.4, 0.2, 0.1, 0.05, 0.025])
    tab = boundary_decay(prob, direction, ds, int(_need(p, "n_paths")), euler, rng)
    recs = [e.to_record("boundary-decay", {"distance": d, "dt": dt}) for d, e, dt in zip(ds, tab.estimates, tab.dts)]
    recs.append({"op": "boundary-decay-summary", "params": p, "strictly_decreasing": tab.strictly_decreasing,
                 "ratio": tab.ratio})
    rows = [[d, e.mean, e.stderr, dt] for d, e, dt in zip(ds, tab.estimates, tab.dts)]
    return recs, {"boundary_decay": (["distance", "mean", "stderr", "dt"], rows)}


def op_harnack(cfg, rng, euler):
    model = build_model(cfg)
    p = cfg.get("params") or {}
    D = build_domain(cfg.get("domain"))
    K = build_domain(_need(p, "K"), "params.K")
    data = [build_field(d) for d in _need(p, "data")]
    res = harnack_probe(model, D, K, data, int(_need(p, "n_paths")), euler, rng, n_grid=int(p.get("n_grid", 5)))
    rows = [[j, r, lo, hi] for j, (r, lo, hi) in enumerate(zip(res.ratios, res.lower, res.upper))]
    return [{"op": "harnack", "params": p, **res.to_dict()}], {"harnack": (["datum", "ratio", "lower", "upper"], rows)}


def op_cone(cfg, rng, euler):
    p = cfg.get("params") or {}
    alpha = float((cfg.get("kernel") or {}).get("alpha", p.get("alpha", 1.5)))
    cfg_e = euler if "euler" in cfg else EulerConfig(dt=1e-2, workers=euler.workers)
    t_grid = p.get("t_grid") or np.geomspace(1.0, 30.0, 8).tolist()
    res = cone_exit_exponent(alpha, p.get("theta"), _need(p, "x0"), t_grid, int(_need(p, "n_paths")), rng, cfg_e)
    rows = [[t, s, e] for t, s, e in zip(res.t_grid, res.survival, res.stderr)]
    return [{"op": "cone", "params": p, **res.to_dict()}], {"cone_survival": (["t", "survival", "stderr"], rows)}


def op_hitting(cfg, rng, euler):
    model = build_model(cfg)
    p = cfg.get("params") or {}
    n = int(_need(p, "n_paths"))
    if "n_outer" in p:
        x = _points(_need(p, "x"), model.dim)[0]
        try:
            rep = exterior_hitting_time(model, float(p["n_outer"]), x, n, euler, rng)
        except EstimatorError as exc:
            rep = getattr(exc, "report", None)
            if rep is not None:
                exc.records = [{"op": "hitting-exterior", "params": p, **rep.to_dict()}]
            raise
        rows = [[r, e.mean, e.stderr] for r, e in zip(rep.radii, rep.estimates)]
        return [{"op": "hitting-exterior", "params": p, **rep.to_dict()}], {"hitting_exterior": (["n", "mean", "stderr"], rows)}
    target = build_domain(cfg.get("domain"))
    xs = _points(_need(p, "starts"), model.dim)
    ests = hitting_time_table(model, target, xs, n, euler, rng)
    return _estimate_rows("hitting", xs, ests, model.dim)


def op_lyapunov(cfg, rng, euler):
    model = build_model(cfg)
    p = cfg.get("params") or {}
    V = build_probe(p.get("V", {"kind": "power", "gamma": 1.2}), model.dim)
    cand = LyapunovCandidate(V, float(p.get("compact_radius", 1.0)), float(p.get("epsilon_margin", 0.0)), dim=model.dim)
    res = lyapunov_verify(model, cand, int(p.get("rays", 8)), p.get("radii", [10.0, 30.0, 100.0]))
    rows = [list(pt) + [v] for pt, v in zip(res.points.tolist(), res.values.tolist())]
    head = [f"x{j}" for j in range(model.dim)] + ["IV"]
    return [{"op": "lyapunov", "params": p, **res.to_dict()}], {"lyapunov": (head, rows)}


def op_invariant(cfg, rng, euler):
    model = build_model(cfg)
    p = cfg.get("params") or {}
    window = build_domain(_need(p, "window"), "params.window")
    lv = None
    if "V" in p:
        cand = LyapunovCandidate(build_probe(p["V"], model.dim), float(p.get("compact_radius", 1.0)), dim=model.dim)
        lv = lyapunov_verify(model, cand, int(p.get("rays", 8)), p.get("radii", [10.0, 30.0, 100.0]))
    rep = invariant_measure_estimate(model, window, float(_need(p, "t_total")), float(p.get("burn_in", 5.0)), euler,
                                     rng, n_chains=int(p.get("n_chains", 1000)), n_bins=p.get("n_bins", 50), lyapunov=lv)
    d = model.dim
    head = ["bin_lo", "bin_hi", "mass"] if d == 1 else [f"bin_lo_{j}" for j in range(d)] + [f"bin_hi_{j}" for j in range(d)] + ["mass"]
    tables = {"occupation": (head, rep.occupation.rows()), "hasminskii": (head, rep.hasminskii.rows())}
    return [{"op": "invariant", "params": p, **rep.to_dict()}], tables


def op_fd_solve(cfg, rng, euler):
    model = build_model(cfg)
    p = cfg.get("params") or {}
    a, b = p.get("interval", [-1.0, 1.0])
    fval = float(p.get("f", 1.0))
    sol = fd.assemble_and_solve(model, (float(a), float(b)), int(p.get("n", 512)), f=lambda x: np.full_like(x, fval),
                                drift_scheme=p.get("drift_scheme", "upwind"))
    rec = {"op": "fd-solve", "params": p, **sol.report()}
    rows = [[float(x), float(u)] for x, u in zip(sol.nodes, sol.values)]
    return [rec], {"fd_solution": (["x", "u"], rows)}


def op_barrier(cfg, rng, euler):
    p = cfg.get("params") or {}
    s = float(_need(p, "s"))
    qs = p.get("q", [s])
    res = [barrier_integrals(s, float(q)) for q in qs]
    recs = [{"op": "barrier", "params": {"s": s, "q": r.q}, "A": r.A, "B": r.B, "A_check": r.A_check} for r in res]
    return recs, {"barrier": (["s", "q", "A", "B"], [[s, r.q, r.A, r.B] for r in res])}


OPERATIONS = {
    "validate": op_validate,
    "generator": op_generator,
    "dirichlet": op_dirichlet,
    "exit-moments": op_exit_moments,
    "boundary-decay": op_boundary_decay,
    "harnack": op_harnack,
    "cone": op_cone,
    "hitting": op_hitting,
    "lyapunov": op_lyapunov,
    "invariant": op_invariant,
    "fd-solve": op_fd_solve,
    "barrier": op_barrier,
}


# ---------------------------------------------------------------- output


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    return str(o)


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _versions():
    return {"levykit": __version__, "python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__}


def _sub_seed(stream):
    return int(np.random.SeedSequence(stream.seed, spawn_key=stream.key).generate_state(1, np.uint64)[0])


def _scalars(rec):
    return {k: v for k, v in rec.items() if isinstance(v, (int, float, str, bool, np.floating, np.integer)) and k != "op"}


def run_operation(op, cfg, seed, workers, out_dir):
    """Execute ``op`` over all sweep points; returns (exit_code, manifest)."""
    t0 = time.perf_counter()
    os.makedirs(out_dir, exist_ok=True)
    manifest = {
        "operation": op,
        "config": cfg,
        "config_hash": _canonical_hash(cfg),
        "seed": seed,
        "workers": workers,
        "versions": _versions(),
        "sub_seeds": [],
        "files": [],
        "error": None,
    }
    code = EXIT_OK
    records, sweep_rows, sweep_head = [], [], None
    tables_all = {}
    try:
        points = sweep_points(cfg)
        root = RngStream(seed)
        for j, (assign, c) in enumerate(points):
            rng = root.child(j) if len(points) > 1 else root
            if len(points) > 1:
                manifest["sub_seeds"].append({"index": j, "point": assign, "sub_seed": _sub_seed(rng), "stream": rng.describe()})
            euler = build_euler(c, workers)
            recs, tables = OPERATIONS[op](c, rng, euler)
            for r in recs:
                r.update({f"sweep.{k}": v for k, v in assign.items()})
            records += recs
            if len(points) > 1:
                for r in recs:
                    sc = _scalars(r)
                    if sweep_head is None:
                        sweep_head = list(sc)
                    sweep_rows.append([sc.get(k, "") for k in sweep_head])
            for name, (head, rows) in tables.items():
                key = name if len(points) == 1 else f"{name}_{j}"
                tables_all[key] = (head, rows)
    except ValidationError as exc:
        code = EXIT_VALIDATION
        manifest["error"] = {"type": type(exc).__name__, "message": str(exc)}
    except LevykitError as exc:
        code = EXIT_ESTIMATOR
        manifest["error"] = {"type": type(exc).__name__, "message": str(exc)}
        records += getattr(exc, "records", [])
    if code == EXIT_OK:
        write_json(os.path.join(out_dir, "result.json"), records)
        manifest["files"].append("result.json")
        for name, (head, rows) in tables_all.items():
            write_csv(os.path.join(out_dir, f"{name}.csv"), head, rows)
            manifest["files"].append(f"{name}.csv")
        if sweep_rows:
            write_csv(os.path.join(out_dir, "sweep.csv"), sweep_head, sweep_rows)
            manifest["files"].append("sweep.csv")
    elif records:
        # diagnostics of a failed estimator are kept, under a name that marks them
        write_json(os.path.join(out_dir, "failed_result.json"), records)
        manifest["files"].append("failed_result.json")
    manifest["exit_code"] = code
    manifest["wallclock"] = time.perf_counter() - t0
    write_json(os.path.join(out_dir, "manifest.json"), manifest)
    return code, manifest


def run_verify(args):
    t0 = time.perf_counter()
    out_dir = args.out or "levykit-verify"
    os.makedirs(out_dir, exist_ok=True)
    seed = DEFAULT_SEED if args.seed is None else args.seed
    crit = [int(c) for c in args.criteria.split(",")] if args.criteria else None
    res = run_acceptance(crit, smoke=args.smoke, seed=seed, workers=args.workers or 1)
    rows = [[r.number, r.title, r.status, r.detail, r.deviation or "", round(r.seconds, 2)] for r in res]
    write_csv(os.path.join(out_dir, "verify.csv"), ["criterion", "title", "status", "detail", "deviation", "seconds"], rows)
    write_json(os.path.join(out_dir, "verify.json"), [{**r.__dict__, "status": r.status} for r in res])
    code = EXIT_OK if all(r.passed for r in res) else EXIT_FAILED
    manifest = {"operation": "verify", "seed": seed, "smoke": args.smoke, "workers": args.workers or 1,
                "versions": _versions(), "files": ["verify.csv", "verify.json"], "exit_code": code,
                "error": None if code == EXIT_OK else {"type": "AcceptanceFailed",
                                                       "message": ",".join(str(r.number) for r in res if not r.passed)},
                "wallclock": time.perf_counter() - t0}
    write_json(os.path.join(out_dir, "manifest.json"), manifest)
    return code


def parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML experiment file")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--workers", type=int, help="worker threads for path simulation")
    common.add_argument("--out", help="output directory")
    p = argparse.ArgumentParser(prog="levykit", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name, parents=[common])
        if name == "verify":
            sp.add_argument("--smoke", action="store_true", help="1/10 path budgets, bands widened by sqrt(10)")
            sp.add_argument("--criteria", help="comma-separated criterion numbers (default all)")
    return p


def main(argv=None):
    args = parser().parse_args(argv)
    if args.command == "verify":
        return run_verify(args)
    out_dir = args.out or os.path.join("levykit-out", args.command)
    try:
        if not args.config:
            raise ValidationError("--config is required")
        cfg, _ = load_config(args.config)
        seed = args.seed if args.seed is not None else cfg.get("seed")
        if seed is None:
            raise ValidationError("a seed is required (config 'seed' or --seed)")
        cfg["seed"] = int(seed)
        workers = args.workers or int(cfg.get("workers", 1))
    except (ValidationError, OSError) as exc:
        print(f"levykit: {exc}", file=sys.stderr)
        os.makedirs(out_dir, exist_ok=True)
        write_json(os.path.join(out_dir, "manifest.json"),
                   {"operation": args.command, "exit_code": EXIT_VALIDATION, "files": [],
                    "error": {"type": type(exc).__name__, "message": str(exc)}, "versions": _versions()})
        return EXIT_VALIDATION
    code, manifest = run_operation(args.command, cfg, int(seed), workers, out_dir)
    if manifest["error"]:
        print(f"levykit: {manifest['error']['type']}: {manifest['error']['message']}", file=sys.stderr)
    else:
        print(os.path.join(out_dir, "manifest.json"))
    return code


if __name__ == "__main__":
    sys.exit(main())
