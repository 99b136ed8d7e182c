"""Command line entry point: graphnls <subcommand> ..."""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import graph as G
from .analytic import ProblemParams, thresholds
from .discretization import MeshParams, MeshError, assemble, default_trunc
from .experiments import Experiment, ExperimentSpec, jobs_from_env, run_experiment
from .solver import SolverConfig, SolverError, ground_state, nodal_ground_state, omega_Z
from .topology import analyze, classify


def _json_default(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if hasattr(x, "tolist"):
        return x.tolist()
    if isinstance(x, (set, frozenset)):
        return sorted(x)
    return str(x)


def _clean(obj):
    # JSON has no inf/nan; map them to null
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def _emit(doc: dict, fmt: str, out=None) -> None:
    out = out or sys.stdout
    if fmt == "json":
        out.write(json.dumps(_clean(doc), indent=2, sort_keys=True, default=_json_default) + "\n")
        return
    flat = {}

    def walk(prefix, v):
        if isinstance(v, dict):
            for k, x in v.items():
                walk(f"{prefix}.{k}" if prefix else k, x)
        elif isinstance(v, (list, tuple)):
            flat[prefix] = json.dumps(_clean(v), default=_json_default)
        else:
            flat[prefix] = "" if v is None else v

    walk("", doc)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(flat))
    w.writerow(list(flat.values()))
    out.write(buf.getvalue())


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _load(args) -> G.MetricGraph:
    if args.graph and args.family:
        raise G.GraphError("give either --graph or --family, not both")
    if args.graph:
        return G.load_graph(args.graph)
    if args.family:
        params = {}
        for item in args.param or []:
            if "=" not in item:
                raise G.GraphError(f"--param expects key=value, got {item!r}")
            k, v = item.split("=", 1)
            params[k] = _parse_value(v)
        return G.build_graph(G.FamilySpec(G.Family(args.family.upper()), params))
    raise G.GraphError("no graph given (use --graph FILE or --family NAME)")


def _graph_args(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--graph", help="graph JSON file")
    sp.add_argument("--family", help="built-in family tag instead of a file, e.g. TADPOLE")
    sp.add_argument("--param", action="append", metavar="KEY=VALUE", help="family parameter (repeatable)")


def _solve_args(sp: argparse.ArgumentParser) -> None:
    _graph_args(sp)
    sp.add_argument("--lambda", dest="lam", type=float, default=1.0)
    sp.add_argument("--p", type=float, default=4.0)
    sp.add_argument("--mesh-h", type=float, default=0.05)
    sp.add_argument("--trunc", type=float, default=None, help="half-line truncation length")
    sp.add_argument("--restarts", type=int, default=None)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--tol", type=float, default=1e-5, help="PDE residual factor of the stopping test")
    sp.add_argument("--format", choices=("json", "csv"), default="json")
    sp.add_argument("--richardson", action="store_true", help="also solve at h/2 and report an error estimate")
    sp.add_argument("--no-field", action="store_true", help="omit nodal values from JSON output")


def _mesh(args, lam: float) -> MeshParams:
    trunc = args.trunc if args.trunc is not None else default_trunc(lam if lam > 0 else 1.0)
    return MeshParams(args.mesh_h, trunc)


def _seed(s: int) -> int:
    if not 0 <= s < 2**64:
        raise ValueError("seed must be a 64-bit unsigned integer")
    return s


def cmd_analyze(args) -> int:
    g = _load(args)
    topo = analyze(g, oracle=args.oracle)
    certs = classify(g, args.class_hint or g.family or "GENERIC", None, topo)
    doc = {"topology": topo.as_dict(), "certificates": [c.as_dict() for c in certs]}
    _emit(doc, "json")
    return 0


def cmd_thresholds(args) -> int:
    th = thresholds(args.lam, args.p)
    _emit(th.as_dict(), args.format)
    return 0


def cmd_solve(args, nodal: bool) -> int:
    g = _load(args)
    params = ProblemParams(args.lam, args.p)
    mp = _mesh(args, args.lam)
    cfg = SolverConfig(restarts=args.restarts, seed=_seed(args.seed), tol_pde_factor=args.tol,
                       richardson=args.richardson)
    res = (nodal_ground_state if nodal else ground_state)(g, params, mp, cfg)
    doc = res.as_dict(include_field=not args.no_field and args.format == "json")
    doc["params"] = {"lambda": params.lam, "p": params.p}
    _emit(doc, args.format)
    return 0 if res.converged else 3


def cmd_spectrum(args) -> int:
    g = _load(args)
    mp = _mesh(args, args.lam)
    space = assemble(g, mp)
    om = omega_Z(space)
    _emit({"omega_Z": om, "admissible_lambda_above": -om, "n_free": space.n_free,
           "mesh": {"h_target": mp.h_target, "trunc_length": mp.trunc_length}}, args.format)
    return 0


def cmd_experiment(args) -> int:
    jobs = args.jobs if args.jobs is not None else jobs_from_env()
    grid = {}
    for item in args.grid or []:
        k, _, v = item.partition("=")
        grid[k] = [_parse_value(x) for x in v.split(",") if x]
    spec = ExperimentSpec(Experiment(args.tag.upper()), grid, ProblemParams(args.lam, args.p),
                          MeshParams(args.mesh_h, args.trunc if args.trunc is not None else 40.0),
                          _seed(args.seed), args.restarts, Path(args.out))
    rows, man = run_experiment(spec, jobs)
    for r in rows:
        if r.get("error"):
            print(f"grid point {r['point']} failed: {r['error']}", file=sys.stderr)
    print(json.dumps({"output": str(Path(args.out)), "files": man["files"], "errors": man["errors"]}))
    return 0 if not man["errors"] else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="graphnls", description=__doc__)
    sub = ap.add_subparsers(dest="cmd", required=True)

    sp = sub.add_parser("analyze", help="topological report and certificates for a graph")
    _graph_args(sp)
    sp.add_argument("--oracle", action="store_true", help="cross-check F and the core diameter by brute force")
    sp.add_argument("--class-hint", default=None)
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("thresholds", help="soliton action levels s, s/2 and 2s")
    sp.add_argument("--lambda", dest="lam", type=float, required=True)
    sp.add_argument("--p", type=float, required=True)
    sp.add_argument("--format", choices=("json", "csv"), default="json")
    sp.set_defaults(func=cmd_thresholds)

    for name, nodal, text in (("groundstate", False, "minimize the action on the Nehari set"),
                              ("nodal", True, "minimize the action over sign-changing Nehari pairs")):
        sp = sub.add_parser(name, help=text)
        _solve_args(sp)
        sp.set_defaults(func=lambda a, nodal=nodal: cmd_solve(a, nodal))

    sp = sub.add_parser("spectrum", help="bottom of the Laplacian spectrum on the truncated graph")
    _solve_args(sp)
    sp.set_defaults(func=cmd_spectrum)

    sp = sub.add_parser("experiment", help="run a named sweep and write CSV/JSON reports")
    sp.add_argument("tag", choices=[e.value for e in Experiment] + [e.value.lower() for e in Experiment])
    sp.add_argument("--out", default="out")
    sp.add_argument("--grid", action="append", metavar="NAME=v1,v2,...", help="override a grid axis")
    sp.add_argument("--lambda", dest="lam", type=float, default=1.0)
    sp.add_argument("--p", type=float, default=4.0)
    sp.add_argument("--mesh-h", type=float, default=0.05)
    sp.add_argument("--trunc", type=float, default=None)
    sp.add_argument("--restarts", type=int, default=8)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--jobs", type=int, default=None, help="parallel grid points (default: $GRAPHNLS_JOBS or 1)")
    sp.set_defaults(func=cmd_experiment)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (G.GraphError, MeshError, SolverError, ValueError, OSError) as exc:
        print(f"graphnls {args.cmd}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
