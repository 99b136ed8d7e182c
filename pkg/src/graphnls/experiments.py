"""Parameter sweeps that tabulate levels, thresholds and certificates into CSV files."""
from __future__ import annotations

import csv
import io
import json
import math
import os
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Optional

import numpy as np
import scipy

from . import __version__
from . import graph as G
from .analytic import ProblemParams, thresholds
from .discretization import MeshParams, assemble
from .solver import SolverConfig, SolverError, ground_state, nodal_ground_state, omega_Z
from .topology import LevelEvidence, analyze, classify


class Experiment(str, Enum):
    LEVEL_TABLE = "LEVEL_TABLE"
    PENDANT_SWEEP = "PENDANT_SWEEP"
    GLUE_SWEEP = "GLUE_SWEEP"
    GAMMA_KL_SWEEP = "GAMMA_KL_SWEEP"
    PERIODIC_RATIO = "PERIODIC_RATIO"
    TREE_CASES = "TREE_CASES"
    FIG_LEVELS = "FIG_LEVELS"
    EXCEPTION_BIGSEGMENTS = "EXCEPTION_BIGSEGMENTS"


DEFAULT_GRIDS: dict[Experiment, dict[str, list]] = {
    Experiment.LEVEL_TABLE: {"lam": [0.5, 1.0, 2.0]},
    Experiment.PENDANT_SWEEP: {"a": [0.2, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0]},
    Experiment.GLUE_SWEEP: {"L": [4.0, 8.0, 16.0]},
    Experiment.GAMMA_KL_SWEEP: {"k": [2], "L": [2.0, 4.0, 8.0, 16.0]},
    Experiment.PERIODIC_RATIO: {"K": [8, 16, 32]},
    Experiment.TREE_CASES: {"depth": [6, 8]},
    Experiment.FIG_LEVELS: {"figure": ["2a", "2b", "2c", "2d", "3a", "3b", "4", "5"]},
    Experiment.EXCEPTION_BIGSEGMENTS: {"k_max": [2, 4, 6, 8, 10, 12]},
}

COLUMNS = [
    "experiment", "point", "family", "x", "n_edges", "F_count", "diam_B", "omega_Z",
    "lambda", "p", "h", "trunc",
    "inf_N", "err_N", "converged_N", "escape_N",
    "inf_M", "err_M", "converged_M", "domains_M", "isolated_zeros_M", "hint_M",
    "s", "half_s", "two_inf_N", "s_plus_inf_N", "ratio_M_N",
    "gs_verdict", "gs_gap", "gs_err", "gs_rule",
    "ngs_verdict", "ngs_gap", "ngs_err", "ngs_rule",
    "error",
]


@dataclass
class ExperimentSpec:
    tag: Experiment
    grid: dict[str, list] = field(default_factory=dict)
    params: ProblemParams = field(default_factory=lambda: ProblemParams(1.0, 4.0))
    mesh: MeshParams = field(default_factory=lambda: MeshParams(0.05, 40.0))
    seed: int = 0
    restarts: Optional[int] = 8
    output: Path = Path("out")

    def __post_init__(self):
        self.tag = Experiment(self.tag)
        if not self.grid:
            self.grid = {k: list(v) for k, v in DEFAULT_GRIDS[self.tag].items()}
        for k, v in self.grid.items():
            if not v:
                raise ValueError(f"grid '{k}' is empty")
        # build every graph once up front so bad parameters fail before any solve
        for pt in points(self):
            pt.build()


@dataclass
class GridPoint:
    index: int
    label: str
    x: float
    build: Callable[[], G.MetricGraph]
    hint: str = "GENERIC"
    nodal: bool = False
    lam: Optional[float] = None


def _pendant_with_stub(a: float) -> G.MetricGraph:
    # half-line, a free pendant of length a and a Dirichlet stub of length 1 at one vertex
    return G.make_graph([(False, False), (True, False), (False, False), (False, True)],
                        [(0, 1, G.HALF_LINE), (0, 2, a), (0, 3, 1.0)],
                        {"family": "PENDANT_WITH_STUB", "pendant": a})


FIGURES: dict[str, tuple[Callable[[], G.MetricGraph], bool]] = {
    "2a": (lambda: G.line_with_pendant(2.0), False),
    "2b": (lambda: G.signpost(1.0, 4.0), False),
    "2c": (lambda: G.tadpole(4.0), False),
    "2d": (lambda: G.fork(3, 2.0), False),
    "3a": (lambda: G.k4_core_two_tails(1.0), True),
    "3b": (lambda: G.tadpole(2.0), True),
    "4": (lambda: G.gamma_nl(5, 8.0, (4.0, 4.0)), True),
    "5": (lambda: G.stacked_bubbles(1.0, 2.0, 1.0, 2.0), True),
}


def points(spec: ExperimentSpec) -> list[GridPoint]:
    t, gr = spec.tag, spec.grid
    out: list[GridPoint] = []

    def add(label, x, build, hint="GENERIC", nodal=False, lam=None):
        out.append(GridPoint(len(out), label, float(x), build, hint, nodal, lam))

    if t is Experiment.LEVEL_TABLE:
        table = [("line", G.line), ("half_line", G.half_line), ("half_line_dirichlet", lambda: G.half_line(True)),
                 ("tadpole4", lambda: G.tadpole(4.0)), ("signpost", lambda: G.signpost(1.0, 4.0)),
                 ("fork3", lambda: G.fork(3, 2.0)), ("pendant2", lambda: G.line_with_pendant(2.0))]
        for lam in gr["lam"]:
            for name, b in table:
                add(f"{name}@lam={lam:g}", lam, b, lam=float(lam))
    elif t is Experiment.PENDANT_SWEEP:
        for a in gr["a"]:
            add(f"a={a:g}", a, lambda a=a: _pendant_with_stub(float(a)))
    elif t is Experiment.GLUE_SWEEP:
        for L in gr["L"]:
            add(f"L={L:g}", L, lambda L=L: G.glue(G.tadpole(4.0), 1, G.tadpole(4.0), 1, float(L)), nodal=True)
    elif t is Experiment.GAMMA_KL_SWEEP:
        for k in gr["k"]:
            for L in gr["L"]:
                add(f"k={k},L={L:g}", L, lambda k=k, L=L: G.gamma_nl(int(k), float(L), (6.0, 6.0)), nodal=True)
    elif t is Experiment.PERIODIC_RATIO:
        for K in gr["K"]:
            add(f"K={K}", K, lambda K=K: G.periodic_chain(int(K)), hint="PERIODIC_CHAIN", nodal=True)
    elif t is Experiment.TREE_CASES:
        for d in gr["depth"]:
            add(f"unrooted,depth={d}", d, lambda d=d: G.regular_tree(3, int(d)), hint="REGULAR_TREE")
            add(f"rooted,depth={d}", d, lambda d=d: G.regular_tree(3, int(d), rooted=True), hint="REGULAR_TREE")
            add(f"rooted_dirichlet,depth={d}", d,
                lambda d=d: G.regular_tree(3, int(d), rooted=True, root_dirichlet=True), hint="REGULAR_TREE")
    elif t is Experiment.FIG_LEVELS:
        for k, name in enumerate(gr["figure"]):
            name = str(name)
            if name not in FIGURES:
                raise ValueError(f"unknown figure '{name}'; choose from {sorted(FIGURES)}")
            build, nodal = FIGURES[name]
            add(f"fig{name}", k, build, nodal=nodal)
    elif t is Experiment.EXCEPTION_BIGSEGMENTS:
        for k in gr["k_max"]:
            add(f"k_max={k}", k, lambda k=k: G.growing_pendants(int(k)))
    return out


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        return f"{x:.10g}"
    return str(x)


def run_point(spec: ExperimentSpec, pt: GridPoint) -> dict:
    row: dict = {c: None for c in COLUMNS}
    row.update(experiment=spec.tag.value, point=pt.label, x=pt.x)
    try:
        g = pt.build()
        params = ProblemParams(pt.lam if pt.lam is not None else spec.params.lam, spec.params.p)
        cfg = SolverConfig(seed=spec.seed, restarts=spec.restarts, richardson=True)
        mp = spec.mesh
        topo = analyze(g)
        space = assemble(g, mp)
        row.update(family=g.family, n_edges=g.n_edges, F_count=len(topo.F_edges), diam_B=topo.diam_B,
                   omega_Z=omega_Z(space), p=params.p, h=mp.h_target, trunc=mp.trunc_length)
        row["lambda"] = params.lam
        gs = ground_state(g, params, mp, cfg, space=space)
        row.update(inf_N=gs.level, err_N=gs.error_estimate, converged_N=gs.converged, escape_N=gs.escape_fraction)
        th = thresholds(params.lam, params.p) if params.lam > 0 else None
        if th:
            row.update(s=th.s, half_s=th.half_s, s_plus_inf_N=th.s + gs.level)
        row["two_inf_N"] = 2 * gs.level
        inf_M = err_M = None
        if pt.nodal:
            ns = nodal_ground_state(g, params, mp, cfg, space=space)
            row.update(converged_M=ns.converged, hint_M=ns.hint)
            if not math.isnan(ns.level):
                inf_M, err_M = ns.level, ns.error_estimate or 0.0
                row.update(inf_M=inf_M, err_M=err_M, ratio_M_N=inf_M / gs.level,
                           domains_M=ns.nodal.domain_count, isolated_zeros_M=ns.nodal.count("ISOLATED_POINT"))
        ev = None
        if params.lam > 0:
            ev = LevelEvidence(params.lam, params.p, gs.level, gs.error_estimate or 0.0, inf_M, err_M or 0.0)
        certs = classify(g, pt.hint, ev, topo)
        for prefix, c in zip(("gs", "ngs"), certs):
            row[f"{prefix}_verdict"] = c.verdict.value
            row[f"{prefix}_rule"] = c.rule
            row[f"{prefix}_gap"] = c.evidence.get("gap")
            row[f"{prefix}_err"] = c.evidence.get("error_estimate")
    except (SolverError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def _run_indexed(args):
    spec, idx = args
    return run_point(spec, points(spec)[idx])


def jobs_from_env(default: int = 1) -> int:
    raw = os.environ.get("GRAPHNLS_JOBS")
    if not raw:
        return default
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValueError(f"GRAPHNLS_JOBS must be an integer, got {raw!r}") from None


def run_rows(spec: ExperimentSpec, jobs: int = 1) -> list[dict]:
    pts = points(spec)
    if jobs <= 1 or len(pts) == 1:
        return [run_point(spec, pt) for pt in pts]
    with ProcessPoolExecutor(max_workers=min(jobs, len(pts))) as ex:
        return list(ex.map(_run_indexed, [(spec, k) for k in range(len(pts))]))


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in COLUMNS])
    return buf.getvalue()


PLOT_SERIES = ("inf_N", "inf_M", "s", "half_s", "two_inf_N", "s_plus_inf_N", "omega_Z", "escape_N")


def plot_rows(rows: list[dict]) -> list[tuple[float, float, str]]:
    """Tidy (x, y, series) triples; the series name carries the row family when x repeats."""
    out = []
    xs = [r["x"] for r in rows]
    dup = len(set(xs)) < len(xs)
    for r in rows:
        if r.get("error"):
            continue
        for s in PLOT_SERIES:
            y = r.get(s)
            if y is None:
                continue
            name = f"{s}:{r['point'].split('@')[0].split(',')[0]}" if dup else s
            out.append((r["x"], float(y), name))
    return out


def emit_plot_data(rows: list[dict], path) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "y", "series"])
    for x, y, s in plot_rows(rows):
        w.writerow([_fmt(float(x)), _fmt(y), s])
    Path(path).write_text(buf.getvalue())


def manifest(spec: ExperimentSpec, rows: list[dict], files: dict[str, str]) -> dict:
    return {
        "experiment": spec.tag.value,
        "seed": spec.seed,
        "restarts": spec.restarts,
        "grid": spec.grid,
        "params": {"lambda": spec.params.lam, "p": spec.params.p},
        "mesh": {"h_target": spec.mesh.h_target, "trunc_length": spec.mesh.trunc_length,
                 "lumped_mass": spec.mesh.lumped_mass},
        "points": [r["point"] for r in rows],
        "errors": [r["point"] for r in rows if r.get("error")],
        "files": files,
        "versions": {"graphnls": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
    }


def run_experiment(spec: ExperimentSpec, jobs: int = 1) -> tuple[list[dict], dict]:
    """Run every grid point and write <tag>.csv, <tag>_plot.csv and <tag>_manifest.json."""
    rows = run_rows(spec, jobs)
    out = Path(spec.output)
    out.mkdir(parents=True, exist_ok=True)
    stem = spec.tag.value.lower()
    files = {"table": f"{stem}.csv", "plot": f"{stem}_plot.csv", "manifest": f"{stem}_manifest.json"}
    (out / files["table"]).write_text(rows_to_csv(rows))
    emit_plot_data(rows, out / files["plot"])
    man = manifest(spec, rows, files)
    (out / files["manifest"]).write_text(json.dumps(man, indent=2, sort_keys=True) + "\n")
    return rows, man


def audit_level_gaps(csv_text: str) -> list[str]:
    """Rows that claim a level-gap existence verdict without gap > error in the adjacent columns."""
    bad = []
    for r in csv.DictReader(io.StringIO(csv_text)):
        for prefix in ("gs", "ngs"):
            if r[f"{prefix}_verdict"] == "EXISTS_BY_LEVEL_GAP":
                gap, err = r[f"{prefix}_gap"], r[f"{prefix}_err"]
                if not gap or not err or not float(gap) > float(err):
                    bad.append(f"{r['point']}:{prefix}")
    return bad
