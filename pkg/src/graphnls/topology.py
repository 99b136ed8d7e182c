"""Combinatorial and metric analysis of graphs: F(G), the bounded core, and existence verdicts."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Optional

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

from .analytic import ProblemParams, s_level
from .graph import HALF_LINE, Edge, MetricGraph, Vertex, components, degree


def is_connected(g: MetricGraph) -> bool:
    return len(components(g.n_vertices, g.edges)) == 1


def _anchors(g: MetricGraph) -> set[int]:
    return {v.id for v in g.vertices if v.infinity or v.dirichlet}


def compute_F_bruteforce(g: MetricGraph) -> set[int]:
    """Remove each edge in turn and look for a component without anchors."""
    anchors = _anchors(g)
    out = set()
    for e in g.edges:
        rest = [f for f in g.edges if f.id != e.id]
        for comp in components(g.n_vertices, rest):
            if not anchors.intersection(comp):
                out.add(e.id)
                break
    return out


def _bridges(g: MetricGraph) -> tuple[set[int], dict[int, set[int]]]:
    """Bridges of the multigraph and, for each, the vertex set on its child side of a DFS tree."""
    adj: list[list[tuple[int, int]]] = [[] for _ in range(g.n_vertices)]
    for e in g.edges:
        if e.is_loop:
            continue
        adj[e.a].append((e.b, e.id))
        adj[e.b].append((e.a, e.id))
    n = g.n_vertices
    disc = [-1] * n
    low = [0] * n
    order: list[int] = []
    parent_edge = [-1] * n
    t = 0
    bridges: set[int] = set()
    child_of: dict[int, int] = {}
    for root in range(n):
        if disc[root] >= 0:
            continue
        disc[root] = low[root] = t
        t += 1
        order.append(root)
        stack = [(root, iter(adj[root]))]
        while stack:
            v, it = stack[-1]
            advanced = False
            for w, eid in it:
                if eid == parent_edge[v]:
                    continue
                if disc[w] < 0:
                    parent_edge[w] = eid
                    disc[w] = low[w] = t
                    t += 1
                    order.append(w)
                    stack.append((w, iter(adj[w])))
                    advanced = True
                    break
                low[v] = min(low[v], disc[w])
            if advanced:
                continue
            stack.pop()
            if stack:
                u = stack[-1][0]
                low[u] = min(low[u], low[v])
                if low[v] > disc[u]:
                    bridges.add(parent_edge[v])
                    child_of[parent_edge[v]] = v
    # subtree vertex sets by DFS discovery intervals
    children: list[list[int]] = [[] for _ in range(n)]
    for v in range(n):
        if parent_edge[v] >= 0:
            e = g.edges[parent_edge[v]]
            children[e.other(v)].append(v)
    sides = {}
    for eid, v in child_of.items():
        seen, todo = set(), [v]
        while todo:
            x = todo.pop()
            seen.add(x)
            todo.extend(children[x])
        sides[eid] = seen
    return bridges, sides


def compute_F(g: MetricGraph) -> set[int]:
    """Edges whose removal leaves a component without vertices at infinity or Dirichlet vertices."""
    anchors = _anchors(g)
    if not anchors:
        # nothing can be reached: every edge, loops included, qualifies
        return {e.id for e in g.edges}
    bridges, sides = _bridges(g)
    out = set()
    for eid in bridges:
        side = sides[eid]
        inside = len(anchors & side)
        if inside == 0 or inside == len(anchors):
            out.add(eid)
    return out


def build_tilde_graph(g: MetricGraph) -> MetricGraph:
    """Turn every edge ending at a Dirichlet vertex into a half-line; Dirichlet vertices move to infinity."""
    if not g.dirichlet:
        return g
    z = set(g.dirichlet)
    vs = tuple(Vertex(v.id, infinity=v.infinity or v.id in z, dirichlet=False) for v in g.vertices)
    es = []
    for e in g.edges:
        if e.a in z and e.b in z:
            raise ValueError(f"edge {e.id} joins two Dirichlet vertices; the graph is a single interval")
        if e.b in z:
            es.append(Edge(e.id, e.a, e.b, HALF_LINE))
        elif e.a in z:
            es.append(Edge(e.id, e.b, e.a, HALF_LINE))
        else:
            es.append(e)
    return MetricGraph(vs, tuple(es), {})


def vertex_distances(g: MetricGraph) -> np.ndarray:
    """All-pairs shortest path lengths between finite vertices through finite edges."""
    rows, cols, vals = [], [], []
    for e in g.edges:
        if e.is_half_line or e.is_loop:
            continue
        rows += [e.a, e.b]
        cols += [e.b, e.a]
        vals += [e.length, e.length]
    n = g.n_vertices
    # keep the shortest of parallel edges
    best: dict[tuple[int, int], float] = {}
    for r, c, v in zip(rows, cols, vals):
        best[(r, c)] = min(v, best.get((r, c), math.inf))
    if best:
        r, c = zip(*best)
        mat = coo_matrix((list(best.values()), (r, c)), shape=(n, n)).tocsr()
    else:
        mat = coo_matrix((n, n)).tocsr()
    return dijkstra(mat, directed=False)


def _edge_pair_max(ell, m, Dac, Dad, Dbc, Dbd):
    """Max over s in [0,ell], t in [0,m] of the point distance between two distinct edges.

    Arrays broadcast over edge pairs.  For fixed s the inner maximum over t is
    min((alpha+beta+m)/2, alpha+m, beta+m) with alpha, beta the distances from
    the point to the second edge's endpoints; the result is a minimum of eight
    affine functions of s, so its maximum sits at an endpoint or a crossing.
    """
    ell = np.asarray(ell, float)
    # affine pieces c0 + c1*s
    al = [(Dac, 1.0), (ell + Dbc, -1.0)]
    be = [(Dad, 1.0), (ell + Dbd, -1.0)]
    pieces = []
    for (a0, a1), (b0, b1) in itertools.product(al, be):
        pieces.append(((a0 + b0 + m) / 2.0, (a1 + b1) / 2.0))
    for a0, a1 in al:
        pieces.append((a0 + m, a1))
    for b0, b1 in be:
        pieces.append((b0 + m, b1))
    c0 = np.stack([np.broadcast_to(np.asarray(p[0], float), np.shape(ell)) for p in pieces])
    c1 = np.stack([np.broadcast_to(np.asarray(p[1], float), np.shape(ell)) for p in pieces])
    cands = [np.zeros_like(ell), ell]
    k = len(pieces)
    with np.errstate(divide="ignore", invalid="ignore"):
        for i in range(k):
            for j in range(i + 1, k):
                ds = c1[i] - c1[j]
                s = np.where(ds != 0, (c0[j] - c0[i]) / np.where(ds != 0, ds, 1.0), 0.0)
                cands.append(np.clip(s, 0.0, ell))
    best = np.full(np.shape(ell), -np.inf)
    for s in cands:
        val = np.min(c0 + c1 * s, axis=0)
        best = np.maximum(best, val)
    return best


def diam_bounded_core(g: MetricGraph) -> Optional[float]:
    """Diameter of the union of bounded edges in the path metric of the graph; None if there are none."""
    fin = [e for e in g.edges if not e.is_half_line]
    if not fin:
        return None
    D = vertex_distances(g)
    a = np.array([e.a for e in fin])
    b = np.array([e.b for e in fin])
    ell = np.array([e.length for e in fin])
    best = 0.0
    # same edge: two points on one edge
    same = np.minimum(ell, (ell + D[a, b]) / 2.0)
    best = max(best, float(same.max()))
    n = len(fin)
    for i in range(n - 1):
        j = np.arange(i + 1, n)
        val = _edge_pair_max(np.full(len(j), ell[i]), ell[j], D[a[i], a[j]], D[a[i], b[j]],
                             D[b[i], a[j]], D[b[i], b[j]])
        best = max(best, float(val.max()))
    return best


def diam_bruteforce(g: MetricGraph, per_edge: int = 40) -> Optional[float]:
    """Diameter from sampled points on bounded edges (oracle for tests)."""
    fin = [e for e in g.edges if not e.is_half_line]
    if not fin:
        return None
    D = vertex_distances(g)
    pts = []
    for e in fin:
        for s in np.linspace(0.0, e.length, per_edge + 1):
            pts.append((e, s))
    best = 0.0
    for i, (e, s) in enumerate(pts):
        for f, t in pts[i:]:
            d = min(s + D[e.a, f.a] + t, s + D[e.a, f.b] + f.length - t,
                    e.length - s + D[e.b, f.a] + t, e.length - s + D[e.b, f.b] + f.length - t)
            if e.id == f.id:
                d = min(d, abs(s - t))
            best = max(best, d)
    return best


def diameter_threshold(params: ProblemParams) -> float:
    """Bounded-core diameter below which a minimizer with a zero in the core is impossible.

    A ground state (or the positive part of a nodal ground state) u on the
    Nehari set with s/2 <= J(u) <= s and a zero in the bounded core obeys
    ||u||_p^p <= lam^{-1} diam^{p/2-1} (s/kappa)^{p/2} and ||u||_p^p >= s/(2 kappa);
    solving for diam gives this bound.
    """
    lam, p, kappa = params.lam, params.p, params.kappa
    s = s_level(lam, p)
    return (lam / 2.0) ** (2.0 / (p - 2.0)) * kappa / s


def diameter_chain_value(params: ProblemParams, diam: float) -> float:
    """Upper bound lam^{-1} diam^{p/2-1} (s/kappa)^{p/2} on ||u||_p^p for such minimizers."""
    lam, p, kappa = params.lam, params.p, params.kappa
    s = s_level(lam, p)
    return diam ** (p / 2 - 1) * (s / kappa) ** (p / 2) / lam


@dataclass
class TopologyReport:
    connected: bool
    F_edges: set[int]
    H0: bool
    H1: bool
    decomposition: dict[int, tuple[list[int], list[int]]]
    diam_B: Optional[float]
    has_half_line: bool

    def as_dict(self) -> dict:
        return {
            "connected": self.connected,
            "F_edges": sorted(self.F_edges),
            "F_count": len(self.F_edges),
            "H0": self.H0,
            "H1": self.H1,
            "decomposition": {str(k): {"compact_part": v[0], "rest": v[1]}
                              for k, v in sorted(self.decomposition.items())},
            "diam_B": self.diam_B,
            "has_half_line": self.has_half_line,
        }


def analyze(g: MetricGraph, oracle: bool = False) -> TopologyReport:
    F = compute_F_bruteforce(g) if oracle else compute_F(g)
    anchors = _anchors(g)
    dec = {}
    for eid in sorted(F):
        rest = [f for f in g.edges if f.id != eid]
        comps = components(g.n_vertices, rest)
        bare = [c for c in comps if not anchors.intersection(c)]
        other = sorted(v for c in comps if c is not bare[0] for v in c)
        dec[eid] = (bare[0], other)
    return TopologyReport(
        connected=is_connected(g),
        F_edges=F,
        H0=not F,
        H1=len(F) <= 1,
        decomposition=dec,
        diam_B=diam_bounded_core(g),
        has_half_line=bool(g.half_lines),
    )


# ---------------------------------------------------------------- verdicts

class Target(str, Enum):
    GROUND_STATE = "GROUND_STATE"
    NODAL_GROUND_STATE = "NODAL_GROUND_STATE"


class Verdict(str, Enum):
    NONEXISTENT_TOPOLOGICAL = "NONEXISTENT_TOPOLOGICAL"
    NONEXISTENT_METRIC = "NONEXISTENT_METRIC"
    EXISTS_BY_LEVEL_GAP = "EXISTS_BY_LEVEL_GAP"
    EXISTS_BY_THEOREM = "EXISTS_BY_THEOREM"
    INCONCLUSIVE = "INCONCLUSIVE"


@dataclass
class LevelEvidence:
    """Computed levels with error bars, as produced by the solver."""
    lam: float
    p: float
    inf_N: Optional[float] = None
    err_N: float = 0.0
    inf_M: Optional[float] = None
    err_M: float = 0.0


@dataclass
class ExistenceCertificate:
    target: Target
    verdict: Verdict
    rule: str
    evidence: dict[str, Any] = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"target": self.target.value, "verdict": self.verdict.value, "rule": self.rule,
                "evidence": self.evidence}


# Rule tags.  Each names the hypothesis that was checked.
RULE_NO_BARE_EDGE = "no-edge-isolates-a-bare-part"          # #F = 0
RULE_LINE_EXCEPTION = "line-or-tower-exception"
RULE_AT_MOST_ONE_BARE_EDGE = "at-most-one-edge-isolates-a-bare-part"  # #F <= 1
RULE_PERIODIC = "periodic-chain"
RULE_TREE_DIRICHLET_ROOT = "rooted-regular-tree-dirichlet-root"
RULE_TREE = "regular-tree"
RULE_TREE_NODAL = "regular-tree-nodal"
RULE_SMALL_CORE = "bounded-core-too-small"
RULE_LEVEL_GAP = "level-below-infinity-level"
RULE_COMPACT = "compact-graph"
RULE_NONE = "no-rule-applies"


def _is_line_like(g: MetricGraph) -> bool:
    """Two half-lines joined by a path of finite edges through degree-2 vertices."""
    if len(g.half_lines) != 2 or g.dirichlet:
        return False
    if g.n_edges != g.n_vertices - 1:
        return False
    return all(degree(g, v.id) == 2 for v in g.vertices if not v.infinity)


def _tree_structure_ok(g: MetricGraph) -> bool:
    meta = g.meta
    d = meta.get("degree")
    if d is None or g.n_edges != g.n_vertices - 1 or g.half_lines:
        return False
    lengths = {e.length for e in g.edges}
    if len(lengths) != 1:
        return False
    cut = set(meta.get("truncation", []))
    root = meta.get("root")
    for v in g.vertices:
        deg = degree(g, v.id)
        if v.id in cut:
            continue
        if meta.get("rooted") and v.id == root:
            if deg != 1:
                return False
        elif deg != d:
            return False
    return True


def classify(g: MetricGraph, class_hint: str = "GENERIC", levels: Optional[LevelEvidence] = None,
             topo: Optional[TopologyReport] = None) -> list[ExistenceCertificate]:
    """One certificate for ground states and one for nodal ground states."""
    hint = str(getattr(class_hint, "value", class_hint) or "GENERIC").upper()
    hint = {"TREE": "REGULAR_TREE", "PERIODIC": "PERIODIC_CHAIN"}.get(hint, hint)
    topo = topo or analyze(g)
    nF = len(topo.F_edges)
    base = {"F_count": nF, "diam_B": topo.diam_B}

    gs = ns = None
    if hint == "PERIODIC_CHAIN" and g.meta.get("family") == "PERIODIC_CHAIN":
        gs = ExistenceCertificate(Target.GROUND_STATE, Verdict.EXISTS_BY_THEOREM, RULE_PERIODIC, dict(base))
        ns = ExistenceCertificate(Target.NODAL_GROUND_STATE, Verdict.NONEXISTENT_TOPOLOGICAL, RULE_PERIODIC,
                                  dict(base))
    elif hint == "REGULAR_TREE" and g.meta.get("family") == "REGULAR_TREE" and _tree_structure_ok(g):
        ev = dict(base, rooted=bool(g.meta.get("rooted")), root_dirichlet=bool(g.meta.get("root_dirichlet")))
        if g.meta.get("rooted") and g.meta.get("root_dirichlet"):
            gs = ExistenceCertificate(Target.GROUND_STATE, Verdict.NONEXISTENT_TOPOLOGICAL,
                                      RULE_TREE_DIRICHLET_ROOT, ev)
        else:
            gs = ExistenceCertificate(Target.GROUND_STATE, Verdict.EXISTS_BY_THEOREM, RULE_TREE, ev)
        ns = ExistenceCertificate(Target.NODAL_GROUND_STATE, Verdict.NONEXISTENT_TOPOLOGICAL, RULE_TREE_NODAL,
                                  dict(ev))
    elif not topo.has_half_line:
        gs = ExistenceCertificate(Target.GROUND_STATE, Verdict.EXISTS_BY_THEOREM, RULE_COMPACT, dict(base))
        ns = ExistenceCertificate(Target.NODAL_GROUND_STATE, Verdict.EXISTS_BY_THEOREM, RULE_COMPACT, dict(base))
    else:
        if nF == 0:
            exception = g.meta.get("family") in ("LINE", "TOWER_OF_BUBBLES") or _is_line_like(g)
            if exception:
                gs = ExistenceCertificate(Target.GROUND_STATE, Verdict.INCONCLUSIVE, RULE_LINE_EXCEPTION,
                                          dict(base))
            else:
                gs = ExistenceCertificate(Target.GROUND_STATE, Verdict.NONEXISTENT_TOPOLOGICAL,
                                          RULE_NO_BARE_EDGE, dict(base))
        if nF <= 1:
            ns = ExistenceCertificate(Target.NODAL_GROUND_STATE, Verdict.NONEXISTENT_TOPOLOGICAL,
                                      RULE_AT_MOST_ONE_BARE_EDGE, dict(base))
        if levels is not None and topo.diam_B is not None:
            params = ProblemParams(levels.lam, levels.p)
            if params.lam > 0:
                thr = diameter_threshold(params)
                ev = dict(base, diam_threshold=thr,
                          chain_value=diameter_chain_value(params, topo.diam_B))
                if topo.diam_B < thr:
                    if gs is None and g.dirichlet:
                        gs = ExistenceCertificate(Target.GROUND_STATE, Verdict.NONEXISTENT_METRIC,
                                                  RULE_SMALL_CORE, dict(ev))
                    if ns is None:
                        ns = ExistenceCertificate(Target.NODAL_GROUND_STATE, Verdict.NONEXISTENT_METRIC,
                                                  RULE_SMALL_CORE, dict(ev))
                base = ev

    if levels is not None and levels.lam > 0:
        s = s_level(levels.lam, levels.p)
        if gs is None:
            gs = _gap_certificate(Target.GROUND_STATE, levels.inf_N, s, levels.err_N, base)
        if ns is None and levels.inf_M is not None and levels.inf_N is not None:
            ns = _gap_certificate(Target.NODAL_GROUND_STATE, levels.inf_M, s + levels.inf_N,
                                  levels.err_M + levels.err_N, base)
    if gs is None:
        gs = ExistenceCertificate(Target.GROUND_STATE, Verdict.INCONCLUSIVE, RULE_NONE, dict(base))
    if ns is None:
        ns = ExistenceCertificate(Target.NODAL_GROUND_STATE, Verdict.INCONCLUSIVE, RULE_NONE, dict(base))
    return [gs, ns]


def _gap_certificate(target: Target, level: Optional[float], threshold: float, err: float,
                     base: dict) -> ExistenceCertificate:
    if level is None:
        return ExistenceCertificate(target, Verdict.INCONCLUSIVE, RULE_NONE, dict(base))
    gap = threshold - level
    ev = dict(base, level=level, threshold=threshold, gap=gap, error_estimate=err)
    if gap > err:
        return ExistenceCertificate(target, Verdict.EXISTS_BY_LEVEL_GAP, RULE_LEVEL_GAP, ev)
    return ExistenceCertificate(target, Verdict.INCONCLUSIVE, RULE_NONE, ev)
