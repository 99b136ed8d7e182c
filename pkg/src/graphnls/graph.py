"""Immutable metric graphs, family constructors and the JSON graph format."""
from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

HALF_LINE = math.inf
MIN_LENGTH = 1e-9


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class Vertex:
    id: int
    infinity: bool = False
    dirichlet: bool = False


@dataclass(frozen=True)
class Edge:
    id: int
    a: int
    b: int
    length: float

    @property
    def is_half_line(self) -> bool:
        return self.length == HALF_LINE

    @property
    def is_loop(self) -> bool:
        return self.a == self.b

    def other(self, v: int) -> int:
        return self.b if v == self.a else self.a


@dataclass(frozen=True)
class MetricGraph:
    """Vertices and edges with dense ids; `meta` carries builder provenance only.

    Construction validates every invariant unless `check=False` (used only to
    build deliberately broken fixtures).
    """

    vertices: tuple[Vertex, ...]
    edges: tuple[Edge, ...]
    meta: Mapping[str, Any] = field(default_factory=dict, compare=False, repr=False)
    check: bool = field(default=True, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "vertices", tuple(self.vertices))
        object.__setattr__(self, "edges", tuple(self.edges))
        object.__setattr__(self, "meta", dict(self.meta))
        if self.check:
            validate(self)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def ell_min(self) -> float:
        finite = [e.length for e in self.edges if not e.is_half_line]
        return min(finite) if finite else math.inf

    @property
    def dirichlet(self) -> tuple[int, ...]:
        return tuple(v.id for v in self.vertices if v.dirichlet)

    @property
    def at_infinity(self) -> tuple[int, ...]:
        return tuple(v.id for v in self.vertices if v.infinity)

    @property
    def half_lines(self) -> tuple[int, ...]:
        return tuple(e.id for e in self.edges if e.is_half_line)

    @property
    def finite_edges(self) -> tuple[int, ...]:
        return tuple(e.id for e in self.edges if not e.is_half_line)

    def incident(self, v: int) -> list[int]:
        return [e.id for e in self.edges if e.a == v or e.b == v]

    def total_finite_length(self) -> float:
        return math.fsum(e.length for e in self.edges if not e.is_half_line)

    @property
    def family(self) -> str | None:
        return self.meta.get("family")


def degree(g: MetricGraph, v: int) -> int:
    if not 0 <= v < g.n_vertices:
        raise GraphError(f"unknown vertex id {v}")
    return sum((e.a == v) + (e.b == v) for e in g.edges)


def components(n_vertices: int, edges: Iterable[Edge]) -> list[list[int]]:
    adj: list[list[int]] = [[] for _ in range(n_vertices)]
    for e in edges:
        adj[e.a].append(e.b)
        adj[e.b].append(e.a)
    seen = [False] * n_vertices
    comps = []
    for s in range(n_vertices):
        if seen[s]:
            continue
        seen[s] = True
        comp, queue = [], deque([s])
        while queue:
            v = queue.popleft()
            comp.append(v)
            for w in adj[v]:
                if not seen[w]:
                    seen[w] = True
                    queue.append(w)
        comps.append(sorted(comp))
    return comps


def validate(g: MetricGraph) -> None:
    """Raise GraphError naming the first violated invariant."""
    for k, v in enumerate(g.vertices):
        if v.id != k:
            raise GraphError(f"vertex ids must be dense 0..{g.n_vertices - 1}; position {k} has id {v.id}")
        if v.infinity and v.dirichlet:
            raise GraphError(f"vertex {v.id}: a vertex at infinity cannot be Dirichlet")
    if g.n_vertices == 0:
        raise GraphError("graph has no vertices")
    for k, e in enumerate(g.edges):
        if e.id != k:
            raise GraphError(f"edge ids must be dense 0..{g.n_edges - 1}; position {k} has id {e.id}")
        for end in (e.a, e.b):
            if not 0 <= end < g.n_vertices:
                raise GraphError(f"edge {e.id}: unknown endpoint {end}")
        if e.is_half_line:
            if e.is_loop:
                raise GraphError(f"edge {e.id}: a half-line cannot be a loop")
            if not g.vertices[e.b].infinity:
                raise GraphError(f"edge {e.id}: half-line must end at a vertex at infinity")
            if g.vertices[e.a].infinity:
                raise GraphError(f"edge {e.id}: half-line must start at a finite vertex")
        else:
            if not (isinstance(e.length, (int, float)) and math.isfinite(e.length)):
                raise GraphError(f"edge {e.id}: invalid length {e.length!r}")
            if e.length < MIN_LENGTH:
                raise GraphError(f"edge {e.id}: length {e.length!r} is below the minimum {MIN_LENGTH}")
            if g.vertices[e.a].infinity or g.vertices[e.b].infinity:
                raise GraphError(f"edge {e.id}: finite edge touches a vertex at infinity")
    deg = [0] * g.n_vertices
    for e in g.edges:
        deg[e.a] += 1
        deg[e.b] += 1
    for v in g.vertices:
        if v.infinity and deg[v.id] != 1:
            raise GraphError(f"vertex {v.id}: vertex at infinity must have degree 1, has {deg[v.id]}")
        if v.dirichlet and deg[v.id] != 1:
            raise GraphError(f"vertex {v.id}: Dirichlet vertex must have degree 1, has {deg[v.id]}")
    if len(components(g.n_vertices, g.edges)) != 1:
        raise GraphError("graph is not connected")


def make_graph(vertices: Sequence[tuple[bool, bool]], edges: Sequence[tuple[int, int, float]],
               meta: Mapping[str, Any] | None = None) -> MetricGraph:
    """Build from (infinity, dirichlet) flags and (a, b, length) triples, ids by position."""
    vs = tuple(Vertex(k, bool(inf), bool(d)) for k, (inf, d) in enumerate(vertices))
    es = tuple(Edge(k, int(a), int(b), float(length)) for k, (a, b, length) in enumerate(edges))
    return MetricGraph(vs, es, meta or {})


class _Builder:
    def __init__(self):
        self.vertices: list[tuple[bool, bool]] = []
        self.edges: list[tuple[int, int, float]] = []

    def vertex(self, dirichlet=False) -> int:
        self.vertices.append((False, bool(dirichlet)))
        return len(self.vertices) - 1

    def edge(self, a: int, b: int, length: float) -> int:
        _positive(length, "edge length")
        self.edges.append((a, b, float(length)))
        return len(self.edges) - 1

    def half_line(self, a: int) -> int:
        self.vertices.append((True, False))
        self.edges.append((a, len(self.vertices) - 1, HALF_LINE))
        return len(self.edges) - 1

    def build(self, **meta) -> MetricGraph:
        return make_graph(self.vertices, self.edges, meta)


def _positive(x: float, what: str) -> None:
    if not (math.isfinite(x) and x >= MIN_LENGTH):
        raise GraphError(f"{what} must be a positive length >= {MIN_LENGTH}, got {x!r}")


# ---------------------------------------------------------------- families

def interval(length: float = 1.0, dirichlet_a: bool = False, dirichlet_b: bool = False) -> MetricGraph:
    b = _Builder()
    v0, v1 = b.vertex(dirichlet_a), b.vertex(dirichlet_b)
    b.edge(v0, v1, length)
    return b.build(family="INTERVAL")


def half_line(dirichlet: bool = False) -> MetricGraph:
    b = _Builder()
    b.half_line(b.vertex(dirichlet))
    return b.build(family="HALFLINE")


def line() -> MetricGraph:
    b = _Builder()
    v = b.vertex()
    b.half_line(v)
    b.half_line(v)
    return b.build(family="LINE")


def line_with_pendant(pendant: float = 1.0, dirichlet_tip: bool = False) -> MetricGraph:
    b = _Builder()
    v = b.vertex()
    b.half_line(v)
    b.half_line(v)
    b.edge(v, b.vertex(dirichlet_tip), pendant)
    return b.build(family="LINE_WITH_PENDANT")


def signpost(pendant: float = 1.0, loop: float = 2.0) -> MetricGraph:
    b = _Builder()
    v = b.vertex()
    b.half_line(v)
    b.half_line(v)
    w = b.vertex()
    b.edge(v, w, pendant)
    b.edge(w, w, loop)
    return b.build(family="SIGNPOST")


def tadpole(circle: float = 2.0) -> MetricGraph:
    b = _Builder()
    v = b.vertex()
    b.edge(v, v, circle)
    b.half_line(v)
    return b.build(family="TADPOLE")


def fork(n: int = 3, lengths: float | Sequence[float] = 1.0, dirichlet_tips: bool = False) -> MetricGraph:
    """One half-line and n pendants glued at a single vertex."""
    if n < 1:
        raise GraphError("fork needs at least one pendant")
    lens = [float(lengths)] * n if np.isscalar(lengths) else [float(x) for x in lengths]
    if len(lens) != n:
        raise GraphError("fork: number of lengths must match n")
    b = _Builder()
    v = b.vertex()
    b.half_line(v)
    for ln in lens:
        b.edge(v, b.vertex(dirichlet_tips), ln)
    return b.build(family="FORK")


def tower_of_bubbles(lengths: Sequence[float] = (1.0, 1.0, 1.0)) -> MetricGraph:
    """A line with a chain of tangent circles; circle i has two arcs of length lengths[i]."""
    if len(lengths) < 1:
        raise GraphError("tower needs at least one circle")
    b = _Builder()
    v = b.vertex()
    b.half_line(v)
    b.half_line(v)
    for k, ln in enumerate(lengths):
        if k == len(lengths) - 1:
            b.edge(v, v, 2.0 * ln)
        else:
            w = b.vertex()
            b.edge(v, w, ln)
            b.edge(v, w, ln)
            v = w
    return b.build(family="TOWER_OF_BUBBLES")


def gamma_nl(n: int = 1, L: float = 1.0, pendants: Sequence[float] = (1.0, 1.0)) -> MetricGraph:
    """Vertices v1=0, v2=1 joined by n parallel edges; each carries a pendant and a half-line."""
    if n < 1:
        raise GraphError("need at least one connecting edge")
    a1, a2 = pendants
    b = _Builder()
    v1, v2 = b.vertex(), b.vertex()
    connecting = [b.edge(v1, v2, L) for _ in range(n)]
    t1, t2 = b.vertex(), b.vertex()
    p1 = b.edge(v1, t1, a1)
    p2 = b.edge(v2, t2, a2)
    h1 = b.half_line(v1)
    h2 = b.half_line(v2)
    return b.build(family="GAMMA_NL", v1=v1, v2=v2, connecting=connecting, pendants=[p1, p2],
                   half_lines=[h1, h2])


def regular_tree(degree: int = 3, depth: int = 4, length: float = 1.0, rooted: bool = False,
                 root_dirichlet: bool = False, truncation_dirichlet: bool = True) -> MetricGraph:
    """Regular tree cut at `depth` edges from the centre (or root).

    Unrooted: every internal vertex has `degree` neighbours.  Rooted: the root
    has degree 1 and every other internal vertex has `degree` neighbours.
    The leaves created by the cut are Dirichlet unless truncation_dirichlet is off.
    """
    if degree < 3:
        raise GraphError("tree degree must be at least 3")
    if depth < 1:
        raise GraphError("tree depth must be at least 1")
    if root_dirichlet and not rooted:
        raise GraphError("only a rooted tree can have a Dirichlet root")
    b = _Builder()
    root = b.vertex(root_dirichlet)
    frontier = [root]
    leaves: list[int] = []
    for level in range(depth):
        last = level == depth - 1
        nxt = []
        for v in frontier:
            if level == 0:
                kids = 1 if rooted else degree
            else:
                kids = degree - 1
            for _ in range(kids):
                w = b.vertex(truncation_dirichlet and last)
                b.edge(v, w, length)
                nxt.append(w)
        frontier = nxt
    leaves = frontier
    return b.build(family="REGULAR_TREE", degree=degree, depth=depth, rooted=rooted, root=root,
                   root_dirichlet=root_dirichlet, truncation=leaves if truncation_dirichlet else [])


def periodic_chain(cells: int = 8, bar: float = 1.0, bubble: float = 1.0, parallel: int = 2,
                   truncation_dirichlet: bool = True) -> MetricGraph:
    """K copies of a cell (a bar followed by `parallel` edges between two vertices), closed by a bar.

    Both terminal vertices are Dirichlet cuts by default, approximating the
    infinite periodic graph from inside.
    """
    if cells < 1:
        raise GraphError("need at least one periodic cell")
    if parallel < 1:
        raise GraphError("need at least one edge per bubble")
    b = _Builder()
    v = b.vertex(truncation_dirichlet)
    first = v
    for _ in range(cells):
        w = b.vertex()
        b.edge(v, w, bar)
        v = b.vertex()
        for _ in range(parallel):
            b.edge(w, v, bubble)
    t = b.vertex(truncation_dirichlet)
    b.edge(v, t, bar)
    return b.build(family="PERIODIC_CHAIN", cells=cells, bar=bar, bubble=bubble, parallel=parallel,
                   truncation=[first, t] if truncation_dirichlet else [])


def k4_core_two_tails(length: float = 1.0) -> MetricGraph:
    """Two half-lines glued to a complete graph on four vertices, one core edge subdivided.

    No single edge removal can isolate a piece without a half-line, so #F = 0.
    """
    b = _Builder()
    a, c, d, e = (b.vertex() for _ in range(4))
    m = b.vertex()
    b.edge(a, m, 0.7 * length)
    b.edge(m, c, 0.3 * length)
    for x, y in ((c, d), (c, e), (a, d), (a, e), (d, e)):
        b.edge(x, y, length)
    b.half_line(a)
    b.half_line(c)
    return b.build(family="K4_CORE")


def stacked_bubbles(bar1: float = 1.0, circle1: float = 2.0, bar2: float = 1.0, circle2: float = 2.0) -> MetricGraph:
    """A line, a bar up to a circle, a second bar up to a second circle."""
    b = _Builder()
    v0 = b.vertex()
    b.half_line(v0)
    b.half_line(v0)
    v1 = b.vertex()
    b.edge(v0, v1, bar1)
    v2 = b.vertex()
    b.edge(v1, v2, circle1 / 2)
    b.edge(v1, v2, circle1 / 2)
    v3 = b.vertex()
    b.edge(v2, v3, bar2)
    b.edge(v3, v3, circle2)
    return b.build(family="STACKED_BUBBLES")


def growing_pendants(k_max: int = 12, spacing: float = 1.0) -> MetricGraph:
    """A line with a pendant of length k at the k-th of k_max equally spaced points."""
    if k_max < 1:
        raise GraphError("k_max must be at least 1")
    b = _Builder()
    prev = None
    first = None
    for k in range(1, k_max + 1):
        v = b.vertex()
        if prev is None:
            first = v
        else:
            b.edge(prev, v, spacing)
        b.edge(v, b.vertex(), float(k))
        prev = v
    b.half_line(first)
    b.half_line(prev)
    return b.build(family="GROWING_PENDANTS", k_max=k_max)


def glue(g1: MetricGraph, h1: int, g2: MetricGraph, h2: int, L: float, bridge: float = 1.0) -> MetricGraph:
    """Join g1 and g2 by an edge of length `bridge` between the points at distance L on half-lines h1, h2."""
    _positive(L, "gluing distance")
    _positive(bridge, "bridge length")
    b = _Builder()
    anchors = []
    for g, h in ((g1, h1), (g2, h2)):
        if not g.edges[h].is_half_line:
            raise GraphError(f"edge {h} is not a half-line")
        off = len(b.vertices)
        for v in g.vertices:
            b.vertices.append((v.infinity, v.dirichlet))
        w = None
        for e in g.edges:
            if e.id == h:
                w = b.vertex()
                b.edge(e.a + off, w, L)
                b.edges.append((w, e.b + off, HALF_LINE))
            else:
                b.edges.append((e.a + off, e.b + off, e.length))
        anchors.append(w)
    bridge_id = b.edge(anchors[0], anchors[1], bridge)
    return b.build(family="GLUED", L=L, bridge=bridge_id, anchors=anchors,
                   left_vertices=list(range(g1.n_vertices)))


class Family(str, Enum):
    LINE_WITH_PENDANT = "LINE_WITH_PENDANT"
    SIGNPOST = "SIGNPOST"
    TADPOLE = "TADPOLE"
    FORK = "FORK"
    TOWER_OF_BUBBLES = "TOWER_OF_BUBBLES"
    GAMMA_NL = "GAMMA_NL"
    REGULAR_TREE = "REGULAR_TREE"
    PERIODIC_CHAIN = "PERIODIC_CHAIN"
    INTERVAL = "INTERVAL"
    HALFLINE = "HALFLINE"
    LINE = "LINE"


_BUILDERS = {
    Family.LINE_WITH_PENDANT: line_with_pendant,
    Family.SIGNPOST: signpost,
    Family.TADPOLE: tadpole,
    Family.FORK: fork,
    Family.TOWER_OF_BUBBLES: tower_of_bubbles,
    Family.GAMMA_NL: gamma_nl,
    Family.REGULAR_TREE: regular_tree,
    Family.PERIODIC_CHAIN: periodic_chain,
    Family.INTERVAL: interval,
    Family.HALFLINE: half_line,
    Family.LINE: line,
}


@dataclass(frozen=True)
class FamilySpec:
    family: Family
    params: Mapping[str, Any] = field(default_factory=dict)


def build_graph(spec: FamilySpec) -> MetricGraph:
    fam = Family(spec.family)
    try:
        return _BUILDERS[fam](**dict(spec.params))
    except TypeError as exc:
        raise GraphError(f"{fam.value}: bad parameters ({exc})") from None


# ---------------------------------------------------------------- edits

def subdivide_edge(g: MetricGraph, e: int, s: float) -> MetricGraph:
    """Insert a degree-2 vertex at arc position s (from endpoint a) of finite edge e."""
    if not 0 <= e < g.n_edges:
        raise GraphError(f"unknown edge id {e}")
    edge = g.edges[e]
    if edge.is_half_line:
        raise GraphError(f"edge {e} is a half-line and cannot be subdivided")
    if not (0 < s < edge.length):
        raise GraphError(f"edge {e}: split position {s} outside (0, {edge.length})")
    if s < MIN_LENGTH or edge.length - s < MIN_LENGTH:
        raise GraphError(f"edge {e}: split would create an edge shorter than {MIN_LENGTH}")
    w = g.n_vertices
    vs = g.vertices + (Vertex(w),)
    es = list(g.edges)
    es[e] = Edge(e, edge.a, w, float(s))
    es.append(Edge(g.n_edges, w, edge.b, edge.length - s))
    return MetricGraph(vs, tuple(es), {})


def attach_half_line(g: MetricGraph, v: int) -> MetricGraph:
    if not 0 <= v < g.n_vertices:
        raise GraphError(f"unknown vertex id {v}")
    if g.vertices[v].infinity:
        raise GraphError(f"vertex {v} is at infinity")
    if g.vertices[v].dirichlet:
        raise GraphError(f"vertex {v} is Dirichlet")
    w = g.n_vertices
    vs = g.vertices + (Vertex(w, infinity=True),)
    es = g.edges + (Edge(g.n_edges, v, w, HALF_LINE),)
    return MetricGraph(vs, es, {})


def random_graph(rng: np.random.Generator, max_edges: int = 12, min_half_lines: int = 0,
                 max_half_lines: int = 3, p_dirichlet: float = 0.3,
                 length_range: tuple[float, float] = (0.5, 3.0)) -> MetricGraph:
    """Random connected multigraph with loops, parallel edges, pendants and half-lines."""
    while True:
        n_half = int(rng.integers(min_half_lines, max_half_lines + 1))
        budget = max_edges - n_half
        if budget < 1:
            continue
        n_fin = int(rng.integers(1, min(6, budget + 1) + 1))
        pairs = []
        for v in range(1, n_fin):
            pairs.append((int(rng.integers(0, v)), v))
        extra = int(rng.integers(0, budget - len(pairs) + 1)) if budget > len(pairs) else 0
        for _ in range(extra):
            pairs.append((int(rng.integers(0, n_fin)), int(rng.integers(0, n_fin))))
        if not pairs and n_half == 0:
            continue
        lo, hi = length_range
        b = _Builder()
        for _ in range(n_fin):
            b.vertex()
        for a, c in pairs:
            b.edge(a, c, float(rng.uniform(lo, hi)))
        for _ in range(n_half):
            b.half_line(int(rng.integers(0, n_fin)))
        deg = [0] * len(b.vertices)
        for a, c, _ in b.edges:
            deg[a] += 1
            deg[c] += 1
        verts = list(b.vertices)
        for v in range(n_fin):
            if deg[v] == 1 and rng.random() < p_dirichlet:
                verts[v] = (False, True)
        b.vertices = verts
        try:
            return b.build(family="RANDOM")
        except GraphError:
            continue


# ---------------------------------------------------------------- JSON

def to_json_dict(g: MetricGraph) -> dict:
    out = {
        "vertices": [{"id": v.id, "infinity": v.infinity, "dirichlet": v.dirichlet} for v in g.vertices],
        "edges": [{"id": e.id, "from": e.a, "to": e.b,
                   "length": "halfline" if e.is_half_line else e.length} for e in g.edges],
    }
    if g.meta:
        out["meta"] = g.meta
    return out


def dumps(g: MetricGraph) -> str:
    return json.dumps(to_json_dict(g), indent=2, sort_keys=False) + "\n"


def _field(obj: Mapping, key: str, where: str, kinds) -> Any:
    if key not in obj:
        raise GraphError(f"{where}: missing field '{key}'")
    val = obj[key]
    if isinstance(val, bool) and bool not in kinds:
        raise GraphError(f"{where}: field '{key}' has wrong type")
    if not isinstance(val, kinds):
        raise GraphError(f"{where}: field '{key}' has wrong type {type(val).__name__}")
    return val


def from_json_dict(doc: Mapping) -> MetricGraph:
    if not isinstance(doc, Mapping):
        raise GraphError("graph document must be a JSON object")
    verts = _field(doc, "vertices", "document", (list,))
    edges = _field(doc, "edges", "document", (list,))
    vs = []
    for k, v in enumerate(verts):
        where = f"vertices[{k}]"
        if not isinstance(v, Mapping):
            raise GraphError(f"{where}: must be an object")
        vs.append(Vertex(_field(v, "id", where, (int,)), bool(v.get("infinity", False)),
                         bool(v.get("dirichlet", False))))
    es = []
    for k, e in enumerate(edges):
        if not isinstance(e, Mapping):
            raise GraphError(f"edges[{k}]: must be an object")
        eid = _field(e, "id", f"edges[{k}]", (int,))
        where = f"edges[{k}] (edge id {eid})"
        a = _field(e, "from", where, (int,))
        b = _field(e, "to", where, (int,))
        length = _field(e, "length", where, (int, float, str))
        if isinstance(length, str):
            if length != "halfline":
                raise GraphError(f"{where}: length must be a number or \"halfline\"")
            length = HALF_LINE
        elif not (math.isfinite(length) and length >= MIN_LENGTH):
            raise GraphError(f"edge {eid}: length {length!r} must be positive (>= {MIN_LENGTH})")
        es.append(Edge(eid, a, b, float(length)))
    return MetricGraph(tuple(vs), tuple(es), doc.get("meta", {}) or {})


def loads(text: str) -> MetricGraph:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GraphError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return from_json_dict(doc)


def save_graph(g: MetricGraph, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(g))


def load_graph(path) -> MetricGraph:
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())


def relabel_meta(g: MetricGraph, **meta) -> MetricGraph:
    return replace(g, meta={**g.meta, **meta})
