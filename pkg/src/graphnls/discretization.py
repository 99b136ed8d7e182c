"""Piecewise-linear finite elements on metric graphs with truncated half-lines."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import dijkstra

from .graph import Edge, MetricGraph
from .topology import is_connected


class MeshError(ValueError):
    pass


def default_trunc(lam: float) -> float:
    return max(40.0, 12.0 / math.sqrt(lam)) if lam > 0 else 40.0


@dataclass(frozen=True)
class MeshParams:
    """Mesh controls.  With lumped_mass the L2 mass matrix is diagonal (row sums of
    the element mass), so the discrete equation is the three-point scheme."""

    h_target: float = 0.05
    trunc_length: float = 40.0
    lumped_mass: bool = True

    def __post_init__(self):
        if not self.h_target > 0:
            raise MeshError("h_target must be positive")
        if not self.trunc_length > 0:
            raise MeshError("trunc_length must be positive")
        if self.trunc_length < 10 * self.h_target:
            raise MeshError(f"trunc_length {self.trunc_length} must be at least 10*h_target")

    def refined(self) -> "MeshParams":
        return MeshParams(self.h_target / 2, self.trunc_length, self.lumped_mass)


class DiscreteSpace:
    """Nodes, free-DOF map and assembled matrices for one graph and one mesh.

    Full node numbering: finite vertices first (vertex id order), then the
    interior nodes of each edge, then one cut node per half-line.  Dirichlet
    vertices and cut nodes are eliminated from the free DOFs.
    """

    def __init__(self, g: MetricGraph, mp: MeshParams):
        if not is_connected(g):
            raise MeshError("graph is not connected")
        if mp.h_target > g.ell_min / 2:
            raise MeshError(f"mesh too coarse: h_target {mp.h_target} > ell_min/2 = {g.ell_min / 2}")
        self.graph = g
        self.mesh = mp
        nv = g.n_vertices
        vnode = np.full(nv, -1)
        k = 0
        for v in g.vertices:
            if not v.infinity:
                vnode[v.id] = k
                k += 1
        node_edge = [-1] * k
        node_pos = [0.0] * k
        node_vertex = list(np.flatnonzero(vnode >= 0))
        chains: list[np.ndarray] = []
        spacing = np.zeros(g.n_edges)
        lengths = np.zeros(g.n_edges)
        cut_edges = []
        for e in g.edges:
            ln = mp.trunc_length if e.is_half_line else e.length
            n = max(2, int(math.ceil(ln / mp.h_target - 1e-9)))
            h = ln / n
            spacing[e.id] = h
            lengths[e.id] = ln
            interior = np.arange(k, k + n - 1)
            k += n - 1
            node_edge += [e.id] * (n - 1)
            node_pos += list(h * np.arange(1, n))
            node_vertex += [-1] * (n - 1)
            end_b = -1 if e.is_half_line else vnode[e.b]
            chains.append(np.concatenate([[vnode[e.a]], interior, [end_b]]).astype(int))
            if e.is_half_line:
                cut_edges.append(e.id)
        cut_nodes = []
        for eid in cut_edges:
            chains[eid][-1] = k
            node_edge.append(eid)
            node_pos.append(lengths[eid])
            node_vertex.append(-1)
            cut_nodes.append(k)
            k += 1
        self.n_full = k
        self.vertex_node = vnode
        self.node_edge = np.array(node_edge, dtype=int)
        self.node_pos = np.array(node_pos, dtype=float)
        self.node_vertex = np.array(node_vertex, dtype=int)
        self.chains = chains
        self.spacing = spacing
        self.edge_lengths = lengths
        self.cut_nodes = np.array(cut_nodes, dtype=int)

        fixed = np.zeros(k, dtype=bool)
        fixed[self.cut_nodes] = True
        for v in g.vertices:
            if v.dirichlet:
                fixed[vnode[v.id]] = True
        self.fixed = fixed
        self.free = np.flatnonzero(~fixed)
        self.full_to_free = np.full(k, -1)
        self.full_to_free[self.free] = np.arange(len(self.free))

        I = np.concatenate([c[:-1] for c in chains])
        J = np.concatenate([c[1:] for c in chains])
        H = np.concatenate([np.full(len(c) - 1, spacing[e]) for e, c in enumerate(chains)])
        self.elements = (I, J, H)
        rows = np.concatenate([I, J, I, J])
        cols = np.concatenate([I, J, J, I])
        kv = np.concatenate([1 / H, 1 / H, -1 / H, -1 / H])
        mv = np.concatenate([H / 3, H / 3, H / 6, H / 6])
        K = sp.coo_matrix((kv, (rows, cols)), shape=(k, k)).tocsr()
        Mc = sp.coo_matrix((mv, (rows, cols)), shape=(k, k)).tocsr()
        K = ((K + K.T) * 0.5).tocsr()
        Mc = ((Mc + Mc.T) * 0.5).tocsr()
        self.w_full = np.bincount(I, H / 2, minlength=k) + np.bincount(J, H / 2, minlength=k)
        M = sp.diags(self.w_full).tocsr() if mp.lumped_mass else Mc
        f = self.free
        self.K = K[f][:, f].tocsr()
        self.M = M[f][:, f].tocsr()
        self.w = self.w_full[f]

        # stencils for the strong-form residual
        li, ci, ri, hi = [], [], [], []
        for e, c in enumerate(chains):
            if len(c) > 2:
                li.append(c[:-2])
                ci.append(c[1:-1])
                ri.append(c[2:])
                hi.append(np.full(len(c) - 2, spacing[e]))
        self._interior = tuple(np.concatenate(x) if x else np.zeros(0, int) for x in (li, ci, ri, hi))
        ev, en, eh = [], [], []
        for e, c in enumerate(chains):
            ev += [c[0], c[-1]]
            en += [c[1], c[-2]]
            eh += [spacing[e], spacing[e]]
        ev, en, eh = np.array(ev), np.array(en), np.array(eh)
        keep = (self.node_vertex[ev] >= 0) & ~fixed[ev]
        self._ends = (ev[keep], en[keep], eh[keep])
        self.free_vertex_nodes = np.array(sorted(set(ev[keep].tolist())), dtype=int)

    # ------------------------------------------------------------ helpers
    @property
    def n_free(self) -> int:
        return len(self.free)

    @property
    def total_length(self) -> float:
        return float(math.fsum(self.edge_lengths))

    def full(self, u) -> np.ndarray:
        vals = values_of(self, u)
        out = np.zeros(self.n_full)
        out[self.free] = vals
        return out

    def restrict(self, u_full: np.ndarray) -> np.ndarray:
        return np.asarray(u_full, float)[self.free]

    def field(self, values) -> "DiscreteField":
        return DiscreteField(self, np.asarray(values, dtype=float))

    def evaluate(self, fn: Callable[[Edge, np.ndarray], np.ndarray]) -> "DiscreteField":
        """Sample fn(edge, arc_positions) at every node; eliminated nodes get 0."""
        out = np.zeros(self.n_full)
        for e in self.graph.edges:
            c = self.chains[e.id]
            pos = self.spacing[e.id] * np.arange(len(c))
            out[c] = fn(e, pos)
        out[self.fixed] = 0.0
        return self.field(out[self.free])

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        I, J, H = self.elements
        return sp.coo_matrix((np.concatenate([H, H]), (np.concatenate([I, J]), np.concatenate([J, I]))),
                             shape=(self.n_full, self.n_full)).tocsr()

    def distance_from(self, nodes: Sequence[int]) -> np.ndarray:
        """Arc distance on the meshed graph from the nearest of the given full nodes."""
        nodes = np.asarray(nodes, dtype=int)
        if nodes.size == 0:
            return np.full(self.n_full, np.inf)
        d = dijkstra(self.adjacency, directed=False, indices=nodes, min_only=True)
        return np.asarray(d)

    @cached_property
    def truncation_nodes(self) -> np.ndarray:
        """Half-line cuts plus vertices a builder marked as truncation boundary."""
        extra = [self.vertex_node[v] for v in self.graph.meta.get("truncation", [])]
        return np.unique(np.concatenate([self.cut_nodes, np.array(extra, dtype=int)])).astype(int)

    @cached_property
    def cut_distance(self) -> np.ndarray:
        return self.distance_from(self.truncation_nodes)

    def node_location(self, i: int) -> tuple[int, float]:
        """(edge id, arc position from endpoint a) of full node i; vertices report their first edge."""
        if self.node_edge[i] >= 0:
            return int(self.node_edge[i]), float(self.node_pos[i])
        v = int(self.node_vertex[i])
        for e in self.graph.edges:
            if e.a == v:
                return e.id, 0.0
            if e.b == v:
                return e.id, float(self.edge_lengths[e.id])
        return -1, 0.0

    def edge_values(self, u, e: int) -> tuple[np.ndarray, np.ndarray]:
        """Arc positions and nodal values along edge e."""
        uf = self.full(u)
        c = self.chains[e]
        return self.spacing[e] * np.arange(len(c)), uf[c]

    def transfer(self, u, target: "DiscreteSpace") -> "DiscreteField":
        """Piecewise-linear interpolation of u onto another mesh of the same graph."""
        uf = self.full(u)
        out = np.zeros(target.n_full)
        for e in self.graph.edges:
            src = self.chains[e.id]
            xs = self.spacing[e.id] * np.arange(len(src))
            dst = target.chains[e.id]
            xt = target.spacing[e.id] * np.arange(len(dst))
            out[dst] = np.interp(xt, xs, uf[src], right=0.0)
        out[target.fixed] = 0.0
        return target.field(out[target.free])


def assemble(g: MetricGraph, mp: MeshParams) -> DiscreteSpace:
    return DiscreteSpace(g, mp)


@dataclass(frozen=True, eq=False)
class DiscreteField:
    space: DiscreteSpace
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != (self.space.n_free,):
            raise ValueError(f"field has {self.values.shape} values, space has {self.space.n_free} free DOFs")

    def full(self) -> np.ndarray:
        return self.space.full(self.values)


def values_of(space: DiscreteSpace, u) -> np.ndarray:
    if isinstance(u, DiscreteField):
        if u.space is not space:
            raise ValueError("field belongs to a different space")
        return u.values
    vals = np.asarray(u, dtype=float)
    if vals.shape != (space.n_free,):
        raise ValueError(f"field has {vals.shape} values, space has {space.n_free} free DOFs")
    return vals


def lp_p(space: DiscreteSpace, u: np.ndarray, p: float) -> float:
    return float(np.dot(space.w, np.abs(u) ** p))


def norms(space: DiscreteSpace, u, p: float) -> tuple[float, float, float]:
    """(||u||_2^2, ||u'||_2^2, ||u||_p^p) with the lumped rule for the last."""
    if not p > 2:
        raise ValueError("p must exceed 2")
    v = values_of(space, u)
    return float(v @ (space.M @ v)), float(v @ (space.K @ v)), lp_p(space, v, p)


def pde_residual(space: DiscreteSpace, u, lam: float, p: float,
                 mask: Optional[np.ndarray] = None) -> tuple[float, float]:
    """Strong-form residuals of u'' + |u|^{p-2}u - lam*u at interior nodes and of the vertex flux balance.

    Outgoing derivatives at a vertex use the second-order one-sided formula
    (u_1 - u_0)/h - (h/2) u''(0), with u''(0) taken from the equation.
    `mask` (over full nodes) restricts where the residual is evaluated.
    """
    uf = space.full(u)
    nl = np.abs(uf) ** (p - 2) * uf
    L, C, R, H = space._interior
    r_int = (uf[L] - 2 * uf[C] + uf[R]) / H**2 + nl[C] - lam * uf[C]
    ev, en, eh = space._ends
    upp = lam * uf - nl
    flux = (uf[en] - uf[ev]) / eh - 0.5 * eh * upp[ev]
    r_k = np.zeros(space.n_full)
    np.add.at(r_k, ev, flux)
    r_k = r_k[space.free_vertex_nodes]
    if mask is not None:
        r_int = r_int[mask[C]]
        r_k = r_k[mask[space.free_vertex_nodes]]
    return (float(np.max(np.abs(r_int))) if r_int.size else 0.0,
            float(np.max(np.abs(r_k))) if r_k.size else 0.0)
