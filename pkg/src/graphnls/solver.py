"""Action, Nehari projection, ground and nodal ground state minimization, spectral bottom."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from .analytic import ProblemParams, SolitonOracle
from .discretization import (DiscreteField, DiscreteSpace, MeshParams, assemble, lp_p, norms,
                             pde_residual, values_of)
from .graph import MetricGraph

COLLAPSE_HINT = "inf_M likely = 2*inf_N"


class SolverError(ValueError):
    pass


@dataclass
class SolverConfig:
    restarts: Optional[int] = None      # None: one start per edge, capped at 32
    max_iter: int = 5000
    seed: int = 0
    tol_decrease: float = 1e-10
    window: int = 20
    tol_pde_factor: float = 1e-5
    phase_floor: float = 1e-6
    d_esc: float = 5.0
    richardson: bool = False
    lam_margin: float = 1e-8
    zero_tol: float = 1e-12
    noise: float = 1e-3
    max_restarts: int = 32


@dataclass
class ActionReport:
    J: float
    Q: float
    Lp_p: float
    nehari_residual: float
    n_lambda: float

    def as_dict(self) -> dict:
        return dict(J=self.J, Q=self.Q, Lp_p=self.Lp_p, nehari_residual=self.nehari_residual,
                    n_lambda=self.n_lambda)


def action(space: DiscreteSpace, u, params: ProblemParams) -> ActionReport:
    l2, h1, lpp = norms(space, u, params.p)
    Q = h1 + params.lam * l2
    J = 0.5 * Q - lpp / params.p
    n = (Q / lpp) ** (1.0 / (params.p - 2.0)) if lpp > 0 and Q > 0 else math.nan
    return ActionReport(J, Q, lpp, Q - lpp, n)


def reduced_quotient(space: DiscreteSpace, u, params: ProblemParams) -> float:
    """R(u) = (||u'||^2 + lam ||u||^2) / ||u||_p^2."""
    l2, h1, lpp = norms(space, u, params.p)
    return (h1 + params.lam * l2) / lpp ** (2.0 / params.p)


def reduced_quotient_gradient(space: DiscreteSpace, u, params: ProblemParams) -> np.ndarray:
    """Euclidean gradient of R in the free DOFs: 2 P^{-2/p} (A u - (Q/P) w |u|^{p-2} u)."""
    v = values_of(space, u)
    p = params.p
    Av = space.K @ v + params.lam * (space.M @ v)
    Q = float(v @ Av)
    P = lp_p(space, v, p)
    return 2.0 / P ** (2.0 / p) * (Av - Q / P * space.w * np.abs(v) ** (p - 2) * v)


def project_nehari(space: DiscreteSpace, u, params: ProblemParams) -> DiscreteField:
    v = values_of(space, u)
    rep = action(space, v, params)
    if not (rep.Lp_p > 0):
        raise SolverError("cannot project the zero field")
    if not (rep.Q > 0):
        raise SolverError("quadratic form is not positive on this field (lambda below the spectrum?)")
    return space.field(rep.n_lambda * v)


def omega_Z(space: DiscreteSpace) -> float:
    """Smallest generalized eigenvalue of (K, M)."""
    n = space.n_free
    if n < 1:
        raise SolverError("space has no free DOFs")
    if n <= 400:
        vals = sla.eigh(space.K.toarray(), space.M.toarray(), eigvals_only=True, subset_by_index=[0, 0])
        return float(vals[0])
    shift = -1e-3
    vals, vecs = spla.eigsh(space.K, k=1, M=space.M, sigma=shift, which="LM", tol=1e-12)
    x = vecs[:, 0]
    return float((x @ (space.K @ x)) / (x @ (space.M @ x)))


# ---------------------------------------------------------------- internals

class _Problem:
    def __init__(self, space: DiscreteSpace, params: ProblemParams):
        self.space = space
        self.params = params
        self.p = params.p
        self.w = space.w
        self.A = (space.K + params.lam * space.M).tocsc()
        self.lu = spla.splu(self.A)

    def lp(self, u):
        return float(self.w @ np.abs(u) ** self.p)

    def nl(self, u):
        return self.w * np.abs(u) ** (self.p - 2) * u

    def tol_pde(self, cfg: SolverConfig, u) -> float:
        return cfg.tol_pde_factor * float(np.max(np.abs(u))) * max(self.params.lam, 1.0)


def _normalize(prob: _Problem, u):
    P = prob.lp(u)
    return u / P ** (1.0 / prob.p) if P > 0 else u


def _bump(space: DiscreteSpace, site: int, lam: float, p: float) -> np.ndarray:
    phi = SolitonOracle(lam if lam > 0 else 1.0, p)
    d = space.distance_from([site])
    vals = phi(np.where(np.isfinite(d), d, 1e3))
    vals[space.fixed] = 0.0
    return vals[space.free]


def _sites(space: DiscreteSpace) -> list[int]:
    """Candidate centres: free finite vertices, then the middle node of every edge."""
    out = [int(n) for n in space.free_vertex_nodes]
    for c in space.chains:
        out.append(int(c[len(c) // 2]))
    seen, uniq = set(), []
    for s in out:
        if s not in seen and not space.fixed[s]:
            seen.add(s)
            uniq.append(s)
    return uniq


def _ranked_sites(prob: _Problem) -> list[tuple[float, int, np.ndarray]]:
    """Sites with their single-bump reduced level, best first (ties by site order)."""
    out = []
    for k, s in enumerate(_sites(prob.space)):
        b = _bump(prob.space, s, prob.params.lam, prob.p)
        if prob.lp(b) <= 0:
            continue
        R = float(b @ (prob.A @ b)) / prob.lp(b) ** (2.0 / prob.p)
        out.append((R, k, s, b))
    out.sort(key=lambda t: (t[0], t[1]))
    return [(R, s, b) for R, _, s, b in out]


@dataclass
class _Run:
    u: np.ndarray
    level: float
    iterations: int
    converged: bool
    residual: tuple[float, float]
    collapsed: bool = False


def _bb_step(s, y, A):
    sy = float(s @ y)
    if sy <= 0:
        return None
    return float(s @ (A @ s)) / sy


def _descend_ground(prob: _Problem, u0: np.ndarray, cfg: SolverConfig) -> _Run:
    p, kappa = prob.p, prob.params.kappa
    q = p / (p - 2.0)
    u = _normalize(prob, np.abs(u0))
    Au = prob.A @ u
    R = float(u @ Au)
    g = 2.0 * (Au - R * prob.nl(u))
    d = prob.lu.solve(g)
    hist = [R]
    alpha = 0.5
    res = (math.inf, math.inf)
    converged = False
    it = 0
    for it in range(1, cfg.max_iter + 1):
        Rref = max(hist[-10:])
        gd = float(g @ d)
        t = alpha
        while True:
            v = np.abs(u - t * d)
            v = _normalize(prob, v)
            Av = prob.A @ v
            Rv = float(v @ Av)
            if Rv <= Rref - 1e-4 * t * gd or t < 1e-14:
                break
            t *= 0.5
        gv = 2.0 * (Av - Rv * prob.nl(v))
        dv = prob.lu.solve(gv)
        step = _bb_step(v - u, gv - g, prob.A)
        alpha = min(max(step, 1e-4), 1e4) if step is not None else 0.5
        u, Au, R, g, d = v, Av, Rv, gv, dv
        hist.append(R)
        if len(hist) > cfg.window and (hist[-cfg.window - 1] - R) <= cfg.tol_decrease * abs(R):
            un = u * (R / prob.lp(u)) ** (1.0 / (p - 2.0))
            res = pde_residual(prob.space, un, prob.params.lam, p)
            if max(res) <= prob.tol_pde(cfg, un):
                converged = True
                break
    un = u * (R / prob.lp(u)) ** (1.0 / (p - 2.0))
    if not converged:
        res = pde_residual(prob.space, un, prob.params.lam, p)
    return _Run(un, kappa * R**q, it, converged, res)


def _phase_parts(u):
    return np.maximum(u, 0.0), np.minimum(u, 0.0)


def _nodal_eval(prob: _Problem, u):
    """Objective, gradient and per-phase data for the two-phase reduced functional."""
    p, kappa = prob.p, prob.params.kappa
    q = p / (p - 2.0)
    G = 0.0
    grad = np.zeros_like(u)
    Rs = []
    for part, mask in ((np.maximum(u, 0.0), u > 0), (np.minimum(u, 0.0), u < 0)):
        P = prob.lp(part)
        Ap = prob.A @ part
        Qp = float(part @ Ap)
        R = Qp / P ** (2.0 / p)
        gR = 2.0 * (Ap - Qp / P * prob.nl(part)) / P ** (2.0 / p)
        G += kappa * R**q
        grad += np.where(mask, kappa * q * R ** (q - 1) * gR, 0.0)
        Rs.append(R)
    return G, grad, Rs


def _normalize_phases(prob: _Problem, u, floor: float):
    up, um = _phase_parts(u)
    Pp, Pm = prob.lp(up), prob.lp(um)
    tot = Pp + Pm
    if tot <= 0 or min(Pp, Pm) < floor * tot:
        return None
    return up / Pp ** (1.0 / prob.p) + um / Pm ** (1.0 / prob.p)


def _nehari_phases(prob: _Problem, u):
    out = np.zeros_like(u)
    for part in _phase_parts(u):
        Q = float(part @ (prob.A @ part))
        P = prob.lp(part)
        if P > 0:
            out += part * (Q / P) ** (1.0 / (prob.p - 2.0))
    return out


def _phase_residual(prob: _Problem, un):
    space = prob.space
    worst = (0.0, 0.0)
    for part in _phase_parts(un):
        mask = np.zeros(space.n_full, dtype=bool)
        mask[space.free[part != 0]] = True
        r = pde_residual(space, part, prob.params.lam, prob.p, mask=mask)
        worst = (max(worst[0], r[0]), max(worst[1], r[1]))
    return worst


def _descend_nodal(prob: _Problem, u0: np.ndarray, cfg: SolverConfig) -> _Run:
    u = _normalize_phases(prob, u0, cfg.phase_floor)
    if u is None:
        return _Run(u0, math.inf, 0, False, (math.inf, math.inf), collapsed=True)
    G, g, _ = _nodal_eval(prob, u)
    d = prob.lu.solve(g)
    hist = [G]
    alpha = 0.5
    res = (math.inf, math.inf)
    converged = False
    it = 0
    for it in range(1, cfg.max_iter + 1):
        Gref = max(hist[-10:])
        gd = float(g @ d)
        t = alpha
        v = None
        while t >= 1e-14:
            trial = _normalize_phases(prob, u - t * d, cfg.phase_floor)
            if trial is not None:
                Gv, gv, _ = _nodal_eval(prob, trial)
                if Gv <= Gref - 1e-4 * t * gd:
                    v = trial
                    break
            t *= 0.5
        if v is None:
            # no admissible decrease: either stationary or every step empties a phase
            if _normalize_phases(prob, u - alpha * d, cfg.phase_floor) is None and gd > 1e-12 * G:
                return _Run(u, G, it, False, (math.inf, math.inf), collapsed=True)
            v, Gv, gv = u, G, g
        dv = prob.lu.solve(gv)
        step = _bb_step(v - u, gv - g, prob.A)
        alpha = min(max(step, 1e-4), 1e4) if step is not None else 0.5
        u, G, g, d = v, Gv, gv, dv
        hist.append(G)
        if len(hist) > cfg.window and (hist[-cfg.window - 1] - G) <= cfg.tol_decrease * abs(G):
            un = _nehari_phases(prob, u)
            res = _phase_residual(prob, un)
            if max(res) <= prob.tol_pde(cfg, un):
                converged = True
                break
    un = _nehari_phases(prob, u)
    if not converged:
        res = _phase_residual(prob, un)
    return _Run(un, G, it, converged, res)


# ---------------------------------------------------------------- structure

@dataclass
class ZeroComponent:
    kind: str                      # ISOLATED_POINT | SEGMENT | RAY
    edge: int
    position: float
    extent: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {"kind": self.kind, "edge": self.edge, "position": self.position, "extent": self.extent}


@dataclass
class NodalStructure:
    domain_count: int
    zero_set: list[ZeroComponent]

    def count(self, kind: str) -> int:
        return sum(z.kind == kind for z in self.zero_set)

    def as_dict(self) -> dict:
        return {"domain_count": self.domain_count, "zero_set": [z.as_dict() for z in self.zero_set]}


def _components(n: int, I: np.ndarray, J: np.ndarray, keep: np.ndarray) -> tuple[int, np.ndarray]:
    from scipy.sparse import coo_matrix
    from scipy.sparse.csgraph import connected_components
    mat = coo_matrix((np.ones(len(I)), (I, J)), shape=(n, n))
    return connected_components(mat, directed=False)


def _on_ray_node(space: DiscreteSpace, i: int) -> bool:
    e = space.node_edge[i]
    return e >= 0 and space.graph.edges[e].is_half_line


def nodal_structure(space: DiscreteSpace, u, zero_tol: float = 1e-12) -> NodalStructure:
    """Nodal domains and a classified zero set of a discrete field.

    Nodes with |u| <= zero_tol*max|u| are zero.  Runs of zero nodes covering at
    least two cells are segments, or rays when they run from a vertex out to a
    half-line cut; a run that reaches a cut without touching a vertex is the
    underflowing tail of a decaying profile and is ignored, as are boundary
    nodes on their own.  Sign changes between neighbouring nodes are isolated
    zeros located by linear interpolation.
    """
    uf = space.full(u)
    umax = float(np.max(np.abs(uf)))
    if umax == 0:
        raise SolverError("all-zero field has no nodal structure")
    zero = np.abs(uf) <= zero_tol * umax
    zero |= space.fixed
    I, J, H = space.elements
    n = space.n_full
    eid = np.concatenate([np.full(len(c) - 1, e) for e, c in enumerate(space.chains)])
    pos0 = np.concatenate([space.spacing[e] * np.arange(len(c) - 1) for e, c in enumerate(space.chains)])

    # domains: nonzero nodes joined by same-sign elements
    same = (~zero[I]) & (~zero[J]) & (np.sign(uf[I]) == np.sign(uf[J]))
    ncomp, lab = _components(n, I[same], J[same], same)
    domain_count = len(set(lab[~zero].tolist()))

    comps: list[ZeroComponent] = []
    # zero runs
    zz = zero[I] & zero[J]
    ncz, labz = _components(n, I[zz], J[zz], zz)
    zero_nodes = np.flatnonzero(zero)
    groups: dict[int, list[int]] = {}
    for i in zero_nodes:
        groups.setdefault(int(labz[i]), []).append(int(i))
    on_ray = np.array([space.graph.edges[e].is_half_line for e in range(space.graph.n_edges)], dtype=bool)[eid]
    fin = zz & ~on_ray
    cell_count = np.bincount(labz[I[fin]], minlength=ncz)
    cutset = set(space.cut_nodes.tolist())
    for lab_z, nodes in sorted(groups.items(), key=lambda kv: min(kv[1])):
        cells = int(cell_count[lab_z])
        has_fixed = bool(space.fixed[nodes].any())
        cuts = [i for i in nodes if i in cutset]
        verts = [i for i in nodes if space.node_vertex[i] >= 0]
        if cuts:
            if not verts:
                continue
            for c in cuts:
                e = int(space.node_edge[c])
                comps.append(ZeroComponent("RAY", e, 0.0, [e]))
        if cells >= 2:
            edges = sorted({int(eid[k]) for k in np.flatnonzero(fin & (labz[I] == lab_z))})
            inner = [i for i in nodes if space.node_edge[i] >= 0 and not _on_ray_node(space, i)] or nodes
            e, x = space.node_location(inner[len(inner) // 2])
            comps.append(ZeroComponent("SEGMENT", e, x, edges))
        elif cuts:
            continue
        elif not has_fixed:
            e, x = space.node_location(nodes[0])
            if cells == 1:
                x += 0.5 * space.spacing[e]
            comps.append(ZeroComponent("ISOLATED_POINT", e, float(x), [e]))
    # sign changes inside a cell
    cross = (~zero[I]) & (~zero[J]) & (uf[I] * uf[J] < 0)
    for k in np.flatnonzero(cross):
        a, b = uf[I[k]], uf[J[k]]
        x = pos0[k] + H[k] * a / (a - b)
        comps.append(ZeroComponent("ISOLATED_POINT", int(eid[k]), float(x), [int(eid[k])]))
    return NodalStructure(domain_count, comps)


def escape_diagnostic(space: DiscreteSpace, u, d_esc: float, p: float = 4.0) -> float:
    """Share of sum w|u|^p carried by nodes within arc distance d_esc of a truncation cut."""
    return _escape(space, space.full(u), d_esc, p)


def _escape(space: DiscreteSpace, uf: np.ndarray, d_esc: float, p: float) -> float:
    if space.truncation_nodes.size == 0:
        return 0.0
    mass = space.w_full * np.abs(uf) ** p
    tot = float(mass.sum())
    if tot == 0:
        return 0.0
    near = space.cut_distance <= d_esc
    return float(mass[near].sum() / tot)


# ---------------------------------------------------------------- results

@dataclass
class SolveResult:
    field: DiscreteField
    report: ActionReport
    level: float
    converged: bool
    iterations: int
    escape_fraction: float
    residual: tuple[float, float]
    tol_pde: float
    nodal: Optional[NodalStructure] = None
    phase_reports: Optional[tuple[ActionReport, ActionReport]] = None
    error_estimate: Optional[float] = None
    refined_level: Optional[float] = None
    hint: Optional[str] = None
    starts: int = 0
    start_levels: list = field(default_factory=list)
    omega: Optional[float] = None
    # |J(u) - J(u+) - J(u-)|, the discrete cross term of a sign-changing field
    split_defect: Optional[float] = None

    def as_dict(self, include_field: bool = True) -> dict:
        s = self.field.space
        out = {
            "level": self.level,
            "report": self.report.as_dict(),
            "converged": self.converged,
            "iterations": self.iterations,
            "escape_fraction": self.escape_fraction,
            "residual": {"interior_max": self.residual[0], "kirchhoff_max": self.residual[1],
                         "tol_pde": self.tol_pde},
            "error_estimate": self.error_estimate,
            "refined_level": self.refined_level,
            "hint": self.hint,
            "starts": self.starts,
            "omega": self.omega,
            "split_defect": self.split_defect,
            "mesh": {"h_target": s.mesh.h_target, "trunc_length": s.mesh.trunc_length,
                     "n_free": s.n_free, "total_length": s.total_length},
            "nodal": self.nodal.as_dict() if self.nodal else None,
            "phase_reports": [r.as_dict() for r in self.phase_reports] if self.phase_reports else None,
        }
        if include_field:
            uf = self.field.full()
            locs = [s.node_location(i) for i in range(s.n_full)]
            out["field"] = {"edge": [e for e, _ in locs], "position": [x for _, x in locs],
                            "value": uf.tolist()}
        return out


def _check_lambda(space: DiscreteSpace, params: ProblemParams, cfg: SolverConfig) -> Optional[float]:
    if params.lam > 0:
        return None
    om = omega_Z(space)
    if params.lam <= -om + cfg.lam_margin:
        raise SolverError(f"lambda={params.lam} is not above -omega_Z={-om:.6g}")
    return om


def _n_starts(cfg: SolverConfig, space: DiscreteSpace, available: int) -> int:
    n = space.graph.n_edges if cfg.restarts is None else cfg.restarts
    return max(1, min(n, cfg.max_restarts, available))


def _finish_ground(prob: _Problem, run: _Run, cfg: SolverConfig) -> SolveResult:
    space, params = prob.space, prob.params
    fld = space.field(run.u)
    rep = action(space, fld, params)
    return SolveResult(field=fld, report=rep, level=rep.J, converged=run.converged,
                       iterations=run.iterations, escape_fraction=_escape(space, space.full(run.u), cfg.d_esc,
                                                                          params.p),
                       residual=run.residual, tol_pde=prob.tol_pde(cfg, run.u))


def ground_state(g: MetricGraph, params: ProblemParams, mp: MeshParams,
                 cfg: Optional[SolverConfig] = None, space: Optional[DiscreteSpace] = None) -> SolveResult:
    """Minimize the reduced quotient from several localized starts and keep the lowest level."""
    cfg = cfg or SolverConfig()
    space = space or assemble(g, mp)
    om = _check_lambda(space, params, cfg)
    prob = _Problem(space, params)
    rng = np.random.default_rng(cfg.seed)
    ranked = _ranked_sites(prob)
    n = _n_starts(cfg, space, len(ranked))
    runs = []
    for k, (_, site, bump) in enumerate(ranked[:n]):
        u0 = bump * (1.0 + cfg.noise * rng.standard_normal(bump.shape))
        runs.append((k, _descend_ground(prob, u0, cfg)))
    pool = [r for r in runs if r[1].converged] or runs
    k, best = min(pool, key=lambda r: (r[1].level, r[0]))
    res = _finish_ground(prob, best, cfg)
    res.starts = n
    res.start_levels = [r.level for _, r in runs]
    res.omega = om
    if cfg.richardson:
        fine = assemble(g, mp.refined())
        pf = _Problem(fine, params)
        u0 = space.transfer(best.u, fine).values
        rf = _descend_ground(pf, u0, cfg)
        fine_rep = action(fine, rf.u, params)
        res.refined_level = fine_rep.J
        res.error_estimate = 4.0 / 3.0 * abs(res.level - fine_rep.J)
        res.converged = res.converged and rf.converged
    return res


def _nodal_starts(prob: _Problem, n: int, min_sep: float):
    ranked = _ranked_sites(prob)
    space = prob.space
    dist = {}
    pairs = []
    for i in range(len(ranked)):
        for j in range(i + 1, len(ranked)):
            pairs.append((ranked[i][0] + ranked[j][0], i, j))
    pairs.sort()
    out = []
    for _, i, j in pairs:
        si, sj = ranked[i][1], ranked[j][1]
        if si not in dist:
            dist[si] = space.distance_from([si])
        if dist[si][sj] < min_sep:
            continue
        out.append((ranked[i][2], ranked[j][2]))
        if len(out) >= n:
            break
    return out


def nodal_ground_state(g: MetricGraph, params: ProblemParams, mp: MeshParams,
                       cfg: Optional[SolverConfig] = None, space: Optional[DiscreteSpace] = None) -> SolveResult:
    """Minimize kappa*(R(u+)^q + R(u-)^q) from pairs of opposite-sign bumps."""
    cfg = cfg or SolverConfig()
    space = space or assemble(g, mp)
    if space.n_free < 2:
        raise SolverError("need at least two free DOFs for a sign-changing field")
    om = _check_lambda(space, params, cfg)
    prob = _Problem(space, params)
    rng = np.random.default_rng(cfg.seed)
    lam_eff = params.lam if params.lam > 0 else 1.0
    n_sites = len(_sites(space))
    n = _n_starts(cfg, space, n_sites * (n_sites - 1) // 2)
    starts = _nodal_starts(prob, n, 4.0 / math.sqrt(lam_eff))
    runs = []
    for k, (bp, bm) in enumerate(starts):
        u0 = bp - bm
        u0 = u0 * (1.0 + cfg.noise * rng.standard_normal(u0.shape))
        r = _descend_nodal(prob, u0, cfg)
        runs.append((k, r))
    live = [r for r in runs if not r[1].collapsed]
    if not live:
        fld = space.field(np.zeros(space.n_free))
        rep = ActionReport(math.nan, math.nan, math.nan, math.nan, math.nan)
        return SolveResult(field=fld, report=rep, level=math.nan, converged=False, iterations=0,
                           escape_fraction=0.0, residual=(math.inf, math.inf), tol_pde=0.0,
                           hint=COLLAPSE_HINT, starts=len(starts), omega=om)
    pool = [r for r in live if r[1].converged] or live
    k, best = min(pool, key=lambda r: (r[1].level, r[0]))
    res = _finish_nodal(prob, best, cfg)
    res.starts = len(starts)
    res.start_levels = [r.level for _, r in runs]
    res.omega = om
    if len(live) < len(runs):
        res.hint = f"{len(runs) - len(live)} of {len(runs)} starts collapsed to one sign"
    if cfg.richardson:
        fine = assemble(g, mp.refined())
        pf = _Problem(fine, params)
        u0 = space.transfer(best.u, fine).values
        rf = _descend_nodal(pf, u0, cfg)
        if not rf.collapsed:
            lv = sum(action(fine, part, params).J for part in _phase_parts(rf.u))
            res.refined_level = lv
            res.error_estimate = 4.0 / 3.0 * abs(res.level - lv)
            res.converged = res.converged and rf.converged
    return res


def _finish_nodal(prob: _Problem, run: _Run, cfg: SolverConfig) -> SolveResult:
    space, params = prob.space, prob.params
    fld = space.field(run.u)
    up, um = _phase_parts(run.u)
    reps = (action(space, up, params), action(space, um, params))
    level = reps[0].J + reps[1].J
    report = action(space, fld, params)
    return SolveResult(field=fld, report=report, level=level, converged=run.converged,
                       iterations=run.iterations,
                       escape_fraction=_escape(space, space.full(run.u), cfg.d_esc, params.p),
                       residual=run.residual, tol_pde=prob.tol_pde(cfg, run.u),
                       nodal=nodal_structure(space, fld, cfg.zero_tol), phase_reports=reps,
                       split_defect=abs(report.J - reps[0].J - reps[1].J))
