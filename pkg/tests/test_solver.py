import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from graphnls import graph as G
from graphnls.analytic import ProblemParams, omega_dirichlet_half_line, s_level
from graphnls.discretization import MeshParams, assemble
from graphnls.solver import (COLLAPSE_HINT, SolverConfig, SolverError, action, escape_diagnostic, ground_state,
                             nodal_ground_state, nodal_structure, omega_Z, project_nehari, reduced_quotient,
                             reduced_quotient_gradient)

P4 = ProblemParams(1.0, 4.0)
S = s_level(1.0, 4.0)


def random_space(seed):
    g = G.random_graph(np.random.default_rng(seed), max_edges=6)
    return assemble(g, MeshParams(min(0.1, g.ell_min / 2), 10.0))


def gradient_mismatch(seed):
    rng = np.random.default_rng(seed)
    s = random_space(seed)
    pp = ProblemParams(float(rng.uniform(0.2, 3.0)), float(rng.uniform(2.5, 6.0)))
    u = rng.standard_normal(s.n_free)
    d = rng.standard_normal(s.n_free)
    step = 1e-6 * np.max(np.abs(u))
    fd = (reduced_quotient(s, u + step * d, pp) - reduced_quotient(s, u - step * d, pp)) / (2 * step)
    an = float(reduced_quotient_gradient(s, u, pp) @ d)
    return abs(fd - an) / max(abs(an), 1e-300)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_gradient_matches_finite_differences(seed):
    assert gradient_mismatch(seed) < 1e-5


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(1e-3, 1e3))
def test_projection_identity_and_scale_invariance(seed, c):
    rng = np.random.default_rng(seed)
    s = random_space(seed)
    pp = ProblemParams(float(rng.uniform(0.2, 3.0)), float(rng.uniform(2.5, 6.0)))
    u = rng.standard_normal(s.n_free)
    v = project_nehari(s, u, pp)
    rep = action(s, v, pp)
    assert abs(rep.J / (pp.kappa * reduced_quotient(s, u, pp) ** pp.q) - 1) < 1e-10
    assert abs(rep.nehari_residual) <= 1e-12 * rep.Q
    w = project_nehari(s, c * u, pp)
    assert np.allclose(w.values, v.values, rtol=1e-12, atol=0)


def test_project_examples():
    s = assemble(G.interval(1.0), MeshParams(0.1, 10.0))
    one = np.ones(s.n_free)
    assert np.allclose(project_nehari(s, one, P4).values, one, rtol=1e-14)
    assert np.allclose(project_nehari(s, 2 * one, P4).values, one, rtol=1e-14)
    with pytest.raises(SolverError):
        project_nehari(s, 0 * one, P4)
    rep = action(s, 0 * one, P4)
    assert math.isnan(rep.n_lambda)


def test_omega_of_truncated_half_line():
    L = 20.0
    s = assemble(G.half_line(), MeshParams(L / 4000, L))
    assert omega_Z(s) == pytest.approx(omega_dirichlet_half_line(L), rel=1e-2)


def test_omega_of_free_interval_is_zero():
    assert abs(omega_Z(assemble(G.interval(1.0), MeshParams(0.1, 10.0)))) < 1e-10


def test_omega_sparse_and_dense_routes_agree():
    g = G.regular_tree(3, 3)
    big = assemble(g, MeshParams(0.02, 10.0))
    small = assemble(g, MeshParams(0.25, 10.0))
    assert big.n_free > 400 >= small.n_free
    assert omega_Z(big) == pytest.approx(omega_Z(small), rel=2e-2)
    assert omega_Z(big) > 0


def test_lambda_below_spectrum_rejected():
    g = G.regular_tree(3, 3)
    s = assemble(g, MeshParams(0.25, 10.0))
    om = omega_Z(s)
    with pytest.raises(SolverError, match="omega"):
        ground_state(g, ProblemParams(-om - 0.01, 4.0), MeshParams(0.25, 10.0), space=s)


def test_negative_lambda_on_tree_converges():
    res = ground_state(G.regular_tree(3, 4), ProblemParams(-0.1, 4.0), MeshParams(0.1, 40.0),
                       SolverConfig(restarts=4))
    assert res.converged and res.level > 0 and res.omega > 0.1


def test_ground_state_is_positive_and_deterministic():
    cfg = SolverConfig(restarts=3, seed=7)
    a = ground_state(G.tadpole(4.0), P4, MeshParams(0.05, 40.0), cfg)
    b = ground_state(G.tadpole(4.0), P4, MeshParams(0.05, 40.0), cfg)
    assert np.array_equal(a.field.values, b.field.values)
    assert np.all(a.field.values >= 0)
    assert a.converged and a.escape_fraction < 0.05


def test_levels_nondecreasing_in_lambda():
    levels = [ground_state(G.tadpole(4.0), ProblemParams(lam, 4.0), MeshParams(0.05, 40.0),
                           SolverConfig(restarts=2)).level for lam in (0.5, 0.75, 1.0, 1.5, 2.0)]
    assert all(b >= a for a, b in zip(levels, levels[1:]))


def test_richardson_estimate_reported():
    res = ground_state(G.half_line(), P4, MeshParams(0.05, 40.0), SolverConfig(richardson=True))
    assert res.error_estimate is not None and 0 < res.error_estimate < 1e-2
    assert abs(res.refined_level - res.level) * 4 / 3 == pytest.approx(res.error_estimate)


NODAL_CASES = [
    G.gamma_nl(1, 8.0, (4.0, 4.0)),
    G.tadpole(4.0),
    G.glue(G.tadpole(4.0), 1, G.tadpole(4.0), 1, 6.0),
    G.periodic_chain(6),
]


@pytest.mark.parametrize("g", NODAL_CASES, ids=["gamma_1_8", "tadpole", "glued", "chain6"])
def test_nodal_level_bounds(g):
    mp = MeshParams(0.05, 40.0)
    cfg = SolverConfig(restarts=6, richardson=True)
    n = ground_state(g, P4, mp, cfg)
    m = nodal_ground_state(g, P4, mp, cfg)
    assert n.converged and m.converged
    err = n.error_estimate + m.error_estimate
    assert m.level >= 2 * n.level - 2 * err
    if g.half_lines:
        # a soliton parked far out on a half-line caps the nodal level
        assert m.level <= S + n.level + err
    assert m.nodal.domain_count == 2
    up, um = m.phase_reports
    # the cross term between phases is O(h)
    assert m.split_defect == pytest.approx(abs(m.report.J - up.J - um.J))
    assert m.split_defect < 0.05 * m.level
    for r in (up, um):
        assert abs(r.nehari_residual) < 1e-10 * r.Q


def test_total_collapse_is_reported():
    res = nodal_ground_state(G.tadpole(4.0), P4, MeshParams(0.05, 40.0),
                             SolverConfig(restarts=3, phase_floor=0.6))
    assert not res.converged and res.hint == COLLAPSE_HINT


def test_sine_nodal_structure():
    h = 0.01
    s = assemble(G.interval(2.0, True, True), MeshParams(h, 10.0))
    u = s.evaluate(lambda e, x: np.sin(math.pi * x + 0.3 * h))
    ns = nodal_structure(s, u)
    assert ns.domain_count == 2
    assert [z.kind for z in ns.zero_set] == ["ISOLATED_POINT"]
    assert abs(ns.zero_set[0].position - 1.0) <= h


def test_segment_and_ray_detection():
    # positive bump on one pendant, zero on a pendant and on the half-line
    g = G.make_graph([(False, False), (True, False), (False, False), (False, False)],
                     [(0, 1, G.HALF_LINE), (0, 2, 2.0), (0, 3, 2.0)])
    s = assemble(g, MeshParams(0.1, 10.0))
    u = s.evaluate(lambda e, x: np.sin(math.pi * x / 4) if e.id == 1 else (-np.sin(math.pi * x / 4) if e.id == 2
                                                                            else 0 * x))
    ns = nodal_structure(s, u)
    assert ns.domain_count == 2
    assert ns.count("RAY") == 1
    v = s.evaluate(lambda e, x: np.sin(math.pi * x / 4) if e.id == 1 else 0 * x)
    ns = nodal_structure(s, v)
    assert ns.domain_count == 1 and ns.count("RAY") == 1 and ns.count("SEGMENT") == 1


def test_nodal_structure_rejects_zero():
    s = assemble(G.interval(1.0), MeshParams(0.1, 10.0))
    with pytest.raises(SolverError):
        nodal_structure(s, np.zeros(s.n_free))


def test_escape_on_compact_graph_is_zero():
    s = assemble(G.interval(1.0), MeshParams(0.1, 10.0))
    assert escape_diagnostic(s, np.ones(s.n_free), 5.0) == 0.0


def test_escape_counts_mass_near_cut():
    s = assemble(G.half_line(), MeshParams(0.1, 10.0))
    u = s.evaluate(lambda e, x: np.ones_like(x))
    # nodes within 5 of the cut carry about half the mass
    assert escape_diagnostic(s, u, 5.0) == pytest.approx(0.5, abs=0.02)


def test_degree_two_vertex_leaves_level_unchanged():
    mp = MeshParams(0.05, 30.0)
    cfg = SolverConfig(restarts=4)
    a = ground_state(G.tadpole(4.0), P4, mp, cfg)
    b = ground_state(G.subdivide_edge(G.tadpole(4.0), 0, 1.0), P4, mp, cfg)
    assert a.converged and b.converged
    assert b.level == pytest.approx(a.level, rel=1e-3)
