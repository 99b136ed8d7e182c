import math

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings, strategies as st

from graphnls import graph as G
from graphnls.analytic import ProblemParams, soliton
from graphnls.discretization import MeshError, MeshParams, assemble, default_trunc, norms, pde_residual
from graphnls.solver import SolverConfig, ground_state


def eigs(space, k=3):
    return sla.eigh(space.K.toarray(), space.M.toarray(), eigvals_only=True, subset_by_index=[0, k - 1])


def test_interval_stiffness():
    s = assemble(G.interval(1.0), MeshParams(0.5, 10.0))
    assert s.n_full == 3 and s.n_free == 3
    K = s.K.toarray()
    # vertices come first, the midpoint is node 2
    assert np.allclose(K, [[2, 0, -2], [0, 2, -2], [-2, -2, 4]])
    assert np.allclose(s.w, [0.25, 0.25, 0.5])


def test_dirichlet_interval_eigenvalue():
    s = assemble(G.interval(1.0, True, True), MeshParams(1e-3, 10.0))
    assert eigs(s, 1)[0] == pytest.approx(math.pi**2, rel=1e-2)


def test_circle_spectrum():
    s = assemble(G.make_graph([(False, False)], [(0, 0, 2.0)]), MeshParams(0.01, 10.0))
    ev = eigs(s, 3)
    assert abs(ev[0]) < 1e-10
    assert ev[1] == pytest.approx(math.pi**2, rel=1e-3) and ev[2] == pytest.approx(math.pi**2, rel=1e-3)


def test_constant_norms():
    s = assemble(G.interval(1.0), MeshParams(0.1, 10.0))
    l2, h1, lp = norms(s, np.ones(s.n_free), 4.0)
    assert (l2, h1, lp) == pytest.approx((1.0, 0.0, 1.0), abs=1e-13)


def test_sine_norms():
    s = assemble(G.interval(1.0, True, True), MeshParams(1e-3, 10.0))
    u = s.evaluate(lambda e, x: np.sin(math.pi * x))
    l2, h1, _ = norms(s, u, 4.0)
    assert l2 == pytest.approx(0.5, rel=1e-3)
    assert h1 == pytest.approx(math.pi**2 / 2, rel=1e-3)


def _line_soliton(h):
    g = G.line()
    s = assemble(g, MeshParams(h, 40.0))
    phi = soliton(1.0, 4.0)
    # both half-lines start at the centre vertex
    return s, s.evaluate(lambda e, x: phi(x))


def test_soliton_lp_mass():
    s, u = _line_soliton(1e-2)
    assert norms(s, u, 4.0)[2] == pytest.approx(16 / 3, rel=5e-3)


def test_residual_halves_quadratically():
    r = []
    for h in (0.02, 0.01):
        s, u = _line_soliton(h)
        r.append(max(pde_residual(s, u, 1.0, 4.0)))
    assert 3.5 <= r[0] / r[1] <= 4.5


def test_discrete_eigenfunction_has_rounding_residual():
    # on a star, a tiny multiple of a discrete Laplacian eigenvector solves the equation with lam = -mu
    g = G.make_graph([(False, False), (False, False), (False, False), (False, False)],
                     [(0, 1, 1.0), (0, 2, 1.5), (0, 3, 2.0)])
    s = assemble(g, MeshParams(0.05, 10.0))
    mu, vec = sla.eigh(s.K.toarray(), s.M.toarray(), subset_by_index=[1, 1])
    u = 1e-8 * vec[:, 0] / np.max(np.abs(vec[:, 0]))
    ri, rk = pde_residual(s, u, -mu[0], 4.0)
    assert max(ri, rk) < 1e-11 * np.max(np.abs(u))


def test_tadpole_ground_state_kirchhoff():
    res = ground_state(G.tadpole(4.0), ProblemParams(1.0, 4.0), MeshParams(0.02, 40.0))
    u = res.field.full()
    assert res.residual[1] <= 1e-6 * np.max(np.abs(u))


@pytest.mark.parametrize("kw", [dict(h_target=0.0), dict(h_target=1.0, trunc_length=5.0), dict(trunc_length=-1.0)])
def test_mesh_params_rejected(kw):
    with pytest.raises(MeshError):
        MeshParams(**kw)


def test_mesh_too_coarse_for_short_edge():
    with pytest.raises(MeshError, match="coarse"):
        assemble(G.interval(0.05), MeshParams(0.05, 10.0))


def test_default_truncation():
    assert default_trunc(1.0) == 40.0
    assert default_trunc(0.01) == pytest.approx(120.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**63 - 1))
def test_assembly_invariants(seed):
    g = G.random_graph(np.random.default_rng(seed), max_edges=8)
    mp = MeshParams(min(0.1, g.ell_min / 2), 10.0)
    s = assemble(g, mp)
    for A in (s.K, s.M):
        assert (A != A.T).nnz == 0
    meshed = g.total_finite_length() + mp.trunc_length * len(g.half_lines)
    assert math.isclose(s.w_full.sum(), meshed, rel_tol=1e-12)
    u = np.random.default_rng(seed).standard_normal(s.n_free)
    assert np.all(s.full(u)[s.fixed] == 0)
    ones = np.ones(s.n_free)
    energy = ones @ (s.K @ ones)
    if s.fixed.any():
        assert energy > 1e-12
    else:
        assert abs(energy) < 1e-10


def test_consistent_mass_option():
    s = assemble(G.interval(1.0), MeshParams(0.1, 10.0, lumped_mass=False))
    ones = np.ones(s.n_free)
    assert ones @ (s.M @ ones) == pytest.approx(1.0)
    assert s.M.nnz > s.n_free


def test_transfer_keeps_linear_functions():
    g = G.interval(2.0)
    a, b = assemble(g, MeshParams(0.1, 10.0)), assemble(g, MeshParams(0.05, 10.0))
    u = a.evaluate(lambda e, x: 3 * x + 1)
    v = a.transfer(u, b)
    assert np.allclose(v.values, b.evaluate(lambda e, x: 3 * x + 1).values, atol=1e-13)
