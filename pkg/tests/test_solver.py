import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from layerfrac import constitutive as cm
from layerfrac.analysis import wake_clusters
from layerfrac.loading import Schedule, SurfingParams, boundary_values, march, seed_initial_crack
from layerfrac.mesh import generate_mesh
from layerfrac.microstructure import ELASTIC_SENTINEL, LayerSpec, PhaseProperties, build_material_field
from layerfrac.solver import (Model, SolverSettings, State, Workspace, alternate_minimize, assemble_total_energy,
                              _bound_qp_lbfgsb, minimize_u_plastic, solve_bound_qp, solve_damage, solve_displacement,
                              update_plasticity)
from layerfrac.verify import check_gradients

import scipy.sparse as sp


def make_model(L=4.0, H=2.0, delta=0.25, pad=0.5, phase=None, phase2=None, theta=0.0, tau=1.0, ell=0.5,
               kind="structured", seed=0):
    mesh = generate_mesh(L, H, delta, kind=kind, seed=seed)
    p1 = phase or PhaseProperties(E=1.0, nu=0.2, Gc=1.0, sigma0=ELASTIC_SENTINEL)
    p2 = phase2 or p1
    mat = build_material_field(mesh, LayerSpec(theta=theta, tau=tau, phase1=p1, phase2=p2, pad_width=pad))
    return Model(mesh, mat, ell, 1e-6)


def test_zero_fields_have_zero_energy():
    model = make_model()
    en = assemble_total_energy(State.initial(model.mesh), model)
    assert (en.elastic, en.surface, en.plastic) == (0.0, 0.0, 0.0)


def test_surface_energy_of_a_band_matches_loop_oracle():
    model = make_model(kind="jittered-delaunay", seed=2)
    mesh = model.mesh
    st_ = State.initial(mesh)
    band = np.abs(mesh.nodes[:, 0] - 2.0) <= 0.13
    st_.alpha[band] = 1.0
    oracle = 0.0
    for e, tri in enumerate(mesh.elements):
        if not model.damageable[e]:
            continue
        a = st_.alpha[tri]
        grad = a @ mesh.grad_ops[e]
        oracle += 3 * model.mat.Gc[e] / 8 * (a.mean() / model.ell + model.ell * grad @ grad) * mesh.element_area[e]
    en = assemble_total_energy(st_, model)
    assert en.surface == pytest.approx(oracle, rel=1e-12)
    assert en.elastic == 0.0 and en.plastic == 0.0


def test_uniform_uniaxial_strain_energy():
    model = make_model()
    st_ = State.initial(model.mesh)
    st_.u[:, 0] = 0.01 * model.mesh.nodes[:, 0]
    lam, mu = cm.lame_parameters(1.0, 0.2)
    psi = 0.5 * (lam + 2 * mu) * 0.01**2
    en = assemble_total_energy(st_, model)
    assert en.elastic == pytest.approx((1 + 1e-6) * psi * 8.0, rel=1e-12)
    assert en.surface == 0.0 and en.plastic == 0.0


def test_rigid_translation_is_reproduced():
    model = make_model()
    st_ = State.initial(model.mesh)
    bc = np.tile([0.3, -0.2], (len(model.mesh.boundary_nodes), 1))
    u = solve_displacement(st_, model, bc, SolverSettings())
    np.testing.assert_allclose(u, np.tile([0.3, -0.2], (model.mesh.n_nodes, 1)), atol=1e-10)
    st_.u = u
    assert assemble_total_energy(st_, model).elastic == pytest.approx(0.0, abs=1e-20)


def test_linear_field_is_reproduced():
    model = make_model(kind="jittered-delaunay", seed=4)
    x, y = model.mesh.nodes.T
    exact = np.column_stack([0.01 * x, -0.2 / 0.8 * 0.01 * y])
    st_ = State.initial(model.mesh)
    u = solve_displacement(st_, model, exact[model.mesh.boundary_nodes], SolverSettings())
    np.testing.assert_allclose(u, exact, atol=1e-10)


def _dense_oracle_energy(model, bc):
    """Loop-assembled dense stiffness, Dirichlet partition, numpy solve."""
    mesh = model.mesh
    n = 2 * mesh.n_nodes
    K = np.zeros((n, n))
    for e, tri in enumerate(mesh.elements):
        G = mesh.grad_ops[e]
        lam, mu = model.lam[e], model.mu[e]
        D = np.array([[lam + 2 * mu, lam, 0], [lam, lam + 2 * mu, 0], [0, 0, mu]]) * (1 + model.eta)
        B = np.zeros((3, 6))
        for a in range(3):
            B[0, 2 * a] = G[a, 0]
            B[1, 2 * a + 1] = G[a, 1]
            B[2, 2 * a] = G[a, 1]
            B[2, 2 * a + 1] = G[a, 0]
        dofs = np.ravel([[2 * v, 2 * v + 1] for v in tri])
        K[np.ix_(dofs, dofs)] += mesh.element_area[e] * B.T @ D @ B
    fixed = np.ravel([[2 * v, 2 * v + 1] for v in mesh.boundary_nodes])
    free = np.setdiff1d(np.arange(n), fixed)
    u = np.zeros(n)
    u[fixed] = bc.ravel()
    u[free] = np.linalg.solve(K[np.ix_(free, free)], -K[np.ix_(free, fixed)] @ u[fixed])
    return 0.5 * u @ K @ u


def test_surfing_solve_matches_dense_oracle():
    model = make_model(L=2.0, H=1.0, delta=0.125, pad=0.25, kind="jittered-delaunay", seed=1)
    assert model.mesh.n_nodes <= 200
    spp = SurfingParams(x0=0.8, y0=0.5)
    bc = boundary_values(model.mesh, 0.0, spp)
    st_ = State.initial(model.mesh)
    st_.u = solve_displacement(st_, model, bc, SolverSettings(lin_tol=1e-12))
    assert assemble_total_energy(st_, model).elastic == pytest.approx(_dense_oracle_energy(model, bc), rel=1e-8)


def test_energy_gradients_match_finite_differences():
    check = check_gradients()
    assert check.passed, check.detail


def plastic_model():
    return make_model(phase=PhaseProperties(E=1.0, nu=0.2, Gc=1.0, sigma0=0.3),
                      phase2=PhaseProperties(E=2.0, nu=0.3, Gc=1.0, sigma0=0.5))


def test_update_plasticity_below_yield_is_identity():
    model = plastic_model()
    st_ = State.initial(model.mesh)
    st_.u[:, 0] = 1e-4 * model.mesh.nodes[:, 0]
    new, yielding = update_plasticity(st_, model)
    assert not yielding.any()
    np.testing.assert_array_equal(new.eps_p, 0.0)


def test_update_plasticity_is_local():
    model = plastic_model()
    mesh = model.mesh
    e = int(np.flatnonzero(model.damageable)[10])
    st_ = State.initial(mesh)
    v = mesh.elements[e, 0]
    # move one node of a single element far enough to yield only elements touching it
    st_.u[v, 0] = 0.5
    new, yielding = update_plasticity(st_, model)
    touching = np.any(mesh.elements == v, axis=1)
    assert yielding[e]
    assert not yielding[~touching].any()
    np.testing.assert_array_equal(new.eps_p[~touching], 0.0)


def test_update_plasticity_matches_pointwise_calls(rng):
    model = plastic_model()
    mesh = model.mesh
    st_ = State.initial(mesh)
    st_.u = rng.normal(scale=0.05, size=st_.u.shape)
    st_.alpha = rng.uniform(0, 0.8, size=mesh.n_nodes)
    new, _ = update_plasticity(st_, model)
    eps = model.strain(st_.u)
    for e in range(0, mesh.n_elements, 7):
        prev = cm.PlasticPointState(st_.plastic_prev.eps_p[e], st_.plastic_prev.p[e])
        if model.damageable[e]:
            ref, _ = cm.return_map(eps[e], prev, st_.alpha[mesh.elements[e]].mean(), model.eta,
                                   model.mu[e], model.mat.sigma0[e])
            np.testing.assert_allclose(new.eps_p[e], ref.eps_p, atol=1e-15)
        else:
            np.testing.assert_array_equal(new.eps_p[e], 0.0)


def test_damage_vanishes_without_driving_force():
    model = make_model()
    st_ = State.initial(model.mesh)
    alpha = solve_damage(st_, model, SolverSettings())
    np.testing.assert_array_equal(alpha, 0.0)


def test_damage_lower_bound_is_active():
    model = make_model()
    st_ = State.initial(model.mesh)
    node = int(np.argmin(np.hypot(*(model.mesh.nodes - [2.0, 1.0]).T)))
    st_.alpha_lower[node] = 0.3
    st_.alpha[node] = 0.3
    alpha = solve_damage(st_, model, SolverSettings(overrelax=1.0))
    assert alpha[node] == pytest.approx(0.3, abs=1e-12)
    assert np.all(alpha >= st_.alpha_lower)


@given(a=st.floats(0.1, 5), psi=st.floats(0.01, 5), c=st.floats(0.0, 20))
def test_one_node_damage_closed_form(a, psi, c):
    # a (1 - x)^2 psi + c x = const + (c - 2 a psi) x + a psi x^2
    H = sp.csr_matrix([[2 * a * psi]])
    x, _ = solve_bound_qp(H, np.array([c - 2 * a * psi]), np.array([0.5]), np.array([0.0]), np.array([1.0]),
                          tol=1e-12)
    assert x[0] == pytest.approx(max(0.0, 1 - c / (2 * a * psi)), abs=1e-8)


def test_bound_qp_matches_dense_projected_oracle(rng):
    n = 12
    M = rng.normal(size=(n, n))
    H = M @ M.T + n * np.eye(n)
    c = rng.normal(scale=10, size=n)
    lb, ub = np.zeros(n), np.ones(n)
    x, _ = solve_bound_qp(sp.csr_matrix(H), c, np.full(n, 0.5), lb, ub, tol=1e-12)
    # independent oracle: projected gradient with a fixed small step to convergence
    y = np.full(n, 0.5)
    step = 1.0 / np.linalg.eigvalsh(H).max()
    for _ in range(20000):
        y = np.clip(y - step * (H @ y + c), lb, ub)
    np.testing.assert_allclose(x, y, atol=1e-8)


def _enumerated_bound_qp(H, c, lb, ub):
    """Exact minimizer by trying every lower/upper/free assignment of a tiny problem."""
    n = len(c)
    for code in itertools.product((0, 1, 2), repeat=n):
        code = np.array(code)
        x = np.where(code == 0, lb, ub).astype(float)
        free = np.flatnonzero(code == 2)
        if len(free):
            fixed = np.flatnonzero(code != 2)
            x[free] = np.linalg.solve(H[np.ix_(free, free)], -c[free] - H[np.ix_(free, fixed)] @ x[fixed])
        g = H @ x + c
        if (np.all(x >= lb - 1e-12) and np.all(x <= ub + 1e-12) and np.all(g[code == 0] >= -1e-12)
                and np.all(g[code == 1] <= 1e-12) and np.all(np.abs(g[free]) <= 1e-9)):
            return x
    raise AssertionError("no KKT point found")


@pytest.mark.parametrize("solver", ["projected_newton", "lbfgsb_fallback"])
def test_badly_scaled_bound_qp_matches_enumeration(rng, solver):
    n = 7
    M = rng.normal(size=(n, n))
    scale = np.sqrt(np.logspace(0, 2, n))
    H = scale[:, None] * (M @ M.T + np.eye(n)) * scale[None, :]
    c = rng.normal(scale=30, size=n)
    lb, ub = np.zeros(n), np.ones(n)
    x0 = np.full(n, 0.5)
    if solver == "projected_newton":
        x, _ = solve_bound_qp(sp.csr_matrix(H), c, x0, lb, ub, tol=1e-10)
    else:
        x, _ = _bound_qp_lbfgsb(sp.csr_matrix(H), c, x0, lb, ub, 1e-8, 200)
    np.testing.assert_allclose(x, _enumerated_bound_qp(H, c, lb, ub), atol=1e-6)


def test_small_load_converges_quickly_without_damage():
    model = make_model(L=8.0, H=4.0, pad=1.0, phase=PhaseProperties(sigma0=0.625))
    st_ = State.initial(model.mesh)
    bc = boundary_values(model.mesh, 0.0, SurfingParams(x0=4.0, y0=2.0, amplitude_scale=1e-3))
    res = alternate_minimize(st_, model, bc, SolverSettings())
    assert res.converged and res.iterations <= 2
    np.testing.assert_array_equal(st_.alpha, 0.0)
    np.testing.assert_array_equal(st_.plastic.eps_p, 0.0)


# --- short plastic simulation shared by the evolution invariants ---------------------

@pytest.fixture(scope="module")
def evolution():
    """Homogeneous r_y = 2 run on a small domain: records every step and its half-step energies."""
    ell = 0.5
    sigma0 = cm.yield_strength_for_ratio(1.0, 0.2, 1.0, ell, 2.0)
    model = make_model(L=12.0, H=6.0, pad=1.5, phase=PhaseProperties(sigma0=sigma0), ell=ell)
    spp = SurfingParams(x0=1.5 + 2 * ell, y0=3.0)
    st_ = State.initial(model.mesh)
    seeded = seed_initial_crack(st_, model.mesh, ell, spp, 0.0)
    steps = []

    def keep(res):
        steps.append((res.t, res.state.copy(), list(res.energies), res.converged))

    march(st_, model, spp, Schedule(0.0, 3.0, 0.5), SolverSettings(am_tol=1e-4), on_step=keep)
    return model, seeded, steps


def test_energy_monotone_every_half_step(evolution):
    _, _, steps = evolution
    for t, _, energies, _ in steps:
        e = np.asarray(energies)
        slack = 1e-10 * np.abs(e).max()
        assert np.all(np.diff(e) <= slack), f"energy rose at t={t}"


def test_plastic_strain_is_traceless(evolution):
    _, _, steps = evolution
    for _, s, _, _ in steps:
        assert np.abs(cm.trace(s.plastic.eps_p)).max() <= 1e-12


def test_damage_irreversible_nodewise(evolution):
    _, seeded, steps = evolution
    prev = None
    for _, s, _, _ in steps:
        assert np.all(s.alpha[seeded] == 1.0)
        if prev is not None:
            assert np.all(s.alpha >= prev.alpha)
        prev = s


def test_pad_protection(evolution):
    model, seeded, steps = evolution
    pad_nodes = np.zeros(model.mesh.n_nodes, bool)
    pad_nodes[model.mesh.elements[~model.damageable].ravel()] = True
    expected = np.zeros(model.mesh.n_nodes)
    expected[seeded] = 1.0
    for _, s, _, _ in steps:
        np.testing.assert_array_equal(s.alpha[pad_nodes], expected[pad_nodes])
        assert np.all(s.plastic.p[~model.damageable] == 0.0)


def test_evolution_grows_the_crack_and_yields(evolution):
    _, _, steps = evolution
    last = steps[-1][1]
    assert all(conv for *_, conv in steps)
    assert last.plastic.p.max() > 1e-3
    assert np.count_nonzero(last.alpha > 0.95) > np.count_nonzero(steps[0][1].alpha > 0.95)


def test_local_sweeps_reach_the_plain_alternate_minimization_result():
    ell = 0.5
    model = make_model(L=12.0, H=6.0, pad=1.5, phase=PhaseProperties(sigma0=ELASTIC_SENTINEL), ell=ell)
    spp = SurfingParams(x0=1.5 + 2 * ell, y0=3.0)
    results = []
    for s in (SolverSettings(am_tol=1e-6, overrelax=1.0, local_radius=0.0),
              SolverSettings(am_tol=1e-6)):
        st_ = State.initial(model.mesh)
        seed_initial_crack(st_, model.mesh, ell, spp, 0.0)
        march(st_, model, spp, Schedule(0.0, 1.5, 0.5), s)
        results.append(st_)
    plain, fast = results
    assert np.abs(plain.alpha - fast.alpha).max() < 1e-3
    e_plain = assemble_total_energy(plain, model).total
    e_fast = assemble_total_energy(fast, model).total
    assert e_fast == pytest.approx(e_plain, rel=1e-5)


def test_wake_cluster_count_never_drops_along_the_run(evolution):
    model, _, steps = evolution
    counts = [wake_clusters(s, model) for _, s, _, _ in steps]
    assert counts == sorted(counts)
