import numpy as np
import pytest
from hypothesis import given, strategies as st

from layerfrac import analysis as an
from layerfrac.analysis import (AnalysisError, JDomainSpec, TimeSeriesRecord, crack_path, default_j_domains,
                                effective_toughness, j_integral, rise_drop_cycles, sweep_angles, wake_clusters)
from layerfrac.loading import SurfingParams, seed_initial_crack
from layerfrac.mesh import generate_mesh
from layerfrac.microstructure import ELASTIC_SENTINEL, LayerSpec, PhaseProperties, build_material_field
from layerfrac.solver import Model, State
from layerfrac.verify import fictitious_crack_J


def _model(L=12.0, H=6.0, pad=1.5, delta=0.25):
    mesh = generate_mesh(L, H, delta)
    ph = PhaseProperties(sigma0=ELASTIC_SENTINEL)
    mat = build_material_field(mesh, LayerSpec(theta=0.0, tau=2.0, phase1=ph, phase2=ph, pad_width=pad))
    return Model(mesh, mat, 0.5, 1e-6)


def _rec(t, J):
    return TimeSeriesRecord(t, J, 0.0, 0.0, 0.0, t, t)


def test_zero_state_gives_zero_J():
    model = _model()
    ring, _ = default_j_domains(1.5, 0.25)
    assert j_integral(State.initial(model.mesh), model, ring) == 0.0


def test_ring_in_damageable_region_rejected():
    model = _model()
    with pytest.raises(AnalysisError):
        j_integral(State.initial(model.mesh), model, JDomainSpec(outer=1.0, inner=2.5))


def test_tip_outside_inner_rectangle_rejected():
    model = _model()
    ring, _ = default_j_domains(1.5, 0.25)
    with pytest.raises(AnalysisError):
        j_integral(State.initial(model.mesh), model, ring, tip_x=0.1)


def test_bad_domain_specs():
    with pytest.raises(AnalysisError):
        JDomainSpec(outer=1.0, inner=0.5)
    with pytest.raises(AnalysisError):
        default_j_domains(1.0, 0.25)


def test_default_rings_are_nested_inside_the_pad():
    a, b = default_j_domains(4.0, 0.25)
    assert 0 <= a.outer < a.inner <= b.outer < b.inner <= 4.0 - 0.25


@pytest.fixture(scope="module")
def fictitious():
    return fictitious_crack_J((20.0,)), fictitious_crack_J((20.0,), amplitude_scale=1.5)


def test_fictitious_crack_J_matches_Gc_ref(fictitious):
    (ja, jb), = fictitious[0]
    assert ja == pytest.approx(1.0, rel=0.05)
    assert ja == pytest.approx(jb, rel=0.02)


def test_J_scales_with_amplitude_squared(fictitious):
    (j1, _), = fictitious[0]
    (j15, _), = fictitious[1]
    assert j15 == pytest.approx(2.25 * j1, rel=0.01)


def test_effective_toughness_examples():
    assert effective_toughness([_rec(t, 1.15) for t in range(5)], (0, 4)) == 1.15
    saw = [_rec(t, v) for t, v in enumerate([1.0, 1.3, 1.1, 1.4, 1.2])]
    assert effective_toughness(saw, (0, 4)) == 1.4
    assert effective_toughness(saw, (0, 2)) == 1.3
    with pytest.raises(AnalysisError):
        effective_toughness(saw, (10, 20))
    with pytest.raises(AnalysisError):
        effective_toughness([], None)


def test_wake_clusters_counts():
    model = _model()
    st_ = State.initial(model.mesh)
    assert wake_clusters(st_, model) == 0
    inner = np.flatnonzero(model.damageable)
    c = model.mesh.centroids
    e1 = inner[np.argmin(np.hypot(*(c[inner] - [4.0, 3.0]).T))]
    e2 = inner[np.argmin(np.hypot(*(c[inner] - [8.0, 3.0]).T))]
    st_.plastic.p[[e1, e2]] = 0.01
    assert wake_clusters(st_, model) == 2
    # a chain of neighbours joins into one cluster
    a, b = model.mesh.element_neighbors()
    nb = b[a == e1][0] if np.any(a == e1) else a[b == e1][0]
    st_.plastic.p[nb] = 0.01
    assert wake_clusters(st_, model) == 2
    st_.plastic.p[[e1, e2]] = 1e-4  # below the 0.1% threshold
    assert wake_clusters(st_, model) == 1


def test_wake_clusters_optionally_skip_broken_band():
    model = _model()
    st_ = State.initial(model.mesh)
    inner = np.flatnonzero(model.damageable)
    c = model.mesh.centroids
    e = inner[np.argmin(np.hypot(*(c[inner] - [6.0, 3.0]).T))]
    st_.plastic.p[e] = 0.05
    assert wake_clusters(st_, model) == 1
    st_.alpha[model.mesh.elements[e]] = 1.0
    assert wake_clusters(st_, model) == 1
    assert wake_clusters(st_, model, crack_threshold=0.95) == 0


def test_straight_seed_gives_straight_path():
    model = _model()
    st_ = State.initial(model.mesh)
    seed_initial_crack(st_, model.mesh, 0.5, SurfingParams(x0=8.0, y0=3.0), 0.0)
    path = crack_path(st_, model)
    ok = np.isfinite(path.y)
    assert ok.sum() >= (8.0 - 1.5) / 0.25 - 1
    assert path.max_deviation(3.0) <= 0.25
    assert np.all(~ok[path.x > 8.5])


def test_rise_drop_cycles():
    assert rise_drop_cycles(np.array([1.0, 1.1, 1.2, 1.3])) == 0
    assert rise_drop_cycles(np.array([1.0, 1.5, 1.0, 1.5, 1.0, 1.5, 1.0])) == 3
    assert rise_drop_cycles(np.array([1.0, 1.5, 1.4, 1.45, 1.4])) == 0
    # a long decline after one peak counts once
    assert rise_drop_cycles(np.array([2.0, 1.7, 1.5, 1.2, 1.0])) == 1


@given(st.lists(st.floats(0.5, 2.0), min_size=2, max_size=40))
def test_cycles_bounded_by_local_maxima(values):
    J = np.array(values)
    peaks = 1 + np.count_nonzero((J[1:-1] > J[:-2]) & (J[1:-1] >= J[2:]))
    assert rise_drop_cycles(J) <= peaks


def test_sweep_of_no_angles_is_empty():
    assert sweep_angles(None, []) == []


def test_sweep_records_failures_per_row(monkeypatch):
    from layerfrac import simulation
    from layerfrac.config import desk_config

    class Boom(RuntimeError):
        pass

    def fake_run(cfg, out_dir=None):
        if cfg.phases.theta > 1.0:
            raise Boom("diverged")
        return original(cfg, out_dir)

    def original(cfg, out_dir):
        raise Boom("should not be reached in this test")

    calls = []
    monkeypatch.setattr(simulation, "run_quasistatic", lambda cfg, out_dir=None: calls.append(cfg.phases.theta) or fake_run(cfg))
    rows = sweep_angles(desk_config(), [1.5, 1.2])
    assert [r.theta for r in rows] == [1.2, 1.5]
    assert all(not r.converged and "diverged" in r.error for r in rows)
    assert sorted(calls) == [1.2, 1.5]


def test_plateau_inside_a_drop_is_not_a_new_cycle():
    assert rise_drop_cycles(np.array([2.0, 1.0, 1.0, 0.5])) == 1
    assert rise_drop_cycles(np.array([2.0, 1.0, 1.5, 1.0])) == 2
