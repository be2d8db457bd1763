import numpy as np
import pytest
from hypothesis import given, strategies as st

from layerfrac.mesh import MeshError, generate_mesh, locate_phase_elements, shape_gradients, signed_areas


def test_structured_total_area_is_exact():
    mesh = generate_mesh(4.0, 2.0, 1.0, kind="structured", seed=0)
    assert mesh.element_area.sum() == pytest.approx(8.0, rel=0, abs=1e-14)


def test_structured_elements_are_half_cells():
    mesh = generate_mesh(4.0, 2.0, 1.0, kind="structured", seed=0)
    np.testing.assert_allclose(mesh.element_area, 0.5, atol=1e-14)


def test_jittered_mesh_is_deterministic():
    a = generate_mesh(60.0, 20.0, 0.25, kind="jittered-delaunay", seed=7)
    b = generate_mesh(60.0, 20.0, 0.25, kind="jittered-delaunay", seed=7)
    assert a.n_nodes == b.n_nodes
    np.testing.assert_array_equal(a.nodes, b.nodes)
    np.testing.assert_array_equal(a.elements, b.elements)


def test_different_seeds_give_different_jitter():
    a = generate_mesh(10.0, 5.0, 0.5, kind="jittered-delaunay", seed=1)
    b = generate_mesh(10.0, 5.0, 0.5, kind="jittered-delaunay", seed=2)
    assert a.nodes.shape != b.nodes.shape or not np.array_equal(a.nodes, b.nodes)


@pytest.mark.parametrize("kind", ["structured", "jittered-delaunay"])
def test_median_edge_close_to_delta(kind):
    mesh = generate_mesh(12.0, 6.0, 0.3, kind=kind, seed=3)
    med = np.median(mesh.edge_lengths())
    assert abs(med - 0.3) <= 0.25 * 0.3


def test_unit_triangle_gradients():
    nodes = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    grads, area = shape_gradients(nodes, np.array([[0, 1, 2]]))
    np.testing.assert_allclose(grads[0], [[-1, -1], [1, 0], [0, 1]], atol=1e-15)
    assert area[0] == pytest.approx(0.5)


def test_zero_area_element_rejected():
    nodes = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
    with pytest.raises(MeshError):
        shape_gradients(nodes, np.array([[0, 1, 2]]))


@pytest.mark.parametrize("args", [(0.0, 1.0, 0.1), (4.0, -1.0, 0.1), (4.0, 2.0, 0.0), (4.0, 2.0, 1.5)])
def test_degenerate_parameters_rejected(args):
    with pytest.raises(MeshError):
        generate_mesh(*args)


def test_unknown_kind_rejected():
    with pytest.raises(MeshError):
        generate_mesh(4.0, 2.0, 0.5, kind="quad")


def test_locate_phase_elements_predicates():
    mesh = generate_mesh(4.0, 2.0, 0.5, kind="structured")
    assert len(locate_phase_elements(mesh, lambda c: np.ones(len(c), bool))) == mesh.n_elements
    assert len(locate_phase_elements(mesh, lambda c: c[:, 0] < 0)) == 0
    upper = locate_phase_elements(mesh, lambda c: c[:, 1] > 1.0)
    assert len(upper) == mesh.n_elements // 2


def test_orientation_is_counterclockwise():
    mesh = generate_mesh(6.0, 3.0, 0.4, kind="jittered-delaunay", seed=5)
    assert np.all(signed_areas(mesh.nodes, mesh.elements) > 0)


@given(
    L=st.floats(2.0, 8.0), H=st.floats(2.0, 8.0), frac=st.floats(0.05, 0.2),
    kind=st.sampled_from(["structured", "jittered-delaunay"]), seed=st.integers(0, 50),
)
def test_area_conservation_and_partition_of_unity(L, H, frac, kind, seed):
    delta = frac * min(L, H)
    mesh = generate_mesh(L, H, delta, kind=kind, seed=seed)
    assert mesh.element_area.sum() == pytest.approx(L * H, rel=1e-10)
    np.testing.assert_allclose(mesh.grad_ops.sum(axis=1), 0.0, atol=1e-9 / delta)


@given(a=st.floats(-2, 2), b=st.floats(-2, 2), c=st.floats(-2, 2), d=st.floats(-2, 2), seed=st.integers(0, 20))
def test_linear_fields_give_exact_constant_gradients(a, b, c, d, seed):
    mesh = generate_mesh(3.0, 2.0, 0.4, kind="jittered-delaunay", seed=seed)
    x, y = mesh.nodes.T
    u = np.column_stack([a * x + b * y, c * x + d * y])
    grad = np.einsum("eai,eaj->eij", u[mesh.elements], mesh.grad_ops)
    np.testing.assert_allclose(grad, np.broadcast_to([[a, b], [c, d]], grad.shape), atol=1e-10)


def test_element_neighbors_share_an_edge():
    mesh = generate_mesh(3.0, 2.0, 0.5, kind="structured")
    a, b = mesh.element_neighbors()
    for i, j in zip(a, b):
        assert len(set(mesh.elements[i]) & set(mesh.elements[j])) == 2
