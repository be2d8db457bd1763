"""Triangulated rectangles and P1 element operators."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.spatial import Delaunay

JITTER_FRACTION = 0.3
_BOUNDARY_TOL = 1e-12


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class Mesh:
    """Linear triangle mesh of the rectangle ``[0, L] x [0, H]``.

    ``grad_ops[e, a]`` is the constant gradient of the hat function of the
    ``a``-th vertex of element ``e``.
    """

    nodes: np.ndarray
    elements: np.ndarray
    element_area: np.ndarray
    grad_ops: np.ndarray
    boundary_nodes: np.ndarray
    target_h: float
    L: float
    H: float
    centroids: np.ndarray = field(repr=False)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    def edge_lengths(self) -> np.ndarray:
        x = self.nodes[self.elements]
        return np.linalg.norm(x - np.roll(x, -1, axis=1), axis=2).ravel()

    def element_neighbors(self) -> tuple[np.ndarray, np.ndarray]:
        """Pairs of elements sharing an edge, as two index arrays."""
        e = self.elements
        edges = np.concatenate([e[:, [0, 1]], e[:, [1, 2]], e[:, [2, 0]]])
        edges.sort(axis=1)
        owner = np.tile(np.arange(len(e)), 3)
        order = np.lexsort((edges[:, 1], edges[:, 0]))
        edges, owner = edges[order], owner[order]
        same = np.all(edges[1:] == edges[:-1], axis=1)
        return owner[:-1][same], owner[1:][same]


def signed_areas(nodes: np.ndarray, elements: np.ndarray) -> np.ndarray:
    x = nodes[elements]
    d1 = x[:, 1] - x[:, 0]
    d2 = x[:, 2] - x[:, 0]
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def shape_gradients(nodes, elements=None) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(grads, areas)`` for P1 triangles.

    Accepts either a :class:`Mesh` or raw ``(nodes, elements)`` arrays.
    ``grads`` has shape ``(n_elements, 3, 2)``. Raises :class:`MeshError` on
    zero-area elements.
    """
    if isinstance(nodes, Mesh):
        nodes, elements = nodes.nodes, nodes.elements
    nodes = np.asarray(nodes, dtype=float)
    elements = np.asarray(elements)
    area = signed_areas(nodes, elements)
    if np.any(np.abs(area) <= 1e-14 * max(1.0, np.abs(area).max(initial=0.0))):
        raise MeshError("zero-area element in mesh")
    x = nodes[elements]
    # b_a = y_b - y_c, c_a = x_c - x_b for cyclic (a, b, c)
    xb, xc = np.roll(x, -1, axis=1), np.roll(x, -2, axis=1)
    grads = np.stack([xb[..., 1] - xc[..., 1], xc[..., 0] - xb[..., 0]], axis=-1)
    grads /= (2.0 * area)[:, None, None]
    return grads, np.abs(area)


def _finalize(nodes: np.ndarray, elements: np.ndarray, L: float, H: float, delta: float) -> Mesh:
    area = signed_areas(nodes, elements)
    flip = area < 0
    elements = elements.copy()
    elements[flip] = elements[flip][:, [0, 2, 1]]

    # renumber nodes lexicographically (x then y) so assembly does not depend on generator order
    order = np.lexsort((nodes[:, 1], nodes[:, 0]))
    inverse = np.empty_like(order)
    inverse[order] = np.arange(len(order))
    nodes = nodes[order]
    elements = inverse[elements]
    # canonical element order: sort by smallest vertex, rotate so smallest vertex first
    rot = np.argmin(elements, axis=1)
    idx = (rot[:, None] + np.arange(3)[None, :]) % 3
    elements = np.take_along_axis(elements, idx, axis=1)
    elements = elements[np.lexsort((elements[:, 2], elements[:, 1], elements[:, 0]))]

    grads, area = shape_gradients(nodes, elements)
    on_bnd = (
        (np.abs(nodes[:, 0]) <= _BOUNDARY_TOL)
        | (np.abs(nodes[:, 0] - L) <= _BOUNDARY_TOL)
        | (np.abs(nodes[:, 1]) <= _BOUNDARY_TOL)
        | (np.abs(nodes[:, 1] - H) <= _BOUNDARY_TOL)
    )
    nodes.setflags(write=False)
    elements.setflags(write=False)
    for arr in (grads, area):
        arr.setflags(write=False)
    centroids = nodes[elements].mean(axis=1)
    centroids.setflags(write=False)
    bnodes = np.flatnonzero(on_bnd)
    bnodes.setflags(write=False)
    return Mesh(
        nodes=nodes,
        elements=elements,
        element_area=area,
        grad_ops=grads,
        boundary_nodes=bnodes,
        target_h=float(delta),
        L=float(L),
        H=float(H),
        centroids=centroids,
    )


def _grid(L: float, H: float, delta: float) -> tuple[np.ndarray, int, int]:
    nx = max(1, int(round(L / delta)))
    ny = max(1, int(round(H / delta)))
    xs = np.linspace(0.0, L, nx + 1)
    ys = np.linspace(0.0, H, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    # exact boundary coordinates
    X[-1, :] = L
    Y[:, -1] = H
    return np.column_stack([X.ravel(), Y.ravel()]), nx, ny


def _structured(L: float, H: float, delta: float) -> tuple[np.ndarray, np.ndarray]:
    nodes, nx, ny = _grid(L, H, delta)
    i, j = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    i, j = i.ravel(), j.ravel()
    n00 = i * (ny + 1) + j
    n10 = n00 + (ny + 1)
    n01 = n00 + 1
    n11 = n10 + 1
    # alternate the diagonal in a checkerboard so there is no preferred direction
    alt = (i + j) % 2 == 1
    t1 = np.where(alt[:, None], np.column_stack([n00, n10, n01]), np.column_stack([n00, n10, n11]))
    t2 = np.where(alt[:, None], np.column_stack([n10, n11, n01]), np.column_stack([n00, n11, n01]))
    return nodes, np.concatenate([t1, t2])


def _jittered(L: float, H: float, delta: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    nodes, nx, ny = _grid(L, H, delta)
    rng = np.random.default_rng(seed)
    hx, hy = L / nx, H / ny
    jit = rng.uniform(-JITTER_FRACTION, JITTER_FRACTION, size=nodes.shape) * np.array([hx, hy])
    x, y = nodes[:, 0], nodes[:, 1]
    on_x = (np.abs(x) <= _BOUNDARY_TOL) | (np.abs(x - L) <= _BOUNDARY_TOL)
    on_y = (np.abs(y) <= _BOUNDARY_TOL) | (np.abs(y - H) <= _BOUNDARY_TOL)
    # boundary nodes slide only along their edge; corners stay put
    jit[on_x, 0] = 0.0
    jit[on_y, 1] = 0.0
    nodes = nodes + jit
    tri = Delaunay(nodes, qhull_options="Qbb Qc Qz Q12")
    elements = tri.simplices.astype(np.int64)
    area = np.abs(signed_areas(nodes, elements))
    elements = elements[area > 1e-10 * delta * delta]
    return nodes, elements


def generate_mesh(L: float, H: float, delta: float, kind: str = "structured", seed: int = 0) -> Mesh:
    """Triangulate ``[0, L] x [0, H]`` with nominal element size ``delta``.

    ``kind`` is ``"structured"`` (right triangles with alternating diagonals)
    or ``"jittered-delaunay"`` (grid nodes perturbed by up to 0.3 delta, then
    Delaunay-triangulated).
    """
    if not (L > 0 and H > 0):
        raise MeshError(f"domain must have positive size, got L={L}, H={H}")
    if not (0 < delta <= min(L, H) / 2):
        raise MeshError(f"element size delta={delta} must lie in (0, min(L,H)/2]")
    if kind == "structured":
        nodes, elements = _structured(L, H, delta)
        return _finalize(nodes, elements, L, H, delta)
    if kind != "jittered-delaunay":
        raise MeshError(f"unknown mesh kind {kind!r}")

    last_err: Exception | None = None
    for attempt in range(4):
        try:
            nodes, elements = _jittered(L, H, delta, seed + 7919 * attempt)
            mesh = _finalize(nodes, elements, L, H, delta)
        except (MeshError, RuntimeError, ValueError) as err:  # qhull raises QhullError(RuntimeError)
            last_err = err
            continue
        if abs(mesh.element_area.sum() - L * H) <= 1e-10 * L * H:
            return mesh
        last_err = MeshError("triangulation does not cover the rectangle")
    raise MeshError(f"triangulation failed after retries: {last_err}")


def locate_phase_elements(mesh: Mesh, region: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Indices of elements whose centroid satisfies ``region``.

    ``region`` receives an ``(n, 2)`` array of centroids and returns booleans.
    """
    mask = np.asarray(region(mesh.centroids), dtype=bool)
    if mask.shape == ():
        mask = np.full(mesh.n_elements, bool(mask))
    return np.flatnonzero(mask)
