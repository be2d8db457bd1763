"""Legacy ASCII VTK snapshots of the nodal and element fields."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import constitutive as cm
from .solver import Model, State, element_fields

HEADER = "# vtk DataFile Version 3.0"
VTK_TRIANGLE = 5


@dataclass
class VtkData:
    points: np.ndarray
    cells: np.ndarray
    point_data: dict[str, np.ndarray] = field(default_factory=dict)
    cell_data: dict[str, np.ndarray] = field(default_factory=dict)
    title: str = ""

    @property
    def n_points(self) -> int:
        return len(self.points)


def element_energy_density(state: State, model: Model) -> np.ndarray:
    """Degraded elastic plus degraded plastic energy density per element."""
    _, abar, psi = element_fields(state, model)
    plastic = np.where(model.damageable, cm.plastic_factor(abar) * model.mat.sigma0 * state.plastic.p, 0.0)
    return cm.stiffness_factor(abar, model.eta) * psi + plastic


def _fmt(a: np.ndarray) -> str:
    return "\n".join(" ".join(repr(float(v)) for v in row) for row in np.atleast_2d(a))


def write_snapshot(state: State, model: Model, path, title: str | None = None) -> Path:
    """Write ``u``, ``alpha`` (points) and ``p``, ``phase_id``, ``energy_density`` (cells)."""
    path = Path(path)
    mesh = model.mesh
    pts = np.column_stack([mesh.nodes, np.zeros(mesh.n_nodes)])
    u3 = np.column_stack([state.u, np.zeros(mesh.n_nodes)])
    title = title or f"layerfrac snapshot t={state.t!r}"
    lines = [
        HEADER,
        title.replace("\n", " ")[:255],
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {mesh.n_nodes} double",
        _fmt(pts),
        f"CELLS {mesh.n_elements} {4 * mesh.n_elements}",
        "\n".join(f"3 {a} {b} {c}" for a, b, c in mesh.elements),
        f"CELL_TYPES {mesh.n_elements}",
        "\n".join([str(VTK_TRIANGLE)] * mesh.n_elements),
        f"POINT_DATA {mesh.n_nodes}",
        "VECTORS u double",
        _fmt(u3),
        "SCALARS alpha double 1",
        "LOOKUP_TABLE default",
        "\n".join(repr(float(v)) for v in state.alpha),
        f"CELL_DATA {mesh.n_elements}",
        "SCALARS p double 1",
        "LOOKUP_TABLE default",
        "\n".join(repr(float(v)) for v in state.plastic.p),
        "SCALARS phase_id int 1",
        "LOOKUP_TABLE default",
        "\n".join(str(int(v)) for v in model.mat.phase_id),
        "SCALARS energy_density double 1",
        "LOOKUP_TABLE default",
        "\n".join(repr(float(v)) for v in element_energy_density(state, model)),
    ]
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="ascii")
    return path


def read_snapshot(path) -> VtkData:
    """Read a file written by :func:`write_snapshot` (and similar legacy ASCII grids)."""
    tokens = Path(path).read_text(encoding="ascii").split("\n")
    if not tokens or tokens[0].strip() != HEADER:
        raise ValueError(f"{path}: not a legacy VTK 3.0 file")
    title = tokens[1]
    words = " ".join(tokens[2:]).split()
    pos = 0

    def take(n):
        nonlocal pos
        out = words[pos:pos + n]
        pos += n
        return out

    data = VtkData(np.empty((0, 2)), np.empty((0, 3), dtype=int), title=title)
    target = None
    while pos < len(words):
        key = take(1)[0].upper()
        if key in ("ASCII", "DATASET"):
            if key == "DATASET":
                take(1)
        elif key == "POINTS":
            n = int(take(2)[0])
            data.points = np.array(take(3 * n), dtype=float).reshape(n, 3)[:, :2]
        elif key == "CELLS":
            n, size = (int(v) for v in take(2))
            raw = np.array(take(size), dtype=int).reshape(n, 4)
            data.cells = raw[:, 1:]
        elif key == "CELL_TYPES":
            take(int(take(1)[0]))
        elif key == "POINT_DATA":
            take(1)
            target = data.point_data
        elif key == "CELL_DATA":
            take(1)
            target = data.cell_data
        elif key == "VECTORS":
            name, _ = take(2)
            n = len(data.points) if target is data.point_data else len(data.cells)
            target[name] = np.array(take(3 * n), dtype=float).reshape(n, 3)[:, :2]
        elif key == "SCALARS":
            name, dtype, _ = take(3)
            take(2)  # LOOKUP_TABLE default
            n = len(data.points) if target is data.point_data else len(data.cells)
            target[name] = np.array(take(n), dtype=int if dtype == "int" else float)
        else:
            raise ValueError(f"{path}: unexpected token {key!r}")
    return data
