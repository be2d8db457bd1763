"""Surfing boundary condition, crack seeding and quasistatic time stepping."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .mesh import Mesh
from .solver import Model, SolverSettings, State, Workspace, alternate_minimize, assemble_total_energy

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SurfingParams:
    E_ref: float = 1.0
    nu_ref: float = 0.2
    Gc_ref: float = 1.0
    V: float = 1.0
    x0: float = 0.0
    y0: float = 0.0
    amplitude_scale: float = 1.0

    def __post_init__(self):
        if not self.V > 0:
            raise ValueError("surfing velocity V must be positive")

    def tip(self, t: float) -> tuple[float, float]:
        return self.x0 + self.V * t, self.y0


@dataclass(frozen=True)
class Schedule:
    t_start: float
    t_end: float
    dt: float

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.t_end > self.t_start:
            raise ValueError("t_end must exceed t_start")

    def times(self) -> np.ndarray:
        n = int(np.floor((self.t_end - self.t_start) / self.dt + 1e-9))
        return self.t_start + self.dt * np.arange(n + 1)


def surfing_displacement(z, t: float, sp: SurfingParams) -> np.ndarray:
    """Mode-I opening field translating with the nominal tip ``(x0 + V t, y0)``.

    ``z`` is one point or an ``(n, 2)`` array. The angle is measured in
    ``(-pi, pi]`` so the displacement jump sits on the crack line behind the tip.
    """
    z = np.asarray(z, dtype=float)
    dx = z[..., 0] - (sp.x0 + sp.V * t)
    dy = z[..., 1] - sp.y0
    r = np.hypot(dx, dy)
    phi = np.arctan2(dy, dx)
    # arctan2(-0.0, x<0) gives -pi; keep the upper-face value on the cut
    phi = np.where((dy == 0) & (dx < 0), np.pi, phi)
    amp = sp.amplitude_scale * np.sqrt(sp.E_ref * sp.Gc_ref) * (1 + sp.nu_ref) / sp.E_ref
    kappa = (3 - sp.nu_ref) / (1 + sp.nu_ref)
    mag = amp * (kappa - np.cos(phi)) * np.sqrt(r / (2 * np.pi))
    return np.stack([mag * np.cos(phi / 2), mag * np.sin(phi / 2)], axis=-1)


def seed_nodes(mesh: Mesh, x_start: float, x_end: float, y0: float, radius: float) -> np.ndarray:
    """Nodes within ``radius`` of the segment ``(x_start, y0)-(x_end, y0)``.

    The vertices of every element the segment passes through are included
    as well. Without them an unstructured mesh can leave an element straddling
    the line with one undamaged vertex, which bridges the seeded crack.
    """
    x, y = mesh.nodes[:, 0], mesh.nodes[:, 1]
    dx = np.maximum.reduce([x_start - x, np.zeros_like(x), x - x_end])
    near = np.hypot(dx, y - y0) <= radius + 1e-12
    near[mesh.elements[_elements_on_segment(mesh, x_start, x_end, y0)].ravel()] = True
    return np.flatnonzero(near)


def _elements_on_segment(mesh: Mesh, x_start: float, x_end: float, y0: float) -> np.ndarray:
    """Elements whose interior meets the horizontal segment at height ``y0``."""
    if x_end <= x_start:
        return np.empty(0, dtype=int)
    P = mesh.nodes[mesh.elements]  # (ne, 3, 2)
    lo = np.full(len(P), np.inf)
    hi = np.full(len(P), -np.inf)
    for a, b in ((0, 1), (1, 2), (2, 0)):
        ya, yb = P[:, a, 1], P[:, b, 1]
        crosses = (np.minimum(ya, yb) <= y0) & (np.maximum(ya, yb) >= y0) & (ya != yb)
        s = np.where(crosses, (y0 - ya) / np.where(ya != yb, yb - ya, 1.0), 0.0)
        xc = P[:, a, 0] + s * (P[:, b, 0] - P[:, a, 0])
        lo = np.where(crosses, np.minimum(lo, xc), lo)
        hi = np.where(crosses, np.maximum(hi, xc), hi)
    inside = (P[:, :, 1].min(axis=1) < y0) & (P[:, :, 1].max(axis=1) > y0)
    return np.flatnonzero(inside & (hi > x_start) & (lo < x_end))


def seed_initial_crack(state: State, mesh: Mesh, ell: float, sp: SurfingParams, x_start: float) -> np.ndarray:
    """Raise the damage lower bound to 1 along the initial crack; returns the seeded nodes."""
    if not (0 <= x_start <= sp.x0 <= mesh.L and 0 <= sp.y0 <= mesh.H):
        raise ValueError(
            f"seed segment ({x_start}, {sp.y0})-({sp.x0}, {sp.y0}) is not inside the domain"
        )
    idx = seed_nodes(mesh, x_start, sp.x0, sp.y0, 0.5 * ell)
    state.alpha_lower[idx] = 1.0
    state.alpha[idx] = 1.0
    return idx


@dataclass
class StepResult:
    t: float
    state: State
    am_iterations: int
    converged: bool
    energies: list = field(default_factory=list)


def boundary_values(mesh: Mesh, t: float, sp: SurfingParams) -> np.ndarray:
    return surfing_displacement(mesh.nodes[mesh.boundary_nodes], t, sp)


def march(state: State, model: Model, sp: SurfingParams, schedule: Schedule, settings: SolverSettings,
          on_step: Callable[[StepResult], None] | None = None, ws: Workspace | None = None) -> State:
    """Advance ``state`` through every time of ``schedule``.

    ``on_step`` is called after each converged (or max-iteration) step with a
    :class:`StepResult` whose state is the live object; callers that keep it
    must copy.
    """
    ws = ws or Workspace(settings)
    for k, t in enumerate(schedule.times()):
        tic = time.perf_counter()
        state.t = float(t)
        bc = boundary_values(model.mesh, state.t, sp)
        res = alternate_minimize(state, model, bc, settings, ws)
        state.commit_step()
        log.info(
            "step %d t=%.4f am_its=%d converged=%s E=%.6g (%.2fs)",
            k, t, res.iterations, res.converged, assemble_total_energy(state, model).total,
            time.perf_counter() - tic,
        )
        if on_step is not None:
            on_step(StepResult(state.t, state, res.iterations, res.converged, res.energies))
    return state
