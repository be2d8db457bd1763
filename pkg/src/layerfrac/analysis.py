"""Far-field J-integral, effective toughness and crack/wake diagnostics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from . import constitutive as cm
from .mesh import Mesh
from .solver import Model, State


class AnalysisError(ValueError):
    pass


@dataclass(frozen=True)
class JDomainSpec:
    """Rectangular ring between two insets from the outer boundary.

    The virtual-extension weight ``q`` is 1 inside the rectangle inset by
    ``inner`` and 0 outside the rectangle inset by ``outer`` (``outer <
    inner``), varying linearly in the inset distance in between.
    """

    outer: float
    inner: float

    def __post_init__(self):
        if not 0 <= self.outer < self.inner:
            raise AnalysisError(f"need 0 <= outer < inner, got outer={self.outer}, inner={self.inner}")

    def weight(self, mesh: Mesh) -> np.ndarray:
        x, y = mesh.nodes[:, 0], mesh.nodes[:, 1]
        d = np.minimum.reduce([x, mesh.L - x, y, mesh.H - y])
        return np.clip((d - self.outer) / (self.inner - self.outer), 0.0, 1.0)


def default_j_domains(pad_width: float, delta: float) -> tuple[JDomainSpec, JDomainSpec]:
    """Two nested rings inside a pad of width ``pad_width``.

    The ramp of the inner ring stops one element short of the pad edge so
    every element it touches is a pad element.
    """
    usable = pad_width - 1.5 * delta
    if usable <= 4 * delta:
        raise AnalysisError(f"pad_width={pad_width} too thin to host a J ring at delta={delta}")
    a = JDomainSpec(outer=0.1 * usable, inner=0.45 * usable)
    b = JDomainSpec(outer=0.55 * usable, inner=usable)
    return a, b


def j_integral(state: State, model: Model, spec: JDomainSpec, tip_x: float | None = None) -> float:
    """Domain form of the far-field J-integral over the ring ``spec``."""
    mesh = model.mesh
    q = spec.weight(mesh)
    qe = q[mesh.elements]
    ring = np.flatnonzero(qe.max(axis=1) > qe.min(axis=1))
    if np.any(model.damageable[ring]):
        raise AnalysisError("J ring touches damageable elements; move it into the pad")
    if tip_x is not None and not (spec.inner < tip_x < mesh.L - spec.inner):
        raise AnalysisError(f"tip x={tip_x} is outside the inner rectangle of the J ring")
    G = mesh.grad_ops[ring]
    gq = np.einsum("ea,eai->ei", qe[ring], G)
    u = state.u[mesh.elements[ring]]
    grad_u = np.einsum("eai,eaj->eij", u, G)
    eps = cm.plane_strain(grad_u[:, 0, 0], grad_u[:, 1, 1], 0.5 * (grad_u[:, 0, 1] + grad_u[:, 1, 0]))
    abar = state.alpha[mesh.elements[ring]].mean(axis=1)
    lam, mu = model.lam[ring], model.mu[ring]
    eps_p = state.plastic.eps_p[ring]
    sig = cm.degraded_stress(eps, eps_p, abar, model.eta, lam, mu)
    W = cm.stiffness_factor(abar, model.eta) * cm.elastic_energy_density(eps, eps_p, lam, mu)
    s2 = np.empty((len(ring), 2, 2))
    s2[:, 0, 0], s2[:, 1, 1] = sig[:, 0], sig[:, 1]
    s2[:, 0, 1] = s2[:, 1, 0] = sig[:, 3]
    # sigma_ij u_i,x q_,j - W q_,x
    term = np.einsum("eij,ei,ej->e", s2, grad_u[:, :, 0], gq) - W * gq[:, 0]
    return float(np.sum(mesh.element_area[ring] * term))


@dataclass
class TimeSeriesRecord:
    t: float
    J: float
    E_elastic: float
    E_surface: float
    E_plastic: float
    tip_nominal_x: float
    tip_actual_x: float
    J_outer: float = float("nan")
    converged: bool = True


def effective_toughness(series: list[TimeSeriesRecord], window: tuple[float, float] | None = None) -> float:
    """Largest J over records whose time lies in ``window`` (inclusive)."""
    if window is None:
        picked = list(series)
    else:
        ta, tb = window
        picked = [r for r in series if ta - 1e-12 <= r.t <= tb + 1e-12]
    if not picked:
        raise AnalysisError("no time-series records inside the measurement window")
    return max(r.J for r in picked)


def actual_tip_x(state: State, mesh: Mesh, y0: float, ell: float, threshold: float = 0.95) -> float:
    x, y = mesh.nodes[:, 0], mesh.nodes[:, 1]
    hit = (state.alpha >= threshold) & (np.abs(y - y0) <= 4 * ell)
    return float(x[hit].max()) if np.any(hit) else float("nan")


def wake_clusters(state: State, model: Model, threshold: float = 1e-3,
                  crack_threshold: float | None = None) -> int:
    """Number of edge-connected patches of elements with ``p >= threshold``.

    With ``crack_threshold`` set, elements whose average damage reaches it
    are left out, which separates arrest sites joined only through the
    broken band.
    """
    mesh = model.mesh
    hot = (state.plastic.p >= threshold) & model.damageable
    if crack_threshold is not None:
        hot &= model.element_alpha(state.alpha) < crack_threshold
    idx = np.flatnonzero(hot)
    if len(idx) == 0:
        return 0
    a, b = mesh.element_neighbors()
    keep = hot[a] & hot[b]
    local = np.full(mesh.n_elements, -1)
    local[idx] = np.arange(len(idx))
    n = len(idx)
    graph = coo_matrix((np.ones(keep.sum()), (local[a[keep]], local[b[keep]])), shape=(n, n))
    count, _ = connected_components(graph, directed=False)
    return int(count)


@dataclass
class CrackPath:
    x: np.ndarray
    y: np.ndarray

    def max_deviation(self, y0: float) -> float:
        ok = np.isfinite(self.y)
        return float(np.max(np.abs(self.y[ok] - y0))) if np.any(ok) else 0.0


def crack_path(state: State, model: Model, threshold: float = 0.95, x_range: tuple[float, float] | None = None) -> CrackPath:
    """Alpha-weighted mean height of cracked nodes in x-bins one element wide.

    Bins without a node at or above ``threshold`` hold NaN.
    """
    mesh = model.mesh
    delta = mesh.target_h
    if x_range is None:
        w = model.mat.pad_width
        x_range = (w, mesh.L - w)
    edges = np.arange(x_range[0], x_range[1] + 0.5 * delta, delta)
    x, y = mesh.nodes[:, 0], mesh.nodes[:, 1]
    hit = (state.alpha >= threshold) & (x >= x_range[0]) & (x <= x_range[1])
    which = np.clip(np.searchsorted(edges, x[hit], side="right") - 1, 0, len(edges) - 2)
    wsum = np.bincount(which, weights=state.alpha[hit], minlength=len(edges) - 1)
    ysum = np.bincount(which, weights=state.alpha[hit] * y[hit], minlength=len(edges) - 1)
    with np.errstate(invalid="ignore", divide="ignore"):
        yc = np.where(wsum > 0, ysum / np.where(wsum > 0, wsum, 1.0), np.nan)
    return CrackPath(0.5 * (edges[:-1] + edges[1:]), yc)


def rise_drop_cycles(J: np.ndarray, min_drop: float = 0.10) -> int:
    """Count peaks followed by a fall of at least ``min_drop`` of the peak value.

    After a counted drop the signal must turn upward before the next peak
    can be counted, so one long decline counts once.
    """
    J = np.asarray(J, dtype=float)
    if len(J) == 0:
        return 0
    cycles = 0
    peak = J[0]
    trough = None
    for v in J[1:]:
        if trough is None:
            if v > peak:
                peak = v
            elif peak > 0 and v <= (1.0 - min_drop) * peak:
                cycles += 1
                trough = v
        elif v <= trough:
            trough = v
        else:
            peak, trough = v, None
    return cycles


@dataclass
class SweepRow:
    theta: float
    G_eff: float
    G_eff_over_Gc_num: float
    max_path_deviation: float
    wake_clusters: int
    converged: bool
    error: str | None = None


def _sweep_one(cfg, theta: float, out_dir) -> SweepRow:
    from dataclasses import replace

    from .simulation import run_quasistatic

    try:
        c = replace(cfg, phases=replace(cfg.phases, theta=float(theta)))
        res = run_quasistatic(c, out_dir=out_dir)
        g = res.effective_toughness()
        dev = crack_path(res.state, res.model, c.output.path_threshold).max_deviation(c.y0)
        wc = wake_clusters(res.state, res.model, c.output.wake_threshold)
        return SweepRow(float(theta), g, g / c.Gc_num, dev, wc, res.converged, res.error)
    except Exception as exc:  # one bad angle must not sink the sweep
        nan = float("nan")
        return SweepRow(float(theta), nan, nan, nan, 0, False, f"{type(exc).__name__}: {exc}")


def sweep_angles(cfg, thetas, jobs: int = 1, out_dir=None) -> list[SweepRow]:
    """One independent run per layer angle; rows sorted by angle.

    A failing run yields a row with NaN values, ``converged=False`` and the
    error message, and the remaining angles still run.
    """
    from concurrent.futures import ProcessPoolExecutor
    from pathlib import Path

    thetas = [float(t) for t in thetas]
    if not thetas:
        return []
    dirs = [None if out_dir is None else Path(out_dir) / f"theta_{t:.6f}" for t in thetas]
    if jobs <= 1 or len(thetas) == 1:
        rows = [_sweep_one(cfg, t, d) for t, d in zip(thetas, dirs)]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_sweep_one, [cfg] * len(thetas), thetas, dirs))
    return sorted(rows, key=lambda r: r.theta)
