"""Alternating minimization of the regularized elastic-plastic-damage energy.

Each step minimizes the total energy first over the displacement and the
plastic strain at frozen damage, then over the damage field at frozen
displacement and plastic strain, and repeats until the damage stalls.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import Bounds, minimize
from scipy.spatial import cKDTree

from . import constitutive as cm
from .linalg import LaggedSolver, SparsityPattern
from .mesh import Mesh
from .microstructure import ELASTIC_SENTINEL, MaterialField

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    pass


@dataclass
class SolverSettings:
    am_tol: float = 1e-4
    am_maxit: int = 500
    lin_tol: float = 1e-8
    damage_tol: float = 1e-6
    plastic_tol: float = 1e-8
    newton_maxit: int = 60
    damage_maxit: int = 200
    pcg_maxit: int = 25
    overrelax: float = 1.8
    local_radius: float = 4.0
    local_maxit: int = 200
    coarse_pcg_maxit: int = 5

    def __post_init__(self):
        for name in ("am_tol", "lin_tol", "damage_tol", "plastic_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.local_radius >= 0.0:
            raise ValueError("local_radius must be non-negative (0 disables local sweeps)")
        if not self.overrelax >= 1.0:
            raise ValueError("overrelax must be at least 1 (1 disables over-relaxation)")
        for name in ("am_maxit", "newton_maxit", "damage_maxit", "pcg_maxit", "local_maxit"):
            if not getattr(self, name) >= 1:
                raise ValueError(f"{name} must be at least 1")


@dataclass
class State:
    t: float
    u: np.ndarray
    plastic: cm.PlasticPointState
    plastic_prev: cm.PlasticPointState
    alpha: np.ndarray
    alpha_lower: np.ndarray

    @classmethod
    def initial(cls, mesh: Mesh, t: float = 0.0) -> "State":
        ne, nn = mesh.n_elements, mesh.n_nodes
        return cls(
            t=t,
            u=np.zeros((nn, 2)),
            plastic=cm.PlasticPointState.zeros(ne),
            plastic_prev=cm.PlasticPointState.zeros(ne),
            alpha=np.zeros(nn),
            alpha_lower=np.zeros(nn),
        )

    def copy(self) -> "State":
        return State(
            self.t,
            self.u.copy(),
            self.plastic.copy(),
            self.plastic_prev.copy(),
            self.alpha.copy(),
            self.alpha_lower.copy(),
        )

    def commit_step(self):
        """Make the current fields the reference for the next time step."""
        self.alpha_lower = np.maximum(self.alpha_lower, self.alpha)
        self.plastic_prev = self.plastic.copy()


@dataclass
class Energies:
    elastic: float
    surface: float
    plastic: float

    @property
    def total(self) -> float:
        return self.elastic + self.surface + self.plastic


class Model:
    """Mesh, material and regularization plus the precomputed discrete operators."""

    def __init__(self, mesh: Mesh, mat: MaterialField, ell: float, eta: float):
        if not ell > 0:
            raise ValueError("ell must be positive")
        if not eta > 0:
            raise ValueError("eta must be positive")
        self.mesh = mesh
        self.mat = mat
        self.ell = float(ell)
        self.eta = float(eta)
        self.lam, self.mu = cm.lame_parameters(mat.E, mat.nu)
        ne, nn = mesh.n_elements, mesh.n_nodes
        G = mesh.grad_ops
        area = mesh.element_area

        # engineering-Voigt strain operator, columns (a0x, a0y, a1x, a1y, a2x, a2y)
        B = np.zeros((ne, 3, 6))
        B[:, 0, 0::2] = G[:, :, 0]
        B[:, 1, 1::2] = G[:, :, 1]
        B[:, 2, 0::2] = G[:, :, 1]
        B[:, 2, 1::2] = G[:, :, 0]
        self.B = B
        self._Bt = np.ascontiguousarray(B.transpose(0, 2, 1))
        m = np.array([1.0, 1.0, 0.0])
        Mlam = np.outer(m, m)
        Mmu = np.diag([2.0, 2.0, 1.0])
        self._k_lam = area[:, None, None] * (self._Bt @ (Mlam @ B))
        self._k_mu = area[:, None, None] * (self._Bt @ (Mmu @ B))

        self.dofs = np.empty((ne, 6), dtype=np.int64)
        self.dofs[:, 0::2] = 2 * mesh.elements
        self.dofs[:, 1::2] = 2 * mesh.elements + 1
        # global strain operator: (ne*3) x (2 nn), rows (xx, yy, engineering xy) per element
        rows = np.repeat(np.arange(3 * ne).reshape(ne, 3), 6, axis=1)
        cols = np.repeat(self.dofs[:, None, :], 3, axis=1).reshape(ne, 18)
        self._Bglob = sp.csr_matrix((B.reshape(ne, 18).ravel(), (rows.ravel(), cols.ravel())),
                                    shape=(3 * ne, 2 * nn))
        self._BglobT = self._Bglob.T.tocsr()
        # nodal averaging and gradient operators for the damage field
        self._avg = sp.csr_matrix((np.full(3 * ne, 1.0 / 3.0), (np.repeat(np.arange(ne), 3), mesh.elements.ravel())),
                                  shape=(ne, nn))
        self._grad_x = sp.csr_matrix((G[:, :, 0].ravel(), (np.repeat(np.arange(ne), 3), mesh.elements.ravel())),
                                     shape=(ne, nn))
        self._grad_y = sp.csr_matrix((G[:, :, 1].ravel(), (np.repeat(np.arange(ne), 3), mesh.elements.ravel())),
                                     shape=(ne, nn))
        self._elem_sum = self._avg.T.tocsr() * 3.0
        self.node_valence = np.bincount(mesh.elements.ravel(), minlength=nn)
        self.boundary_mask = np.zeros(nn, dtype=bool)
        self.boundary_mask[mesh.boundary_nodes] = True
        self._node_tree = None
        self._global_subset = None

        # displacement unknowns: every non-boundary dof
        fixed = np.zeros(2 * nn, dtype=bool)
        fixed[2 * mesh.boundary_nodes] = True
        fixed[2 * mesh.boundary_nodes + 1] = True
        self.free_dofs = np.flatnonzero(~fixed)
        self._dof_to_free = np.full(2 * nn, -1, dtype=np.int64)
        self._dof_to_free[self.free_dofs] = np.arange(len(self.free_dofs))
        fd = self._dof_to_free[self.dofs]
        self._u_pattern = SparsityPattern(
            np.repeat(fd, 6, axis=1), np.tile(fd, (1, 6)), len(self.free_dofs)
        )

        # damage operators
        self.damageable = mat.damageable
        # sentinel yield strength means "never yields": skip the return map there
        self.plastic_elements = mat.damageable & (mat.sigma0 < ELASTIC_SENTINEL)
        pad_nodes = np.zeros(nn, dtype=bool)
        pad_nodes[mesh.elements[~mat.damageable].ravel()] = True
        self.pad_nodes = pad_nodes
        el = mesh.elements
        self._a_rows = np.repeat(el, 3, axis=1)
        self._a_cols = np.tile(el, (1, 3))
        self._a_pattern = SparsityPattern(self._a_rows, self._a_cols, nn)
        gg = np.einsum("eai,ebi->eab", G, G)
        w_grad = np.where(mat.damageable, 0.75 * mat.Gc * self.ell * area, 0.0)
        self._lap_values = w_grad[:, None, None] * gg
        self._lin_coef = np.where(mat.damageable, mat.Gc / (8.0 * self.ell) * area, 0.0)

    # ----- kinematics -----
    def strain_voigt(self, u: np.ndarray) -> np.ndarray:
        """Element strains ``(ne, 3)`` as (xx, yy, engineering xy)."""
        return (self._Bglob @ np.asarray(u).ravel()).reshape(-1, 3)

    def strain(self, u: np.ndarray) -> np.ndarray:
        """Element strains ``(ne, 4)`` with zz = 0."""
        v = self.strain_voigt(u)
        return cm.plane_strain(v[:, 0], v[:, 1], 0.5 * v[:, 2])

    def displacement_gradient(self, u: np.ndarray) -> np.ndarray:
        ue = u[self.mesh.elements]
        return np.einsum("eai,eaj->eij", ue, self.mesh.grad_ops)

    def element_alpha(self, alpha: np.ndarray) -> np.ndarray:
        return self._avg @ alpha

    def alpha_gradient(self, alpha: np.ndarray) -> np.ndarray:
        return np.stack([self._grad_x @ alpha, self._grad_y @ alpha], axis=1)

    def internal_force(self, stress: np.ndarray) -> np.ndarray:
        """Nodal force vector (2 nn) of element stresses ``(ne, 4)``."""
        s = np.stack([stress[:, 0], stress[:, 1], stress[:, 3]], axis=1) * self.mesh.element_area[:, None]
        return self._BglobT @ s.ravel()

    def stiffness(self, weight: np.ndarray) -> sp.csr_matrix:
        """Free-dof block of the elastic stiffness with per-element factor ``weight``."""
        vals = (weight * self.lam)[:, None, None] * self._k_lam + (weight * self.mu)[:, None, None] * self._k_mu
        return self._u_pattern.assemble(vals)

    def tangent_stiffness(self, C: np.ndarray) -> sp.csr_matrix:
        vals = self.mesh.element_area[:, None, None] * (self._Bt @ (C @ self.B))
        return self._u_pattern.assemble(vals)

    def full_displacement(self, u_free: np.ndarray, bc: np.ndarray) -> np.ndarray:
        u = np.zeros(2 * self.mesh.n_nodes)
        u[self.free_dofs] = u_free
        b = self.mesh.boundary_nodes
        u = u.reshape(-1, 2)
        u[b] = bc
        return u

    @property
    def node_tree(self) -> cKDTree:
        if self._node_tree is None:
            self._node_tree = cKDTree(self.mesh.nodes)
        return self._node_tree

    def subset(self) -> "Subset":
        """The subset of all elements (built once)."""
        if self._global_subset is None:
            self._global_subset = Subset(self)
        return self._global_subset

    # ----- damage fixed-node bookkeeping -----
    def damage_bounds(self, state: State) -> tuple[np.ndarray, np.ndarray]:
        lb = np.clip(state.alpha_lower, 0.0, 1.0)
        ub = np.ones_like(lb)
        # pad nodes never evolve: they keep whatever was prescribed at seeding
        ub[self.pad_nodes] = lb[self.pad_nodes]
        return lb, ub


# ---------------------------------------------------------------------------
# energy
# ---------------------------------------------------------------------------
def element_fields(state: State, model: Model):
    eps = model.strain(state.u)
    abar = model.element_alpha(state.alpha)
    psi = cm.elastic_energy_density(eps, state.plastic.eps_p, model.lam, model.mu)
    return eps, abar, psi


def assemble_total_energy(state: State, model: Model) -> Energies:
    area = model.mesh.element_area
    _, abar, psi = element_fields(state, model)
    A = cm.stiffness_factor(abar, model.eta)
    B = cm.plastic_factor(abar)
    elastic = float(np.sum(area * A * psi))
    plastic_density = np.where(model.damageable, B * model.mat.sigma0 * state.plastic.p, 0.0)
    plastic = float(np.sum(area * plastic_density))
    grad_a = model.alpha_gradient(state.alpha)
    surf_density = 0.375 * model.mat.Gc * (abar / model.ell + model.ell * np.sum(grad_a**2, axis=1))
    surface = float(np.sum(np.where(model.damageable, area * surf_density, 0.0)))
    return Energies(elastic, surface, plastic)


def energy_gradient_u(state: State, model: Model) -> np.ndarray:
    """Gradient of the total energy with respect to all nodal displacements (fixed plastic strain)."""
    eps = model.strain(state.u)
    abar = model.element_alpha(state.alpha)
    sig = cm.degraded_stress(eps, state.plastic.eps_p, abar, model.eta, model.lam, model.mu)
    return model.internal_force(sig).reshape(-1, 2)


def _damage_quadratic(state: State, model: Model) -> tuple[sp.csr_matrix, np.ndarray]:
    """``H, c`` such that the alpha-dependent energy is ``0.5 a.H.a + c.a + const``."""
    return model.subset().damage_quadratic(state)


def energy_gradient_alpha(state: State, model: Model) -> np.ndarray:
    H, c = _damage_quadratic(state, model)
    return H @ state.alpha + c


# ---------------------------------------------------------------------------
# element subsets
# ---------------------------------------------------------------------------
class Subset:
    """Element subset over which the two blocks are minimized.

    Unknowns are the nodes all of whose incident elements belong to the
    subset, so the energy of the remaining elements does not depend on them
    and a block minimization over the subset lowers the total energy by
    exactly the change of the subset energy. ``Subset(model)`` is the whole
    mesh.
    """

    def __init__(self, model: Model, elements: np.ndarray | None = None):
        mesh = model.mesh
        self.model = model
        self.is_global = elements is None
        self.elements = np.arange(mesh.n_elements) if elements is None else np.unique(elements)
        el = mesh.elements[self.elements]
        self.area = mesh.element_area[self.elements]
        self.lam = model.lam[self.elements]
        self.mu = model.mu[self.elements]
        self.Gc = model.mat.Gc[self.elements]
        self.sigma0 = model.mat.sigma0[self.elements]
        self.damageable = model.damageable[self.elements]
        self.plastic = model.plastic_elements[self.elements]
        count = np.bincount(el.ravel(), minlength=mesh.n_nodes)
        self.interior = (count == model.node_valence) & (count > 0)

        # damage numbering: every node touched by the subset
        self.nodes = np.unique(el)
        node_loc = np.full(mesh.n_nodes, -1, dtype=np.int64)
        node_loc[self.nodes] = np.arange(len(self.nodes))
        self._el_nodes = el
        if self.is_global:
            self._a_pattern = model._a_pattern
        else:
            loc = node_loc[el]
            self._a_pattern = SparsityPattern(np.repeat(loc, 3, axis=1), np.tile(loc, (1, 3)), len(self.nodes))
        self._node_of_el = node_loc[el]

        # displacement numbering: free dofs of interior nodes
        if self.is_global:
            self.udofs = model.free_dofs
            self._u_pattern = model._u_pattern
            self._edofs = model._dof_to_free[model.dofs]
        else:
            free_node = self.interior & ~model.boundary_mask
            self.udofs = np.flatnonzero(np.repeat(free_node, 2))
            dof_loc = np.full(2 * mesh.n_nodes, -1, dtype=np.int64)
            dof_loc[self.udofs] = np.arange(len(self.udofs))
            self._edofs = dof_loc[model.dofs[self.elements]]
            self._u_pattern = SparsityPattern(
                np.repeat(self._edofs, 6, axis=1), np.tile(self._edofs, (1, 6)), len(self.udofs)
            )
        self._B = model.B[self.elements]
        self._Bt = model._Bt[self.elements]
        self._dofs = model.dofs[self.elements]
        self._G = mesh.grad_ops[self.elements]

    # ----- fields on the subset -----
    def strain(self, u: np.ndarray) -> np.ndarray:
        if self.is_global:
            return self.model.strain(u)
        ue = np.asarray(u).ravel()[self._dofs]
        v = np.matmul(self._B, ue[:, :, None])[:, :, 0]
        return cm.plane_strain(v[:, 0], v[:, 1], 0.5 * v[:, 2])

    def alpha_bar(self, alpha: np.ndarray) -> np.ndarray:
        if self.is_global:
            return self.model.element_alpha(alpha)
        return alpha[self._el_nodes].mean(axis=1)

    def residual(self, stress: np.ndarray) -> np.ndarray:
        """Energy gradient at the displacement unknowns for element stresses ``(n, 4)``."""
        if self.is_global:
            return self.model.internal_force(stress)[self.udofs]
        s = np.stack([stress[:, 0], stress[:, 1], stress[:, 3]], axis=1) * self.area[:, None]
        fe = np.matmul(self._Bt, s[:, :, None])[:, :, 0]
        keep = self._edofs >= 0
        return np.bincount(self._edofs[keep], weights=fe[keep], minlength=len(self.udofs))

    def tangent(self, C: np.ndarray) -> sp.csr_matrix:
        vals = self.area[:, None, None] * (self._Bt @ (C @ self._B))
        return self._u_pattern.assemble(vals)

    def energy(self, state: State) -> float:
        """Total energy carried by the subset's elements."""
        eps = self.strain(state.u)
        abar = self.alpha_bar(state.alpha)
        pl = state.plastic
        eps_p = pl.eps_p if self.is_global else pl.eps_p[self.elements]
        p = pl.p if self.is_global else pl.p[self.elements]
        psi = cm.elastic_energy_density(eps, eps_p, self.lam, self.mu)
        dens = cm.stiffness_factor(abar, self.model.eta) * psi
        dens = dens + np.where(self.damageable, cm.plastic_factor(abar) * self.sigma0 * p, 0.0)
        ga = np.einsum("ea,eai->ei", state.alpha[self._el_nodes], self._G)
        ell = self.model.ell
        surf = 0.375 * self.Gc * (abar / ell + ell * np.sum(ga**2, axis=1))
        dens = dens + np.where(self.damageable, surf, 0.0)
        return float(np.sum(self.area * dens))

    def damage_quadratic(self, state: State) -> tuple[sp.csr_matrix, np.ndarray]:
        """``H, c`` of the alpha-dependent energy in the subset's local node numbering."""
        model = self.model
        eps = self.strain(state.u)
        pl = state.plastic
        eps_p = pl.eps_p if self.is_global else pl.eps_p[self.elements]
        p = pl.p if self.is_global else pl.p[self.elements]
        psi = cm.elastic_energy_density(eps, eps_p, self.lam, self.mu)
        drive = np.where(self.damageable, psi + self.sigma0 * p, 0.0)
        w = (2.0 / 9.0) * self.area * drive
        lap = model._lap_values if self.is_global else model._lap_values[self.elements]
        H = self._a_pattern.assemble(lap + w[:, None, None] * np.ones((1, 3, 3)))
        lin = model._lin_coef if self.is_global else model._lin_coef[self.elements]
        ce = lin - (2.0 / 3.0) * self.area * drive
        c = np.bincount(self._node_of_el.ravel(), weights=np.repeat(ce, 3), minlength=len(self.nodes))
        return H, c


# ---------------------------------------------------------------------------
# displacement / plasticity block
# ---------------------------------------------------------------------------
class Workspace:
    """Per-run solver caches (lagged factorization, counters)."""

    def __init__(self, settings: SolverSettings):
        self.settings = settings
        self.lin = LaggedSolver(maxiter=settings.pcg_maxit)
        self.newton_iterations = 0
        self.damage_iterations = 0
        self.local_iterations = 0


def solve_displacement(state: State, model: Model, bc: np.ndarray, settings: SolverSettings,
                       ws: Workspace | None = None) -> np.ndarray:
    """Minimize the elastic energy over u at frozen plastic strain and damage."""
    ws = ws or Workspace(settings)
    abar = model.element_alpha(state.alpha)
    A = cm.stiffness_factor(abar, model.eta)
    K = model.stiffness(A)
    u0 = model.full_displacement(np.zeros(len(model.free_dofs)), bc)
    s0 = cm.degraded_stress(model.strain(u0), state.plastic.eps_p, abar, model.eta, model.lam, model.mu)
    rhs = -model.internal_force(s0)[model.free_dofs]
    du = ws.lin.solve(K, rhs, rtol=settings.lin_tol)
    res = np.linalg.norm(K @ du - rhs)
    if res > settings.lin_tol * max(np.linalg.norm(rhs), 1e-300) * 10:
        raise SolverError(f"displacement solve residual {res:.3e} above tolerance")
    return model.full_displacement(du, bc)


def update_plasticity(state: State, model: Model) -> tuple[cm.PlasticPointState, np.ndarray]:
    """Elementwise return map against the step-start plastic state; elastic elements untouched."""
    eps = model.strain(state.u)
    abar = model.element_alpha(state.alpha)
    new, yielding = cm.return_map(eps, state.plastic_prev, abar, model.eta, model.mu, model.mat.sigma0)
    elastic = ~model.plastic_elements
    new.eps_p[elastic] = state.plastic_prev.eps_p[elastic]
    new.p[elastic] = state.plastic_prev.p[elastic]
    yielding = yielding & model.plastic_elements
    return new, yielding


def _elastic_voigt(lam, mu):
    n = len(lam)
    C = np.zeros((n, 3, 3))
    C[:, 0, 0] = C[:, 1, 1] = lam + 2 * mu
    C[:, 0, 1] = C[:, 1, 0] = lam
    C[:, 2, 2] = mu
    return C


def _local_newton_direction(K: sp.spmatrix, r: np.ndarray) -> np.ndarray | None:
    """Direct solve of a small subset system; ``None`` if the factorization breaks down."""
    try:
        dx = spla.splu(K.tocsc(), permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                       options={"SymmetricMode": True}).solve(-r)
    except RuntimeError:
        return None
    return dx if np.all(np.isfinite(dx)) else None


def _energy_line_search(evaluate, x, dx, energy, min_step: float = 1e-4):
    """Backtrack from a full step until the block energy does not increase.

    Returns ``(step, (eps, plastic, energy))`` or ``(0.0, None)`` when no
    admissible step exists along ``dx``.
    """
    if dx is None:
        return 0.0, None
    step = 1.0
    while step >= min_step:
        trial = evaluate(x + step * dx)
        if np.isfinite(trial[2]) and trial[2] <= energy + 1e-14 * abs(energy):
            return step, trial
        step *= 0.5
    return 0.0, None


def minimize_u_plastic(state: State, model: Model, bc: np.ndarray | None, settings: SolverSettings,
                       ws: Workspace, subset: Subset | None = None, coarse: bool = False) -> int:
    """Joint minimization over (u, eps_p) at frozen damage.

    Newton iterations on the displacement with the algorithmic tangent of the
    return map; the plastic strain is always the exact local minimizer for the
    current displacement, so each accepted iterate lowers the block energy.
    The fixed-point iteration of [linear solve, return map] reaches the same
    minimizer but needs many more linear solves near yielding cracks.

    On the whole mesh (``subset=None``) the boundary values ``bc`` are
    imposed first and the linear systems are solved by PCG with a lagged
    factorization; on a proper subset ``bc`` is ignored, every node outside
    the subset interior keeps its displacement, and the small systems are
    factorized directly.

    ``coarse=True`` (whole mesh only) takes a single Newton step whose linear
    system is solved by at most ``settings.coarse_pcg_maxit`` PCG iterations
    with the current lagged factorization. It still lowers the energy and is
    used between local sweeps to carry the far-field response.
    """
    sub = subset or model.subset()
    E = sub.elements
    abar = sub.alpha_bar(state.alpha)
    A = cm.stiffness_factor(abar, model.eta)
    B = cm.plastic_factor(abar)
    elastic = ~sub.plastic
    prev = state.plastic_prev if sub.is_global else cm.PlasticPointState(
        state.plastic_prev.eps_p[E], state.plastic_prev.p[E])

    u = state.u.copy()
    if sub.is_global:
        u[model.mesh.boundary_nodes] = bc
    flat = u.ravel()
    x = flat[sub.udofs].copy()

    def evaluate(x):
        flat[sub.udofs] = x
        eps = sub.strain(flat)
        pl, _ = cm.return_map(eps, prev, abar, model.eta, sub.mu, sub.sigma0)
        pl.eps_p[elastic] = prev.eps_p[elastic]
        pl.p[elastic] = prev.p[elastic]
        psi = cm.elastic_energy_density(eps, pl.eps_p, sub.lam, sub.mu)
        dens = A * psi + np.where(sub.damageable, B * sub.sigma0 * pl.p, 0.0)
        return eps, pl, float(np.sum(sub.area * dens))

    eps, pl, energy = evaluate(x)
    Ce_elastic = _elastic_voigt(sub.lam[elastic], sub.mu[elastic]) * A[elastic][:, None, None]
    it = 0
    maxit = 1 if coarse else settings.newton_maxit
    for it in range(1, maxit + 1):
        sig = A[:, None] * cm.elastic_stress(eps, pl.eps_p, sub.lam, sub.mu)
        r = sub.residual(sig)
        rnorm = np.linalg.norm(r)
        # scale: the unbalanced force a zero-displacement state would have
        fscale = max(np.linalg.norm(sub.area[:, None] * sig), 1e-300)
        if rnorm <= settings.lin_tol * fscale or rnorm == 0.0 or len(x) == 0:
            break
        C = cm.consistent_tangent(eps, prev, abar, model.eta, sub.lam, sub.mu, sub.sigma0)
        C[elastic] = Ce_elastic
        K = sub.tangent(C)
        if sub.is_global and coarse:
            dx = ws.lin.approximate(K, -r, maxiter=settings.coarse_pcg_maxit)
        elif sub.is_global:
            rtol = float(np.clip(0.5 * settings.lin_tol * fscale / rnorm, 1e-12, 1e-2))
            dx = ws.lin.solve(K, -r, rtol=rtol)
        else:
            dx = _local_newton_direction(K, r)
        ws.newton_iterations += 1
        step, accepted = _energy_line_search(evaluate, x, dx, energy)
        if not accepted and not coarse:
            # perfect plasticity can leave the consistent tangent singular or
            # indefinite after rounding; the degraded elastic tangent is SPD
            # and always gives a descent direction
            Ke = sub.tangent(_elastic_voigt(sub.lam, sub.mu) * A[:, None, None])
            dx = ws.lin.solve(Ke, -r, rtol=1e-10) if sub.is_global else _local_newton_direction(Ke, r)
            step, accepted = _energy_line_search(evaluate, x, dx, energy)
        if not accepted:
            log.debug("no descent step along the Newton direction (residual %.3e)", rnorm)
            break
        eps_n, pl_n, e_n = accepted
        change = np.max(np.abs(A[:, None] * (pl_n.eps_p - pl.eps_p)), initial=0.0)
        x = x + step * dx
        eps, pl, energy = eps_n, pl_n, e_n
        rel_dx = step * np.max(np.abs(dx), initial=0.0) / max(np.max(np.abs(x), initial=0.0), 1e-300)
        if change <= settings.plastic_tol and rel_dx <= settings.lin_tol:
            break
    else:
        if not coarse:
            log.warning("displacement/plasticity block hit newton_maxit=%d", settings.newton_maxit)
    flat[sub.udofs] = x
    state.u = flat.reshape(-1, 2)
    if sub.is_global:
        state.plastic = pl
    else:
        state.plastic.eps_p[E] = pl.eps_p
        state.plastic.p[E] = pl.p
    return it


# ---------------------------------------------------------------------------
# damage block
# ---------------------------------------------------------------------------
def solve_bound_qp(H: sp.csr_matrix, c: np.ndarray, x0: np.ndarray, lb: np.ndarray, ub: np.ndarray,
                   tol: float = 1e-6, maxit: int = 200) -> tuple[np.ndarray, int]:
    """Minimize ``0.5 x.H.x + c.x`` subject to ``lb <= x <= ub``.

    Projected Newton with an epsilon-active set: variables sitting on a bound
    with the gradient pushing outward are frozen, the reduced Newton system is
    solved on the rest, and a projected Armijo search keeps the energy
    decreasing. For a convex quadratic this terminates once the active set is
    identified. If it stalls or runs out of iterations, SciPy's L-BFGS-B
    finishes from the last iterate.
    """
    x = np.clip(x0, lb, ub)
    fixed = lb >= ub
    diag = H.diagonal()
    res = np.inf
    for it in range(1, maxit + 1):
        g = H @ x + c
        kkt = np.abs(x - np.clip(x - g, lb, ub))
        kkt[fixed] = 0.0
        res = kkt.max(initial=0.0)
        if res <= tol:
            return x, it - 1
        eps = min(1e-3, res)
        active = fixed | ((x <= lb + eps) & (g > 0)) | ((x >= ub - eps) & (g < 0))
        free = np.flatnonzero(~active)
        d = np.zeros_like(x)
        if len(free):
            Hff = H[free][:, free].tocsc()
            d[free] = spla.spsolve(Hff, -g[free])
        # diagonally scaled gradient step on the active variables that are not
        # yet on their bound; an unscaled step caps the line search when the
        # Hessian diagonal spans decades and the iteration crawls
        slack = active & ~fixed & (np.abs(x - np.clip(x - g, lb, ub)) > 0)
        d[slack] = -g[slack] / diag[slack]
        step = 1.0
        while True:
            dx = np.clip(x + step * d, lb, ub) - x
            # energy change from the step itself: differencing two totals
            # loses the last digits that matter near convergence
            gdx = g @ dx
            df = gdx + 0.5 * dx @ (H @ dx)
            if df <= 1e-4 * gdx or step < 1e-10:
                break
            step *= 0.5
        if df > 0 or not np.any(dx):
            break
        x = np.clip(x + dx, lb, ub)
    log.debug("projected Newton stopped at KKT residual %.3e; finishing with L-BFGS-B", res)
    return _bound_qp_lbfgsb(H, c, x, lb, ub, tol, maxit)


def _bound_qp_lbfgsb(H, c, x0, lb, ub, tol, maxit) -> tuple[np.ndarray, int]:
    """Fallback for :func:`solve_bound_qp`: SciPy's L-BFGS-B from a warm start."""
    fixed = lb >= ub
    x0 = np.clip(x0, lb, ub)
    g0 = H @ x0 + c

    def fun(v):
        # energy relative to the start, from the increment, so the stopping
        # test is not swamped by the size of the total
        dv = v - x0
        Hdv = H @ dv
        return g0 @ dv + 0.5 * dv @ Hdv, g0 + Hdv

    r = minimize(fun, x0, jac=True, method="L-BFGS-B", bounds=Bounds(lb, ub),
                 options={"gtol": 0.5 * tol, "ftol": 0.0, "maxiter": 50 * maxit})
    x = np.clip(r.x, lb, ub)
    g = H @ x + c
    kkt = np.abs(x - np.clip(x - g, lb, ub))
    kkt[fixed] = 0.0
    res = kkt.max(initial=0.0)
    if res > tol:
        raise SolverError(f"damage solve did not converge: KKT residual {res:.3e}")
    return x, maxit + r.nit


def solve_damage(state: State, model: Model, settings: SolverSettings, ws: Workspace | None = None,
                 subset: Subset | None = None) -> np.ndarray:
    """Minimize the energy over alpha with ``alpha_lower <= alpha <= 1`` and the pad frozen.

    Returns the full nodal field; on a proper subset only its interior nodes
    move.

    With ``settings.overrelax = w > 1`` the damage update is extrapolated to
    ``alpha + w (alpha* - alpha)`` (projected back onto the bounds), where
    ``alpha*`` is the block minimizer. The extrapolated field is kept only
    if its energy does not exceed that of the current damage, so every
    half-step stays monotone; the fixed points of the iteration are
    unchanged.
    """
    sub = subset or model.subset()
    H, c = sub.damage_quadratic(state)
    lb, ub = model.damage_bounds(state)
    nodes = sub.nodes
    lb, ub = lb[nodes], ub[nodes].copy()
    a0 = state.alpha[nodes]
    frozen = ~sub.interior[nodes]
    ub[frozen] = np.clip(a0[frozen], lb[frozen], 1.0)
    lb = np.where(frozen, ub, lb)
    x, its = solve_bound_qp(H, c, a0, lb, ub, tol=settings.damage_tol, maxit=settings.damage_maxit)
    if ws is not None:
        ws.damage_iterations += its
    if settings.overrelax > 1.0:
        x0 = np.clip(a0, lb, ub)
        xr = np.clip(x0 + settings.overrelax * (x - x0), lb, ub)
        f0 = 0.5 * x0 @ (H @ x0) + c @ x0
        fr = 0.5 * xr @ (H @ xr) + c @ xr
        if fr <= f0:
            x = xr
    out = state.alpha.copy()
    out[nodes] = x
    return out


# ---------------------------------------------------------------------------
# alternate minimization
# ---------------------------------------------------------------------------
@dataclass
class AMResult:
    iterations: int
    converged: bool
    energies: list = field(default_factory=list)
    local_iterations: int = 0


def local_subset(model: Model, seeds: np.ndarray, radius: float) -> Subset:
    """Subset of the elements touching any node within ``radius`` of a seed node."""
    pts = model.mesh.nodes[seeds]
    hits = model.node_tree.query_ball_point(pts, r=radius)
    near = np.zeros(model.mesh.n_nodes, dtype=bool)
    for h in hits:
        near[h] = True
    elements = np.flatnonzero(near[model.mesh.elements].any(axis=1))
    return Subset(model, elements)


def _local_sweeps(state, model, settings, ws, moved, energies) -> int:
    sub = local_subset(model, np.flatnonzero(moved), settings.local_radius * model.ell)
    k = 0
    for k in range(1, settings.local_maxit + 1):
        e0 = sub.energy(state)
        minimize_u_plastic(state, model, None, settings, ws, subset=sub)
        e1 = sub.energy(state)
        energies.append(energies[-1] + (e1 - e0))
        new_alpha = solve_damage(state, model, settings, ws, subset=sub)
        change = float(np.max(np.abs(new_alpha - state.alpha), initial=0.0))
        state.alpha = new_alpha
        e2 = sub.energy(state)
        energies.append(energies[-1] + (e2 - e1))
        if change <= settings.am_tol:
            break
    ws.local_iterations += k
    log.debug("local sweeps: %d iterations on %d elements", k, len(sub.elements))
    return k


def alternate_minimize(state: State, model: Model, bc: np.ndarray, settings: SolverSettings,
                       ws: Workspace | None = None) -> AMResult:
    """Alternate the (u, eps_p) and alpha blocks until the damage stalls.

    ``state`` is updated in place. The total energy after every block is
    recorded in ``AMResult.energies``.

    With ``settings.local_radius > 0`` every global iteration that moves the
    damage is followed by alternating sweeps restricted to the elements
    within ``local_radius * ell`` of the nodes that moved. Those sweeps are
    block minimizations of the same energy over fewer unknowns, so they keep
    the energy monotone and are much cheaper than global ones; convergence
    is only ever declared after a global iteration.
    """
    ws = ws or Workspace(settings)
    energies: list[float] = []
    converged = False
    it = 0
    n_local = 0
    use_local = settings.local_radius > 0
    exact = not use_local
    for it in range(1, settings.am_maxit + 1):
        before = energies[-1] if energies else None
        minimize_u_plastic(state, model, bc, settings, ws, coarse=not exact)
        e_u = assemble_total_energy(state, model).total
        if before is not None and e_u > before + 1e-10 * max(abs(before), 1.0):
            # loose inner solve; redo once with a tighter linear tolerance
            log.warning("energy rose in displacement block (%.3e > %.3e); retrying tighter", e_u, before)
            tight = replace(settings, lin_tol=settings.lin_tol * 1e-2)
            minimize_u_plastic(state, model, bc, tight, ws)
            e_u = assemble_total_energy(state, model).total
        energies.append(e_u)
        new_alpha = solve_damage(state, model, settings, ws)
        delta = np.abs(new_alpha - state.alpha)
        change = float(np.max(delta, initial=0.0))
        state.alpha = new_alpha
        energies.append(assemble_total_energy(state, model).total)
        log.debug("global iteration %d (%s): max |dalpha| = %.3e", it, "exact" if exact else "coarse", change)
        if change <= settings.am_tol:
            if exact:
                converged = True
                break
            exact = True  # confirm with a fully converged displacement solve
            continue
        if use_local:
            exact = False
            n_local += _local_sweeps(state, model, settings, ws, delta > settings.am_tol, energies)
            # resynchronize the bookkeeping with a fresh global sum
            energies[-1] = assemble_total_energy(state, model).total
    if not converged:
        log.warning("alternate minimization stopped at am_maxit=%d without converging", settings.am_maxit)
    return AMResult(it, converged, energies, n_local)
