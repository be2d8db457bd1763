"""Built-in oracle suite behind ``layerfrac verify``.

Each check compares the implementation against something computed
independently: a high-precision scalar minimization for the return map,
central finite differences for the energy gradients, and the Irwin
relation for the J-integral under the surfing field.
"""

from __future__ import annotations

from dataclasses import dataclass

import mpmath
import numpy as np

from . import constitutive as cm
from .analysis import default_j_domains, j_integral
from .loading import SurfingParams, boundary_values, seed_nodes
from .mesh import generate_mesh
from .microstructure import ELASTIC_SENTINEL, LayerSpec, PhaseProperties, build_material_field
from .solver import (Model, SolverSettings, State, assemble_total_energy, energy_gradient_alpha,
                     energy_gradient_u, solve_displacement)


@dataclass
class Check:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail}"


# -- return map ----------------------------------------------------------------

def _oracle_return_map(eps, eps_p0, p0, alpha, eta, mu, sigma0, digits=40):
    """Minimize the incremental potential along the trial flow direction in mpmath.

    The magnitude is found by golden-section search on the exact scalar
    energy, without using the closed-form radial-return formula.
    """
    with mpmath.workdps(digits):
        m = mpmath.mpf
        e = [m(float(a)) - m(float(b)) for a, b in zip(eps, eps_p0)]
        tr = (e[0] + e[1] + e[2]) / 3
        d = [e[0] - tr, e[1] - tr, e[2] - tr, e[3]]
        w = [1, 1, 1, 2]
        nd = mpmath.sqrt(sum(wi * di * di for wi, di in zip(w, d)))
        A = m(float(eta)) + (1 - m(float(alpha))) ** 2
        B = (1 - m(float(alpha))) ** 2
        mu_, s0 = m(float(mu)), m(float(sigma0))
        if nd == 0:
            return np.array(eps_p0, dtype=float), float(p0)
        n = [di / nd for di in d]
        # trial deviatoric strain is nd*n; plastic increment k*n has equivalent value sqrt(2/3) k
        f = lambda k: A * mu_ * (nd - k) ** 2 + B * s0 * mpmath.sqrt(m(2) / 3) * k
        lo, hi = m(0), nd
        g = (mpmath.sqrt(5) - 1) / 2
        for _ in range(200):
            a, b = hi - g * (hi - lo), lo + g * (hi - lo)
            if f(a) <= f(b):
                hi = b
            else:
                lo = a
        k = (lo + hi) / 2
        if f(m(0)) <= f(k):
            k = m(0)
        eps_p = [float(m(float(b)) + k * ni) for b, ni in zip(eps_p0, n)]
        return np.array(eps_p), float(m(float(p0)) + mpmath.sqrt(m(2) / 3) * k)


def _kkt_violation(eps, new, prev, alpha, eta, mu, sigma0) -> float:
    """Relative violation of admissibility and normality at a return-map result."""
    A = cm.stiffness_factor(alpha, eta)
    B = cm.plastic_factor(alpha)
    s = 2 * A * mu * cm.deviator(eps - new.eps_p)
    q = float(cm.equivalent_stress(s))
    yld = B * sigma0
    viol = max(q - yld, 0.0) / max(yld, 1e-300)
    dp = float(new.p - prev.p)
    if dp > 0:
        # s must equal yld * (2/3) d(eps_p) / dp (normality with |s|_eq = yld)
        target = yld * (2.0 / 3.0) * (new.eps_p - prev.eps_p) / dp
        viol = max(viol, float(np.max(np.abs(s - target))) / max(yld, 1e-300))
    return viol


def check_return_map(n: int = 1000, seed: int = 0, tol: float = 1e-8) -> Check:
    rng = np.random.default_rng(seed)
    worst = 0.0
    worst_kkt = 0.0
    for _ in range(n):
        E = rng.uniform(0.5, 2.0)
        nu = rng.uniform(0.0, 0.45)
        lam, mu = cm.lame_parameters(E, nu)
        alpha = rng.uniform(0.0, 0.95)
        sigma0 = rng.uniform(0.1, 1.0)
        eps = cm.plane_strain(*rng.normal(scale=0.5, size=3))
        dev0 = rng.normal(scale=0.1, size=3)
        eps_p0 = np.array([dev0[0], dev0[1], -dev0[0] - dev0[1], dev0[2]])
        prev = cm.PlasticPointState(eps_p0, np.asarray(rng.uniform(0, 1)))
        new, _ = cm.return_map(eps, prev, alpha, 1e-6, mu, sigma0)
        ref_ep, ref_p = _oracle_return_map(eps, eps_p0, prev.p, alpha, 1e-6, mu, sigma0)
        scale = max(1.0, float(np.max(np.abs(ref_ep))))
        err = max(float(np.max(np.abs(new.eps_p - ref_ep))) / scale, abs(float(new.p) - ref_p) / max(1.0, ref_p))
        worst = max(worst, err)
        worst_kkt = max(worst_kkt, _kkt_violation(eps, new, prev, alpha, 1e-6, mu, sigma0))
    ok = worst <= tol and worst_kkt <= tol
    return Check("return map vs mpmath oracle", ok,
                 f"{n} samples, max error {worst:.2e}, max KKT violation {worst_kkt:.2e} (tol {tol:g})")


# -- gradients -------------------------------------------------------------------

def _small_model(seed: int = 0):
    mesh = generate_mesh(4.0, 2.0, 0.25, kind="jittered-delaunay", seed=seed)
    p1 = PhaseProperties(E=1.0, nu=0.2, Gc=1.0, sigma0=0.6)
    p2 = PhaseProperties(E=2.0, nu=0.3, Gc=1.5, sigma0=0.4)
    spec = LayerSpec(theta=np.pi / 6, tau=1.0, phase1=p1, phase2=p2, pad_width=0.5)
    mat = build_material_field(mesh, spec)
    return Model(mesh, mat, 0.3, 1e-6)


def _smooth_state(model: Model, seed: int) -> State:
    rng = np.random.default_rng(seed)
    mesh = model.mesh
    x, y = mesh.nodes[:, 0], mesh.nodes[:, 1]
    st = State.initial(mesh)
    c = rng.normal(size=6)
    st.u[:, 0] = 0.05 * (c[0] * np.sin(x + c[1]) + c[2] * y * x)
    st.u[:, 1] = 0.05 * (c[3] * np.cos(y + c[4]) + c[5] * x)
    st.alpha = 0.5 + 0.3 * np.sin(0.9 * x + rng.uniform()) * np.cos(1.3 * y)
    ne = mesh.n_elements
    dev = rng.normal(scale=0.01, size=(ne, 3))
    st.plastic.eps_p = np.column_stack([dev[:, 0], dev[:, 1], -dev[:, 0] - dev[:, 1], dev[:, 2]])
    st.plastic.p = rng.uniform(0, 0.05, size=ne)
    return st


def check_gradients(n_nodes: int = 20, seed: int = 1, tol: float = 1e-5) -> Check:
    model = _small_model()
    st = _smooth_state(model, seed)
    rng = np.random.default_rng(seed)
    gu = energy_gradient_u(st, model)
    ga = energy_gradient_alpha(st, model)
    E = lambda s: assemble_total_energy(s, model).total
    # pad damage is frozen, so only nodes away from the pad carry damage unknowns
    in_pad = np.zeros(model.mesh.n_nodes, dtype=bool)
    in_pad[model.mesh.elements[~model.damageable].ravel()] = True
    nodes = rng.choice(np.flatnonzero(~in_pad), size=n_nodes, replace=False)
    h = 1e-6
    worst = 0.0
    for i in nodes:
        for comp in range(2):
            sp_, sm_ = st.copy(), st.copy()
            sp_.u[i, comp] += h
            sm_.u[i, comp] -= h
            fd = (E(sp_) - E(sm_)) / (2 * h)
            worst = max(worst, abs(fd - gu[i, comp]) / max(abs(gu[i, comp]), 1e-3))
        sp_, sm_ = st.copy(), st.copy()
        sp_.alpha[i] += h
        sm_.alpha[i] -= h
        fd = (E(sp_) - E(sm_)) / (2 * h)
        worst = max(worst, abs(fd - ga[i]) / max(abs(ga[i]), 1e-3))
    return Check("energy gradients vs central differences", worst <= tol,
                 f"{n_nodes} nodes, max relative error {worst:.2e} (tol {tol:g})")


# -- J-integral ------------------------------------------------------------------

def fictitious_crack_J(x_tips=(20.0,), amplitude_scale: float = 1.0, delta: float = 0.25,
                       L: float = 60.0, H: float = 20.0, pad: float = 4.0, kind: str = "structured"):
    """J on two pad rings for a homogeneous elastic body with a fixed alpha=1 band behind the tip.

    Returns one ``(J_inner_ring, J_outer_ring)`` pair per tip position.
    """
    mesh = generate_mesh(L, H, delta, kind=kind)
    ph = PhaseProperties(E=1.0, nu=0.2, Gc=1.0, sigma0=ELASTIC_SENTINEL)
    mat = build_material_field(mesh, LayerSpec(theta=0.0, tau=8.0, phase1=ph, phase2=ph, pad_width=pad))
    model = Model(mesh, mat, 2 * delta, 1e-6)
    ra, rb = default_j_domains(pad, delta)
    out = []
    for x in x_tips:
        sp = SurfingParams(x0=x, y0=H / 2, amplitude_scale=amplitude_scale)
        st = State.initial(mesh)
        st.alpha[seed_nodes(mesh, 0.0, x, H / 2, delta)] = 1.0
        st.u = solve_displacement(st, model, boundary_values(mesh, 0.0, sp), SolverSettings())
        out.append((j_integral(st, model, ra), j_integral(st, model, rb)))
    return out


def check_j_consistency() -> list[Check]:
    tips = (20.0, 20.25, 20.5)
    pairs = fictitious_crack_J(tips)
    rel = [abs(a - 1.0) for a, _ in pairs]
    path = [abs(a - b) / abs(b) for a, b in pairs]
    (a15, _), = fictitious_crack_J((20.0,), amplitude_scale=1.5)
    scale_err = abs(a15 / (2.25 * pairs[0][0]) - 1.0)
    return [
        Check("J vs Gc_ref for the surfing K-field", max(rel) <= 0.05,
              "J = " + ", ".join(f"{a:.4f}" for a, _ in pairs) + " at 3 tip positions (tol 5%)"),
        Check("J path independence (two pad rings)", max(path) <= 0.02,
              f"max ring mismatch {max(path):.2e} (tol 2%)"),
        Check("J quadratic in amplitude_scale", scale_err <= 0.01,
              f"J(1.5)/(2.25 J(1)) - 1 = {scale_err:.2e} (tol 1%)"),
    ]


def run_all(return_map_samples: int = 1000) -> list[Check]:
    checks = [check_return_map(return_map_samples), check_gradients()]
    checks += check_j_consistency()
    return checks
