"""Plane-strain elastic-perfectly-plastic response with phase-field degradation.

Strain-like tensors are stored as arrays whose last axis holds the
components ``(xx, yy, zz, xy)`` (tensor shear, not engineering). The
``zz`` slot is kept because von Mises flow under plane strain produces
out-of-plane plastic strain. All functions broadcast over leading axes so
they apply to one point or to every element at once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# weights turning component products into the full double contraction
_W = np.array([1.0, 1.0, 1.0, 2.0])
_TRACE = np.array([1.0, 1.0, 1.0, 0.0])


@dataclass
class PlasticPointState:
    eps_p: np.ndarray
    p: np.ndarray

    @classmethod
    def zeros(cls, n: int | None = None) -> "PlasticPointState":
        if n is None:
            return cls(np.zeros(4), np.zeros(()))
        return cls(np.zeros((n, 4)), np.zeros(n))

    def copy(self) -> "PlasticPointState":
        return PlasticPointState(self.eps_p.copy(), self.p.copy())


def lame_parameters(E, nu):
    E = np.asarray(E, dtype=float)
    nu = np.asarray(nu, dtype=float)
    if np.any(nu >= 0.5) or np.any(nu < -1.0):
        raise ValueError("Poisson ratio must satisfy -1 < nu < 0.5")
    if np.any(E <= 0):
        raise ValueError("Young's modulus must be positive")
    lam = E * nu / ((1 + nu) * (1 - 2 * nu))
    mu = E / (2 * (1 + nu))
    return lam, mu


def ddot(a, b):
    return np.sum(a * b * _W, axis=-1)


def trace(a):
    return a[..., 0] + a[..., 1] + a[..., 2]


def deviator(a):
    tr = trace(a)[..., None] / 3.0
    return a - tr * _TRACE


def plane_strain(exx, eyy, exy):
    z = np.zeros_like(np.asarray(exx, dtype=float))
    return np.stack(np.broadcast_arrays(exx, eyy, z, exy), axis=-1).astype(float)


def elastic_stress(eps, eps_p, lam, mu):
    """Undegraded stress C:(eps - eps_p)."""
    e = np.asarray(eps) - np.asarray(eps_p)
    lam = np.asarray(lam)[..., None]
    mu = np.asarray(mu)[..., None]
    return lam * trace(e)[..., None] * _TRACE + 2.0 * mu * e


def elastic_energy_density(eps, eps_p, lam, mu):
    """Undegraded density 0.5 (eps - eps_p):C:(eps - eps_p)."""
    e = np.asarray(eps) - np.asarray(eps_p)
    return 0.5 * np.asarray(lam) * trace(e) ** 2 + np.asarray(mu) * ddot(e, e)


def stiffness_factor(alpha, eta):
    return eta + (1.0 - alpha) ** 2


def plastic_factor(alpha):
    return (1.0 - alpha) ** 2


def degraded_stress(eps, eps_p, alpha, eta, lam, mu):
    a = stiffness_factor(np.asarray(alpha, dtype=float), eta)
    return a[..., None] * elastic_stress(eps, eps_p, lam, mu)


def equivalent_stress(s):
    """von Mises equivalent sqrt(3/2 s:s) of a deviatoric tensor."""
    return np.sqrt(1.5 * np.maximum(ddot(s, s), 0.0))


def return_map(eps, prev: PlasticPointState, alpha, eta, mu, sigma0) -> tuple[PlasticPointState, np.ndarray]:
    """Radial return from the step-start plastic state ``prev``.

    Minimizes ``A psi(eps - eps_p) + B sigma0 |eps_p - prev.eps_p|_eq`` with
    ``A = eta + (1-alpha)^2`` and ``B = (1-alpha)^2``. Returns the new state
    and the boolean mask of yielding points.
    """
    alpha = np.asarray(alpha, dtype=float)
    A = stiffness_factor(alpha, eta)
    if np.any(A <= 0):
        raise ValueError("degraded stiffness must stay positive (eta > 0 required)")
    B = plastic_factor(alpha)
    mu = np.asarray(mu, dtype=float)
    s_tr = (2.0 * A * mu)[..., None] * deviator(np.asarray(eps) - prev.eps_p)
    q_tr = equivalent_stress(s_tr)
    yield_stress = B * sigma0
    yielding = q_tr > yield_stress
    dp = np.where(yielding, (q_tr - yield_stress) / (3.0 * A * mu), 0.0)
    safe_q = np.where(yielding, q_tr, 1.0)
    flow = 1.5 * s_tr / safe_q[..., None]
    eps_p = prev.eps_p + dp[..., None] * flow
    # exact incompressibility: rebuild zz from the in-plane components
    eps_p[..., 2] = -(eps_p[..., 0] + eps_p[..., 1])
    return PlasticPointState(eps_p, prev.p + dp), yielding


def incremental_potential(eps, eps_p, prev: PlasticPointState, alpha, eta, lam, mu, sigma0):
    """Point energy A psi(eps - eps_p) + B sigma0 (p_prev + dp) for a trial ``eps_p``."""
    A = stiffness_factor(np.asarray(alpha, dtype=float), eta)
    B = plastic_factor(np.asarray(alpha, dtype=float))
    d = deviator(np.asarray(eps_p) - prev.eps_p)
    dp = np.sqrt(2.0 / 3.0 * np.maximum(ddot(d, d), 0.0))
    return A * elastic_energy_density(eps, eps_p, lam, mu) + B * sigma0 * (prev.p + dp)


def consistent_tangent(eps, prev: PlasticPointState, alpha, eta, lam, mu, sigma0) -> np.ndarray:
    """In-plane algorithmic tangent (3x3, engineering Voigt xx, yy, xy) of the return map."""
    alpha = np.asarray(alpha, dtype=float)
    A = stiffness_factor(alpha, eta)
    B = plastic_factor(alpha)
    lam = np.asarray(lam, dtype=float)
    mu = np.asarray(mu, dtype=float)
    G = A * mu
    kappa = A * (lam + 2.0 * mu / 3.0)
    s_tr = (2.0 * G)[..., None] * deviator(np.asarray(eps) - prev.eps_p)
    q_tr = equivalent_stress(s_tr)
    yielding = q_tr > B * sigma0
    safe_q = np.where(yielding, q_tr, 1.0)
    dp = np.where(yielding, (q_tr - B * sigma0) / (3.0 * G), 0.0)
    theta = 1.0 - 3.0 * G * dp / safe_q
    coef_n = 6.0 * G**2 * (dp / safe_q - 1.0 / (3.0 * G))
    coef_n = np.where(yielding, coef_n, 0.0)

    shape = np.shape(q_tr)
    C = np.zeros(shape + (3, 3))
    m = np.array([1.0, 1.0, 0.0])
    idev = np.array([[2.0 / 3.0, -1.0 / 3.0, 0.0], [-1.0 / 3.0, 2.0 / 3.0, 0.0], [0.0, 0.0, 0.5]])
    C += kappa[..., None, None] * np.outer(m, m)
    C += (2.0 * G * theta)[..., None, None] * idev
    nrm = np.sqrt(np.maximum(ddot(s_tr, s_tr), 0.0))
    n = s_tr / np.where(nrm > 0, nrm, 1.0)[..., None]
    v = n[..., [0, 1, 3]]
    C += coef_n[..., None, None] * v[..., :, None] * v[..., None, :]
    return C


def numerical_toughness(Gc, delta, ell):
    return Gc * (1.0 + 3.0 * delta / (8.0 * ell))


def nucleation_stress(E, nu, Gc, ell):
    return np.sqrt(3.0 * Gc * E / (8.0 * ell * (1.0 - nu**2)))


def ductility_ratio(sigma_c, sigma0):
    return sigma_c / sigma0


def yield_strength_for_ratio(E, nu, Gc, ell, r_y):
    """Yield strength giving ductility ratio ``r_y``."""
    return nucleation_stress(E, nu, Gc, ell) / r_y
