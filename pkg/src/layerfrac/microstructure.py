"""Layered two-phase microstructure embedded in an undamageable pad."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import Mesh

ELASTIC_SENTINEL = 1.0e6

PAD, PHASE1, PHASE2 = 0, 1, 2


@dataclass(frozen=True)
class PhaseProperties:
    E: float = 1.0
    nu: float = 0.2
    Gc: float = 1.0
    sigma0: float = 0.625

    def __post_init__(self):
        if not self.E > 0:
            raise ValueError(f"E must be positive, got {self.E}")
        if not 0 <= self.nu < 0.5:
            raise ValueError(f"nu must lie in [0, 0.5), got {self.nu}")
        if not self.Gc > 0:
            raise ValueError(f"Gc must be positive, got {self.Gc}")
        if not self.sigma0 > 0:
            raise ValueError(f"sigma0 must be positive, got {self.sigma0}")


@dataclass(frozen=True)
class LayerSpec:
    """Layers at angle ``theta`` to the x axis, thickness ``tau`` along the normal."""

    theta: float
    tau: float
    phase1: PhaseProperties
    phase2: PhaseProperties
    origin_offset: float = 0.0
    pad_width: float = 4.0

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if not -1e-12 <= self.theta <= np.pi / 2 + 1e-4:
            raise ValueError(f"theta must lie in [0, pi/2], got {self.theta}")
        if not self.pad_width > 0:
            raise ValueError(f"pad_width must be positive, got {self.pad_width}")

    @property
    def normal(self) -> np.ndarray:
        return np.array([-np.sin(self.theta), np.cos(self.theta)])


def centered_offset(theta: float, tau: float, point) -> float:
    """Offset that puts ``point`` in the middle of a phase-1 band."""
    n = np.array([-np.sin(theta), np.cos(theta)])
    return 0.5 * tau - float(np.dot(point, n))


def phase_of_point(x, spec: LayerSpec):
    """Phase id (1 or 2) of one point or an ``(n, 2)`` array of points."""
    x = np.asarray(x, dtype=float)
    s = (x @ spec.normal + spec.origin_offset) / spec.tau
    band = np.floor(s).astype(np.int64)
    phase = np.where(band % 2 == 0, PHASE1, PHASE2)
    return int(phase) if phase.ndim == 0 else phase


def averaged_pad_properties(p1: PhaseProperties, p2: PhaseProperties) -> PhaseProperties:
    """Arithmetic mean of E, nu and Gc; the pad never yields."""
    return PhaseProperties(
        E=0.5 * (p1.E + p2.E),
        nu=0.5 * (p1.nu + p2.nu),
        Gc=0.5 * (p1.Gc + p2.Gc),
        sigma0=ELASTIC_SENTINEL,
    )


@dataclass(frozen=True)
class MaterialField:
    """Per-element material data. Arrays are indexed by element."""

    E: np.ndarray
    nu: np.ndarray
    Gc: np.ndarray
    sigma0: np.ndarray
    damageable: np.ndarray
    phase_id: np.ndarray
    pad: PhaseProperties
    pad_width: float

    @property
    def lam(self) -> np.ndarray:
        return self.E * self.nu / ((1 + self.nu) * (1 - 2 * self.nu))

    @property
    def mu(self) -> np.ndarray:
        return self.E / (2 * (1 + self.nu))

    def properties(self, e: int) -> PhaseProperties:
        return PhaseProperties(float(self.E[e]), float(self.nu[e]), float(self.Gc[e]), float(self.sigma0[e]))


def pad_mask(mesh: Mesh, pad_width: float) -> np.ndarray:
    c = mesh.centroids
    d = np.minimum.reduce([c[:, 0], mesh.L - c[:, 0], c[:, 1], mesh.H - c[:, 1]])
    return d < pad_width


def build_material_field(mesh: Mesh, spec: LayerSpec) -> MaterialField:
    if spec.pad_width >= min(mesh.L, mesh.H) / 2:
        raise ValueError(
            f"pad_width={spec.pad_width} leaves no layered interior in a {mesh.L}x{mesh.H} domain"
        )
    phase = phase_of_point(mesh.centroids, spec)
    in_pad = pad_mask(mesh, spec.pad_width)
    phase = np.where(in_pad, PAD, phase)
    pad = averaged_pad_properties(spec.phase1, spec.phase2)

    def pick(attr: str) -> np.ndarray:
        table = np.array([getattr(pad, attr), getattr(spec.phase1, attr), getattr(spec.phase2, attr)])
        arr = table[phase]
        arr.setflags(write=False)
        return arr

    damageable = ~in_pad
    damageable.setflags(write=False)
    phase.setflags(write=False)
    return MaterialField(
        E=pick("E"),
        nu=pick("nu"),
        Gc=pick("Gc"),
        sigma0=pick("sigma0"),
        damageable=damageable,
        phase_id=phase,
        pad=pad,
        pad_width=spec.pad_width,
    )
