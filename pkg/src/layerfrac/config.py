"""Simulation configuration: strict JSON schema, defaults and invariants.

Every section is a frozen dataclass. ``parse_config`` rejects unknown keys
so a misspelled physics parameter can never be silently ignored, and
``to_json`` writes a document that parses back to an identical config.
Optional fields left as ``null`` are resolved from the rest of the config
by properties of :class:`SimulationConfig` (for example the default
initial tip position depends on the pad width and on ``ell``).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any

from . import constitutive as cm
from .loading import Schedule, SurfingParams
from .microstructure import LayerSpec, PhaseProperties, averaged_pad_properties, centered_offset
from .solver import SolverSettings


class ConfigError(ValueError):
    pass


MESH_KINDS = ("structured", "jittered-delaunay")


@dataclass(frozen=True)
class GeometryConfig:
    L: float = 352.0
    H: float = 40.0
    pad_width: float = 4.0


@dataclass(frozen=True)
class MeshConfig:
    delta: float = 0.1
    kind: str = "jittered-delaunay"
    seed: int = 0


@dataclass(frozen=True)
class RegularizationConfig:
    ell: float = 0.25
    eta: float = 1e-6


@dataclass(frozen=True)
class PhasesConfig:
    phase1: PhaseProperties = field(default_factory=PhaseProperties)
    phase2: PhaseProperties = field(default_factory=PhaseProperties)
    theta: float = 0.0
    tau: float = 32.0
    origin_offset: float | None = None


@dataclass(frozen=True)
class LoadingConfig:
    """Surfing load and time stepping.

    ``x0``/``y0`` default to ``pad_width + 2 ell`` and ``H/2``; the reference
    properties default to the averaged pad material; ``dt`` defaults to
    ``delta / V`` and ``t_end`` to the time at which the nominal tip is
    ``2 ell`` short of the right pad. The seeded crack runs from
    ``seed_start`` to the initial tip.
    """

    V: float = 1.0
    x0: float | None = None
    y0: float | None = None
    amplitude_scale: float = 1.0
    E_ref: float | None = None
    nu_ref: float | None = None
    Gc_ref: float | None = None
    t_start: float = 0.0
    t_end: float | None = None
    dt: float | None = None
    seed_start: float = 0.0


@dataclass(frozen=True)
class OutputConfig:
    """Output location and diagnostic thresholds.

    ``window_tip_x`` restricts the effective-toughness maximum to steps whose
    nominal tip x lies in the given interval; ``null`` means from
    ``x0 + window_skip_ell * ell`` to the last step.
    """

    directory: str = "out"
    snapshot_stride: int = 10
    wake_threshold: float = 1e-3
    tip_threshold: float = 0.95
    path_threshold: float = 0.95
    window_tip_x: tuple[float, float] | None = None
    window_skip_ell: float = 4.0


@dataclass(frozen=True)
class SimulationConfig:
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    mesh: MeshConfig = field(default_factory=MeshConfig)
    regularization: RegularizationConfig = field(default_factory=RegularizationConfig)
    phases: PhasesConfig = field(default_factory=PhasesConfig)
    loading: LoadingConfig = field(default_factory=LoadingConfig)
    solver: SolverSettings = field(default_factory=SolverSettings)
    output: OutputConfig = field(default_factory=OutputConfig)

    def __post_init__(self):
        validate(self)

    # -- resolved quantities -------------------------------------------------
    @property
    def x0(self) -> float:
        x0 = self.loading.x0
        return self.geometry.pad_width + 2 * self.regularization.ell if x0 is None else x0

    @property
    def y0(self) -> float:
        return 0.5 * self.geometry.H if self.loading.y0 is None else self.loading.y0

    @property
    def origin_offset(self) -> float:
        off = self.phases.origin_offset
        if off is None:
            return centered_offset(self.phases.theta, self.phases.tau, (self.x0, self.y0))
        return off

    def layer_spec(self) -> LayerSpec:
        return LayerSpec(
            theta=self.phases.theta,
            tau=self.phases.tau,
            phase1=self.phases.phase1,
            phase2=self.phases.phase2,
            origin_offset=self.origin_offset,
            pad_width=self.geometry.pad_width,
        )

    def surfing_params(self) -> SurfingParams:
        pad = averaged_pad_properties(self.phases.phase1, self.phases.phase2)
        ld = self.loading
        return SurfingParams(
            E_ref=pad.E if ld.E_ref is None else ld.E_ref,
            nu_ref=pad.nu if ld.nu_ref is None else ld.nu_ref,
            Gc_ref=pad.Gc if ld.Gc_ref is None else ld.Gc_ref,
            V=ld.V,
            x0=self.x0,
            y0=self.y0,
            amplitude_scale=ld.amplitude_scale,
        )

    def schedule(self) -> Schedule:
        ld = self.loading
        dt = self.mesh.delta / ld.V if ld.dt is None else ld.dt
        if ld.t_end is None:
            x_end = self.geometry.L - self.geometry.pad_width - 2 * self.regularization.ell
            t_end = (x_end - self.x0) / ld.V
        else:
            t_end = ld.t_end
        return Schedule(ld.t_start, t_end, dt)

    def window_tip_x(self) -> tuple[float, float]:
        if self.output.window_tip_x is not None:
            return tuple(self.output.window_tip_x)
        return self.x0 + self.output.window_skip_ell * self.regularization.ell, math.inf

    @property
    def Gc_num(self) -> float:
        """Numerical toughness of the softer-fracture phase, the normalization for G_eff."""
        Gc = min(self.phases.phase1.Gc, self.phases.phase2.Gc)
        return float(cm.numerical_toughness(Gc, self.mesh.delta, self.regularization.ell))

    def ductility_ratios(self) -> dict[str, float]:
        ell = self.regularization.ell
        out = {}
        for name in ("phase1", "phase2"):
            p = getattr(self.phases, name)
            out[name] = float(cm.ductility_ratio(cm.nucleation_stress(p.E, p.nu, p.Gc, ell), p.sigma0))
        return out

    # -- serialization -------------------------------------------------------
    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        w = d["output"]["window_tip_x"]
        d["output"]["window_tip_x"] = None if w is None else list(w)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def validate(cfg: SimulationConfig) -> None:
    """Raise :class:`ConfigError` naming the first violated constraint."""
    g, m, r, ph, ld, out = cfg.geometry, cfg.mesh, cfg.regularization, cfg.phases, cfg.loading, cfg.output

    def need(ok: bool, what: str):
        if not ok:
            raise ConfigError(f"constraint violated: {what}")

    need(g.L > 0 and g.H > 0, f"L > 0 and H > 0 (L={g.L}, H={g.H})")
    need(m.delta > 0, f"delta > 0 (delta={m.delta})")
    need(m.kind in MESH_KINDS, f"mesh.kind in {MESH_KINDS} (kind={m.kind!r})")
    need(r.eta > 0, f"eta > 0 (eta={r.eta})")
    need(r.ell >= 2 * m.delta, f"ell >= 2*delta (ell={r.ell}, delta={m.delta})")
    need(ph.tau >= 4 * r.ell, f"tau >= 4*ell (tau={ph.tau}, ell={r.ell})")
    need(0 <= ph.theta <= math.pi / 2 + 1e-4, f"0 <= theta <= pi/2 (theta={ph.theta})")
    need(g.pad_width - 1.5 * m.delta > 4 * m.delta,
         f"pad_width > 5.5*delta so the J rings fit in the pad (pad_width={g.pad_width}, delta={m.delta})")
    need(2 * g.pad_width < min(g.L, g.H), f"2*pad_width < min(L, H) (pad_width={g.pad_width})")
    need(g.pad_width >= 4 * r.ell - 1e-12,
         f"pad_width >= 4*ell (pad_width={g.pad_width}, ell={r.ell})")
    need(ld.V > 0, f"V > 0 (V={ld.V})")
    need(ld.amplitude_scale >= 0, f"amplitude_scale >= 0 (amplitude_scale={ld.amplitude_scale})")
    need(g.pad_width <= cfg.x0 < g.L - g.pad_width,
         f"pad_width <= x0 < L - pad_width (x0={cfg.x0})")
    need(g.pad_width < cfg.y0 < g.H - g.pad_width, f"pad_width < y0 < H - pad_width (y0={cfg.y0})")
    need(0 <= ld.seed_start <= cfg.x0, f"0 <= seed_start <= x0 (seed_start={ld.seed_start})")
    need(ld.dt is None or ld.dt > 0, f"dt > 0 (dt={ld.dt})")
    need(ld.t_end is None or ld.t_end > ld.t_start, f"t_end > t_start (t_end={ld.t_end})")
    need(out.snapshot_stride >= 0, f"snapshot_stride >= 0 (snapshot_stride={out.snapshot_stride})")
    need(out.wake_threshold > 0, f"wake_threshold > 0 (wake_threshold={out.wake_threshold})")
    need(0 < out.tip_threshold <= 1 and 0 < out.path_threshold <= 1, "tip and path thresholds in (0, 1]")
    if out.window_tip_x is not None:
        need(len(out.window_tip_x) == 2 and out.window_tip_x[0] < out.window_tip_x[1],
             f"window_tip_x is an increasing pair (window_tip_x={out.window_tip_x})")
    x_last = cfg.x0 + ld.V * cfg.schedule().t_end
    need(x_last <= g.L - g.pad_width, f"nominal tip stays left of the right pad (final x={x_last:.4g})")


# -- parsing ------------------------------------------------------------------

_SECTIONS = {
    "geometry": GeometryConfig,
    "mesh": MeshConfig,
    "regularization": RegularizationConfig,
    "phases": PhasesConfig,
    "loading": LoadingConfig,
    "solver": SolverSettings,
    "output": OutputConfig,
}


def _check_keys(data: Any, allowed, where: str) -> dict:
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object, got {type(data).__name__}")
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {unknown}; allowed: {sorted(allowed)}")
    return data


def _coerce(value, default, where: str):
    """Check a JSON scalar against the type of the field default."""
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float) or default is None:
        ok = value is None if default is None and value is None else (
            isinstance(value, (int, float)) and not isinstance(value, bool))
        if ok and value is not None:
            value = float(value)
    elif isinstance(default, str):
        ok = isinstance(value, str)
    else:
        ok = True
    if not ok:
        raise ConfigError(f"{where}: bad value {value!r}")
    return value


def _phase(data: Any, ell: float, where: str) -> PhaseProperties:
    keys = [f.name for f in fields(PhaseProperties)] + ["r_y"]
    data = dict(_check_keys(data, keys, where))
    if "r_y" in data:
        if "sigma0" in data:
            raise ConfigError(f"{where}: give either sigma0 or r_y, not both")
        r_y = _coerce(data.pop("r_y"), 1.0, f"{where}.r_y")
        if not r_y > 0:
            raise ConfigError(f"{where}.r_y must be positive")
        E, nu, Gc = (float(data.get(k, getattr(PhaseProperties(), k))) for k in ("E", "nu", "Gc"))
        data["sigma0"] = float(cm.yield_strength_for_ratio(E, nu, Gc, ell, r_y))
    kw = {k: _coerce(v, 1.0, f"{where}.{k}") for k, v in data.items()}
    try:
        return PhaseProperties(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _section(cls, data: Any, where: str, ell: float):
    names = {f.name: f for f in fields(cls)}
    data = _check_keys(data, names, where)
    proto = cls()
    kw = {}
    for k, v in data.items():
        path = f"{where}.{k}"
        if cls is PhasesConfig and k in ("phase1", "phase2"):
            kw[k] = _phase(v, ell, path)
        elif cls is OutputConfig and k == "window_tip_x":
            if v is not None:
                if not (isinstance(v, list) and len(v) == 2):
                    raise ConfigError(f"{path}: expected [x_a, x_b] or null")
                v = tuple(_coerce(x, 0.0, path) for x in v)
            kw[k] = v
        else:
            kw[k] = _coerce(v, getattr(proto, k), path)
    try:
        return cls(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def config_from_dict(data: dict) -> SimulationConfig:
    data = _check_keys(data, _SECTIONS, "config")
    reg = data.get("regularization", {})
    ell = reg.get("ell", RegularizationConfig.ell) if isinstance(reg, dict) else RegularizationConfig.ell
    sections = {name: _section(cls, data.get(name, {}), name, float(ell)) for name, cls in _SECTIONS.items()}
    return SimulationConfig(**sections)


def parse_config(text: str) -> SimulationConfig:
    """Parse a JSON document; omitted fields take the default values."""
    try:
        data = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON: {exc}") from exc
    return config_from_dict(data)


def load_config(path) -> SimulationConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def desk_config(**sections) -> SimulationConfig:
    """Reduced geometry for runs of a few minutes.

    ``L=60, H=20, pad_width=4, ell=0.5, delta=0.25, tau=8``; keyword
    arguments replace whole sections (for example ``phases=PhasesConfig(...)``).
    """
    base = SimulationConfig(
        geometry=GeometryConfig(L=60.0, H=20.0, pad_width=4.0),
        mesh=MeshConfig(delta=0.25),
        regularization=RegularizationConfig(ell=0.5),
        phases=PhasesConfig(tau=8.0),
    )
    return replace(base, **sections)
