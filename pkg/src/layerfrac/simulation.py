"""Quasistatic driver: build the model from a config and march the surfing load."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import analysis as an
from .config import SimulationConfig
from .loading import boundary_values, seed_initial_crack
from .mesh import Mesh, generate_mesh
from .microstructure import build_material_field
from .solver import Model, SolverError, State, Workspace, alternate_minimize, assemble_total_energy
from .vtk import write_snapshot

log = logging.getLogger(__name__)


@dataclass
class RunResult:
    config: SimulationConfig
    model: Model
    state: State
    series: list[an.TimeSeriesRecord]
    snapshots: list[Path] = field(default_factory=list)
    completed: bool = True
    error: str | None = None
    wall_time: float = 0.0

    @property
    def converged(self) -> bool:
        return self.completed and all(r.converged for r in self.series)

    def measurement_records(self) -> list[an.TimeSeriesRecord]:
        xa, xb = self.config.window_tip_x()
        return [r for r in self.series if xa - 1e-9 <= r.tip_nominal_x <= xb + 1e-9]

    def effective_toughness(self) -> float:
        recs = self.measurement_records()
        return an.effective_toughness(recs, (recs[0].t, recs[-1].t) if recs else None)

    def J(self) -> np.ndarray:
        return np.array([r.J for r in self.series])

    def t(self) -> np.ndarray:
        return np.array([r.t for r in self.series])


def build_model(cfg: SimulationConfig, mesh: Mesh | None = None) -> Model:
    if mesh is None:
        mesh = generate_mesh(cfg.geometry.L, cfg.geometry.H, cfg.mesh.delta, kind=cfg.mesh.kind, seed=cfg.mesh.seed)
    mat = build_material_field(mesh, cfg.layer_spec())
    return Model(mesh, mat, cfg.regularization.ell, cfg.regularization.eta)


def initial_state(cfg: SimulationConfig, model: Model) -> State:
    state = State.initial(model.mesh, cfg.schedule().t_start)
    seed_initial_crack(state, model.mesh, cfg.regularization.ell, cfg.surfing_params(), cfg.loading.seed_start)
    return state


def run_quasistatic(cfg: SimulationConfig, out_dir=None, model: Model | None = None,
                    on_record: Callable[[an.TimeSeriesRecord, State], None] | None = None) -> RunResult:
    """March the surfing load through ``cfg.schedule()``.

    Each step sets the boundary displacement, runs alternate minimization,
    commits the step and records J on two nested pad rings, the energies
    and the nominal and actual tip positions. With ``out_dir`` a snapshot is
    written every ``snapshot_stride`` steps and after the last step. A
    solver failure stops the march: the last valid state is written and the
    result is flagged incomplete instead of raising.
    """
    tic = time.perf_counter()
    model = model or build_model(cfg)
    mesh = model.mesh
    sp = cfg.surfing_params()
    ring_a, ring_b = an.default_j_domains(cfg.geometry.pad_width, cfg.mesh.delta)
    state = initial_state(cfg, model)
    ws = Workspace(cfg.solver)
    result = RunResult(cfg, model, state, [])
    stride = cfg.output.snapshot_stride
    snap_dir = None if out_dir is None else Path(out_dir) / "snapshots"

    def snapshot(st: State, k: int):
        if snap_dir is not None:
            result.snapshots.append(write_snapshot(st, model, snap_dir / f"step_{k:05d}.vtk"))

    last_valid = state.copy()
    k = -1
    for k, t in enumerate(cfg.schedule().times()):
        state.t = float(t)
        try:
            res = alternate_minimize(state, model, boundary_values(mesh, state.t, sp), cfg.solver, ws)
            if not np.all(np.isfinite(state.u)) or not np.all(np.isfinite(state.alpha)):
                raise SolverError("non-finite field after alternate minimization")
        except (RuntimeError, FloatingPointError, np.linalg.LinAlgError) as exc:
            # SolverError and LinearSolveError derive from RuntimeError, as do SuperLU failures
            log.error("step %d (t=%.4g) failed: %s", k, t, exc)
            result.completed = False
            result.error = f"step {k} t={t:.6g}: {exc}"
            result.state = last_valid
            snapshot(last_valid, k - 1)
            break
        state.commit_step()
        en = assemble_total_energy(state, model)
        rec = an.TimeSeriesRecord(
            t=state.t,
            J=an.j_integral(state, model, ring_a),
            E_elastic=en.elastic,
            E_surface=en.surface,
            E_plastic=en.plastic,
            tip_nominal_x=sp.tip(state.t)[0],
            tip_actual_x=an.actual_tip_x(state, mesh, sp.y0, cfg.regularization.ell, cfg.output.tip_threshold),
            J_outer=an.j_integral(state, model, ring_b),
            converged=res.converged,
        )
        result.series.append(rec)
        log.info("t=%.4f J=%.5f tip=%.3f/%.3f am_its=%d", rec.t, rec.J, rec.tip_nominal_x, rec.tip_actual_x,
                 res.iterations)
        if on_record is not None:
            on_record(rec, state)
        last_valid = state.copy()
        if stride and k % stride == 0:
            snapshot(state, k)
    else:
        if snap_dir is not None and not (stride and k % stride == 0):
            snapshot(state, k)
    result.wall_time = time.perf_counter() - tic
    return result
