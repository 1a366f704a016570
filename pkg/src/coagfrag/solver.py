"""Adaptive explicit time stepping of the sectional system.

The leaked mass is carried as an extra ODE component so that the mass ledger
N1(t) + leak(t) closes to round-off independently of the step size.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .grid import DensityState, Grid, OperatorTables, assemble, build_grid, project_initial, rates
from .kernels import KernelSystem, TruncationParams, truncate, verify_system

log = logging.getLogger(__name__)

# Dormand-Prince 5(4)
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4

SAFETY = 0.9
GROWTH = 5.0
SHRINK = 0.2


class StiffnessError(RuntimeError):
    """Step size fell below 1e-14 * t_end."""


class VerificationError(RuntimeError):
    def __init__(self, report):
        failed = [k for k, v in report.items() if isinstance(v, dict) and not v.get("passed", True)]
        super().__init__(f"kernel verification failed: {', '.join(failed)}")
        self.report = report


@dataclass(frozen=True)
class IntegratorConfig:
    rel_tol: float = 1e-8
    abs_tol: float = 1e-12
    dt_init: float = 1e-4
    dt_max: float = 0.1
    t_end: float = 1.0

    def __post_init__(self):
        problems = integrator_problems(self)
        if problems:
            raise ValueError("; ".join(problems))


def integrator_problems(cfg) -> list[str]:
    out = []
    if not (cfg.rel_tol > 0 and cfg.abs_tol > 0):
        out.append("tolerances must be positive")
    if not 0 < cfg.dt_init <= cfg.dt_max:
        out.append("need 0 < dt_init <= dt_max")
    if not cfg.t_end > 0:
        out.append("t_end must be positive")
    return out


def _rhs(tables, y):
    r, leak = rates(tables, y[:-1])
    return np.append(r, leak)


def _rk_trial(tables, y, dt):
    k = np.empty((7, y.size))
    k[0] = _rhs(tables, y)
    for s in range(1, 7):
        k[s] = _rhs(tables, y + dt * (np.asarray(_A[s]) @ k[:s]))
    y_new = y + dt * (_B5 @ k)
    err = dt * (_E @ k)
    return y_new, err


def step(state: DensityState, tables: OperatorTables, dt: float, cfg: IntegratorConfig):
    """One embedded Dormand-Prince step.

    Returns ``(new_state, accepted, dt_next)``. A rejected step returns the
    input state. Components below -abs_tol reject the step and halve dt;
    components in [-abs_tol, 0) are clipped and their mass booked.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if dt < 1e-14 * cfg.t_end:
        raise StiffnessError(f"step size {dt:.3e} underflowed at t={state.t:.6g}")
    y = np.append(state.conc, state.leak)
    with np.errstate(over="ignore", invalid="ignore"):   # non-finite trials are rejected below
        y_new, err = _rk_trial(tables, y, dt)
    scale = cfg.abs_tol + cfg.rel_tol * np.maximum(np.abs(y), np.abs(y_new))
    norm = math.sqrt(float(np.mean((err / scale) ** 2)))
    if norm > 1.0 or not np.isfinite(norm):
        factor = SHRINK if not np.isfinite(norm) else max(SHRINK, SAFETY * norm**-0.2)
        return state, False, dt * factor
    conc = y_new[:-1]
    if np.any(conc < -cfg.abs_tol):
        return state, False, 0.5 * dt
    neg = conc < 0
    clipped = state.clipped
    if np.any(neg):
        added = float(-(tables.pivots[neg] @ conc[neg]))
        clipped += added
        log.debug("clipped %d components at t=%g (mass %.3e)", int(neg.sum()), state.t + dt, added)
        conc = np.where(neg, 0.0, conc)
    factor = GROWTH if norm == 0 else min(GROWTH, max(SHRINK, SAFETY * norm**-0.2))
    return (DensityState(state.t + dt, conc, float(y_new[-1]), clipped), True,
            min(dt * factor, cfg.dt_max))


@dataclass
class RunOutput:
    grid: Grid
    times: np.ndarray
    states: list
    moment_orders: tuple
    moments: dict
    leak: np.ndarray
    clipped: np.ndarray
    dt_history: list = field(default_factory=list)
    stats: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)
    system: KernelSystem | None = None

    def moment(self, order: float) -> np.ndarray:
        if order in self.moments:
            return self.moments[order]
        return np.array([float(np.sum(self.grid.pivots**order * s.conc)) for s in self.states])


def evolve(tables: OperatorTables, initial: DensityState, cfg: IntegratorConfig, times,
           grid: Grid, moment_orders=(0.0, 1.0, 2.0)) -> RunOutput:
    """Integrate from ``initial`` through the increasing snapshot ``times``."""
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times[0] != initial.t or np.any(np.diff(times) <= 0):
        raise ValueError("snapshot times must increase strictly from the initial time")
    state = initial
    states = [state]
    dt = cfg.dt_init
    dt_hist = []
    accepted = rejected = 0
    for target in times[1:]:
        while state.t < target:
            remaining = target - state.t
            last = dt >= remaining * (1 - 1e-12)
            trial = remaining if last else dt
            new, ok, dt_next = step(state, tables, trial, cfg)
            if ok:
                accepted += 1
                dt_hist.append(trial)
                if last:
                    new = DensityState(float(target), new.conc, new.leak, new.clipped)
                    # a short landing step must not shrink the proposal
                    dt = max(dt_next, dt) if trial < dt else dt_next
                else:
                    dt = dt_next
                state = new
            else:
                rejected += 1
                dt = dt_next
            if dt < 1e-14 * cfg.t_end:
                raise StiffnessError(f"step size {dt:.3e} underflowed at t={state.t:.6g}")
        states.append(state)
    x = grid.pivots
    moments = {o: np.array([float(np.sum(x**o * s.conc)) for s in states]) for o in moment_orders}
    return RunOutput(
        grid=grid,
        times=times.copy(),
        states=states,
        moment_orders=tuple(moment_orders),
        moments=moments,
        leak=np.array([s.leak for s in states]),
        clipped=np.array([s.clipped for s in states]),
        dt_history=dt_hist,
        stats={"accepted_steps": accepted, "rejected_steps": rejected,
               "rhs_evaluations": 7 * (accepted + rejected),
               "min_dt": min(dt_hist, default=float("nan")),
               "max_dt": max(dt_hist, default=float("nan"))},
    )


@dataclass(frozen=True)
class Simulation:
    """Everything needed for one run."""

    system: KernelSystem
    x_min: float
    x_max: float
    cells: int
    initial: object
    integrator: IntegratorConfig = IntegratorConfig()
    truncation: TruncationParams | None = None
    snapshots: int = 10
    strict: bool = True

    def snapshot_times(self) -> np.ndarray:
        return np.linspace(0.0, self.integrator.t_end, self.snapshots + 1)


def integrate(sim: Simulation, verification: dict | None = None) -> RunOutput:
    """Verify kernels, then build, project and evolve.

    With ``strict`` a failed verification raises before any stepping;
    otherwise it is logged and recorded in ``flags``.
    """
    flags = []
    if verification is None:
        verification = verify_system(sim.system)
    if not verification["passed"]:
        if sim.strict:
            raise VerificationError(verification)
        log.warning("kernel verification failed; continuing because strict mode is off")
        flags.append("verification-failed")
    grid = build_grid(sim.x_min, sim.x_max, sim.cells)
    system = sim.system if sim.truncation is None else truncate(sim.system, sim.truncation)
    tables = assemble(system, grid)
    state0 = project_initial(sim.initial, grid)
    gamma = sim.system.breakage.gamma
    run = evolve(tables, state0, sim.integrator, sim.snapshot_times(), grid,
                 moment_orders=(0.0, 1.0, 2.0, -gamma))
    run.system = system
    run.flags.extend(flags)
    if run.clipped[-1] > 0:
        run.flags.append("negative-clipping")
    return run
