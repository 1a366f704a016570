import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from coagfrag.grid import DensityState, Exponential, Monodisperse, assemble, build_grid, project_initial
from coagfrag.kernels import KernelSystem, breakage, coagulation, selection
from coagfrag.oracles import riccati_N0
from coagfrag.solver import (IntegratorConfig, Simulation, StiffnessError, VerificationError, evolve,
                             integrate, step)

GRID = build_grid(1e-6, 1e3, 180)


def tables_for(coag="constant", sel="zero", **cp):
    return assemble(KernelSystem(coagulation(coag, **cp), selection(sel), breakage("binary-uniform")), GRID)


@pytest.fixture(scope="module")
def benchmark_run():
    sys_ = KernelSystem(coagulation("smoluchowski", a=3), selection("power", c=1.0, exponent=1.0),
                        breakage("binary-uniform"))
    return integrate(Simulation(sys_, 1e-6, 1e3, 180, Exponential()))


@pytest.fixture(scope="module")
def constant_run():
    sys_ = KernelSystem(coagulation("constant"), selection("zero"), breakage("binary-uniform"))
    return integrate(Simulation(sys_, 1e-6, 1e3, 180, Exponential()))


def test_config_validation():
    for bad in ({"rel_tol": 0.0}, {"abs_tol": -1.0}, {"dt_init": 1.0, "dt_max": 0.1}, {"t_end": 0.0}):
        with pytest.raises(ValueError):
            IntegratorConfig(**bad)


def test_zero_rate_step():
    cfg = IntegratorConfig(dt_max=0.1)
    s = project_initial(Exponential(), GRID)
    new, ok, dt_next = step(s, tables_for("zero"), 1e-3, cfg)
    assert ok and np.array_equal(new.conc, s.conc)
    assert dt_next == pytest.approx(5e-3)
    _, _, dt_next = step(s, tables_for("zero"), 0.05, cfg)
    assert dt_next == 0.1


def test_single_step_riccati():
    s = DensityState(0.0, np.eye(GRID.m)[60])
    new, ok, _ = step(s, tables_for(), 1e-3, IntegratorConfig())
    assert ok
    assert new.conc.sum() == pytest.approx(2.0 / (2.0 + 1e-3), abs=1e-9)
    # first-order part of the expansion
    assert new.conc.sum() == pytest.approx(1 - 5e-4, abs=3e-7)


def test_single_step_breakage_growth():
    s = DensityState(0.0, np.eye(GRID.m)[-1])
    t = assemble(KernelSystem(coagulation("zero"), selection("constant"), breakage("binary-uniform")), GRID)
    dt = 1e-2
    new, ok, _ = step(s, t, dt, IntegratorConfig())
    assert ok
    assert new.conc.sum() == pytest.approx(math.exp(dt), rel=1e-8)


def test_constant_kernel_number(constant_run):
    N0 = constant_run.moment(0.0)
    assert N0[-1] == pytest.approx(2.0 / 3.0, rel=1e-3)
    assert np.allclose(N0, riccati_N0(constant_run.times, n0=N0[0]), rtol=1e-6)


def test_zero_kernels_leave_state_unchanged():
    sys_ = KernelSystem(coagulation("zero"), selection("zero"), breakage("binary-uniform"))
    run = integrate(Simulation(sys_, 1e-6, 1e3, 180, Exponential(), IntegratorConfig(t_end=5.0, dt_max=1.0)))
    assert run.times[-1] == 5.0
    assert np.array_equal(run.states[-1].conc, run.states[0].conc)


def test_benchmark_mass_drift(benchmark_run):
    N1 = benchmark_run.moment(1.0)
    assert np.max(np.abs(N1 - N1[0])) / N1[0] <= 1e-4


def test_ledger_closure(benchmark_run, constant_run):
    for run in (benchmark_run, constant_run):
        N1 = run.moment(1.0)
        closure = np.abs(N1 + run.leak - N1[0]) / N1[0]
        assert closure.max() <= 10 * 1e-8
        booked = np.abs(N1 + run.leak - run.clipped - N1[0]) / N1[0]
        assert booked.max() <= 1e-13


def test_nonnegative_and_times(benchmark_run):
    assert all(np.all(s.conc >= 0) for s in benchmark_run.states)
    assert np.all(np.diff(benchmark_run.times) > 0)
    assert benchmark_run.times[0] == 0.0 and benchmark_run.times[-1] == 1.0
    assert [s.t for s in benchmark_run.states] == list(benchmark_run.times)


def test_tolerance_convergence():
    sys_ = KernelSystem(coagulation("constant"), selection("zero"), breakage("binary-uniform"))
    final = []
    for rtol in (1e-6, 5e-7):
        run = integrate(Simulation(sys_, 1e-6, 1e3, 180, Exponential(), IntegratorConfig(rel_tol=rtol)))
        final.append(run.moment(0.0)[-1])
    assert abs(final[0] - final[1]) < 1e-6


def test_determinism():
    sys_ = KernelSystem(coagulation("smoluchowski", a=3), selection("power"), breakage("parabolic"))
    sim = Simulation(sys_, 1e-4, 1e2, 60, Exponential(), IntegratorConfig(t_end=0.5))
    a, b = integrate(sim), integrate(sim)
    assert all(np.array_equal(x.conc, y.conc) for x, y in zip(a.states, b.states))
    assert a.dt_history == b.dt_history and np.array_equal(a.leak, b.leak)


def test_stiffness_detected():
    huge = assemble(KernelSystem(coagulation("constant", c=1e20), selection("zero"), breakage("binary-uniform")),
                    GRID)
    s = project_initial(Exponential(), GRID)
    cfg = IntegratorConfig()
    with pytest.raises(StiffnessError, match="underflow"):
        evolve(huge, s, cfg, [0.0, 1.0], GRID)
    with pytest.raises(StiffnessError):
        step(s, huge, 1e-15, cfg)


def test_verification_gate():
    bad = KernelSystem(coagulation("custom", func=lambda x, y: x * y, k=1.0, sigma=0.0, lam=1.0),
                       selection("zero"), breakage("binary-uniform"))
    sim = Simulation(bad, 1e-3, 1e1, 20, Monodisperse(3, 0.1), IntegratorConfig(t_end=0.1))
    with pytest.raises(VerificationError, match="coagulation_bound"):
        integrate(sim)
    from dataclasses import replace
    run = integrate(replace(sim, strict=False))
    assert "verification-failed" in run.flags


def test_snapshot_validation():
    s = project_initial(Exponential(), GRID)
    with pytest.raises(ValueError):
        evolve(tables_for(), s, IntegratorConfig(), [0.0, 0.5, 0.5], GRID)
    with pytest.raises(ValueError):
        evolve(tables_for(), s, IntegratorConfig(), [0.1, 0.5], GRID)


@given(st.lists(st.floats(0, 2), min_size=8, max_size=8), st.floats(1e-4, 0.2))
def test_accepted_steps_nonnegative(c, dt):
    g = build_grid(1e-2, 1e2, 8)
    t = assemble(KernelSystem(coagulation("sum"), selection("power"), breakage("ternary-uniform")), g)
    new, ok, dt_next = step(DensityState(0.0, c), t, dt, IntegratorConfig())
    assert dt_next > 0
    if ok:
        assert np.all(new.conc >= 0)
        assert new.t == dt
