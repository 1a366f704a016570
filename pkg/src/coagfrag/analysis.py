"""Moments, weighted norms and the a-priori bound diagnostics of a run."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .grid import DensityState, Grid
from .kernels import KernelSystem, TruncationParams
from .solver import RunOutput, Simulation, integrate

log = logging.getLogger(__name__)


def _check_grid(state: DensityState, grid: Grid):
    if state.conc.shape != (grid.m,):
        raise ValueError(f"state has {state.conc.size} cells, grid has {grid.m}")


def moment(state: DensityState, order: float, grid: Grid) -> float:
    """sum_i pivot_i**order * conc_i"""
    _check_grid(state, grid)
    return float(np.sum(grid.pivots**order * state.conc))


def omega_norm(state: DensityState, r1: float, r2: float, grid: Grid) -> float:
    if r1 < 1 or not 0 < r2 < 1:
        raise ValueError("omega norm needs r1 >= 1 and 0 < r2 < 1")
    _check_grid(state, grid)
    x = grid.pivots
    return float(np.sum((x**r1 + x**-r2) * np.abs(state.conc)))


def omega_distance(a: DensityState, b: DensityState, r1: float, r2: float, grid: Grid) -> float:
    diff = DensityState(a.t, np.asarray(a.conc) - np.asarray(b.conc))
    return omega_norm(diff, r1, r2, grid)


# --------------------------------------------------------------------------
# moment bounds


@dataclass
class BoundCheck:
    name: str
    passed: bool
    first_violation: int | None = None   # snapshot index
    worst_margin: float = 0.0            # max of value/bound - 1
    detail: str = ""

    def to_dict(self):
        return {"passed": self.passed, "first_violation": self.first_violation,
                "worst_margin": self.worst_margin, "detail": self.detail}


@dataclass
class BoundReport:
    checks: dict
    constants: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks.values())

    def raise_if_failed(self):
        for c in self.checks.values():
            if not c.passed:
                raise AssertionError(f"moment bound {c.name} violated at snapshot {c.first_violation}: {c.detail}")

    def to_dict(self):
        return {"passed": self.passed, "constants": self.constants,
                **{k: v.to_dict() for k, v in self.checks.items()}}


def _against(name, values, bounds, rtol):
    over = values > bounds * (1 + rtol) + 1e-300
    margin = float(np.max(values / np.where(bounds > 0, bounds, np.inf) - 1.0)) if values.size else 0.0
    first = int(np.argmax(over)) if over.any() else None
    detail = "" if first is None else f"{values[first]:.6g} > {bounds[first]:.6g}"
    return BoundCheck(name, first is None, first, margin, detail)


def check_moment_bounds(run: RunOutput, system: KernelSystem, ledger_rtol: float = 1e-6,
                        rtol: float = 1e-9) -> BoundReport:
    """Mass ledger, Gronwall envelopes for N0 and N2, finiteness of N_{-gamma}.

    N0(t) <= (N0(0) + N1) exp(N S0 t) - N1     from dN0/dt <= N S0 (N0 + N1)
    N2(t) <= (N2(0) + A/B) exp(B t) - A/B     from dN2/dt <= A + B N2,
    A = k (N0b**2 + 3 N1 N0b + 2 N1**2), B = 2 k (N1 + N0b), N0b = max_t N0.
    """
    t = run.times
    N0, N1, N2 = run.moment(0.0), run.moment(1.0), run.moment(2.0)
    gamma = system.breakage.gamma
    Ng = run.moment(-gamma)
    n1 = N1[0]
    checks = {}

    closure = np.abs(N1 + run.leak - run.clipped - n1) / max(n1, 1e-300)
    bad = closure > ledger_rtol
    checks["mass"] = BoundCheck("mass", not bad.any(), int(np.argmax(bad)) if bad.any() else None,
                                float(closure.max()), f"max ledger error {closure.max():.3e}")

    NS0 = system.breakage.N * system.selection.S0
    b0 = (N0[0] + n1) * np.exp(NS0 * t) - n1
    checks["N0"] = _against("N0", N0, b0, rtol)

    k = system.coagulation.k
    n0bar = float(N0.max())
    A = k * (n0bar**2 + 3 * n1 * n0bar + 2 * n1**2)
    B = 2 * k * (n1 + n0bar)
    b2 = (N2[0] + A / B) * np.exp(B * t) - A / B
    c2 = _against("N2", N2, b2, rtol)
    if not np.all(np.isfinite(N2)):
        c2 = BoundCheck("N2", False, int(np.argmin(np.isfinite(N2))), math.inf, "non-finite N2")
    checks["N2"] = c2

    fin = np.isfinite(Ng)
    checks["N_neg_gamma"] = BoundCheck("N_neg_gamma", bool(fin.all()),
                                       None if fin.all() else int(np.argmin(fin)),
                                       0.0, f"gamma={gamma:g}")
    consts = {"N0_bar": n0bar, "N1_bar": float(n1), "N": system.breakage.N, "S0": system.selection.S0,
              "k": k, "A": A, "B": B}
    return BoundReport(checks, consts)


# --------------------------------------------------------------------------
# exponential envelope for g = f / x**sigma


@dataclass(frozen=True)
class EnvelopeConstants:
    X: float
    h0: float
    k: float
    lam: float
    sigma: float
    b_bar: float
    S0: float
    moment_bound: float   # running max of N_{ceil(alpha)}

    def h(self, x, t):
        """h0 exp(h0 x k (1+X)**lam X**sigma (e**t - 1) / 2 + t)"""
        x, t = np.asarray(x, float), np.asarray(t, float)
        rate = 0.5 * self.h0 * x * self.k * (1 + self.X) ** self.lam * self.X**self.sigma
        with np.errstate(over="ignore"):   # h = inf is a valid (vacuous) bound
            return self.h0 * np.exp(rate * np.expm1(t) + t)


def density_surrogate(state: DensityState, grid: Grid) -> np.ndarray:
    """Cell-averaged density conc_i / width_i."""
    return state.conc / grid.widths


def envelope_constants(run: RunOutput, system: KernelSystem, strip) -> EnvelopeConstants:
    X1, X2 = strip
    if not 0 < X1 < X2:
        raise ValueError("strip must satisfy 0 < X1 < X2")
    c = system.coagulation
    X = max(1.0 / X1, X2)
    x = run.grid.pivots
    inside = (x >= X1) & (x <= X2)
    g0 = density_surrogate(run.states[0], run.grid)[inside] / x[inside] ** c.sigma
    g0_bar = float(g0.max()) if g0.size else 0.0
    order = math.ceil(system.selection.alpha)
    nbar = float(np.max(run.moment(float(order))))
    frag = X**c.sigma * system.selection.S0 * system.breakage.b_bar * nbar
    return EnvelopeConstants(X, max(g0_bar, frag), c.k, c.lam, c.sigma,
                             system.breakage.b_bar, system.selection.S0, nbar)


@dataclass
class EnvelopeVerdict:
    passed: bool
    worst_ratio: float
    worst_point: tuple | None   # (t, x)
    constants: EnvelopeConstants

    def to_dict(self):
        from dataclasses import asdict
        return {"passed": self.passed, "worst_ratio": self.worst_ratio,
                "worst_point": None if self.worst_point is None else list(self.worst_point),
                "constants": asdict(self.constants)}


def envelope_check(run: RunOutput, constants: EnvelopeConstants, strip) -> EnvelopeVerdict:
    """g = density / x**sigma against h(x, t) at every snapshot and strip pivot."""
    X1, X2 = strip
    x = run.grid.pivots
    inside = (x >= X1) & (x <= X2)
    xs = x[inside]
    worst, where = -math.inf, None
    for t, s in zip(run.times, run.states):
        g = density_surrogate(s, run.grid)[inside] / xs**constants.sigma
        h = constants.h(xs, t)
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(h > 0, g / h, np.where(g > 0, math.inf, 0.0))
        if r.size and r.max() > worst:
            i = int(np.argmax(r))
            worst, where = float(r[i]), (float(t), float(xs[i]))
    return EnvelopeVerdict(bool(worst <= 1.0), worst, where, constants)


# --------------------------------------------------------------------------
# uniqueness distance


class InfeasibleExponents(ValueError):
    pass


@dataclass(frozen=True)
class UniquenessExponents:
    k1: float
    k2: float
    k1_interval: tuple = ()
    warning: str = ""


def uniqueness_constraints_hold(k1, k2, lam, sigma, alpha, r2, eps=1e-12) -> bool:
    return (
        -eps <= (lam - sigma) + k1 <= max(alpha, 1.0) + eps
        and -eps <= sigma - k1 <= r2 + eps
        and 0 < k2 <= min(abs(r2 - sigma), alpha) + eps
    )


def choose_uniqueness_exponents(lam: float, sigma: float, alpha: float, r2: float,
                                gamma: float | None = None) -> UniquenessExponents:
    """k1 at the midpoint of its feasible interval, k2 at its upper bound."""
    lo = max(-(lam - sigma), sigma - r2)
    hi = min(max(alpha, 1.0) - (lam - sigma), sigma)
    k2 = min(abs(r2 - sigma), alpha)
    problems = []
    if lo > hi:
        problems.append(f"k1 interval empty: [{lo:g}, {hi:g}]")
    if not k2 > 0:
        problems.append(f"k2 interval empty: (0, {k2:g}]")
    if problems:
        raise InfeasibleExponents("; ".join(problems))
    k1 = 0.5 * (lo + hi)
    warning = ""
    if gamma is not None and k2 > gamma:
        warning = f"k2={k2:g} exceeds gamma={gamma:g}"
        log.warning(warning)
    assert uniqueness_constraints_hold(k1, k2, lam, sigma, alpha, r2)
    return UniquenessExponents(k1, k2, (lo, hi), warning)


def uniqueness_distance(s1: DensityState, s2: DensityState, exps: UniquenessExponents,
                        grid: Grid) -> float:
    """sum_i (x_i**k1 + x_i**-k2) |conc1_i - conc2_i|"""
    _check_grid(s1, grid)
    _check_grid(s2, grid)
    x = grid.pivots
    return float(np.sum((x**exps.k1 + x**-exps.k2) * np.abs(s1.conc - s2.conc)))


# --------------------------------------------------------------------------
# truncation study


@dataclass
class StudyReport:
    n_list: list
    times: dict                     # label -> time
    to_untruncated: dict            # label -> list of distances, one per n
    pairwise: dict                  # label -> list, d(f_{n_i}, f_{n_i+1})
    compact_sup: list               # sup |density| difference on the compact strip at T
    nonincreasing: bool
    strictly_decreasing: bool
    r1: float
    r2: float
    strip: tuple

    def to_dict(self):
        return {
            "n_list": self.n_list, "r1": self.r1, "r2": self.r2, "times": self.times,
            "distance_to_untruncated": self.to_untruncated, "pairwise_distance": self.pairwise,
            "compact_strip": list(self.strip), "compact_sup_difference": self.compact_sup,
            "nonincreasing": self.nonincreasing, "strictly_decreasing": self.strictly_decreasing,
        }


def truncation_study(sim: Simulation, n_list, r1: float = 2.0, r2: float = 0.5,
                     strip=(0.1, 10.0), ramp: float = 0.5, workers: int = 4) -> StudyReport:
    """Runs the truncated problem for each n and the untruncated one, and
    compares them in the Omega norm at T/2 and T."""
    n_list = [int(n) for n in n_list]
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError("n_list must be strictly increasing")
    base_sim = replace(sim, truncation=None)
    sims = [base_sim] + [replace(sim, truncation=TruncationParams(n, ramp)) for n in n_list]
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        runs = list(pool.map(integrate, sims))
    base, truncated = runs[0], runs[1:]
    grid = base.grid
    T = base.times[-1]
    mid = int(np.argmin(np.abs(base.times - 0.5 * T)))
    idx = {"T/2": mid, "T": len(base.times) - 1}
    times = {k: float(base.times[i]) for k, i in idx.items()}
    to_base = {k: [omega_distance(r.states[i], base.states[i], r1, r2, grid) for r in truncated]
               for k, i in idx.items()}
    pair = {k: [omega_distance(a.states[i], b.states[i], r1, r2, grid)
                for a, b in zip(truncated, truncated[1:])] for k, i in idx.items()}
    x = grid.pivots
    inside = (x >= strip[0]) & (x <= strip[1])
    sup = [float(np.max(np.abs(density_surrogate(r.states[-1], grid) - density_surrogate(base.states[-1], grid))[inside], initial=0.0))
           for r in truncated]
    d = to_base["T"]
    nonincr = all(b <= a for a, b in zip(d, d[1:]))
    strict = all(b < a for a, b in zip(d, d[1:]))
    if not nonincr:
        log.warning("distance to the untruncated run is not monotone in n: %s", d)
    return StudyReport(n_list, times, to_base, pair, sup, nonincr, strict, r1, r2, tuple(strip))
