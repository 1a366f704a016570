"""Reference solutions used to check the sectional solver.

Closed forms are only trusted after ``residual_check`` has substituted them
back into the continuous equation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate

from .kernels import KernelSystem, breakage, coagulation, selection


@dataclass(frozen=True)
class AnalyticSolution:
    name: str
    system: KernelSystem
    density: Callable          # f(x, t)
    N0: Callable
    N1: Callable
    x_range: tuple = (0.01, 20.0)
    t_range: tuple = (0.0, 2.0)


def constant_kernel_solution(x, t):
    """K = 1, no fragmentation, f(x, 0) = exp(-x)."""
    x, t = np.asarray(x, float), np.asarray(t, float)
    if np.any(x <= 0) or np.any(t < 0):
        raise ValueError("need x > 0 and t >= 0")
    return 4.0 / (2.0 + t) ** 2 * np.exp(-2.0 * x / (2.0 + t))


def linear_breakage_solution(x, t):
    """No coagulation, S(x) = x, b = 2/y, f(x, 0) = exp(-x)."""
    x, t = np.asarray(x, float), np.asarray(t, float)
    return (1.0 + t) ** 2 * np.exp(-x * (1.0 + t))


CONSTANT_KERNEL = AnalyticSolution(
    "constant-kernel",
    KernelSystem(coagulation("constant"), selection("zero"), breakage("binary-uniform")),
    constant_kernel_solution,
    lambda t: 2.0 / (2.0 + t),
    lambda t: 1.0,
)

LINEAR_BREAKAGE = AnalyticSolution(
    "linear-breakage",
    KernelSystem(coagulation("zero"), selection("power", c=1.0, exponent=1.0), breakage("binary-uniform")),
    linear_breakage_solution,
    lambda t: 1.0 + t,
    lambda t: 1.0,
)

ZERO = AnalyticSolution(
    "zero",
    KernelSystem(coagulation("zero"), selection("zero"), breakage("binary-uniform")),
    lambda x, t: np.zeros(np.broadcast(np.asarray(x), np.asarray(t)).shape),
    lambda t: 0.0,
    lambda t: 0.0,
)


def scaled(solution: AnalyticSolution, factor: float) -> AnalyticSolution:
    """The same solution multiplied by ``factor`` (not a solution unless factor is 1)."""
    f = solution.density
    return AnalyticSolution(f"{solution.name}*{factor:g}", solution.system,
                            lambda x, t: factor * f(x, t),
                            lambda t: factor * solution.N0(t), lambda t: factor * solution.N1(t),
                            solution.x_range, solution.t_range)


def pointwise_residual(solution: AnalyticSolution, x: float, t: float) -> float:
    """d f/dt minus the four collision terms at (x, t)."""
    sys_ = solution.system
    f = lambda s, tt=t: float(solution.density(s, tt))  # noqa: E731
    h = 1e-5 * (1.0 + t)
    dfdt = (float(solution.density(x, t + h)) - float(solution.density(x, t - h))) / (2 * h) \
        if t >= h else (-3 * f(x) + 4 * float(solution.density(x, t + h))
                        - float(solution.density(x, t + 2 * h))) / (2 * h)
    quad = lambda g, a, b: integrate.quad(g, a, b, epsabs=1e-13, epsrel=1e-11, limit=400)[0]  # noqa: E731
    K = lambda a, b: float(sys_.coag(a, b))  # noqa: E731
    birth = 0.5 * quad(lambda y: K(x - y, y) * f(x - y) * f(y), 0.0, x) if x > 0 else 0.0
    death = f(x) * quad(lambda y: K(x, y) * f(y), 0.0, np.inf)
    frag_birth = quad(lambda y: float(sys_.frag(x, y)) * float(sys_.select(y)) * f(y), x, np.inf)
    frag_death = float(sys_.select(x)) * f(x)
    return dfdt - (birth - death + frag_birth - frag_death)


def residual_check(solution: AnalyticSolution, xs=None, ts=None) -> float:
    """Maximum absolute residual over a sample grid."""
    if xs is None:
        xs = np.geomspace(*solution.x_range, 9)
    if ts is None:
        ts = np.linspace(*solution.t_range, 5)
    worst = 0.0
    for t in ts:
        for x in xs:
            worst = max(worst, abs(pointwise_residual(solution, float(x), float(t))))
    return worst


# --------------------------------------------------------------------------
# mass-discrete twin


def discrete_rhs(c, kernel, sel, counts):
    """Mass-discrete coagulation-fragmentation right-hand side, written as plain
    loops over masses 1..M. Products heavier than M leave the system."""
    c = np.asarray(c, dtype=float)
    M = c.size
    out = np.zeros(M)
    for k in range(1, M + 1):
        gain = 0.0
        for i in range(1, k):
            gain += kernel[i - 1, k - i - 1] * c[i - 1] * c[k - i - 1]
        loss = sum(kernel[k - 1, j - 1] * c[j - 1] for j in range(1, M + 1))
        frag = sum(counts[k - 1, j - 1] * sel[j - 1] * c[j - 1] for j in range(k + 1, M + 1))
        out[k - 1] = 0.5 * gain - c[k - 1] * loss + frag - sel[k - 1] * c[k - 1]
    return out


def binary_discrete_breakage(M: int) -> np.ndarray:
    """counts[i-1, j-1] = 2/(j-1) for 1 <= i < j: uniform binary splitting."""
    B = np.zeros((M, M))
    for j in range(2, M + 1):
        B[: j - 1, j - 1] = 2.0 / (j - 1)
    return B


@dataclass
class DiscreteTrajectory:
    times: np.ndarray
    conc: np.ndarray          # (len(times), M)

    @property
    def N0(self):
        return self.conc.sum(axis=1)

    @property
    def N1(self):
        return self.conc @ np.arange(1, self.conc.shape[1] + 1)


def discrete_smoluchowski_oracle(c0, kernel, sel, counts, t_end: float, times=None,
                                 rtol: float = 1e-10, atol: float = 1e-14) -> DiscreteTrajectory:
    c0 = np.asarray(c0, dtype=float)
    if c0.size > 64:
        raise ValueError("oracle is limited to M <= 64")
    kernel, sel, counts = (np.asarray(a, float) for a in (kernel, sel, counts))
    if times is None:
        times = np.linspace(0.0, t_end, 11)
    sol = integrate.solve_ivp(lambda t, c: discrete_rhs(c, kernel, sel, counts), (0.0, t_end), c0,
                              method="DOP853", t_eval=times, rtol=rtol, atol=atol)
    if not sol.success:
        raise RuntimeError(sol.message)
    return DiscreteTrajectory(np.asarray(sol.t), sol.y.T.copy())


def riccati_N0(t, n0: float = 1.0, k: float = 1.0):
    """N0 for the constant kernel: dN0/dt = -k N0**2 / 2."""
    return n0 / (1.0 + 0.5 * k * n0 * np.asarray(t, float))


def exponential_growth_N0(t, n0: float = 1.0, rate: float = 1.0):
    return n0 * np.exp(rate * np.asarray(t, float))


def exact_cell_integrals(density, boundaries, t) -> np.ndarray:
    """Cell integrals of an analytic density by adaptive quadrature."""
    b = np.asarray(boundaries, float)
    return np.array([integrate.quad(lambda x: float(density(x, t)), b[i], b[i + 1],
                                    epsabs=0.0, epsrel=1e-12, limit=200)[0]
                     for i in range(b.size - 1)])

