"""Sectional mass grid and fixed-pivot aggregation/fragmentation operators.

Every aggregation or breakage product is split between the two pivots that
bracket its mass so that both number and mass are reproduced exactly. Mass
that cannot be represented on the grid goes to a leak register:

* aggregation products heavier than the last pivot,
* fragments lighter than the lower grid boundary x_min.

Fragments between x_min and the first pivot are assigned to the first cell
with mass (not number) preserved.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import integrate

from .kernels import KernelSystem
from .quadrature import gauss_legendre, graded_edges


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Grid:
    """Cell boundaries and one pivot per cell."""

    boundaries: np.ndarray
    pivots: np.ndarray
    ratio: float | None = None

    def __post_init__(self):
        b, p = np.asarray(self.boundaries, float), np.asarray(self.pivots, float)
        if b.ndim != 1 or p.shape != (b.size - 1,) or p.size < 1:
            raise ConfigurationError("need m+1 boundaries for m pivots")
        if np.any(np.diff(b) <= 0) or b[0] <= 0:
            raise ConfigurationError("boundaries must be positive and strictly increasing")
        if np.any(p <= b[:-1]) or np.any(p >= b[1:]):
            raise ConfigurationError("each pivot must lie strictly inside its cell")
        b.flags.writeable = False
        p.flags.writeable = False
        object.__setattr__(self, "boundaries", b)
        object.__setattr__(self, "pivots", p)

    @property
    def m(self) -> int:
        return self.pivots.size

    @property
    def x_min(self) -> float:
        return float(self.boundaries[0])

    @property
    def x_max(self) -> float:
        return float(self.boundaries[-1])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.boundaries)

    def same_as(self, other: "Grid") -> bool:
        return self is other or (
            np.array_equal(self.boundaries, other.boundaries)
            and np.array_equal(self.pivots, other.pivots)
        )


GeometricGrid = Grid


def build_grid(x_min: float, x_max: float, m: int) -> Grid:
    """Geometric grid with constant ratio (x_max/x_min)**(1/m); pivots at the
    geometric cell centres."""
    if not (0 < x_min < x_max) or int(m) != m or m < 1:
        raise ConfigurationError(f"invalid grid ({x_min}, {x_max}, {m})")
    r = (x_max / x_min) ** (1.0 / m)
    b = x_min * r ** np.arange(m + 1)
    b[0], b[-1] = x_min, x_max
    return Grid(b, np.sqrt(b[:-1] * b[1:]), r)


def unit_grid(M: int) -> Grid:
    """Pivots at the integers 1..M, cells [i - 1/2, i + 1/2]."""
    return Grid(np.arange(M + 1) + 0.5, np.arange(1, M + 1, dtype=float))


@dataclass(frozen=True, eq=False)
class DensityState:
    """Number concentration per cell at time t, plus the mass ledger."""

    t: float
    conc: np.ndarray
    leak: float = 0.0      # cumulative mass that left the grid
    clipped: float = 0.0   # cumulative mass added by clipping round-off negatives

    def __post_init__(self):
        c = np.array(self.conc, dtype=float)
        if c.ndim != 1 or not np.all(np.isfinite(c)):
            raise ValueError("concentrations must be a finite vector")
        c.flags.writeable = False
        object.__setattr__(self, "conc", c)


# --------------------------------------------------------------------------
# initial profiles


@dataclass(frozen=True)
class Exponential:
    mean: float = 1.0
    number: float = 1.0

    def density(self, x):
        return self.number / self.mean * np.exp(-np.asarray(x) / self.mean)


@dataclass(frozen=True)
class Monodisperse:
    cell: int
    amount: float


@dataclass(frozen=True)
class Zero:
    pass


@dataclass(frozen=True, eq=False)
class TabulatedProfile:
    """Linear interpolation of (x, f0) pairs, zero outside the table."""

    x: np.ndarray
    f: np.ndarray

    def __post_init__(self):
        x, f = np.asarray(self.x, float), np.asarray(self.f, float)
        if x.shape != f.shape or x.size < 2 or np.any(np.diff(x) <= 0):
            raise ValueError("tabulated profile needs strictly increasing x")
        if np.any(f < 0):
            raise ValueError("tabulated initial density must be nonnegative")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "f", f)

    def density(self, x):
        return np.interp(x, self.x, self.f, left=0.0, right=0.0)


def project_initial(profile, grid: Grid) -> DensityState:
    """conc_i = integral of f0 over cell i (adaptive quadrature)."""
    conc = np.zeros(grid.m)
    if isinstance(profile, Zero):
        pass
    elif isinstance(profile, Monodisperse):
        if not 0 <= profile.cell < grid.m:
            raise ConfigurationError(f"monodisperse cell {profile.cell} outside grid")
        if profile.amount < 0:
            raise ValueError("monodisperse amount must be nonnegative")
        conc[profile.cell] = profile.amount
    else:
        b = grid.boundaries
        points = None
        if isinstance(profile, TabulatedProfile):
            points = profile.x
        for i in range(grid.m):
            brk = None if points is None else points[(points > b[i]) & (points < b[i + 1])][:50]
            conc[i] = integrate.quad(lambda x: float(profile.density(x)), b[i], b[i + 1],
                                     epsabs=0.0, epsrel=1e-12, limit=200,
                                     points=brk if brk is not None and brk.size else None)[0]
    return DensityState(0.0, conc)


# --------------------------------------------------------------------------
# operators


@dataclass(frozen=True, eq=False)
class OperatorTables:
    pivots: np.ndarray
    kernel: np.ndarray      # K(x_i, x_j)
    agg_lo: np.ndarray      # lower target cell of pair (i, j)
    agg_wlo: np.ndarray     # number fraction to agg_lo
    agg_whi: np.ndarray     # number fraction to agg_lo + 1
    agg_leak: np.ndarray    # product mass when it leaves the grid, else 0
    frag_gain: np.ndarray   # [i, j]: fragments into cell i per unit conc in j per unit time
    frag_loss: np.ndarray   # S(x_j)
    frag_leak: np.ndarray   # mass leak rate per unit conc in j
    has_coagulation: bool = field(default=True)

    @property
    def m(self) -> int:
        return self.pivots.size


def _aggregation_targets(x: np.ndarray):
    m = x.size
    v = x[:, None] + x[None, :]
    lo = np.searchsorted(x, v, side="right") - 1
    leak = v > x[-1]
    lo = np.where(leak, 0, lo)
    hi = np.minimum(lo + 1, m - 1)
    span = x[hi] - x[lo]
    exact = (v == x[lo]) | (span == 0)
    safe = np.where(span > 0, span, 1.0)
    wlo = np.where(exact, 1.0, (x[hi] - v) / safe)
    whi = np.where(exact, 0.0, (v - x[lo]) / safe)
    wlo = np.where(leak, 0.0, wlo)
    whi = np.where(leak, 0.0, whi)
    return lo, wlo, whi, np.where(leak, v, 0.0)


def _fragmentation_tables(system: KernelSystem, grid: Grid, rtol: float = 1e-12):
    """Fixed-pivot breakage gain (without S), plus mass leaked below x_min.

    Piece integrals use composite Gauss rules; the number of sub-panels is
    doubled until two successive levels agree to ``rtol``.
    """
    x = grid.pivots
    m = x.size
    gain = np.zeros((m, m))
    leak = np.zeros(m)
    if m > 1:
        lo, hi = x[:-1], x[1:]
        t, w = gauss_legendre(16)

        def pieces(nsub):
            s = (np.arange(nsub)[:, None] + t[None, :]).ravel() / nsub
            ws = np.tile(w, nsub) / nsub
            h = hi - lo
            nodes = lo[:, None] + h[:, None] * s[None, :]              # (m-1, q)
            b = system.frag(nodes[None, :, :], x[:, None, None])      # (m, m-1, q)
            down = (hi[:, None] - nodes) / h[:, None]
            up = 1.0 - down
            wd = np.einsum("jpq,pq,q->jp", b, down, ws) * h[None, :]
            wu = np.einsum("jpq,pq,q->jp", b, up, ws) * h[None, :]
            return wd, wu

        wd, wu = pieces(1)
        for nsub in (2, 4, 8, 16, 32, 64):
            wd2, wu2 = pieces(nsub)
            scale = np.maximum(np.abs(wd2).sum(axis=1) + np.abs(wu2).sum(axis=1), 1e-300)
            diff = (np.abs(wd2 - wd).sum(axis=1) + np.abs(wu2 - wu).sum(axis=1)) / scale
            wd, wu = wd2, wu2
            if np.all(diff <= rtol):
                break
        # gain[i, j]: piece i contributes down to i and up to i + 1
        gain[:-1, :] += wd.T
        gain[1:, :] += wu.T
    # first cell lower part [x_min, x_0] and the leak below x_min
    x_min = grid.x_min
    gamma = system.breakage.gamma
    for j in range(m):
        y = x[j]
        bfun = lambda s, y=y: system.frag(s, y)  # noqa: E731
        below = _integral(lambda s: s * bfun(s), 0.0, min(x_min, y), gamma)
        bottom = _integral(lambda s: s * bfun(s), x_min, min(x[0], y), 0.0) if y > x_min else 0.0
        gain[0, j] += bottom / x[0]
        leak[j] = below
    return gain, leak


def _integral(f, a, b, singularity):
    if b <= a:
        return 0.0
    edges = graded_edges(a, b, singularity)
    t, w = gauss_legendre(24)
    lo, hi = edges[:-1], edges[1:]
    h = hi - lo
    nodes = lo[:, None] + h[:, None] * t[None, :]
    return float(np.sum(f(nodes) * w[None, :] * h[:, None]))


def assemble(system: KernelSystem, grid: Grid, mass_rtol: float = 1e-10) -> OperatorTables:
    """Precompute the fixed-pivot tables for a (possibly truncated) kernel system."""
    x = grid.pivots
    K = system.coag(x[:, None], x[None, :])
    lo, wlo, whi, agg_leak = _aggregation_targets(x)
    S = system.select(x)
    if np.any(S > 0):
        gain, leak = _fragmentation_tables(system, grid)
        # mass check of each column before scaling by S
        produced = x @ gain + leak
        bad = np.abs(produced - x) > mass_rtol * x
        if np.any(bad & (S > 0)):
            j = int(np.argmax(bad & (S > 0)))
            raise ValueError(
                f"breakage table does not conserve mass at pivot {x[j]:g}: "
                f"{produced[j]:.17g} vs {x[j]:.17g}"
            )
        gain = gain * S[None, :]
        leak = leak * S
    else:
        gain, leak = np.zeros((x.size, x.size)), np.zeros(x.size)
    return OperatorTables(x.copy(), K, lo, wlo, whi, agg_leak, gain, S.astype(float), leak,
                          bool(np.any(K != 0)))


def discrete_fragmentation(tables: OperatorTables, selection, counts) -> OperatorTables:
    """Replace the fragmentation part with a mass-discrete breakage table.

    ``counts[i, j]`` is the number of fragments landing on pivot i when a
    particle at pivot j breaks; ``selection[j]`` its breakage rate.
    """
    S = np.asarray(selection, dtype=float)
    B = np.asarray(counts, dtype=float)
    return replace(tables, frag_gain=B * S[None, :], frag_loss=S.copy(),
                   frag_leak=np.zeros_like(S))


def rates(tables: OperatorTables, conc: np.ndarray) -> tuple[np.ndarray, float]:
    """dconc/dt together with the mass leak rate."""
    c = np.asarray(conc, dtype=float)
    m = tables.m
    out = tables.frag_gain @ c - tables.frag_loss * c
    leak = float(tables.frag_leak @ c)
    if tables.has_coagulation:
        Kc = tables.kernel @ c
        P = 0.5 * tables.kernel * np.outer(c, c)
        lo = tables.agg_lo.ravel()
        gain = np.bincount(lo, (P * tables.agg_wlo).ravel(), minlength=m + 1)
        gain[1:] += np.bincount(lo, (P * tables.agg_whi).ravel(), minlength=m + 1)[:-1]
        out = out + gain[:m] - c * Kc
        leak += float(np.sum(P * tables.agg_leak))
    return out, leak


def apply(tables: OperatorTables, state: DensityState) -> np.ndarray:
    """Right-hand side of the discrete system for ``state``."""
    if state.conc.shape != (tables.m,):
        raise ValueError(f"state has {state.conc.size} cells, tables have {tables.m}")
    return rates(tables, state.conc)[0]


def leak_rate(tables: OperatorTables, state: DensityState) -> float:
    if state.conc.shape != (tables.m,):
        raise ValueError(f"state has {state.conc.size} cells, tables have {tables.m}")
    return rates(tables, state.conc)[1]


def dump_fragmentation_csv(tables: OperatorTables, path) -> None:
    """Debug dump of the fragmentation gain matrix, one row per destination cell."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x_pivot"] + [f"{p:.17g}" for p in tables.pivots])
        for i, p in enumerate(tables.pivots):
            w.writerow([f"{p:.17g}"] + [f"{v:.17g}" for v in tables.frag_gain[i]])


def cell_mass(grid: Grid, state: DensityState) -> float:
    return float(math.fsum(grid.pivots * state.conc))
