"""Coagulation, selection and breakage kernels with admissibility checks.

Every kernel carries the constants of its growth bounds:

    K(x, y) <= k (1 + x + y)**lam / (x y)**sigma
    S(x)    <= S0 x**alpha
    int_0^y x**(-gamma) b(x, y) dx <= N0 y**(-gamma)
    sup b(., y) <= b_bar  for y > Y

The catalog fills them in; custom kernels must supply them. The verifiers check
them by sampling, they never prove them.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .quadrature import singular_integral

COAGULATION_FORMS = (
    "zero", "constant", "sum", "smoluchowski", "eke", "granulation",
    "shear-linear", "shear-nonlinear", "custom", "custom-tabulated",
)
SELECTION_FORMS = ("zero", "constant", "power", "custom", "custom-tabulated")
BREAKAGE_FORMS = ("binary-uniform", "ternary-uniform", "parabolic", "custom", "custom-tabulated")

# relative slack for floating point in the sampled bound checks
_SLACK = 1e-12


class DomainError(ValueError):
    """A kernel was evaluated at a nonpositive mass."""


class KernelEvaluationError(RuntimeError):
    """A kernel raised or returned a non-finite value at a sample point."""

    def __init__(self, message, point):
        super().__init__(f"{message} at {point}")
        self.point = point


def _positive(*arrays):
    out = [np.asarray(a, dtype=float) for a in arrays]
    for a in out:
        if np.any(~(a > 0)):
            raise DomainError("kernel arguments must be positive masses")
    return out


# --------------------------------------------------------------------------
# tabulated kernels


class Tabulated1D:
    """Piecewise linear in log-mass, held constant beyond the table ends."""

    def __init__(self, x, values):
        x = np.asarray(x, dtype=float)
        values = np.asarray(values, dtype=float)
        if x.ndim != 1 or x.shape != values.shape or x.size < 2:
            raise ValueError("tabulated kernel needs two equally long columns")
        if np.any(x <= 0) or np.any(np.diff(x) <= 0):
            raise ValueError("tabulated mass coordinates must be positive and strictly increasing")
        self.x, self.values = x, values
        self._logx = np.log(x)

    def __call__(self, x):
        return np.interp(np.log(x), self._logx, self.values)


class Tabulated2D:
    """Bilinear in (log x, log y) on a tensor table, clamped at the edges."""

    def __init__(self, x, y, values):
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        values = np.asarray(values, dtype=float)
        for c in (x, y):
            if np.any(c <= 0) or np.any(np.diff(c) <= 0):
                raise ValueError("tabulated mass coordinates must be positive and strictly increasing")
        if values.shape != (x.size, y.size):
            raise ValueError("coagulation table is not a full tensor grid")
        self.x, self.y, self.values = x, y, values
        self._interp = RegularGridInterpolator((np.log(x), np.log(y)), values)

    def __call__(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        lx = np.clip(np.log(x), math.log(self.x[0]), math.log(self.x[-1]))
        ly = np.clip(np.log(y), math.log(self.y[0]), math.log(self.y[-1]))
        pts = np.stack([lx.ravel(), ly.ravel()], axis=-1)
        return self._interp(pts).reshape(x.shape)


class ScaledBreakage:
    """b(x, y) = beta(x / y) / y with beta tabulated on [0, 1], linear in z."""

    def __init__(self, z, beta):
        z, beta = np.asarray(z, dtype=float), np.asarray(beta, dtype=float)
        if z.shape != beta.shape or z.size < 2 or np.any(np.diff(z) <= 0):
            raise ValueError("breakage table needs strictly increasing z")
        if z[0] < 0 or z[-1] > 1:
            raise ValueError("breakage table z must lie in [0, 1]")
        if np.any(beta < 0):
            raise ValueError("breakage table has negative entries")
        self.z, self.beta = z, beta

    def __call__(self, x, y):
        z = x / y
        return np.interp(z, self.z, self.beta, left=0.0, right=0.0) / y


def _read_columns(path, ncols):
    rows = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().startswith("#"):
                continue
            try:
                rows.append([float(v) for v in row[:ncols]])
            except ValueError:
                if rows:
                    raise
                continue  # header line
    data = np.asarray(rows, dtype=float)
    if data.ndim != 2 or data.shape[1] != ncols:
        raise ValueError(f"{path}: expected {ncols} numeric columns")
    return data


def load_coagulation_csv(path) -> Tabulated2D:
    """Three columns x, y, K in long format covering a full tensor grid."""
    data = _read_columns(path, 3)
    xs, ys = np.unique(data[:, 0]), np.unique(data[:, 1])
    if xs.size * ys.size != data.shape[0]:
        raise ValueError(f"{path}: rows do not form a full x-y grid")
    values = np.full((xs.size, ys.size), np.nan)
    values[np.searchsorted(xs, data[:, 0]), np.searchsorted(ys, data[:, 1])] = data[:, 2]
    if np.isnan(values).any():
        raise ValueError(f"{path}: duplicate rows in coagulation table")
    return Tabulated2D(xs, ys, values)


def load_selection_csv(path) -> Tabulated1D:
    data = _read_columns(path, 2)
    return Tabulated1D(data[:, 0], data[:, 1])


def load_breakage_csv(path) -> ScaledBreakage:
    data = _read_columns(path, 2)
    return ScaledBreakage(data[:, 0], data[:, 1])


# --------------------------------------------------------------------------
# specs


@dataclass(frozen=True)
class CoagulationSpec:
    form: str
    k: float
    sigma: float
    lam: float
    params: dict = field(default_factory=dict)
    func: Callable | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        problems = coagulation_problems(self.k, self.sigma, self.lam)
        if self.form not in COAGULATION_FORMS:
            problems.append(f"unknown coagulation form {self.form!r}")
        if self.form in ("custom", "custom-tabulated") and self.func is None:
            problems.append(f"{self.form} coagulation kernel needs an evaluator")
        if problems:
            raise ValueError("; ".join(problems))

    def __call__(self, x, y):
        return eval_coagulation(self, x, y)


def coagulation_problems(k, sigma, lam) -> list[str]:
    out = []
    if not k > 0:
        out.append("k must be positive")
    if not 0 <= sigma < 1:
        out.append("sigma must lie in [0,1)")
    if not 0 <= lam - sigma <= 1:
        out.append("lambda - sigma must lie in [0,1]")
    return out


@dataclass(frozen=True)
class SelectionSpec:
    form: str
    S0: float
    alpha: float
    params: dict = field(default_factory=dict)
    func: Callable | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        problems = selection_problems(self.S0, self.alpha)
        if self.form not in SELECTION_FORMS:
            problems.append(f"unknown selection form {self.form!r}")
        if self.form in ("custom", "custom-tabulated") and self.func is None:
            problems.append(f"{self.form} selection function needs an evaluator")
        if problems:
            raise ValueError("; ".join(problems))

    def __call__(self, x):
        return eval_selection(self, x)


def selection_problems(S0, alpha) -> list[str]:
    out = []
    if not S0 >= 0:
        out.append("S0 must be nonnegative")
    if not 0 <= alpha <= 1:
        out.append("alpha must lie in [0,1]")
    return out


@dataclass(frozen=True)
class BreakageSpec:
    form: str
    N: int
    gamma: float
    N0: float
    b_bar: float
    Y: float
    params: dict = field(default_factory=dict)
    func: Callable | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        problems = breakage_problems(self.N, self.gamma, self.N0, self.b_bar, self.Y)
        if self.form not in BREAKAGE_FORMS:
            problems.append(f"unknown breakage form {self.form!r}")
        if self.form in ("custom", "custom-tabulated") and self.func is None:
            problems.append(f"{self.form} breakage function needs an evaluator")
        if problems:
            raise ValueError("; ".join(problems))

    def __call__(self, x, y):
        return eval_breakage(self, x, y)


def breakage_problems(N, gamma, N0, b_bar, Y) -> list[str]:
    out = []
    if not (float(N) == int(N) and N >= 2):
        out.append("N must be an integer >= 2")
    if not 0 < gamma < 1:
        out.append("gamma must lie in (0,1)")
    for name, v in (("N0", N0), ("b_bar", b_bar), ("Y", Y)):
        if not v > 0:
            out.append(f"{name} must be positive")
    return out


@dataclass(frozen=True)
class TruncationParams:
    n: int
    ramp: float = 0.5

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError("truncation index n must be an integer >= 1")
        if not 0 < self.ramp < 1:
            raise ValueError("ramp must lie in (0,1)")

    def cutoff(self, x):
        """1 on [1/n, n], 0 outside [ramp/n, n/ramp], linear in log x between."""
        x = np.asarray(x, dtype=float)
        width = -math.log(self.ramp)
        dist = np.maximum(np.log(x / self.n), -np.log(x * self.n))
        return np.clip(1.0 - np.maximum(dist, 0.0) / width, 0.0, 1.0)


@dataclass(frozen=True)
class KernelSystem:
    coagulation: CoagulationSpec
    selection: SelectionSpec
    breakage: BreakageSpec
    truncation: TruncationParams | None = None

    def coag(self, x, y):
        K = eval_coagulation(self.coagulation, x, y)
        if self.truncation is None:
            return K
        return self.truncation.cutoff(x) * self.truncation.cutoff(y) * K

    def select(self, x):
        S = eval_selection(self.selection, x)
        if self.truncation is None:
            return S
        return self.truncation.cutoff(x) * S

    def frag(self, x, y):
        return eval_breakage(self.breakage, x, y)


# --------------------------------------------------------------------------
# catalog


def coagulation(form: str, c: float = 1.0, **params) -> CoagulationSpec:
    """Catalog coagulation kernel with documented bound constants.

    ``c`` scales the kernel (and k with it). Constants for ``custom`` forms
    must be passed as ``k``, ``sigma``, ``lam`` together with ``func``.
    """
    if form in ("custom", "custom-tabulated"):
        func = params.pop("func")
        k, sigma, lam = params.pop("k"), params.pop("sigma"), params.pop("lam")
        return CoagulationSpec(form, k, sigma, lam, params, func)
    if form == "zero":
        return CoagulationSpec(form, 1.0, 0.0, 0.0)
    if form == "constant":
        return CoagulationSpec(form, c, 0.0, 0.0, {"c": c})
    if form == "sum":
        return CoagulationSpec(form, c, 0.0, 1.0, {"c": c})
    if form == "smoluchowski":
        a = float(params.get("a", 3.0))
        if not a > 1:
            raise ValueError("smoluchowski fractal dimension a must exceed 1")
        return CoagulationSpec(form, 4.0 * c, 1.0 / a, 2.0 / a, {"c": c, "a": a})
    if form == "eke":
        return CoagulationSpec(form, 4.0 * c, 0.5, 7.0 / 6.0, {"c": c})
    if form == "granulation":
        p, q = float(params.get("p", 1.0)), float(params.get("q", 0.5))
        return CoagulationSpec(form, c, q, p, {"c": c, "p": p, "q": q})
    if form == "shear-linear":
        return CoagulationSpec(form, 4.0 * c, 0.0, 1.0, {"c": c})
    if form == "shear-nonlinear":
        return CoagulationSpec(form, 2.0 ** (7.0 / 3.0) * c, 0.0, 7.0 / 9.0, {"c": c})
    raise ValueError(f"unknown coagulation form {form!r}")


def selection(form: str, **params) -> SelectionSpec:
    if form in ("custom", "custom-tabulated"):
        return SelectionSpec(form, params.pop("S0"), params.pop("alpha"), params, params.pop("func", None))
    if form == "zero":
        return SelectionSpec(form, 0.0, 0.0)
    if form == "constant":
        c = float(params.get("c", 1.0))
        return SelectionSpec(form, c, 0.0, {"c": c})
    if form == "power":
        c, p = float(params.get("c", 1.0)), float(params.get("exponent", 1.0))
        return SelectionSpec(form, c, p, {"c": c, "exponent": p})
    raise ValueError(f"unknown selection form {form!r}")


def breakage(form: str, gamma: float = 0.5, **params) -> BreakageSpec:
    """Catalog breakage function. N0 is the closed form of the negative-moment
    integral for the given gamma; b_bar and Y are engineering choices."""
    g = gamma
    if form == "binary-uniform":
        return BreakageSpec(form, 2, g, 2.0 / (1.0 - g), 2.0, 1.0)
    if form == "ternary-uniform":
        return BreakageSpec(form, 3, g, 6.0 / ((1.0 - g) * (2.0 - g)), 6.0, 1.0)
    if form == "parabolic":
        return BreakageSpec(form, 2, g, 12.0 / ((2.0 - g) * (3.0 - g)), 3.0, 1.0)
    if form in ("custom", "custom-tabulated"):
        func = params.pop("func")
        return BreakageSpec(form, params.pop("N"), g, params.pop("N0"), params.pop("b_bar"),
                            params.pop("Y"), params, func)
    raise ValueError(f"unknown breakage form {form!r}")


# --------------------------------------------------------------------------
# evaluation


def eval_coagulation(spec: CoagulationSpec, x, y):
    x, y = _positive(x, y)
    p = spec.params
    c = p.get("c", 1.0)
    f = spec.form
    if f == "zero":
        return np.zeros(np.broadcast(x, y).shape)
    if f == "constant":
        return np.full(np.broadcast(x, y).shape, c)
    if f == "sum":
        return c * (x + y)
    if f == "smoluchowski":
        e = 1.0 / p["a"]
        return c * (x**e + y**e) * (x**-e + y**-e)
    if f == "eke":
        return c * (np.cbrt(x) + np.cbrt(y)) ** 2 * np.sqrt(1.0 / x + 1.0 / y)
    if f == "granulation":
        return c * (x + y) ** p["p"] / (x * y) ** p["q"]
    if f == "shear-linear":
        return c * (np.cbrt(x) + np.cbrt(y)) ** 3
    if f == "shear-nonlinear":
        return c * (np.cbrt(x) + np.cbrt(y)) ** (7.0 / 3.0)
    return np.asarray(spec.func(x, y), dtype=float) * np.ones(np.broadcast(x, y).shape)


def eval_selection(spec: SelectionSpec, x):
    (x,) = _positive(x)
    p = spec.params
    if spec.form == "zero":
        return np.zeros_like(x)
    if spec.form == "constant":
        return np.full_like(x, p["c"])
    if spec.form == "power":
        return p["c"] * x ** p["exponent"]
    return np.asarray(spec.func(x), dtype=float) * np.ones_like(x)


def eval_breakage(spec: BreakageSpec, x, y):
    x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
    inside = (x > 0) & (x <= y)
    xs = np.where(inside, x, 0.5 * y)
    f = spec.form
    if f == "binary-uniform":
        b = 2.0 / y
    elif f == "ternary-uniform":
        b = 6.0 / y * (1.0 - xs / y)
    elif f == "parabolic":
        b = 12.0 * xs * (y - xs) / y**3
    else:
        b = np.asarray(spec.func(xs, y), dtype=float)
    return np.where(inside, b, 0.0)


def truncate(system: KernelSystem, params: TruncationParams) -> KernelSystem:
    """Compactly supported K_n, S_n via a separable log-linear cutoff."""
    return replace(system, truncation=params)


# --------------------------------------------------------------------------
# verifiers


@dataclass(frozen=True)
class SamplingPlan:
    lo: float = 1e-6
    hi: float = 1e6
    points: int = 64

    def __post_init__(self):
        if not (0 < self.lo < self.hi) or self.points < 2:
            raise ValueError("invalid sampling plan")

    def samples(self):
        return np.logspace(math.log10(self.lo), math.log10(self.hi), self.points)


@dataclass(frozen=True)
class Verdict:
    passed: bool
    worst_ratio: float
    worst_point: tuple
    bound: float

    def to_dict(self):
        return {"passed": self.passed, "worst_ratio": self.worst_ratio,
                "worst_point": list(self.worst_point), "bound": self.bound}


def _evaluate_checked(fn, *args):
    try:
        values = np.asarray(fn(*args), dtype=float)
    except Exception as exc:  # black-box custom kernels
        bad = tuple(float(np.ravel(a)[0]) for a in args)
        raise KernelEvaluationError(f"kernel evaluation failed ({exc})", bad) from exc
    finite = np.isfinite(values)
    if not finite.all():
        idx = np.unravel_index(np.argmin(finite), values.shape)
        point = tuple(float(np.broadcast_to(a, values.shape)[idx]) for a in args)
        raise KernelEvaluationError("non-finite kernel value", point)
    return values


def verify_coagulation_bound(spec: CoagulationSpec, plan: SamplingPlan = SamplingPlan()) -> Verdict:
    if plan.points < 64 or plan.lo > 1e-6 or plan.hi < 1e6:
        raise ValueError("coagulation sampling must cover [1e-6, 1e6]^2 with >= 64x64 points")
    s = plan.samples()
    X, Y = np.meshgrid(s, s, indexing="ij")
    K = _evaluate_checked(lambda a, b: eval_coagulation(spec, a, b), X, Y)
    if np.any(K < 0):
        idx = np.unravel_index(np.argmin(K), K.shape)
        return Verdict(False, -math.inf, (float(X[idx]), float(Y[idx])), spec.k)
    ratio = K * (X * Y) ** spec.sigma / (1.0 + X + Y) ** spec.lam
    idx = np.unravel_index(np.argmax(ratio), ratio.shape)
    worst = float(ratio[idx])
    return Verdict(worst <= spec.k * (1 + _SLACK), worst, (float(X[idx]), float(Y[idx])), spec.k)


def verify_selection_bound(spec: SelectionSpec, plan: SamplingPlan = SamplingPlan()) -> Verdict:
    if plan.lo > 1e-6 or plan.hi < 1e6:
        raise ValueError("selection sampling must cover [1e-6, 1e6]")
    x = plan.samples()
    S = _evaluate_checked(lambda a: eval_selection(spec, a), x)
    bound = spec.S0 * x**spec.alpha
    if np.any(S < 0):
        i = int(np.argmin(S))
        return Verdict(False, -math.inf, (float(x[i]),), spec.S0)
    # ratio S / x**alpha compared against S0
    ratio = S / x**spec.alpha
    i = int(np.argmax(ratio))
    ok = bool(np.all(S <= bound * (1 + _SLACK)))
    return Verdict(ok, float(ratio[i]), (float(x[i]),), spec.S0)


@dataclass
class BreakageReport:
    mass_ok: bool
    count_ok: bool
    gamma_ok: bool
    sup_ok: bool
    y_samples: list
    mass_error: list
    counts: list
    gamma_ratio: list
    worst_sup: float

    @property
    def passed(self):
        return self.mass_ok and self.count_ok and self.gamma_ok and self.sup_ok

    def to_dict(self):
        return {"passed": self.passed, "mass_ok": self.mass_ok, "count_ok": self.count_ok,
                "gamma_ok": self.gamma_ok, "sup_ok": self.sup_ok,
                "max_mass_error": max(self.mass_error, default=0.0),
                "max_count": max(self.counts, default=0.0),
                "max_gamma_ratio": max(self.gamma_ratio, default=0.0),
                "worst_sup": self.worst_sup}


DEFAULT_Y_SAMPLES = tuple(np.logspace(-6, 6, 25))


def verify_breakage(spec: BreakageSpec, y_samples=DEFAULT_Y_SAMPLES, mass_rtol: float = 1e-8) -> BreakageReport:
    """Mass (relative error <= mass_rtol), fragment count, negative-moment and
    sup conditions on each sampled parent mass."""
    ys = [float(y) for y in y_samples]
    if any(not y > 0 for y in ys):
        raise DomainError("parent masses must be positive")
    g = spec.gamma
    mass_err, counts, gratio = [], [], []
    for y in ys:
        label = f"y={y:g}"
        b = lambda x, y=y: eval_breakage(spec, x, y)  # noqa: E731
        mass = singular_integral(lambda x: x * b(x), y, g, label=label)
        count = singular_integral(b, y, g, label=label)
        neg = singular_integral(lambda x: x**-g * b(x), y, g, label=label)
        mass_err.append(abs(mass - y) / y)
        counts.append(count)
        gratio.append(neg / (spec.N0 * y**-g))
    # sup condition on windows [x1, x2] = decades below each sampled y > Y
    worst_sup = 0.0
    for y in ys:
        if y <= spec.Y:
            continue
        for d in range(12):
            x1, x2 = y * 10.0 ** -(d + 1), y * 10.0**-d
            xs = np.geomspace(x1, x2, 33)
            worst_sup = max(worst_sup, float(np.max(eval_breakage(spec, xs, y))))
    return BreakageReport(
        mass_ok=max(mass_err, default=0.0) <= mass_rtol,
        count_ok=all(c <= spec.N * (1 + 1e-10) for c in counts),
        gamma_ok=all(r <= 1 + 1e-10 for r in gratio),
        sup_ok=worst_sup <= spec.b_bar * (1 + _SLACK),
        y_samples=ys, mass_error=mass_err, counts=counts, gamma_ratio=gratio,
        worst_sup=worst_sup,
    )


def verify_symmetry(spec: CoagulationSpec, plan: SamplingPlan = SamplingPlan()) -> bool:
    s = plan.samples()
    X, Y = np.meshgrid(s, s, indexing="ij")
    return bool(np.array_equal(eval_coagulation(spec, X, Y), eval_coagulation(spec, Y, X)))


def verify_system(system: KernelSystem, plan: SamplingPlan = SamplingPlan(),
                  y_samples=DEFAULT_Y_SAMPLES) -> dict:
    """All four admissibility verdicts plus the sigma < gamma coupling."""
    coag = verify_coagulation_bound(system.coagulation, plan)
    sel = verify_selection_bound(system.selection, plan)
    brk = verify_breakage(system.breakage, y_samples)
    sym = verify_symmetry(system.coagulation, plan)
    coupled = system.coagulation.sigma < system.breakage.gamma
    return {
        "coagulation_bound": coag.to_dict(),
        "coagulation_symmetry": {"passed": sym},
        "selection_bound": sel.to_dict(),
        "breakage": brk.to_dict(),
        "gamma_exceeds_sigma": {"passed": coupled, "sigma": system.coagulation.sigma,
                                "gamma": system.breakage.gamma},
        "passed": bool(coag.passed and sel.passed and brk.passed and sym and coupled),
    }
