"""JSON run configuration: parsing, validation and round-tripping.

Validation collects every problem with its field path instead of stopping at
the first one.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from types import SimpleNamespace

from . import kernels as kn
from .grid import Exponential, Monodisperse, TabulatedProfile, Zero
from .kernels import KernelSystem, TruncationParams
from .solver import IntegratorConfig, Simulation, integrator_problems

MODES = {"single": "single", "study": "study", "truncation-study": "study",
         "verify": "verify", "verify-only": "verify"}

_COAG_PARAMS = {
    "zero": set(), "constant": {"c"}, "sum": {"c"}, "smoluchowski": {"c", "a"}, "eke": {"c"},
    "granulation": {"c", "p", "q"}, "shear-linear": {"c"}, "shear-nonlinear": {"c"},
    "custom-tabulated": {"path"},
}
_SEL_PARAMS = {"zero": set(), "constant": {"c"}, "power": {"c", "exponent"}, "custom-tabulated": {"path"}}
_BRK_PARAMS = {"binary-uniform": set(), "ternary-uniform": set(), "parabolic": set(),
               "custom-tabulated": {"path"}}
_COAG_CONST = {"k", "sigma", "lambda"}
_SEL_CONST = {"S0", "alpha"}
_BRK_CONST = {"gamma", "N", "N0", "b_bar", "Y"}


class ConfigError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(f"{p}: {m}" for p, m in self.errors))


@dataclass(frozen=True)
class GridParams:
    x_min: float = 1e-6
    x_max: float = 1e3
    cells: int = 180


@dataclass(frozen=True)
class StudyParams:
    n_list: tuple = (4, 16, 64, 256)
    r1: float = 2.0
    r2: float = 0.5
    ramp: float = 0.5


@dataclass(frozen=True)
class RunConfiguration:
    coagulation: dict
    selection: dict = field(default_factory=lambda: {"form": "zero"})
    breakage: dict = field(default_factory=lambda: {"form": "binary-uniform"})
    grid: GridParams = GridParams()
    initial: dict = field(default_factory=lambda: {"profile": "exponential", "mean": 1.0, "number": 1.0})
    integrator: IntegratorConfig = IntegratorConfig()
    truncation: TruncationParams | None = None
    mode: str = "single"
    output_dir: str = "output"
    snapshots: int = 10
    strict: bool = True
    study: StudyParams = StudyParams()
    envelope_strip: tuple = (0.1, 10.0)

    def to_dict(self) -> dict:
        return {
            "kernels": {"coagulation": dict(self.coagulation), "selection": dict(self.selection),
                        "breakage": dict(self.breakage)},
            "grid": asdict(self.grid),
            "initial": dict(self.initial),
            "integrator": asdict(self.integrator),
            "truncation": None if self.truncation is None else asdict(self.truncation),
            "mode": self.mode,
            "output_dir": self.output_dir,
            "snapshots": self.snapshots,
            "strict": self.strict,
            "study": {**asdict(self.study), "n_list": list(self.study.n_list)},
            "envelope": {"strip": list(self.envelope_strip)},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


# --------------------------------------------------------------------------
# parsing helpers


class _Collector:
    def __init__(self):
        self.errors = []

    def add(self, path, msg):
        self.errors.append((path, msg))

    def number(self, d, key, path, default=None, integer=False):
        if key not in d:
            if default is None:
                self.add(f"{path}.{key}", "missing")
            return default
        v = d[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            self.add(f"{path}.{key}", "must be a finite number")
            return default
        if integer:
            if int(v) != v:
                self.add(f"{path}.{key}", "must be an integer")
                return default
            return int(v)
        return float(v)

    def section(self, doc, key, path=""):
        v = doc.get(key, {})
        if v is None:
            return None
        if not isinstance(v, dict):
            self.add(f"{path}{key}", "must be an object")
            return {}
        return v


def _kernel_decl(col, d, path, params_by_form, consts, base_dir, required_consts=()):
    if not isinstance(d, dict):
        col.add(path, "must be an object")
        return None
    form = d.get("form")
    if form not in params_by_form:
        col.add(f"{path}.form", f"unknown kernel id {form!r}; expected one of {sorted(params_by_form)}")
        return None
    allowed = params_by_form[form] | consts
    out = {"form": form}
    for key in sorted(d):
        if key == "form":
            continue
        if key not in allowed:
            col.add(f"{path}.{key}", f"unexpected field for form {form!r}")
            continue
        if key == "path":
            p = Path(d[key]) if isinstance(d[key], str) else None
            if p is None:
                col.add(f"{path}.path", "must be a string")
                continue
            if not p.is_absolute() and base_dir is not None:
                p = Path(base_dir) / p
            if not p.exists():
                col.add(f"{path}.path", f"file not found: {p}")
            out["path"] = str(p)
        else:
            v = col.number(d, key, path, integer=(key == "N"))
            if v is not None:
                out[key] = v
    if form == "custom-tabulated":
        if "path" not in d:
            col.add(f"{path}.path", "missing")
        for c in required_consts:
            if c not in d:
                col.add(f"{path}.{c}", "missing (custom kernels must supply their bound constants)")
    return out


def _params(decl, names):
    return {k: decl[k] for k in names if k in decl}


def build_coagulation(decl) -> kn.CoagulationSpec:
    form = decl["form"]
    if form == "custom-tabulated":
        table = kn.load_coagulation_csv(decl["path"])
        return kn.CoagulationSpec(form, decl["k"], decl["sigma"], decl["lambda"],
                                  {"path": decl["path"]}, table)
    base = kn.coagulation(form, **_params(decl, _COAG_PARAMS[form]))
    if _COAG_CONST & decl.keys():
        base = kn.CoagulationSpec(form, decl.get("k", base.k), decl.get("sigma", base.sigma),
                                  decl.get("lambda", base.lam), base.params)
    return base


def build_selection(decl) -> kn.SelectionSpec:
    form = decl["form"]
    if form == "custom-tabulated":
        table = kn.load_selection_csv(decl["path"])
        return kn.SelectionSpec(form, decl["S0"], decl["alpha"], {"path": decl["path"]}, table)
    base = kn.selection(form, **_params(decl, _SEL_PARAMS[form]))
    if _SEL_CONST & decl.keys():
        base = kn.SelectionSpec(form, decl.get("S0", base.S0), decl.get("alpha", base.alpha), base.params)
    return base


def build_breakage(decl) -> kn.BreakageSpec:
    form = decl["form"]
    gamma = decl.get("gamma", 0.5)
    if form == "custom-tabulated":
        table = kn.load_breakage_csv(decl["path"])
        return kn.BreakageSpec(form, int(decl["N"]), gamma, decl["N0"], decl["b_bar"], decl["Y"],
                               {"path": decl["path"]}, table)
    base = kn.breakage(form, gamma=gamma)
    over = {k: decl[k] for k in ("N", "N0", "b_bar", "Y") if k in decl}
    if over:
        base = kn.BreakageSpec(form, int(over.get("N", base.N)), gamma, over.get("N0", base.N0),
                               over.get("b_bar", base.b_bar), over.get("Y", base.Y))
    return base


def build_system(cfg: RunConfiguration) -> KernelSystem:
    return KernelSystem(build_coagulation(cfg.coagulation), build_selection(cfg.selection),
                        build_breakage(cfg.breakage))


def build_initial(decl):
    p = decl["profile"]
    if p == "exponential":
        return Exponential(decl.get("mean", 1.0), decl.get("number", 1.0))
    if p == "monodisperse":
        return Monodisperse(int(decl["cell"]), decl["amount"])
    if p == "zero":
        return Zero()
    data = kn._read_columns(decl["path"], 2)
    return TabulatedProfile(data[:, 0], data[:, 1])


def build_simulation(cfg: RunConfiguration, truncation=None) -> Simulation:
    return Simulation(build_system(cfg), cfg.grid.x_min, cfg.grid.x_max, cfg.grid.cells,
                      build_initial(cfg.initial), cfg.integrator,
                      truncation if truncation is not None else cfg.truncation,
                      cfg.snapshots, cfg.strict)


# --------------------------------------------------------------------------


def parse_config(document, base_dir=None) -> RunConfiguration:
    """Parse and fully validate a JSON document (text or already-decoded dict)."""
    col = _Collector()
    if isinstance(document, (str, bytes)):
        try:
            doc = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ConfigError([("<document>", f"invalid JSON: {exc}")]) from None
    else:
        doc = document
    if not isinstance(doc, dict):
        raise ConfigError([("<document>", "must be a JSON object")])

    known = {"kernels", "grid", "initial", "integrator", "truncation", "mode", "output_dir",
             "snapshots", "strict", "study", "envelope"}
    for key in doc:
        if key not in known:
            col.add(key, "unknown field")

    kern = col.section(doc, "kernels") or {}
    coag = sel = brk = None
    if "coagulation" not in kern:
        col.add("kernels.coagulation", "missing")
    else:
        coag = _kernel_decl(col, kern["coagulation"], "kernels.coagulation", _COAG_PARAMS, _COAG_CONST,
                            base_dir, ("k", "sigma", "lambda"))
    sel = _kernel_decl(col, kern.get("selection", {"form": "zero"}), "kernels.selection", _SEL_PARAMS,
                       _SEL_CONST, base_dir, ("S0", "alpha"))
    brk = _kernel_decl(col, kern.get("breakage", {"form": "binary-uniform"}), "kernels.breakage",
                       _BRK_PARAMS, _BRK_CONST, base_dir, ("N", "N0", "b_bar", "Y"))

    # constraint checks on the effective constants
    if coag is not None:
        try:
            eff = kn.coagulation(coag["form"], **_params(coag, _COAG_PARAMS[coag["form"]] - {"path"})) \
                if coag["form"] != "custom-tabulated" else None
        except ValueError as exc:
            col.add("kernels.coagulation", str(exc))
            eff = None
        k = coag.get("k", eff.k if eff else 1.0)
        sigma = coag.get("sigma", eff.sigma if eff else 0.0)
        lam = coag.get("lambda", eff.lam if eff else 0.0)
        for msg in kn.coagulation_problems(k, sigma, lam):
            field_ = {"k": "k", "s": "sigma", "l": "lambda"}[msg[0]]
            col.add(f"kernels.coagulation.{field_}", msg)
    if sel is not None:
        form = sel["form"]
        S0 = sel.get("S0", sel.get("c", 1.0) if form in ("constant", "power") else 0.0)
        alpha = sel.get("alpha", sel.get("exponent", 1.0) if form == "power" else 0.0)
        for msg in kn.selection_problems(S0, alpha):
            col.add(f"kernels.selection.{'S0' if msg.startswith('S0') else 'alpha'}", msg)
    if brk is not None:
        gamma = brk.get("gamma", 0.5)
        N = brk.get("N", 2)
        for msg in kn.breakage_problems(N, gamma, brk.get("N0", 1.0), brk.get("b_bar", 1.0), brk.get("Y", 1.0)):
            col.add(f"kernels.breakage.{msg.split()[0]}", msg)
        if coag is not None and not sigma < gamma:
            col.add("kernels.breakage.gamma", "gamma must exceed the coagulation sigma")

    g = col.section(doc, "grid") or {}
    grid = GridParams(col.number(g, "x_min", "grid", 1e-6), col.number(g, "x_max", "grid", 1e3),
                      col.number(g, "cells", "grid", 180, integer=True))
    if not 0 < grid.x_min < grid.x_max:
        col.add("grid", "need 0 < x_min < x_max")
    if grid.cells < 1:
        col.add("grid.cells", "must be >= 1")

    ini = col.section(doc, "initial") or {}
    profile = ini.get("profile", "exponential")
    initial = {"profile": profile}
    if profile == "exponential":
        initial["mean"] = col.number(ini, "mean", "initial", 1.0)
        initial["number"] = col.number(ini, "number", "initial", 1.0)
        if not initial["mean"] > 0 or initial["number"] < 0:
            col.add("initial", "exponential needs mean > 0 and number >= 0")
    elif profile == "monodisperse":
        initial["cell"] = col.number(ini, "cell", "initial", integer=True)
        initial["amount"] = col.number(ini, "amount", "initial")
        if initial["cell"] is not None and not 0 <= initial["cell"] < grid.cells:
            col.add("initial.cell", "outside the grid")
        if initial["amount"] is not None and initial["amount"] < 0:
            col.add("initial.amount", "must be nonnegative")
    elif profile == "zero":
        pass
    elif profile == "custom-tabulated":
        p = ini.get("path")
        if not isinstance(p, str):
            col.add("initial.path", "missing")
        else:
            pp = Path(p) if Path(p).is_absolute() or base_dir is None else Path(base_dir) / p
            if not pp.exists():
                col.add("initial.path", f"file not found: {pp}")
            else:
                try:
                    data = kn._read_columns(pp, 2)
                    if (data[:, 1] < 0).any():
                        col.add("initial.path", "negative tabulated density")
                except ValueError as exc:
                    col.add("initial.path", str(exc))
            initial["path"] = str(pp)
    else:
        col.add("initial.profile", f"unknown profile {profile!r}")

    it = col.section(doc, "integrator") or {}
    d = IntegratorConfig.__dataclass_fields__
    vals = {k: col.number(it, k, "integrator", d[k].default) for k in d}
    for k in it:
        if k not in d:
            col.add(f"integrator.{k}", "unknown field")

    for msg in integrator_problems(SimpleNamespace(**vals)):
        col.add("integrator", msg)

    tr = doc.get("truncation")
    truncation = None
    if tr is not None:
        if not isinstance(tr, dict):
            col.add("truncation", "must be an object or null")
        else:
            n = col.number(tr, "n", "truncation", integer=True)
            ramp = col.number(tr, "ramp", "truncation", 0.5)
            try:
                truncation = TruncationParams(n, ramp) if n is not None else None
            except ValueError as exc:
                col.add("truncation", str(exc))

    mode = doc.get("mode", "single")
    if mode not in MODES:
        col.add("mode", f"unknown mode {mode!r}")
        mode = "single"

    st = col.section(doc, "study") or {}
    nl = st.get("n_list", [4, 16, 64, 256])
    if not isinstance(nl, list) or not all(isinstance(v, int) and v >= 1 for v in nl) or \
            any(b <= a for a, b in zip(nl, nl[1:])):
        col.add("study.n_list", "must be a strictly increasing list of positive integers")
        nl = [4]
    study = StudyParams(tuple(nl), col.number(st, "r1", "study", 2.0), col.number(st, "r2", "study", 0.5),
                        col.number(st, "ramp", "study", 0.5))
    if study.r1 < 1 or not 0 < study.r2 < 1:
        col.add("study", "need r1 >= 1 and 0 < r2 < 1")

    env = col.section(doc, "envelope") or {}
    strip = env.get("strip", [0.1, 10.0])
    if not (isinstance(strip, list) and len(strip) == 2 and all(isinstance(v, (int, float)) for v in strip)
            and 0 < strip[0] < strip[1]):
        col.add("envelope.strip", "must be [X1, X2] with 0 < X1 < X2")
        strip = [0.1, 10.0]

    snapshots = col.number(doc, "snapshots", "", 10, integer=True)
    if snapshots < 1:
        col.add("snapshots", "must be >= 1")
    strict = doc.get("strict", True)
    if not isinstance(strict, bool):
        col.add("strict", "must be a boolean")
    out = doc.get("output_dir", "output")
    if not isinstance(out, str):
        col.add("output_dir", "must be a string")

    if col.errors:
        raise ConfigError(col.errors)
    integrator = IntegratorConfig(**vals)
    return RunConfiguration(coag, sel, brk, grid, initial, integrator, truncation, MODES[mode], out,
                            snapshots, strict, study, (float(strip[0]), float(strip[1])))


def load_config(path) -> RunConfiguration:
    path = Path(path)
    return parse_config(path.read_text(), base_dir=path.parent)
