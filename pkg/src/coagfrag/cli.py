"""Command line entry point: ``pbe run --config run.json``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from .analysis import (InfeasibleExponents, check_moment_bounds, choose_uniqueness_exponents,
                       density_surrogate, envelope_check, envelope_constants, truncation_study)
from .config import ConfigError, RunConfiguration, build_simulation, build_system, load_config
from .kernels import TruncationParams, verify_system
from .solver import StiffnessError, VerificationError, integrate

log = logging.getLogger("coagfrag")

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_IO, EXIT_SOLVER = 0, 1, 2, 3, 4


def _fmt(v) -> str:
    return f"{float(v):.17g}"


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(type(o))


def write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default))


def write_moments(path: Path, run) -> None:
    gamma = run.system.breakage.gamma
    N0, N1, N2, Ng = run.moment(0.0), run.moment(1.0), run.moment(2.0), run.moment(-gamma)
    err = (N1 + run.leak - run.clipped - N1[0]) / N1[0] if N1[0] > 0 else np.zeros_like(N1)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "N0", "N1", "N2", "N_neg_gamma", "mass_error", "leak_mass"])
        for row in zip(run.times, N0, N1, N2, Ng, err, run.leak):
            w.writerow([_fmt(v) for v in row])


def density_filename(t: float) -> str:
    return f"density_{t:.6f}.csv"


def write_densities(out: Path, run) -> list:
    names = []
    widths = run.grid.widths
    for t, s in zip(run.times, run.states):
        name = density_filename(float(t))
        with open(out / name, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x_pivot", "cell_width", "concentration", "density_estimate"])
            for row in zip(run.grid.pivots, widths, s.conc, density_surrogate(s, run.grid)):
                w.writerow([_fmt(v) for v in row])
        names.append(name)
    return names


def diagnostics(cfg: RunConfiguration, run, verification: dict) -> dict:
    system = build_system(cfg)  # untruncated constants
    bounds = check_moment_bounds(run, run.system)
    env = envelope_check(run, envelope_constants(run, run.system, cfg.envelope_strip), cfg.envelope_strip)
    c = system.coagulation
    try:
        ex = choose_uniqueness_exponents(c.lam, c.sigma, system.selection.alpha, cfg.study.r2,
                                         gamma=system.breakage.gamma)
        uniq = {"k1": ex.k1, "k2": ex.k2, "k1_interval": list(ex.k1_interval), "rule": "k1 midpoint, k2 upper bound",
                "warning": ex.warning}
    except InfeasibleExponents as exc:
        uniq = {"infeasible": str(exc)}
    return {
        "snapshot_times": list(run.times),
        "envelope": {**env.to_dict(), "strip": list(cfg.envelope_strip)},
        "moment_bounds": bounds.to_dict(),
        "uniqueness_exponents": uniq,
        "solver": {**run.stats, "flags": run.flags, "cumulative_leak_mass": float(run.leak[-1]),
                   "clipped_mass": float(run.clipped[-1])},
        "verification": verification,
        "truncation": None if cfg.truncation is None else asdict(cfg.truncation),
    }


def run(cfg: RunConfiguration) -> int:
    """Execute one configuration; returns a process exit status."""
    out = Path(cfg.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        print(f"error: cannot write to output directory {out}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_IO

    system = build_system(cfg)
    verification = verify_system(system)
    if cfg.mode == "verify":
        write_json(out / "verification.json", verification)
        status = "pass" if verification["passed"] else "FAIL"
        print(f"verification {status}: {out / 'verification.json'}")
        return EXIT_OK if verification["passed"] else EXIT_VERIFY

    sim = build_simulation(cfg)
    try:
        result = integrate(sim, verification)
    except VerificationError as exc:
        write_json(out / "verification.json", exc.report)
        print(f"error: {exc} (use --no-strict to continue anyway)", file=sys.stderr)
        return EXIT_VERIFY
    except StiffnessError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER

    write_moments(out / "moments.csv", result)
    write_densities(out, result)
    write_json(out / "diagnostics.json", diagnostics(cfg, result, verification))

    if cfg.mode == "study":
        report = truncation_study(replace(sim, strict=False), cfg.study.n_list, cfg.study.r1,
                                  cfg.study.r2, cfg.envelope_strip, cfg.study.ramp)
        write_json(out / "study.json", report.to_dict())
    print(f"wrote results to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pbe", description="Coagulation-fragmentation population balance solver")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a configuration")
    r.add_argument("--config", required=True, help="JSON configuration file")
    r.add_argument("--out-dir", help="output directory (overrides the configuration)")
    r.add_argument("--mode", choices=["single", "study", "verify"])
    r.add_argument("--truncation-n", type=int, help="truncate kernels to [1/n, n]")
    r.add_argument("--no-strict", action="store_true", help="downgrade verifier failures to warnings")
    r.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        for path, msg in exc.errors:
            print(f"config error: {path}: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: cannot read {args.config}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_IO
    changes = {}
    if args.out_dir:
        changes["output_dir"] = args.out_dir
    if args.mode:
        changes["mode"] = args.mode
    if args.truncation_n is not None:
        if args.truncation_n < 1:
            print("config error: --truncation-n must be >= 1", file=sys.stderr)
            return EXIT_CONFIG
        ramp = cfg.truncation.ramp if cfg.truncation else 0.5
        changes["truncation"] = TruncationParams(args.truncation_n, ramp)
    if args.no_strict:
        changes["strict"] = False
    return run(replace(cfg, **changes))


if __name__ == "__main__":
    sys.exit(main())
