import csv
import json
import os

import numpy as np
import pytest

from coagfrag.cli import EXIT_CONFIG, EXIT_IO, EXIT_OK, EXIT_VERIFY, main
from coagfrag.config import ConfigError, GridParams, parse_config
from coagfrag.solver import IntegratorConfig

CONSTANT = {"kernels": {"coagulation": {"form": "constant"}}}
SMOL = {"kernels": {"coagulation": {"form": "smoluchowski", "a": 3},
                    "selection": {"form": "power", "c": 1.0, "exponent": 1.0},
                    "breakage": {"form": "binary-uniform", "gamma": 0.5}}}


def write(tmp_path, doc, name="run.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def read_csv(path):
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    return {k: np.array([float(r[k]) for r in rows]) for k in rows[0]}


def test_minimal_defaults():
    cfg = parse_config(json.dumps(CONSTANT))
    assert cfg.grid == GridParams()
    assert cfg.integrator == IntegratorConfig()
    assert cfg.mode == "single" and cfg.strict and cfg.truncation is None
    assert cfg.selection == {"form": "zero"} and cfg.snapshots == 10
    assert cfg.initial["profile"] == "exponential"


def test_sigma_one_rejected():
    doc = {"kernels": {"coagulation": {"form": "constant", "sigma": 1.0}}}
    with pytest.raises(ConfigError) as info:
        parse_config(doc)
    assert ("kernels.coagulation.sigma", "sigma must lie in [0,1)") in info.value.errors


def test_alpha_rejected():
    doc = {"kernels": {"coagulation": {"form": "constant"},
                       "selection": {"form": "power", "exponent": 1.5}}}
    with pytest.raises(ConfigError) as info:
        parse_config(doc)
    assert any(p == "kernels.selection.alpha" for p, _ in info.value.errors)


def test_every_error_reported():
    doc = {"kernels": {"coagulation": {"form": "bogus"}}, "grid": {"x_min": -1, "cells": 0},
           "integrator": {"rel_tol": -1}, "mode": "fast", "extra": 1}
    with pytest.raises(ConfigError) as info:
        parse_config(doc)
    paths = {p for p, _ in info.value.errors}
    assert {"grid", "grid.cells", "integrator", "mode", "extra"} <= paths
    assert any(p.startswith("kernels.coagulation") for p in paths)


def test_invalid_json():
    with pytest.raises(ConfigError):
        parse_config("{not json")


@pytest.mark.parametrize("doc", [CONSTANT, SMOL, {**SMOL, "truncation": {"n": 16}, "mode": "truncation-study"}])
def test_round_trip(doc):
    cfg = parse_config(doc)
    assert parse_config(cfg.to_json()) == cfg


def test_verify_mode_smoluchowski(tmp_path, capsys):
    out = tmp_path / "v"
    code = main(["run", "--config", write(tmp_path, {**SMOL, "mode": "verify-only"}), "--out-dir", str(out)])
    assert code == EXIT_OK
    rep = json.loads((out / "verification.json").read_text())
    for key in ("coagulation_bound", "selection_bound", "breakage", "gamma_exceeds_sigma"):
        assert rep[key]["passed"]
    assert "pass" in capsys.readouterr().out


def test_single_constant_run(tmp_path):
    out = tmp_path / "deep" / "nested"           # does not exist yet
    assert main(["run", "--config", write(tmp_path, CONSTANT), "--out-dir", str(out)]) == EXIT_OK
    m = read_csv(out / "moments.csv")
    assert list(m) == ["t", "N0", "N1", "N2", "N_neg_gamma", "mass_error", "leak_mass"]
    assert np.allclose(m["N0"], 2 / (2 + m["t"]), rtol=1e-3)
    diag = json.loads((out / "diagnostics.json").read_text())
    assert diag["snapshot_times"] == list(m["t"])   # 17 significant digits round-trip
    for t in diag["snapshot_times"]:
        d = read_csv(out / f"density_{t:.6f}.csv")
        assert list(d) == ["x_pivot", "cell_width", "concentration", "density_estimate"]
        assert d["x_pivot"].size == 180
    assert diag["envelope"]["passed"] and diag["moment_bounds"]["passed"]
    assert "infeasible" in diag["uniqueness_exponents"]
    assert diag["solver"]["accepted_steps"] > 0


def test_unwritable_output(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("")
    code = main(["run", "--config", write(tmp_path, CONSTANT), "--out-dir", str(blocker / "sub")])
    assert code == EXIT_IO
    assert str(blocker / "sub") in capsys.readouterr().err


def test_config_error_exit(tmp_path, capsys):
    doc = {"kernels": {"coagulation": {"form": "constant", "sigma": 1.0}}}
    assert main(["run", "--config", write(tmp_path, doc)]) == EXIT_CONFIG
    assert "sigma must lie in [0,1)" in capsys.readouterr().err
    assert main(["run", "--config", str(tmp_path / "missing.json")]) == EXIT_IO


def test_strict_gate_and_override(tmp_path):
    (tmp_path / "K.csv").write_text("\n".join(f"{a:.17g},{b:.17g},{a * b:.17g}"
                                              for a in np.logspace(-6, 6, 13) for b in np.logspace(-6, 6, 13)))
    doc = {"kernels": {"coagulation": {"form": "custom-tabulated", "path": "K.csv",
                                       "k": 1.0, "sigma": 0.0, "lambda": 1.0}},
           "grid": {"x_min": 1e-3, "x_max": 10, "cells": 20},
           "initial": {"profile": "monodisperse", "cell": 5, "amount": 0.1},
           "integrator": {"t_end": 0.1}, "snapshots": 2}
    cfg_path = write(tmp_path, doc)
    out = tmp_path / "o"
    assert main(["run", "--config", cfg_path, "--out-dir", str(out)]) == EXIT_VERIFY
    assert not (out / "moments.csv").exists()
    assert not json.loads((out / "verification.json").read_text())["passed"]
    assert main(["run", "--config", cfg_path, "--out-dir", str(out), "--no-strict"]) == EXIT_OK
    diag = json.loads((out / "diagnostics.json").read_text())
    assert "verification-failed" in diag["solver"]["flags"]


def test_study_mode(tmp_path):
    doc = {**SMOL, "grid": {"x_min": 1e-3, "x_max": 1e2, "cells": 40}, "integrator": {"t_end": 0.3},
           "snapshots": 2, "study": {"n_list": [2, 8]}}
    out = tmp_path / "s"
    assert main(["run", "--config", write(tmp_path, doc), "--out-dir", str(out), "--mode", "study"]) == EXIT_OK
    study = json.loads((out / "study.json").read_text())
    assert study["n_list"] == [2, 8] and len(study["pairwise_distance"]["T"]) == 1


def test_relative_paths_resolve_against_config(tmp_path):
    sub = tmp_path / "cfg"
    sub.mkdir()
    (sub / "S.csv").write_text("x,S\n1e-6,1e-6\n1e6,1e6\n")
    doc = {**CONSTANT, "kernels": {**CONSTANT["kernels"],
                                   "selection": {"form": "custom-tabulated", "path": "S.csv",
                                                 "S0": 1.0, "alpha": 1.0}}}
    cfg = parse_config(doc, base_dir=sub)
    assert os.path.isabs(cfg.selection["path"]) or cfg.selection["path"].startswith(str(sub))
