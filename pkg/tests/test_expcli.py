"""End-to-end tests of the ssmc-lab command line."""

import hashlib
import json

import pytest
from click.testing import CliRunner

from ssmc_lab.expcli.main import EXIT_BUDGET, EXIT_CONFIG, main
from ssmc_lab.expcli.schema import load_config

FLAT_ATOMS = {"atoms": [{"theta": 0.3, "weight": 0.5}, {"theta": 0.5, "weight": 0.5}]}


def _invoke(config_path, out_dir, command, *extra):
    args = ["--config", str(config_path), "--out-dir", str(out_dir), "--threads", "1", *extra, command]
    return CliRunner().invoke(main, args)


def _read_json(path):
    return json.loads(path.read_text(encoding="utf-8"))


# =============================================================================
# SUCCESSFUL RUNS
# =============================================================================

@pytest.mark.parametrize("kind", ["flat", "single_well", "alternating_wells"])
def test_sweep_matches_the_oracle(write_config, tmp_path, kind):
    path = write_config({
        "model": {"kind": kind, "ladder": list(range(1, 21))},
        "analysis": {"kind": "sweep", "thetas": [round(0.05 * i, 2) for i in range(1, 20)]},
    })
    result = _invoke(path, tmp_path / "out", "sweep")
    assert result.exit_code == 0, result.output
    summary = _read_json(tmp_path / "out" / "summary.json")
    assert summary["rows"] == 20 * 19
    assert summary["max_rel_error"] <= 1e-9
    assert (tmp_path / "out" / "sweep.csv").exists()


def test_sweep_reports_domain_errors_per_cell(write_config, tmp_path):
    path = write_config({
        "model": {"kind": "alternating_wells", "n": 3},
        "analysis": {"kind": "sweep", "thetas": [0.0, 0.5]},
    })
    result = _invoke(path, tmp_path / "out", "sweep")
    assert result.exit_code == 0, result.output
    assert _read_json(tmp_path / "out" / "summary.json")["domain_errors"] == 1


def test_manifest_lists_artifacts_with_hashes(write_config, tmp_path):
    path = write_config({
        "model": {"kind": "flat", "n": 3},
        "mu": FLAT_ATOMS,
        "analysis": {"kind": "simulate"},
        "run": {"seed": 5, "cycles": 100},
    })
    out = tmp_path / "out"
    result = _invoke(path, out, "simulate")
    assert result.exit_code == 0, result.output
    manifest = _read_json(out / "manifest.json")
    assert manifest["seed"] == 5
    assert manifest["config_sha256"] == load_config(path).digest()
    assert set(manifest["files"]) == {"switches.csv"}
    assert manifest["files"]["switches.csv"] == hashlib.sha256((out / "switches.csv").read_bytes()).hexdigest()


def test_simulation_is_reproducible_across_runs_and_workers(write_config, tmp_path):
    path = write_config({
        "model": {"kind": "flat", "n": 4},
        "mu": {"density": {"family": "uniform", "lower": 0.2, "upper": 0.8}},
        "analysis": {"kind": "simulate", "mode": "switches"},
        "run": {"seed": 9, "cycles": 300, "replicas": 3},
    })
    assert _invoke(path, tmp_path / "a", "simulate").exit_code == 0
    assert _invoke(path, tmp_path / "b", "simulate").exit_code == 0
    parallel = CliRunner().invoke(
        main, ["--config", str(path), "--out-dir", str(tmp_path / "c"), "--threads", "2", "simulate"]
    )
    assert parallel.exit_code == 0, parallel.output
    reference = (tmp_path / "a" / "switches.csv").read_bytes()
    assert (tmp_path / "b" / "switches.csv").read_bytes() == reference
    assert (tmp_path / "c" / "switches.csv").read_bytes() == reference


def test_seed_override_changes_the_records(write_config, tmp_path):
    path = write_config({
        "model": {"kind": "flat", "n": 4},
        "mu": FLAT_ATOMS,
        "analysis": {"kind": "simulate"},
        "run": {"cycles": 200},
    })
    assert _invoke(path, tmp_path / "a", "simulate").exit_code == 0
    assert _invoke(path, tmp_path / "b", "simulate", "--seed", "1").exit_code == 0
    assert (tmp_path / "a" / "switches.csv").read_bytes() != (tmp_path / "b" / "switches.csv").read_bytes()


def test_occupation_run_is_close_to_the_limit(write_config, tmp_path):
    path = write_config({
        "model": {"kind": "flat", "n": 10},
        "mu": FLAT_ATOMS,
        "analysis": {"kind": "occupation"},
        "run": {"steps": 200_000},
    })
    result = _invoke(path, tmp_path / "out", "occupation")
    assert result.exit_code == 0, result.output
    summary = _read_json(tmp_path / "out" / "summary.json")
    assert summary["limit_masses"][1] == pytest.approx(0.8001, abs=1e-4)
    assert summary["mean_tv_distance"] < 0.05


def test_dominance_run_agrees_with_the_prediction(write_config, tmp_path):
    path = write_config({
        "model": {"kind": "flat", "ladder": [10, 20, 40, 80, 160]},
        "mu": FLAT_ATOMS,
        "analysis": {"kind": "dominance"},
    })
    result = _invoke(path, tmp_path / "out", "dominance")
    assert result.exit_code == 0, result.output
    document = _read_json(tmp_path / "out" / "report.json")
    assert document["report"]["verdict"] == "Dominance"
    assert document["report"]["points"] == [0.5]
    assert document["agrees_with_prediction"] is True


def test_metastability_run_writes_every_table(write_config, tmp_path):
    path = write_config({
        "model": {"kind": "single_well", "ladder": [6, 10]},
        "analysis": {"kind": "metastability", "thetas": [0.3]},
    })
    result = _invoke(path, tmp_path / "out", "metastability")
    assert result.exit_code == 0, result.output
    out = tmp_path / "out"
    for name in ("metastability.csv", "survival.csv", "fernandez.csv", "verdicts.json"):
        assert (out / name).exists()
    assert _read_json(out / "verdicts.json")["verdicts"][0]["verdict"] == "ExpOne"


# =============================================================================
# FAILURES AND EXIT CODES
# =============================================================================

def test_invalid_config_exits_with_config_code(write_config, tmp_path):
    path = write_config({"model": {"kind": "flat", "n": 0}, "analysis": {"kind": "sweep", "thetas": [0.5]}})
    result = _invoke(path, tmp_path / "out", "sweep")
    assert result.exit_code == EXIT_CONFIG
    assert "error:" in result.output


def test_subcommand_must_match_the_config(write_config, tmp_path):
    path = write_config({"model": {"kind": "flat", "n": 3}, "analysis": {"kind": "sweep", "thetas": [0.5]}})
    assert _invoke(path, tmp_path / "out", "dominance").exit_code == EXIT_CONFIG


def test_invalid_chain_still_writes_its_report(write_config, tmp_path):
    path = write_config({
        "model": {"kind": "flat", "n": 3},
        "analysis": {"kind": "validate", "thetas": [0.5]},
        "chain": {"origin": 0, "targets": [0]},
    })
    out = tmp_path / "out"
    result = _invoke(path, out, "validate")
    assert result.exit_code == EXIT_CONFIG
    assert "origin in target set" in (out / "validation.csv").read_text(encoding="utf-8")


def test_valid_chain_passes(write_config, tmp_path):
    path = write_config({"model": {"kind": "single_well", "n": 4}, "analysis": {"kind": "validate"}})
    out = tmp_path / "out"
    assert _invoke(path, out, "validate").exit_code == 0
    assert _read_json(out / "validation.json")["valid"] is True


def test_monte_carlo_budget_exits_with_budget_code(write_config, tmp_path):
    path = write_config({
        "model": {"kind": "single_well", "ladder": [40, 60]},
        "analysis": {"kind": "metastability", "thetas": [0.3], "source": "monte_carlo"},
    })
    result = _invoke(path, tmp_path / "out", "metastability")
    assert result.exit_code == EXIT_BUDGET
    assert "mc_budget_steps" in result.output


def test_missing_config_option(tmp_path):
    result = CliRunner().invoke(main, ["--out-dir", str(tmp_path), "sweep"])
    assert result.exit_code == EXIT_CONFIG
