import hashlib
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from driftflow import cli


def run_cli(args, tmp_path):
    return cli.main(list(args) + ["--set", f"output_dir={tmp_path / 'runs'}"])


def only_run_dir(tmp_path, experiment):
    dirs = sorted((tmp_path / "runs").glob(f"{experiment}-*"))
    assert len(dirs) == 1
    return dirs[0]


def read_manifest(run_dir):
    return json.loads((run_dir / "manifest.json").read_text())


# --- strict configuration ----------------------------------------------------


def test_unknown_file_key_rejected_before_computation(tmp_path, capsys):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("n_paths: 50\nwindoze: 3\n")
    rc = run_cli(["davie", "gradient", "--config", str(cfg)], tmp_path)
    assert rc == 2
    assert "unknown config key 'windoze'" in capsys.readouterr().err
    assert not (tmp_path / "runs").exists()


def test_unknown_override_key_named_with_dotted_path(tmp_path, capsys):
    rc = run_cli(["stability", "--set", "checks.slope_flor=0.3"], tmp_path)
    assert rc == 2
    assert "checks.slope_flor" in capsys.readouterr().err


def test_nested_section_must_be_mapping(tmp_path, capsys):
    rc = run_cli(["simulate", "--set", "path=7"], tmp_path)
    assert rc == 2
    assert "path" in capsys.readouterr().err


def test_value_type_errors_are_usage_errors(tmp_path, capsys):
    rc = run_cli(["simulate", "--set", "x0=hello"], tmp_path)
    assert rc == 2
    assert "invalid value for 'x0'" in capsys.readouterr().err


def test_drift_catalog_errors_map_to_usage(tmp_path, capsys):
    assert run_cli(["simulate", "--set", "drift.kind=wiggle"], tmp_path) == 2
    assert run_cli(["simulate", "--set", "drift.params.widthh=2"], tmp_path) == 2
    err = capsys.readouterr().err
    assert "wiggle" in err and "widthh" in err


def test_exponent_gate_violation_is_usage_error(tmp_path, capsys):
    rc = run_cli(
        ["davie", "krylov", "--set", "drift.p=3", "--set", "drift.q=3"], tmp_path
    )
    assert rc == 2
    assert "violates" in capsys.readouterr().err


def test_missing_config_file(tmp_path, capsys):
    rc = run_cli(["jn", "--config", str(tmp_path / "nope.yaml")], tmp_path)
    assert rc == 2
    assert "cannot read config file" in capsys.readouterr().err


def test_worker_env_var_validated(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv(cli.WORKERS_ENV, "zero")
    rc = run_cli(["jn"], tmp_path)
    assert rc == 2
    assert cli.WORKERS_ENV in capsys.readouterr().err


def test_help_exits_zero(capsys):
    assert cli.main(["--help"]) == 0
    assert "experiment" in capsys.readouterr().out


def test_set_requires_key_value(tmp_path, capsys):
    rc = run_cli(["simulate", "--set", "x0"], tmp_path)
    assert rc == 2
    assert "KEY=VALUE" in capsys.readouterr().err


# --- config plumbing units ---------------------------------------------------


def test_parse_overrides_nested_and_last_wins():
    out = cli._parse_overrides(["a.b=1", "a.c=2", "a.b=3"])
    assert out == {"a": {"b": 3, "c": 2}}


def test_deep_merge_prefers_override_leaves():
    merged = cli._deep_merge({"a": {"b": 1, "c": 2}, "d": 5}, {"a": {"b": 9}})
    assert merged == {"a": {"b": 9, "c": 2}, "d": 5}


def test_config_hash_insensitive_to_key_order():
    h1 = cli.config_hash("jn", {"a": 1.0, "b": [1, 2]})
    h2 = cli.config_hash("jn", dict(reversed(list({"a": 1.0, "b": [1, 2]}.items()))))
    assert h1 == h2
    assert h1 != cli.config_hash("jn", {"a": 1.5, "b": [1, 2]})


# --- experiment runs ---------------------------------------------------------


def test_simulate_zero_drift_solution_minus_path_constant(tmp_path):
    rc = run_cli(["simulate", "--set", "path.level=8", "--set", "x0=0.3"], tmp_path)
    assert rc == 0
    run_dir = only_run_dir(tmp_path, "simulate")
    man = read_manifest(run_dir)
    assert man["passed"] is True
    kinds = {a["kind"]: a for a in man["artifacts"]}
    assert set(kinds) == {"solution-csv", "path-binary"}
    for art in man["artifacts"]:
        digest = hashlib.sha256((run_dir / art["path"]).read_bytes()).hexdigest()
        assert digest == art["sha256"]
    sol = np.genfromtxt(run_dir / "solution.csv", delimiter=",", names=True)
    with np.load(run_dir / "path.npz") as z:
        w = z["values"][:, 0]
    assert np.allclose(sol["y0"] - w, 0.3, atol=1e-12)
    assert np.all(sol["drift_step0"] == 0.0)


def test_rerun_is_byte_identical(tmp_path):
    args = ["sew-selftest", "--set", "n_instances=24"]
    assert run_cli(args, tmp_path) == 0
    run_dir = only_run_dir(tmp_path, "sew-selftest")
    before = {f.name: f.read_bytes() for f in run_dir.iterdir()}
    assert run_cli(args, tmp_path) == 0
    after = {f.name: f.read_bytes() for f in run_dir.iterdir()}
    assert before == after
    assert "manifest.json" in before


def test_effective_config_echoed_and_flags_win(tmp_path):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("n_instances: 40\nmaster_seed: 11\n")
    rc = run_cli(
        ["sew-selftest", "--config", str(cfg), "--set", "n_instances=15"], tmp_path
    )
    assert rc == 0
    man = read_manifest(only_run_dir(tmp_path, "sew-selftest"))
    assert man["config"]["n_instances"] == 15
    assert man["config"]["master_seed"] == 11
    assert man["config_hash"] == cli.config_hash("sew-selftest", man["config"])


def test_flow_glue_self_is_exact(tmp_path):
    rc = run_cli(
        ["flow", "glue", "--set", "path.level=7", "--set", "t_level=5"], tmp_path
    )
    assert rc == 0
    run_dir = only_run_dir(tmp_path, "flow-glue")
    summary = json.loads((run_dir / "glue.json").read_text())
    assert summary == {"mode": "self", "defect": 0.0, "budget": None}


def test_flow_build_artifacts_and_start_identity(tmp_path):
    rc = run_cli(
        ["flow", "build", "--set", "path.level=7", "--set", "t_level=5"], tmp_path
    )
    assert rc == 0
    man = read_manifest(only_run_dir(tmp_path, "flow-build"))
    assert {a["kind"] for a in man["artifacts"]} == {"flow-binary", "flow-csv"}
    assert man["checks"][0]["name"] == "start-identity"


def test_flow_certify_negative_control(tmp_path, capsys):
    rc = run_cli(["flow", "certify", "--set", "corrupt.enabled=true"], tmp_path)
    assert rc == 0
    man = read_manifest(only_run_dir(tmp_path, "flow-certify"))
    assert man["checks"][0]["name"] == "negative-control-rejected"
    report = json.loads(
        (only_run_dir(tmp_path, "flow-certify") / "certificate.json").read_text()
    )
    assert report["passed"] is False


def test_check_failure_exits_one_and_names_check(tmp_path, capsys):
    rc = run_cli(
        ["davie", "gradient", "--set", "n_paths=150",
         "--set", "checks.slope_tol=0.0001"],
        tmp_path,
    )
    assert rc == 1
    assert "check failed: slope-band" in capsys.readouterr().err
    man = read_manifest(only_run_dir(tmp_path, "davie-gradient"))
    assert man["passed"] is False
    report = json.loads(
        (only_run_dir(tmp_path, "davie-gradient") / "report.json").read_text()
    )
    assert report["theoretical_exponent"] == 0.125


def test_davie_long_variant_alias(tmp_path):
    rc = run_cli(
        ["davie", "mc_gradient_moment", "--set", "n_paths=80", "--set", "level=9",
         "--set", "checks.slope_tol=0.5"],
        tmp_path,
    )
    assert rc == 0
    man = read_manifest(only_run_dir(tmp_path, "davie-gradient"))
    assert man["experiment"] == "davie-gradient"


def test_jn_defaults_pass_with_report_table(tmp_path):
    rc = run_cli(["jn", "--set", "n_paths=200", "--set", "level=9"], tmp_path)
    assert rc == 0
    run_dir = only_run_dir(tmp_path, "jn")
    rows = (run_dir / "report.csv").read_text().splitlines()
    assert rows[0] == "m,root_moment,root_se,envelope_root,ratio"
    assert len(rows) == 1 + 9


def test_console_entry_point_runs():
    proc = subprocess.run(
        [sys.executable, "-m", "driftflow.cli", "--help"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0
    assert "driftflow" in proc.stdout
