"""Command line surface: subcommands, exit codes, file outputs."""

import json
import os
import shutil
import subprocess
import sys

import pytest

from cascadesim import cli

TINY_SCENARIO = """\
name: tiny
seed: 3
policy: hybrid
planner: online
profile:
  n_prompts: 96
engine:
  workers: 4
workload:
  kind: piecewise
  arrivals: uniform
  levels: [[4.0, 30.0]]
"""


@pytest.fixture(scope="module")
def tiny_cfg(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "tiny.yaml"
    path.write_text(TINY_SCENARIO, encoding="utf-8")
    return str(path)


@pytest.fixture(scope="module")
def bundle(tiny_cfg, tmp_path_factory):
    out = tmp_path_factory.mktemp("runs")
    rc = cli.main(["simulate", "--config", tiny_cfg, "--out", str(out),
                   "--quiet"])
    assert rc == 0
    return os.path.join(str(out), "tiny")


def _read_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def test_simulate_writes_full_bundle(bundle):
    for name in ("metrics.csv", "audit.csv", "plans.jsonl", "summary.json",
                 "table.json"):
        assert os.path.exists(os.path.join(bundle, name)), name


def test_summary_contents(bundle):
    summary = _read_json(os.path.join(bundle, "summary.json"))
    assert summary["scenario"] == "tiny"
    assert summary["planner"] == "online"
    assert summary["policy"] == "hybrid"
    assert summary["n_queries"] == 120  # 4 qps uniform for 30 s
    assert summary["served"] + summary["dropped"] == summary["n_queries"]


def test_recompute_accepts_clean_bundle(bundle, tiny_cfg):
    rc = cli.main(["recompute", "--out", bundle, "--config", tiny_cfg,
                   "--quiet"])
    assert rc == 0
    verdict = _read_json(os.path.join(bundle, "recompute.json"))
    assert verdict["problems"] == []
    assert verdict["plan_problems"] == 0
    assert verdict["queries_audited"] == 120


def test_recompute_detects_tampered_summary(bundle, tmp_path, capsys):
    copy = str(tmp_path / "tampered")
    shutil.copytree(bundle, copy)
    spath = os.path.join(copy, "summary.json")
    summary = _read_json(spath)
    summary["served"] += 1
    with open(spath, "w", encoding="utf-8") as fh:
        json.dump(summary, fh)
    rc = cli.main(["recompute", "--out", copy, "--quiet"])
    assert rc == 1
    assert "served" in capsys.readouterr().err
    verdict = _read_json(os.path.join(copy, "recompute.json"))
    assert verdict["problems"]


def test_recompute_missing_bundle_is_an_error(tmp_path):
    rc = cli.main(["recompute", "--out", str(tmp_path / "nowhere")])
    assert rc == 1


def test_missing_required_args_exit_2():
    with pytest.raises(SystemExit) as exc:
        cli.main(["simulate"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        cli.main(["teleport"])
    assert exc.value.code == 2


def test_module_entrypoint_exit_codes():
    proc = subprocess.run([sys.executable, "-m", "cascadesim.cli"],
                          capture_output=True, text=True)
    assert proc.returncode == 2
    proc = subprocess.run([sys.executable, "-m", "cascadesim.cli", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "profile" in proc.stdout and "recompute" in proc.stdout


def test_out_dir_env_var(tiny_cfg, tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_DIR_ENV, str(tmp_path))
    rc = cli.main(["profile", "--config", tiny_cfg, "--quiet"])
    assert rc == 0
    assert os.path.exists(str(tmp_path / "tiny" / "table.json"))


def test_simulate_reusing_saved_table_is_identical(bundle, tiny_cfg, tmp_path):
    rc = cli.main(["simulate", "--config", tiny_cfg,
                   "--table", os.path.join(bundle, "table.json"),
                   "--out", str(tmp_path), "--quiet"])
    assert rc == 0
    # same table, same seed: the simulated CSVs must match byte for byte
    for name in ("metrics.csv", "audit.csv"):
        with open(os.path.join(bundle, name), "rb") as fh:
            first = fh.read()
        with open(os.path.join(str(tmp_path), "tiny", name), "rb") as fh:
            second = fh.read()
        assert first == second, name


def test_table_provenance_gate(bundle, tiny_cfg, tmp_path):
    payload = _read_json(os.path.join(bundle, "table.json"))
    payload["provenance"]["catalog_hash"] = "0" * 16
    bad = str(tmp_path / "table_bad.json")
    with open(bad, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)
    args = ["simulate", "--config", tiny_cfg, "--table", bad,
            "--out", str(tmp_path / "a"), "--quiet"]
    assert cli.main(args) == 1
    assert cli.main(args[:1] + ["--override-provenance"] + args[1:]) == 0


def test_policy_and_slo_flags(bundle, tiny_cfg, tmp_path):
    rc = cli.main(["simulate", "--config", tiny_cfg,
                   "--table", os.path.join(bundle, "table.json"),
                   "--policy", "router-only", "--slo-multiplier", "2.0",
                   "--out", str(tmp_path), "--quiet"])
    assert rc == 0
    summary = _read_json(str(tmp_path / "tiny" / "summary.json"))
    assert summary["policy"] == "router-only"
    assert summary["t_slo_s"] == pytest.approx(120.0)


def test_compare_writes_per_mode_bundles(tiny_cfg, tmp_path):
    rc = cli.main(["compare", "--config", tiny_cfg,
                   "--planners", "online,clipper-light",
                   "--out", str(tmp_path), "--quiet"])
    assert rc == 0
    root = tmp_path / "tiny"
    comparison = _read_json(str(root / "comparison.json"))
    assert set(comparison) == {"online", "clipper-light"}
    for mode in comparison:
        assert os.path.exists(str(root / f"compare-{mode}" / "metrics.csv"))
        assert comparison[mode]["n_queries"] == 120


def test_compare_rejects_unknown_mode(tiny_cfg, tmp_path):
    rc = cli.main(["compare", "--config", tiny_cfg, "--planners", "warp",
                   "--out", str(tmp_path), "--quiet"])
    assert rc == 1


def test_sweep_outputs(tiny_cfg, tmp_path):
    rc = cli.main(["sweep", "--config", tiny_cfg, "--scales", "0.5,1.0",
                   "--out", str(tmp_path), "--quiet"])
    assert rc == 0
    root = tmp_path / "tiny"
    with open(str(root / "sweep.csv"), "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    assert len(lines) == 3
    assert lines[0].startswith("scale,queries,served")
    sweep = _read_json(str(root / "sweep.json"))
    assert set(sweep) == {"0.5", "1.0"}
    # half demand means half the queries under uniform arrivals
    assert sweep["0.5"]["n_queries"] == 60
    assert sweep["1.0"]["n_queries"] == 120


def test_sweep_rejects_bad_scales(tiny_cfg, tmp_path):
    rc = cli.main(["sweep", "--config", tiny_cfg, "--scales", "-1.0",
                   "--out", str(tmp_path), "--quiet"])
    assert rc == 1


def test_bad_config_exits_1(tmp_path):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text("planner: warp\n", encoding="utf-8")
    rc = cli.main(["simulate", "--config", str(cfg), "--out",
                   str(tmp_path), "--quiet"])
    assert rc == 1
