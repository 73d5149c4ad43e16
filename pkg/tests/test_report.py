"""Result writers and readers: bundle layout, round trips, determinism."""

import json
import math
import os

import pytest

from cascadesim import report
from cascadesim.catalog import Catalog, make_variant
from cascadesim.engine import EngineConfig, simulate
from cascadesim.planner import Plan
from cascadesim.profiler import CascadeRow

HARD_PROMPT = ("Zephyr and Kael battling five iridescent griffins soaring "
               "above the crystalline labyrinth of Atlantis, surrounded by "
               "ethereal chaos, justice and freedom, fighting and flying")


def tiny_catalog():
    light = make_variant("r-light", {1: 0.5, 2: 0.625}, 30.0, 5.0, (2.0, 4.0))
    heavy = make_variant("r-heavy", {1: 2.0, 2: 2.5}, 20.0, 2.0, (6.0, 4.0))
    return Catalog(variants=(light, heavy), batch_sizes=(1, 2),
                   calibrated=True)


def plan_fn():
    row = CascadeRow(light_id="r-light", heavy_id="r-heavy", theta=0.5,
                     tau=0.3, r_light=0.8, r_heavy=0.2,
                     fidelity_cost=25.0, mean_latency_s=1.0)
    plan = Plan(row=row, workers={"r-light": 1, "r-heavy": 1},
                batches={"r-light": 1, "r-heavy": 1}, lam=1.0, queues={},
                fidelity_cost=25.0, path_latency_s=2.5)
    return lambda lam, queues: (plan, {})


@pytest.fixture(scope="module")
def run():
    cat = tiny_catalog()
    prompts = ["a cat", "a dog on a red chair", "three ships at sea",
               "a tiny dragon on top of the ancient castle"]
    queries = [(0.6 * i, prompts[i % len(prompts)]) for i in range(12)]
    cfg = EngineConfig(workers=2, policy="hybrid", seed=7, noise_sigma=0.0,
                       bucket_s=5.0)
    return cat, simulate(cat, plan_fn(), queries, cfg, 1.5)


def test_write_result_bundle(run, tmp_path):
    cat, result = run
    paths = report.write_result(str(tmp_path), result, cat)
    assert set(paths) == {"metrics", "audit", "plans", "summary"}
    for p in paths.values():
        assert os.path.exists(p)
    with open(paths["summary"], "r", encoding="utf-8") as fh:
        summary = json.load(fh)
    assert summary == result.summary


def test_extra_summary_fields_merge(run, tmp_path):
    cat, result = run
    paths = report.write_result(str(tmp_path), result, cat,
                                extra_summary={"scenario": "extra-demo"})
    with open(paths["summary"], "r", encoding="utf-8") as fh:
        summary = json.load(fh)
    assert summary["scenario"] == "extra-demo"
    assert summary["n_queries"] == result.summary["n_queries"]


def test_metrics_columns_and_round_trip(run, tmp_path):
    cat, result = run
    path = str(tmp_path / "metrics.csv")
    report.write_metrics_csv(path, result, cat)
    rows = report.read_metrics_csv(path)
    cols = report.metrics_columns(cat)
    assert list(rows[0]) == cols
    assert len(rows) == len(result.buckets)
    for got, bucket in zip(rows, result.buckets):
        # repr() printing means floats survive the text round trip exactly
        assert float(got["demand_qps"]) == bucket["demand_qps"]
        assert int(got["arrivals"]) == bucket["arrivals"]
        assert int(got["finalized"]) == bucket["finalized"]
    assert sum(int(r["arrivals"]) for r in rows) == 12


def test_audit_columns_and_round_trip(run, tmp_path):
    cat, result = run
    path = str(tmp_path / "audit.csv")
    report.write_audit_csv(path, result)
    rows = report.read_audit_csv(path)
    assert list(rows[0]) == report.AUDIT_COLUMNS
    assert len(rows) == len(result.queries)
    for got, q in zip(rows, result.queries):
        assert int(got["qid"]) == q.qid
        assert float(got["t_arrival_s"]) == q.t_arrival
        assert got["served"] in ("0", "1")
        assert got["bypassed"] in ("0", "1")
        if q.served:
            assert got["final_model"] == q.final_model
            assert float(got["latency_s"]) == q.latency_s


def test_dropped_query_writes_blank_fields(tmp_path):
    # a deadline shorter than the heavy pass forces a predicted-miss drop
    cat = tiny_catalog()
    cfg = EngineConfig(workers=2, policy="hybrid", seed=7, noise_sigma=0.0,
                       t_slo_s=1.0)
    result = simulate(cat, plan_fn(), [(0.0, HARD_PROMPT)], cfg, 1.0)
    assert result.queries[0].dropped
    path = str(tmp_path / "audit.csv")
    report.write_audit_csv(path, result)
    row = report.read_audit_csv(path)[0]
    assert row["served"] == "0"
    assert row["dropped"] == "1"
    assert row["final_model"] == ""
    assert row["latency_s"] == ""
    # the shed moment is still recorded
    assert float(row["t_final_s"]) >= float(row["t_arrival_s"])


def test_writers_are_byte_deterministic(run, tmp_path):
    cat, result = run
    a = tmp_path / "a"
    b = tmp_path / "b"
    pa = report.write_result(str(a), result, cat)
    pb = report.write_result(str(b), result, cat)
    for key in ("metrics", "audit", "summary", "plans"):
        with open(pa[key], "rb") as fh:
            first = fh.read()
        with open(pb[key], "rb") as fh:
            second = fh.read()
        assert first == second, key


def test_plans_jsonl_lines_parse_with_sorted_keys(run, tmp_path):
    cat, result = run
    path = str(tmp_path / "plans.jsonl")
    report.write_plans_jsonl(path, result)
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    assert len(lines) == len(result.plans)
    for line in lines:
        entry = json.loads(line)
        assert line == json.dumps(entry, sort_keys=True)
        assert "plan" in entry and "t" in entry


def test_fmt_scalar_encoding():
    assert report._fmt(True) == "1"
    assert report._fmt(False) == "0"
    assert report._fmt(None) == ""
    assert report._fmt("abc") == "abc"
    assert report._fmt(3) == "3"
    assert report._fmt(float("nan")) == "nan"
    for x in (0.1, 1 / 3, 2.375, 107.78947368421052):
        assert float(report._fmt(x)) == x
