"""Deterministic result writers: metrics.csv, audit.csv, plans.jsonl, summary.json.

Numbers are printed with repr(), which round-trips floats exactly, so two
runs with the same seed produce byte-identical CSV files. Wall-clock solver
times are confined to plans.jsonl and summary.json; the CSV files contain
only simulated quantities.
"""

from __future__ import annotations

import csv
import json
import math
import os

from .catalog import Catalog
from .engine import SimResult


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return repr(value)
    if value is None:
        return ""
    return str(value)


def metrics_columns(catalog: Catalog) -> list[str]:
    ids = sorted(v.id for v in catalog.variants)
    cols = ["bucket_start_s", "demand_qps", "arrivals", "finalized",
            "violations", "dropped"]
    cols += [f"completed_{i}" for i in ids]
    cols += ["fid_proxy", "slo_violation_ratio", "heavy_route_ratio",
             "light_workers", "heavy_workers"]
    cols += [f"workers_{i}" for i in ids]
    cols += [f"queue_{i}" for i in ids]
    return cols


def write_metrics_csv(path: str, result: SimResult, catalog: Catalog) -> None:
    cols = metrics_columns(catalog)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for bucket in result.buckets:
            writer.writerow([_fmt(bucket[c]) for c in cols])


AUDIT_COLUMNS = ["qid", "t_arrival_s", "prompt_key", "hardness", "bypassed",
                 "rerouted", "role_starved", "final_model", "t_final_s",
                 "latency_s", "overhead_s", "served", "dropped", "violation"]


def write_audit_csv(path: str, result: SimResult) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(AUDIT_COLUMNS)
        for q in result.queries:
            writer.writerow([
                _fmt(q.qid), _fmt(q.t_arrival), _fmt(q.prompt_key),
                _fmt(q.hardness), _fmt(q.bypassed), _fmt(q.rerouted),
                _fmt(q.role_starved), _fmt(q.final_model), _fmt(q.t_final),
                _fmt(q.latency_s), _fmt(q.overhead_s), _fmt(q.served),
                _fmt(q.dropped), _fmt(q.violation),
            ])


def write_plans_jsonl(path: str, result: SimResult) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for entry in result.plans:
            fh.write(json.dumps(entry, sort_keys=True))
            fh.write("\n")


def write_summary_json(path: str, summary: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=1, sort_keys=True)
        fh.write("\n")


def write_result(out_dir: str, result: SimResult, catalog: Catalog,
                 extra_summary: dict | None = None) -> dict:
    """Write the standard result bundle; returns the file paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "metrics": os.path.join(out_dir, "metrics.csv"),
        "audit": os.path.join(out_dir, "audit.csv"),
        "plans": os.path.join(out_dir, "plans.jsonl"),
        "summary": os.path.join(out_dir, "summary.json"),
    }
    write_metrics_csv(paths["metrics"], result, catalog)
    write_audit_csv(paths["audit"], result)
    write_plans_jsonl(paths["plans"], result)
    summary = dict(result.summary)
    if extra_summary:
        summary.update(extra_summary)
    write_summary_json(paths["summary"], summary)
    return paths


def read_metrics_csv(path: str) -> list[dict]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def read_audit_csv(path: str) -> list[dict]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))
