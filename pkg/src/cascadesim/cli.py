"""Command line front end.

Subcommands:
  profile     build a cascade table for a scenario and save it
  simulate    run one scenario end to end and write the result bundle
  compare     run the same scenario under several planner modes
  sweep       rerun a scenario at scaled demand levels
  recompute   integrity-check an existing result bundle

Exit codes: 0 success, 1 operational failure (bad config, provenance
mismatch, failed recompute), 2 usage error. The default output directory is
$CASCADESIM_OUT_DIR, falling back to ./runs.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import replace

from . import planner as planner_mod
from . import profiler as profiler_mod
from . import report, scenario as scenario_mod
from .catalog import CatalogError
from .engine import POLICIES, EngineError
from .planner import PLANNER_MODES, PlannerError
from .profiler import ProfileError
from .quality import quality_cost
from .scenario import ScenarioError
from .workload import WorkloadError

OUT_DIR_ENV = "CASCADESIM_OUT_DIR"
_ERRORS = (ScenarioError, CatalogError, ProfileError, PlannerError,
           EngineError, WorkloadError, OSError, ValueError)


def _default_out() -> str:
    return os.environ.get(OUT_DIR_ENV, "runs")


def _add_common(p: argparse.ArgumentParser, config_required: bool = True) -> None:
    p.add_argument("--config", required=config_required,
                   help="scenario YAML file")
    p.add_argument("--seed", type=int, default=None,
                   help="override the scenario seed")
    p.add_argument("--out", default=None,
                   help=f"output directory (default ${OUT_DIR_ENV} or ./runs)")
    p.add_argument("--quiet", action="store_true",
                   help="suppress normal stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cascadesim",
        description="Cascade-serving simulator and planner toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("profile", help="profile a scenario's cascade table")
    _add_common(p)

    p = sub.add_parser("simulate", help="run one scenario")
    _add_common(p)
    p.add_argument("--policy", choices=POLICIES, default=None,
                   help="override the serving policy")
    p.add_argument("--planner", choices=PLANNER_MODES, default=None,
                   help="override the planner mode")
    p.add_argument("--slo-multiplier", type=float, default=None,
                   help="scale the scenario deadline")
    p.add_argument("--table", default=None,
                   help="reuse a saved table.json instead of profiling")
    p.add_argument("--override-provenance", action="store_true",
                   help="accept a table profiled against a different catalog")

    p = sub.add_parser("compare", help="run several planner modes")
    _add_common(p)
    p.add_argument("--planners", default="online,clipper-light,clipper-heavy,proteus,diffserve",
                   help="comma-separated planner modes")
    p.add_argument("--policy", choices=POLICIES, default=None)

    p = sub.add_parser("sweep", help="rerun at scaled demand")
    _add_common(p)
    p.add_argument("--scales", default="0.25,0.5,0.75,1.0",
                   help="comma-separated demand multipliers")
    p.add_argument("--planner", choices=PLANNER_MODES, default=None)

    p = sub.add_parser("recompute", help="verify a result bundle")
    p.add_argument("--out", required=True, help="result bundle directory")
    p.add_argument("--config", default=None,
                   help="scenario YAML (for a non-default catalog)")
    p.add_argument("--override-provenance", action="store_true")
    p.add_argument("--quiet", action="store_true")
    return parser


def _say(args, text: str) -> None:
    if not args.quiet:
        print(text)


def _load(args) -> scenario_mod.Scenario:
    sc = scenario_mod.load_scenario(args.config)
    return scenario_mod.with_overrides(
        sc,
        seed=args.seed,
        policy=getattr(args, "policy", None),
        planner_mode=getattr(args, "planner", None),
        slo_multiplier=getattr(args, "slo_multiplier", None),
    )


def _out_dir(args, name: str) -> str:
    base = args.out if args.out else _default_out()
    return os.path.join(base, name)


def _summary_line(summary: dict) -> str:
    fid = summary.get("fidelity_cost")
    ratio = summary.get("violation_ratio")
    return (f"{summary.get('scenario', '?')} [{summary.get('planner', '?')}/"
            f"{summary.get('policy', '?')}]: queries={summary['n_queries']} "
            f"served={summary['served']} violations={summary['violations']} "
            f"ratio={ratio if ratio is None else round(ratio, 4)} "
            f"fid={fid if fid is None else round(fid, 3)}")


def cmd_profile(args) -> int:
    sc = _load(args)
    catalog = sc.resolved_catalog()
    table = scenario_mod.build_table(sc, catalog)
    out = _out_dir(args, sc.name)
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, "table.json")
    profiler_mod.save_table(table, path)
    _say(args, f"profiled {len(table.rows)} rows over {len(table.pairs())} pairs "
               f"-> {path}")
    return 0


def _maybe_table(args, sc, catalog):
    if getattr(args, "table", None):
        return profiler_mod.load_table(args.table, catalog,
                                       args.override_provenance)
    return None


def cmd_simulate(args) -> int:
    sc = _load(args)
    catalog = sc.resolved_catalog()
    table = _maybe_table(args, sc, catalog)
    out = _out_dir(args, sc.name)
    result, table, paths = scenario_mod.run_scenario(sc, out, table)
    profiler_mod.save_table(table, os.path.join(out, "table.json"))
    _say(args, _summary_line(result.summary))
    _say(args, f"wrote {paths['metrics']}, {paths['audit']}, "
               f"{paths['plans']}, {paths['summary']}")
    return 0


def cmd_compare(args) -> int:
    sc = _load(args)
    catalog = sc.resolved_catalog()
    modes = [m.strip() for m in args.planners.split(",") if m.strip()]
    for mode in modes:
        if mode not in PLANNER_MODES:
            raise ScenarioError(f"--planners: unknown mode {mode!r}")
    table = scenario_mod.build_table(sc, catalog)
    out = _out_dir(args, sc.name)
    os.makedirs(out, exist_ok=True)
    rows = {}
    for mode in modes:
        variant = replace(sc, planner=mode)
        result, _, _ = scenario_mod.run_scenario(
            variant, os.path.join(out, f"compare-{mode}"), table)
        rows[mode] = result.summary
        _say(args, _summary_line(result.summary))
    with open(os.path.join(out, "comparison.json"), "w", encoding="utf-8") as fh:
        json.dump(rows, fh, indent=1, sort_keys=True)
        fh.write("\n")
    _say(args, f"wrote {os.path.join(out, 'comparison.json')}")
    return 0


def _scaled_load(sc: scenario_mod.Scenario, scale: float) -> scenario_mod.Scenario:
    spec = sc.load
    if spec.kind == "piecewise" and spec.levels:
        spec = replace(spec, levels=tuple((q * scale, d) for q, d in spec.levels))
    elif spec.kind == "phases":
        spec = replace(spec, qps=spec.qps * scale)
    else:
        spec = replace(spec, capacity_frac=spec.capacity_frac * scale)
    return replace(sc, load=spec)


def cmd_sweep(args) -> int:
    sc = _load(args)
    catalog = sc.resolved_catalog()
    scales = [float(s) for s in args.scales.split(",") if s.strip()]
    if not scales or any(s <= 0 for s in scales):
        raise ScenarioError("--scales: need positive multipliers")
    table = scenario_mod.build_table(sc, catalog)
    out = _out_dir(args, sc.name)
    os.makedirs(out, exist_ok=True)
    lines = ["scale,queries,served,violations,violation_ratio,fidelity_cost,"
             "heavy_route_ratio"]
    summaries = {}
    for scale in scales:
        variant = _scaled_load(sc, scale)
        result, _, _ = scenario_mod.run_scenario(variant, None, table)
        s = result.summary
        summaries[repr(scale)] = s
        lines.append(",".join([
            repr(scale), str(s["n_queries"]), str(s["served"]),
            str(s["violations"]),
            repr(s["violation_ratio"]) if s["violation_ratio"] is not None else "nan",
            repr(s["fidelity_cost"]) if s["fidelity_cost"] is not None else "nan",
            repr(s["heavy_route_ratio"]) if s["heavy_route_ratio"] is not None else "nan",
        ]))
        _say(args, f"scale {scale}: " + _summary_line(s))
    path = os.path.join(out, "sweep.csv")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    with open(os.path.join(out, "sweep.json"), "w", encoding="utf-8") as fh:
        json.dump(summaries, fh, indent=1, sort_keys=True)
        fh.write("\n")
    _say(args, f"wrote {path}")
    return 0


def cmd_recompute(args) -> int:
    out = args.out
    summary_path = os.path.join(out, "summary.json")
    audit_path = os.path.join(out, "audit.csv")
    plans_path = os.path.join(out, "plans.jsonl")
    table_path = os.path.join(out, "table.json")
    for path in (summary_path, audit_path, plans_path):
        if not os.path.exists(path):
            raise ScenarioError(f"recompute: missing {path}")
    if args.config:
        catalog = scenario_mod.load_scenario(args.config).resolved_catalog()
    else:
        from .catalog import default_catalog
        catalog = default_catalog()
    if os.path.exists(table_path):
        profiler_mod.load_table(table_path, catalog, args.override_provenance)

    with open(summary_path, "r", encoding="utf-8") as fh:
        summary = json.load(fh)
    audit = report.read_audit_csv(audit_path)
    problems = []
    violations = sum(1 for row in audit if row["violation"] == "1")
    served = sum(1 for row in audit if row["served"] == "1")
    if served != summary["served"]:
        problems.append(f"served: audit says {served}, summary says "
                        f"{summary['served']}")
    if violations != summary["violations"]:
        problems.append(f"violations: audit says {violations}, summary says "
                        f"{summary['violations']}")
    good = [row for row in audit if row["served"] == "1"
            and row["violation"] == "0"]
    if good:
        fid = sum(quality_cost(catalog.by_id(row["final_model"]),
                               float(row["hardness"])) for row in good) / len(good)
        if summary["fidelity_cost"] is None or \
                not math.isclose(fid, summary["fidelity_cost"], abs_tol=1e-9):
            problems.append(f"fidelity: audit gives {fid!r}, summary says "
                            f"{summary['fidelity_cost']!r}")
    plan_problems = 0
    with open(plans_path, "r", encoding="utf-8") as fh:
        for line in fh:
            entry = json.loads(line)
            desc = entry["plan"]
            if desc["infeasible"]:
                continue
            row = profiler_mod.CascadeRow(
                light_id=desc["light"], heavy_id=desc["heavy"],
                theta=desc["theta"], tau=desc["tau"],
                r_light=desc["r_light"], r_heavy=desc["r_heavy"],
                fidelity_cost=desc["fidelity_cost"],
                mean_latency_s=0.0)
            plan = planner_mod.Plan(
                row=row, workers=desc["workers"], batches=desc["batches"],
                lam=desc["lam"],
                queues=desc.get("queues", entry.get("queues", {})),
                fidelity_cost=desc["fidelity_cost"],
                path_latency_s=desc["path_latency_s"],
                infeasible=False, label=desc["label"])
            issues = planner_mod.validate_plan(
                plan, catalog, workers=summary.get("workers", 16),
                t_slo=summary["t_slo_s"],
                alpha=summary.get("queue_alpha", 1.5))
            if issues:
                plan_problems += 1
                problems.extend(f"plan@{entry['t']}: {i}" for i in issues)
    verdict = {
        "bundle": out,
        "queries_audited": len(audit),
        "plans_validated": True,
        "plan_problems": plan_problems,
        "problems": problems,
    }
    with open(os.path.join(out, "recompute.json"), "w", encoding="utf-8") as fh:
        json.dump(verdict, fh, indent=1, sort_keys=True)
        fh.write("\n")
    if problems:
        for p in problems[:20]:
            print(f"recompute: {p}", file=sys.stderr)
        return 1
    _say(args, f"recompute: {len(audit)} queries and plan log are consistent")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "profile": cmd_profile,
        "simulate": cmd_simulate,
        "compare": cmd_compare,
        "sweep": cmd_sweep,
        "recompute": cmd_recompute,
    }
    try:
        return handlers[args.command](args)
    except _ERRORS as exc:
        print(f"cascadesim: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
