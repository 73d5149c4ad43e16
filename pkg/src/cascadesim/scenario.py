"""Scenario assembly: one YAML file describes a full simulation run.

A scenario names the catalog, the profiling setup, the workload shape, the
serving policy, and the planner mode. run_scenario() turns that into a
profiled table, an arrival stream, an engine run, and a result bundle on
disk. Demand levels can be given in absolute qps or as fractions of the
cluster's light-model capacity so scenarios stay meaningful if the catalog
changes.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace

import yaml

from . import planner as planner_mod
from . import profiler as profiler_mod
from . import report, workload
from .catalog import Catalog, default_catalog, load_catalog
from .engine import Engine, EngineConfig, POLICIES
from .quality import DEFAULT_NOISE_SIGMA


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class ProfileSpec:
    n_prompts: int = 2048
    hardness_range: tuple = (0.05, 0.9)
    noise_sigma: float = DEFAULT_NOISE_SIGMA
    eps_latency: float = 0.1
    eps_quality: float = 0.1


@dataclass(frozen=True)
class WorkloadSpec:
    kind: str = "piecewise"       # piecewise | phases | trace
    arrivals: str = "poisson"     # poisson | uniform
    levels: tuple = ()            # piecewise: (qps, dwell_s) pairs
    levels_frac: tuple = ()       # piecewise: fractions of capacity
    capacity_frac: float = 0.8    # peak = capacity_frac * light capacity
    dwell_s: float = 300.0        # dwell per levels_frac step
    qps: float = 45.0             # phases: flat demand
    phase_s: float = 200.0
    n_phases: int = 4
    easy_range: tuple = (0.05, 0.25)
    hard_range: tuple = (0.55, 0.9)
    pool_size: int = 96
    trace: str = "diurnal_sample"  # trace kind: packaged name or csv path


@dataclass(frozen=True)
class Scenario:
    name: str = "scenario"
    catalog_path: str | None = None   # None means the shipped default catalog
    seed: int = 0
    policy: str = "hybrid"
    planner: str = "online"
    profile: ProfileSpec = field(default_factory=ProfileSpec)
    engine: EngineConfig = field(default_factory=EngineConfig)
    load: WorkloadSpec = field(default_factory=WorkloadSpec)

    def resolved_catalog(self) -> Catalog:
        if self.catalog_path is None:
            return default_catalog()
        return load_catalog(self.catalog_path)


def _take(raw: dict, allowed: set, where: str) -> None:
    unknown = set(raw) - allowed
    if unknown:
        raise ScenarioError(f"{where}: unknown keys {sorted(unknown)}")


def scenario_from_dict(raw: dict) -> Scenario:
    if not isinstance(raw, dict):
        raise ScenarioError("scenario: top level must be a mapping")
    _take(raw, {"name", "catalog", "seed", "policy", "planner", "profile",
                "engine", "workload"}, "scenario")
    prof_raw = dict(raw.get("profile", {}))
    _take(prof_raw, {"n_prompts", "hardness_range", "noise_sigma",
                     "eps_latency", "eps_quality"}, "profile")
    if "hardness_range" in prof_raw:
        prof_raw["hardness_range"] = tuple(prof_raw["hardness_range"])
    profile = ProfileSpec(**prof_raw)

    eng_raw = dict(raw.get("engine", {}))
    _take(eng_raw, {"workers", "t_slo_s", "alpha", "epoch_s", "solver_delay_s",
                    "swap_delay_s", "bucket_s"}, "engine")
    seed = int(raw.get("seed", 0))
    policy = raw.get("policy", "hybrid")
    if policy not in POLICIES:
        raise ScenarioError(f"policy: must be one of {POLICIES}, got {policy!r}")
    engine = EngineConfig(policy=policy, seed=seed,
                          noise_sigma=profile.noise_sigma, **eng_raw)

    load_raw = dict(raw.get("workload", {}))
    _take(load_raw, {"kind", "arrivals", "levels", "levels_frac",
                     "capacity_frac", "dwell_s", "qps", "phase_s", "n_phases",
                     "easy_range", "hard_range", "pool_size", "trace"},
          "workload")
    for key in ("levels", "levels_frac", "easy_range", "hard_range"):
        if key in load_raw:
            load_raw[key] = tuple(tuple(x) if isinstance(x, list) else x
                                  for x in load_raw[key])
    load = WorkloadSpec(**load_raw)
    if load.kind not in ("piecewise", "phases", "trace"):
        raise ScenarioError(f"workload.kind: unknown kind {load.kind!r}")

    planner_mode = raw.get("planner", "online")
    if planner_mode not in planner_mod.PLANNER_MODES:
        raise ScenarioError(
            f"planner: must be one of {planner_mod.PLANNER_MODES}, got {planner_mode!r}")
    return Scenario(
        name=str(raw.get("name", "scenario")),
        catalog_path=raw.get("catalog"),
        seed=seed,
        policy=policy,
        planner=planner_mode,
        profile=profile,
        engine=engine,
        load=load,
    )


def load_scenario(path: str) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        raw = yaml.safe_load(fh)
    if raw is None:
        raw = {}
    if isinstance(raw, dict) and raw.get("catalog") == "default":
        raw = dict(raw)
        raw["catalog"] = None
    return scenario_from_dict(raw)


def build_workload(sc: Scenario, catalog: Catalog):
    """Materialize (trace, schedule, queries) for a scenario."""
    spec = sc.load
    if spec.kind == "phases":
        easy = workload.gen_prompts(spec.pool_size, sc.seed,
                                    spec.easy_range)
        hard = workload.gen_prompts(spec.pool_size, sc.seed + 1,
                                    spec.hard_range)
        trace, schedule = workload.gen_hardness_phases(
            spec.qps, spec.phase_s, spec.n_phases, easy, hard)
    else:
        if spec.kind == "piecewise":
            if spec.levels:
                trace = workload.gen_piecewise(spec.levels)
            elif spec.levels_frac:
                peak = spec.capacity_frac * workload.light_capacity_qps(
                    catalog, sc.engine.workers)
                trace = workload.gen_piecewise(
                    [(frac * peak, spec.dwell_s) for frac in spec.levels_frac])
            else:
                raise ScenarioError("workload: piecewise needs levels or levels_frac")
        else:  # trace
            if os.path.exists(spec.trace):
                shape = workload.load_trace(spec.trace)
            else:
                shape = workload.load_packaged_trace(spec.trace)
            peak = spec.capacity_frac * workload.light_capacity_qps(
                catalog, sc.engine.workers)
            trace = shape.scaled(peak / shape.peak_qps())
        pool = workload.gen_prompts(sc.profile.n_prompts // 4 or 64, sc.seed + 2,
                                    sc.profile.hardness_range)
        schedule = workload.PhaseSchedule.single(pool)
    times = workload.arrivals(trace, spec.arrivals, sc.seed)
    queries = workload.build_queries(times, schedule)
    return trace, schedule, queries


def build_table(sc: Scenario, catalog: Catalog) -> profiler_mod.CascadeTable:
    prompts = workload.gen_prompts(sc.profile.n_prompts, sc.seed,
                                   sc.profile.hardness_range)
    return profiler_mod.profile_config(
        catalog, prompts,
        seed=sc.seed,
        noise_sigma=sc.profile.noise_sigma,
        eps_latency=sc.profile.eps_latency,
        eps_quality=sc.profile.eps_quality,
    )


def run_scenario(sc: Scenario, out_dir: str | None = None,
                 table: profiler_mod.CascadeTable | None = None):
    """Profile (unless a table is given), simulate, optionally write results."""
    catalog = sc.resolved_catalog()
    if table is None:
        table = build_table(sc, catalog)
    trace, _schedule, queries = build_workload(sc, catalog)
    plan_fn = planner_mod.make_planner(
        sc.planner, table, catalog,
        workers=sc.engine.workers, t_slo=sc.engine.t_slo_s,
        alpha=sc.engine.alpha)
    result = Engine(catalog, plan_fn, queries, sc.engine,
                    initial_lam=trace.buckets[0][1]).run()
    result.summary["scenario"] = sc.name
    result.summary["planner"] = sc.planner
    paths = None
    if out_dir is not None:
        paths = report.write_result(out_dir, result, catalog)
    return result, table, paths


def with_overrides(sc: Scenario, seed: int | None = None,
                   policy: str | None = None, planner_mode: str | None = None,
                   slo_multiplier: float | None = None) -> Scenario:
    """CLI-style overrides on top of a loaded scenario."""
    if seed is not None:
        sc = replace(sc, seed=seed,
                     engine=replace(sc.engine, seed=seed))
    if policy is not None:
        if policy not in POLICIES:
            raise ScenarioError(f"policy: must be one of {POLICIES}")
        sc = replace(sc, policy=policy, engine=replace(sc.engine, policy=policy))
    if planner_mode is not None:
        if planner_mode not in planner_mod.PLANNER_MODES:
            raise ScenarioError(
                f"planner: must be one of {planner_mod.PLANNER_MODES}")
        sc = replace(sc, planner=planner_mode)
    if slo_multiplier is not None:
        if slo_multiplier <= 0:
            raise ScenarioError("slo-multiplier: must be positive")
        sc = replace(sc, engine=replace(
            sc.engine, t_slo_s=sc.engine.t_slo_s * slo_multiplier))
    return sc
