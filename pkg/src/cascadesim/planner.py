"""Online allocation: pick a cascade row, batch sizes, and worker counts.

Every planning epoch the solver walks the profiled table and, for each row,
every batch-size combination for the row's active models. Worker counts are
the smallest that cover the row's per-model load share at the demand
estimate. A combination is feasible when the workers fit the cluster budget
and the end-to-end path latency, including a queue-drain term per model,
meets the deadline. Among feasible choices the solver minimizes fidelity
cost, breaking ties toward fewer workers, then lower path latency, then
table order, which makes the outcome independent of dict iteration order.

The table search is small enough to enumerate exactly, so this solver IS
the optimum for its objective; brute_force_solve re-derives the same answer
from raw worker splits and exists to keep the fast path honest in tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .catalog import Catalog, select_candidates
from .profiler import CascadeRow, CascadeTable
from .quality import expected_cost_uniform

DEFAULT_WORKERS = 16
DEFAULT_T_SLO_S = 60.0
DEFAULT_QUEUE_ALPHA = 1.5
EWMA_WEIGHT = 0.3
SOLVER_DELAY_S = 0.03

_SLACK = 1e-9
_RATE_FLOOR = 0.01


class PlannerError(ValueError):
    pass


@dataclass(frozen=True)
class Plan:
    row: CascadeRow
    workers: dict
    batches: dict
    lam: float
    queues: dict
    fidelity_cost: float
    path_latency_s: float
    infeasible: bool = False
    label: str = "online"

    @property
    def total_workers(self) -> int:
        return sum(self.workers.values())

    def pair_models(self) -> list[str]:
        models = [self.row.light_id]
        if self.row.heavy_id != self.row.light_id:
            models.append(self.row.heavy_id)
        return models

    def describe(self) -> dict:
        return {
            "label": self.label,
            "light": self.row.light_id,
            "heavy": self.row.heavy_id,
            "theta": self.row.theta,
            "tau": self.row.tau,
            "r_light": self.row.r_light,
            "r_heavy": self.row.r_heavy,
            "workers": dict(sorted(self.workers.items())),
            "batches": dict(sorted(self.batches.items())),
            "lam": self.lam,
            "queues": dict(sorted(self.queues.items())),
            "fidelity_cost": self.fidelity_cost,
            "path_latency_s": self.path_latency_s,
            "infeasible": self.infeasible,
        }


def queue_delay(queue_len: float, rate_qps: float, alpha: float = DEFAULT_QUEUE_ALPHA) -> float:
    """Drain-time estimate for a backlog; zero backlog costs nothing."""
    if queue_len <= 0:
        return 0.0
    return alpha * queue_len / max(rate_qps, _RATE_FLOOR)


def update_estimate(estimate: float, observed: float, weight: float = EWMA_WEIGHT) -> float:
    """EWMA demand tracker: weight on the newest observation."""
    return weight * observed + (1.0 - weight) * estimate


def _path_terms(row: CascadeRow, catalog: Catalog, batches: dict,
                lam: float, queues: dict, alpha: float):
    """Per-unique-model (latency, drain) terms along the cascade path."""
    shares = row.shares()
    terms = []
    for model_id in ([row.light_id] if row.light_id == row.heavy_id
                     else [row.light_id, row.heavy_id]):
        variant = catalog.by_id(model_id)
        latency = variant.latency_s[batches[model_id]]
        rate = lam * shares[model_id]
        terms.append((latency, queue_delay(queues.get(model_id, 0.0), rate, alpha)))
    return terms


def _min_workers(rate: float, mu: float) -> int:
    if rate <= 0:
        return 1
    return max(1, math.ceil((rate - _SLACK) / mu))


def _evaluate_row(row, catalog, lam, queues, workers, t_slo, alpha):
    """Best (total_x, path_latency, batches, x) for one row, or None."""
    shares = row.shares()
    models = ([row.light_id] if row.light_id == row.heavy_id
              else [row.light_id, row.heavy_id])
    active = [m for m in models if shares[m] > 0]
    inactive = [m for m in models if shares[m] <= 0]
    best = None
    combos = [()]
    for m in active:
        combos = [c + (b,) for c in combos for b in catalog.batch_sizes]
    for combo in combos:
        batches = {m: b for m, b in zip(active, combo)}
        for m in inactive:
            batches[m] = catalog.batch_sizes[0]
        x = {}
        for m in models:
            if m in batches and shares[m] > 0:
                mu = catalog.by_id(m).throughput_qps[batches[m]]
                x[m] = _min_workers(lam * shares[m], mu)
            else:
                x[m] = 0
        total = sum(x.values())
        if total > workers:
            continue
        path = sum(lat + d for lat, d in
                   _path_terms(row, catalog, batches, lam, queues, alpha))
        if path > t_slo + _SLACK:
            continue
        key = (total, path)
        if best is None or key < best[0]:
            best = (key, batches, x)
    if best is None:
        return None
    (total, path), batches, x = best
    return total, path, batches, x


def _solve_over_rows(indexed_rows, catalog, lam, queues, workers, t_slo, alpha, label):
    queues = queues or {}
    best = None
    for idx, row in indexed_rows:
        result = _evaluate_row(row, catalog, lam, queues, workers, t_slo, alpha)
        if result is None:
            continue
        total, path, batches, x = result
        key = (row.fidelity_cost, total, path, idx)
        if best is None or key < best[0]:
            best = (key, row, batches, x, path)
    if best is None:
        return None
    _, row, batches, x, path = best
    return Plan(row=row, workers=x, batches=batches, lam=lam,
                queues=dict(queues), fidelity_cost=row.fidelity_cost,
                path_latency_s=path, infeasible=False, label=label)


def fallback_plan(indexed_rows, catalog, lam, queues, workers, t_slo, alpha, label):
    """Overload plan: spend the whole budget on maximum sustainable rate.

    Ignores the deadline (nothing meets it anyway) and picks the row plus
    worker split with the largest bottleneck throughput, preferring lighter
    pairs on ties. The plan is flagged infeasible so reports stay honest.
    """
    queues = queues or {}
    best = None
    for idx, row in indexed_rows:
        shares = row.shares()
        models = ([row.light_id] if row.light_id == row.heavy_id
                  else [row.light_id, row.heavy_id])
        active = [m for m in models if shares[m] > 0]
        if not active:
            continue
        combos = [()]
        for m in active:
            combos = [c + (b,) for c in combos for b in catalog.batch_sizes]
        light_lat = catalog.by_id(row.light_id).latency_s[1]
        heavy_lat = catalog.by_id(row.heavy_id).latency_s[1]
        for combo in combos:
            batches = {m: b for m, b in zip(active, combo)}
            for m in models:
                batches.setdefault(m, catalog.batch_sizes[0])
            mus = {m: catalog.by_id(m).throughput_qps[batches[m]] for m in active}
            if len(active) == 1:
                splits = [{active[0]: workers}]
            else:
                splits = [{active[0]: i, active[1]: workers - i}
                          for i in range(1, workers)]
            for x in splits:
                capacity = min(x[m] * mus[m] / shares[m] for m in active)
                key = (-capacity, light_lat, heavy_lat, idx)
                if best is None or key < best[0]:
                    full_x = {m: x.get(m, 0) for m in models}
                    path = sum(lat + d for lat, d in _path_terms(
                        row, catalog, batches, lam, queues, alpha))
                    best = (key, row, batches, full_x, path)
    if best is None:
        raise PlannerError("fallback: no serveable rows")
    _, row, batches, x, path = best
    return Plan(row=row, workers=x, batches=batches, lam=lam,
                queues=dict(queues), fidelity_cost=row.fidelity_cost,
                path_latency_s=path, infeasible=True, label=label)


def solve(table: CascadeTable, catalog: Catalog, lam: float, queues=None,
          workers: int = DEFAULT_WORKERS, t_slo: float = DEFAULT_T_SLO_S,
          alpha: float = DEFAULT_QUEUE_ALPHA, label: str = "online") -> Plan:
    """Pick the feasible table row with the lowest fidelity cost."""
    if lam < 0:
        raise PlannerError("solve: negative demand")
    indexed = list(enumerate(table.rows))
    plan = _solve_over_rows(indexed, catalog, lam, queues, workers, t_slo, alpha, label)
    if plan is not None:
        return plan
    return fallback_plan(indexed, catalog, lam, queues, workers, t_slo, alpha, label)


def brute_force_solve(table: CascadeTable, catalog: Catalog, lam: float, queues=None,
                      workers: int = DEFAULT_WORKERS, t_slo: float = DEFAULT_T_SLO_S,
                      alpha: float = DEFAULT_QUEUE_ALPHA) -> Plan:
    """Reference solver: enumerate every worker split, not just minimal ones.

    Exists to cross-check solve(); refuses inputs big enough to be slow.
    """
    if len(table.rows) > 200 or workers > 16 or len(catalog.batch_sizes) > 5:
        raise PlannerError("oracle-too-large: brute force capped at "
                           "200 rows / 16 workers / 5 batch sizes")
    queues = queues or {}
    best = None
    for idx, row in enumerate(table.rows):
        shares = row.shares()
        models = ([row.light_id] if row.light_id == row.heavy_id
                  else [row.light_id, row.heavy_id])
        active = [m for m in models if shares[m] > 0]
        combos = [()]
        for m in active:
            combos = [c + (b,) for c in combos for b in catalog.batch_sizes]
        for combo in combos:
            batches = {m: b for m, b in zip(active, combo)}
            for m in models:
                batches.setdefault(m, catalog.batch_sizes[0])
            if len(active) == 0:
                continue
            if len(active) == 1:
                x_options = [{active[0]: n} for n in range(1, workers + 1)]
            else:
                x_options = [{active[0]: a, active[1]: b}
                             for a in range(1, workers + 1)
                             for b in range(1, workers + 1 - a)]
            for x_active in x_options:
                ok = True
                for m in active:
                    mu = catalog.by_id(m).throughput_qps[batches[m]]
                    if x_active[m] * mu < lam * shares[m] - _SLACK:
                        ok = False
                        break
                if not ok:
                    continue
                x = {m: x_active.get(m, 0) for m in models}
                total = sum(x.values())
                if total > workers:
                    continue
                path = sum(lat + d for lat, d in _path_terms(
                    row, catalog, batches, lam, queues, alpha))
                if path > t_slo + _SLACK:
                    continue
                key = (row.fidelity_cost, total, path, idx)
                if best is None or key < best[0]:
                    best = (key, row, batches, x, path)
    if best is None:
        return fallback_plan(list(enumerate(table.rows)), catalog, lam, queues,
                             workers, t_slo, alpha, "online")
    _, row, batches, x, path = best
    return Plan(row=row, workers=x, batches=batches, lam=lam,
                queues=dict(queues), fidelity_cost=row.fidelity_cost,
                path_latency_s=path, infeasible=False, label="online")


def validate_plan(plan: Plan, catalog: Catalog, workers: int = DEFAULT_WORKERS,
                  t_slo: float = DEFAULT_T_SLO_S,
                  alpha: float = DEFAULT_QUEUE_ALPHA) -> list[str]:
    """Independent feasibility audit; returns human-readable violations."""
    problems = []
    if plan.total_workers > workers:
        problems.append(f"worker-budget: {plan.total_workers} > {workers}")
    shares = plan.row.shares()
    for model_id in plan.pair_models():
        share = shares.get(model_id, 0.0)
        x = plan.workers.get(model_id, 0)
        batch = plan.batches.get(model_id)
        if batch is None:
            problems.append(f"missing-batch: {model_id}")
            continue
        variant = catalog.by_id(model_id)
        if batch not in variant.latency_s:
            problems.append(f"unprofiled-batch: {model_id} b={batch}")
            continue
        need = plan.lam * share
        if need > 0 and x * variant.throughput_qps[batch] < need - _SLACK:
            problems.append(
                f"capacity: {model_id} x={x} covers "
                f"{x * variant.throughput_qps[batch]:.6f} qps < {need:.6f}")
        if need > 0 and x < 1:
            problems.append(f"no-workers: {model_id} has load but x=0")
    path = sum(lat + d for lat, d in _path_terms(
        plan.row, catalog, plan.batches, plan.lam, plan.queues, alpha))
    if path > t_slo + _SLACK:
        problems.append(f"path-latency: {path:.6f} > {t_slo}")
    return problems


# ---------------------------------------------------------------------------
# plan caching

@dataclass
class PlanCache:
    """Reuse plans for nearby states instead of re-solving each epoch.

    mode 'd' keys on the binned demand estimate alone; mode 'dq' also keys
    on binned total backlog, so plans refresh when queues move materially.
    """

    mode: str
    demand_bin_qps: float = 10.0
    queue_bin: int = 12
    entries: dict = field(default_factory=dict)
    hits: int = 0
    misses: int = 0

    def __post_init__(self) -> None:
        if self.mode not in ("d", "dq"):
            raise PlannerError(f"cache mode must be 'd' or 'dq', got {self.mode!r}")

    def key(self, lam: float, queues) -> tuple:
        demand_key = int(lam // self.demand_bin_qps)
        if self.mode == "d":
            return (demand_key,)
        total_q = sum((queues or {}).values())
        return (demand_key, int(total_q // self.queue_bin))


def cached_solve(cache: PlanCache, table: CascadeTable, catalog: Catalog,
                 lam: float, queues=None, workers: int = DEFAULT_WORKERS,
                 t_slo: float = DEFAULT_T_SLO_S,
                 alpha: float = DEFAULT_QUEUE_ALPHA) -> tuple[Plan, bool]:
    """Solve through the cache; returns (plan, was_cache_hit)."""
    key = cache.key(lam, queues)
    hit = cache.entries.get(key)
    if hit is not None:
        cache.hits += 1
        return hit, True
    plan = solve(table, catalog, lam, queues, workers, t_slo, alpha)
    cache.entries[key] = plan
    cache.misses += 1
    return plan, False


# ---------------------------------------------------------------------------
# baseline planners

def _single_model_row(variant, theta: float = 1.0) -> CascadeRow:
    """Synthetic no-cascade row: one model serves everything."""
    return CascadeRow(
        light_id=variant.id,
        heavy_id=variant.id,
        theta=theta,
        tau=0.0,
        r_light=1.0,
        r_heavy=0.0,
        fidelity_cost=expected_cost_uniform(variant),
        mean_latency_s=variant.latency_s[1],
    )


def clipper_plan(catalog: Catalog, which: str, lam: float, queues=None,
                 workers: int = DEFAULT_WORKERS, t_slo: float = DEFAULT_T_SLO_S,
                 alpha: float = DEFAULT_QUEUE_ALPHA) -> Plan:
    """Static single-model cluster: all workers on one variant.

    which is 'light' (fastest variant) or 'heavy' (slowest). Batch size is
    the largest whose path latency still fits the deadline; when demand
    exceeds the resulting capacity the plan is flagged infeasible rather
    than silently undersized.
    """
    if which not in ("light", "heavy"):
        raise PlannerError(f"clipper_plan: which must be light/heavy, got {which!r}")
    ordered = catalog.sorted_by_latency()
    variant = ordered[0] if which == "light" else ordered[-1]
    row = _single_model_row(variant)
    queues = queues or {}
    chosen = None
    for batch in catalog.batch_sizes:
        path = (variant.latency_s[batch]
                + queue_delay(queues.get(variant.id, 0.0), lam, alpha))
        if path <= t_slo + _SLACK:
            chosen = batch
    infeasible = False
    if chosen is None:
        chosen = catalog.batch_sizes[0]
        infeasible = True
    capacity = workers * variant.throughput_qps[chosen]
    if lam > capacity + _SLACK:
        infeasible = True
    path = (variant.latency_s[chosen]
            + queue_delay(queues.get(variant.id, 0.0), lam, alpha))
    return Plan(row=row, workers={variant.id: workers}, batches={variant.id: chosen},
                lam=lam, queues=dict(queues), fidelity_cost=row.fidelity_cost,
                path_latency_s=path, infeasible=infeasible,
                label=f"clipper-{which}")


def proteus_plan(catalog: Catalog, lam: float, queues=None,
                 workers: int = DEFAULT_WORKERS, t_slo: float = DEFAULT_T_SLO_S,
                 alpha: float = DEFAULT_QUEUE_ALPHA,
                 eps_latency: float = 0.1, eps_quality: float = 0.1) -> Plan:
    """Accuracy-scaling planner: one model at a time, no cascade."""
    pool = select_candidates(catalog, eps_latency, eps_quality)
    rows = list(enumerate(_single_model_row(v) for v in pool))
    plan = _solve_over_rows(rows, catalog, lam, queues, workers, t_slo, alpha,
                            "proteus")
    if plan is not None:
        return plan
    return fallback_plan(rows, catalog, lam, queues, workers, t_slo, alpha,
                         "proteus")


PLANNER_MODES = ("online", "cache-d", "cache-dq", "clipper-light",
                 "clipper-heavy", "proteus", "diffserve")


def make_planner(mode: str, table: CascadeTable, catalog: Catalog,
                 workers: int = DEFAULT_WORKERS, t_slo: float = DEFAULT_T_SLO_S,
                 alpha: float = DEFAULT_QUEUE_ALPHA, **kwargs):
    """Build a (lam, queues) -> (Plan, info) callable for the simulator.

    Modes: 'online' re-solves each epoch; 'cache-d'/'cache-dq' reuse plans
    keyed on binned demand (and backlog for dq); the rest are the static or
    restricted baseline planners.
    """
    if mode == "online":
        def fn(lam, queues):
            return solve(table, catalog, lam, queues, workers, t_slo, alpha), {}
        return fn
    if mode in ("cache-d", "cache-dq"):
        cache = PlanCache(mode=mode.split("-")[1], **kwargs)
        def fn(lam, queues):
            plan, hit = cached_solve(cache, table, catalog, lam, queues,
                                     workers, t_slo, alpha)
            return plan, {"cache_hit": hit}
        return fn
    if mode in ("clipper-light", "clipper-heavy"):
        which = mode.split("-")[1]
        def fn(lam, queues):
            return clipper_plan(catalog, which, lam, queues, workers,
                                t_slo, alpha), {}
        return fn
    if mode == "proteus":
        def fn(lam, queues):
            return proteus_plan(catalog, lam, queues, workers, t_slo,
                                alpha), {}
        return fn
    if mode == "diffserve":
        def fn(lam, queues):
            return diffserve_plan(table, catalog, lam, queues, workers,
                                  t_slo, alpha, **kwargs), {}
        return fn
    raise PlannerError(f"unknown planner mode {mode!r}; pick from {PLANNER_MODES}")


def diffserve_plan(table: CascadeTable, catalog: Catalog, lam: float, queues=None,
                   workers: int = DEFAULT_WORKERS, t_slo: float = DEFAULT_T_SLO_S,
                   alpha: float = DEFAULT_QUEUE_ALPHA,
                   light_id: str = "sd35-turbo",
                   heavy_id: str = "sd35-large") -> Plan:
    """Fixed-pair discriminator cascade: no bypass, thresholds from the table."""
    max_theta = max(r.theta for r in table.rows)
    rows = [(i, r) for i, r in enumerate(table.rows)
            if r.light_id == light_id and r.heavy_id == heavy_id
            and r.theta == max_theta]
    if not rows:
        raise PlannerError(
            f"diffserve_plan: table has no rows for pair {light_id}/{heavy_id}")
    plan = _solve_over_rows(rows, catalog, lam, queues, workers, t_slo, alpha,
                            "diffserve")
    if plan is not None:
        return plan
    return fallback_plan(rows, catalog, lam, queues, workers, t_slo, alpha,
                         "diffserve")
