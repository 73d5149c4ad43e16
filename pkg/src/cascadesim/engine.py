"""Deterministic discrete-event simulator for the cascade serving cluster.

Events live on a single heap ordered by (time, kind, sequence); kinds break
timestamp ties so arrivals land before batch completions, which land before
planning. Every stochastic choice draws from keyed hash streams, so a run
is a pure function of (queries, catalog, plan function, config, seed).

Execution model per worker: one batch in flight at a time, FIFO queue,
dispatch as soon as the worker is free (no batching delay); a partial batch
of n queries pays the latency of the smallest profiled batch size >= n.
Model swaps take swap_delay_s; a busy worker finishes its batch first. The
planner runs on a fixed epoch and its plan lands after solver_delay_s.

Router and discriminator costs are charged to each query's latency
accounting rather than shifting event times: they are milliseconds against
multi-second diffusion batches, and keeping them out of the event clock
makes batch timing independent of policy.
"""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass

from . import router as router_mod
from .catalog import Catalog
from .planner import Plan, queue_delay, update_estimate, DEFAULT_QUEUE_ALPHA
from .quality import (DEFAULT_NOISE_SIGMA, DISCRIMINATOR_OVERHEAD_S,
                      discriminator_score, quality_cost)
from .router import ROUTER_OVERHEAD_S
from .seeds import stable_text_key, stream_uniform

POLICIES = ("hybrid", "router-only", "discriminator-only", "random")

# event kinds, in tie-break order at equal timestamps
ARRIVAL = 0
BATCH_DONE = 1
PLAN_EPOCH = 2
PLAN_APPLY = 3
SWAP_DONE = 4

_SLACK = 1e-9


class EngineError(ValueError):
    pass


@dataclass(frozen=True)
class EngineConfig:
    workers: int = 16
    t_slo_s: float = 60.0
    alpha: float = DEFAULT_QUEUE_ALPHA
    epoch_s: float = 5.0
    solver_delay_s: float = 0.03
    swap_delay_s: float = 2.0
    bucket_s: float = 10.0
    policy: str = "hybrid"
    seed: int = 0
    noise_sigma: float = DEFAULT_NOISE_SIGMA
    router_weights: tuple | None = None

    def __post_init__(self) -> None:
        if self.policy not in POLICIES:
            raise EngineError(f"policy must be one of {POLICIES}, got {self.policy!r}")


class Query:
    __slots__ = ("qid", "t_arrival", "prompt", "prompt_key", "hardness",
                 "deadline", "stage", "overhead_s", "bypassed", "rerouted",
                 "heavy_counted", "role_starved", "final_model", "t_final",
                 "latency_s", "served", "dropped", "violation")

    def __init__(self, qid: int, t_arrival: float, prompt: str,
                 hardness: float, t_slo: float):
        self.qid = qid
        self.t_arrival = t_arrival
        self.prompt = prompt
        self.prompt_key = stable_text_key(prompt)
        self.hardness = hardness
        self.deadline = t_arrival + t_slo
        self.stage = "light"
        self.overhead_s = 0.0
        self.bypassed = False
        self.rerouted = False
        self.heavy_counted = False
        self.role_starved = False
        self.final_model = None
        self.t_final = None
        self.latency_s = None
        self.served = False
        self.dropped = False
        self.violation = False


class Worker:
    __slots__ = ("wid", "model", "batch_size", "queue", "in_batch", "busy",
                 "swapping", "swap_target", "swap_seq", "has_pending",
                 "pending_model")

    def __init__(self, wid: int):
        self.wid = wid
        self.model = None
        self.batch_size = 1
        self.queue: list = []
        self.in_batch: list = []
        self.busy = False
        self.swapping = False
        self.swap_target = None
        self.swap_seq = 0
        self.has_pending = False
        self.pending_model = None

    def effective_model(self):
        if self.has_pending:
            return self.pending_model
        if self.swapping:
            return self.swap_target
        return self.model

    def load(self) -> int:
        return len(self.queue) + len(self.in_batch)


@dataclass
class SimResult:
    buckets: list
    queries: list
    plans: list
    summary: dict


class Engine:
    def __init__(self, catalog: Catalog, plan_fn, queries, config: EngineConfig,
                 initial_lam: float):
        """queries: iterable of (arrival_time_s, prompt), time-ascending."""
        self.catalog = catalog
        self.plan_fn = plan_fn
        self.cfg = config
        self.inputs = list(queries)
        if any(b[0] < a[0] for a, b in zip(self.inputs, self.inputs[1:])):
            raise EngineError("queries must be time-ordered")
        self.initial_lam = initial_lam
        self.lex = router_mod.load_lexicons()
        self.workers = [Worker(i) for i in range(config.workers)]
        self.plan: Plan | None = None
        self.lam_hat = initial_lam
        self.heap: list = []
        self.seq = 0
        self.now = 0.0
        self.finalized = 0
        self.plans_log: list = []
        self.buckets: list = []
        self.queries: list = []
        self._epoch_arrivals = 0
        self._bucket_idx = 0
        self._new_bucket()

    # ------------------------------------------------------------------ events

    def _push(self, t: float, kind: int, payload) -> None:
        heapq.heappush(self.heap, (t, kind, self.seq, payload))
        self.seq += 1

    def run(self) -> SimResult:
        cfg = self.cfg
        hardness_cache: dict[str, float] = {}
        for i, (t, prompt) in enumerate(self.inputs):
            h = hardness_cache.get(prompt)
            if h is None:
                h = router_mod.hardness(prompt, cfg.router_weights, self.lex)
                hardness_cache[prompt] = h
            q = Query(i, t, prompt, h, cfg.t_slo_s)
            self.queries.append(q)
            self._push(t, ARRIVAL, q)
        # bootstrap plan: solved synchronously, applied with no swap cost
        plan = self._solve(0.0)
        self._apply_plan(plan, 0.0, instant=True)
        if self.inputs:
            self._push(cfg.epoch_s, PLAN_EPOCH, None)

        total = len(self.inputs)
        while self.heap:
            if self.finalized >= total:
                break
            t, kind, _seq, payload = heapq.heappop(self.heap)
            self._flush_buckets(t)
            self.now = t
            if kind == ARRIVAL:
                self._on_arrival(payload, t)
            elif kind == BATCH_DONE:
                self._on_batch_done(payload, t)
            elif kind == PLAN_EPOCH:
                self._on_plan_epoch(t)
            elif kind == PLAN_APPLY:
                self._apply_plan(payload, t)
            elif kind == SWAP_DONE:
                self._on_swap_done(payload, t)
        self._close_bucket()
        return SimResult(buckets=self.buckets, queries=self.queries,
                         plans=self.plans_log, summary=self._summarize())

    # ------------------------------------------------------------------ planning

    def _solve(self, now: float) -> Plan:
        queues = self._queue_snapshot()
        t0 = time.perf_counter()
        out = self.plan_fn(self.lam_hat, queues)
        wall = time.perf_counter() - t0
        info = {}
        if isinstance(out, tuple):
            plan, info = out
        else:
            plan = out
        self.plans_log.append({
            "t": now,
            "lam_hat": self.lam_hat,
            "queues": queues,
            "plan": plan.describe(),
            "solve_wall_s": wall,
            **info,
        })
        return plan

    def _on_plan_epoch(self, now: float) -> None:
        observed = self._epoch_arrivals / self.cfg.epoch_s
        self._epoch_arrivals = 0
        self.lam_hat = update_estimate(self.lam_hat, observed)
        plan = self._solve(now)
        self._push(now + self.cfg.solver_delay_s, PLAN_APPLY, plan)
        if self.finalized < len(self.inputs):
            self._push(now + self.cfg.epoch_s, PLAN_EPOCH, None)

    def _queue_snapshot(self) -> dict:
        out: dict = {}
        for w in self.workers:
            m = w.effective_model()
            if m is not None and w.queue:
                out[m] = out.get(m, 0) + len(w.queue)
        return dict(sorted(out.items()))

    def _apply_plan(self, plan: Plan, now: float, instant: bool = False) -> None:
        old = self.plan
        self.plan = plan
        if old is not None and old.workers == plan.workers \
                and old.batches == plan.batches and old.row == plan.row:
            return  # identical assignment: thresholds and shares refresh only
        desired = {m: c for m, c in sorted(plan.workers.items()) if c > 0}
        assignment: dict[int, str | None] = {}
        taken: set[int] = set()
        for model, count in desired.items():
            have = sorted(w.wid for w in self.workers
                          if w.effective_model() == model and w.wid not in taken)
            for wid in have[:count]:
                assignment[wid] = model
                taken.add(wid)
        for model, count in desired.items():
            short = count - sum(1 for wid, m in assignment.items() if m == model)
            if short <= 0:
                continue
            pool = [w.wid for w in self.workers if w.wid not in taken]
            for wid in pool[:short]:
                assignment[wid] = model
                taken.add(wid)
        displaced: list[Query] = []
        for w in self.workers:
            target = assignment.get(w.wid)
            if target == w.effective_model():
                if w.model is not None and w.model == target:
                    w.batch_size = plan.batches[target]
                elif target is None and w.queue:
                    # parked queries on a dead worker: move them somewhere live
                    displaced.extend(w.queue)
                    w.queue = []
                continue
            if w.queue:
                displaced.extend(w.queue)
                w.queue = []
            if instant:
                w.swapping = False
                w.swap_target = None
                w.has_pending = False
                w.pending_model = None
                w.model = target
                if target is not None:
                    w.batch_size = plan.batches[target]
            elif w.busy:
                w.has_pending = True
                w.pending_model = target
            elif target is None:
                # unassignment is instant, even mid-swap
                w.swapping = False
                w.swap_target = None
                w.model = None
            else:
                w.model = None
                w.swapping = True
                w.swap_target = target
                w.swap_seq += 1
                self._push(now + self.cfg.swap_delay_s, SWAP_DONE,
                           (w.wid, w.swap_seq))
        for q in displaced:
            self._admit(q, q.stage, now, fresh=False)
        for w in self.workers:
            self._dispatch(w, now)

    def _on_swap_done(self, payload, now: float) -> None:
        wid, swap_seq = payload
        w = self.workers[wid]
        if not w.swapping or w.swap_seq != swap_seq:
            return  # superseded by a later plan
        w.swapping = False
        w.model = w.swap_target
        w.swap_target = None
        w.batch_size = self.plan.batches.get(w.model, self.catalog.batch_sizes[0])
        self._dispatch(w, now)

    # ------------------------------------------------------------------ queries

    def _on_arrival(self, q: Query, now: float) -> None:
        cfg = self.cfg
        self._bucket["arrivals"] += 1
        self._epoch_arrivals += 1
        row = self.plan.row
        if cfg.policy in ("hybrid", "router-only", "random"):
            q.overhead_s += ROUTER_OVERHEAD_S
        if cfg.policy == "random":
            bypass = stream_uniform(cfg.seed, q.qid, "route") < row.bypass_fraction
        elif cfg.policy == "discriminator-only":
            bypass = False
        else:
            bypass = q.hardness > row.theta
        q.stage = "heavy" if bypass else "light"
        if bypass:
            q.bypassed = True
        self._admit(q, q.stage, now, fresh=True)

    def _count_heavy(self, q: Query) -> None:
        if not q.heavy_counted:
            q.heavy_counted = True
            self._bucket["heavy_routed"] += 1

    def _pick_worker(self, model: str):
        active = [w for w in self.workers
                  if w.model == model and not w.has_pending]
        if active:
            return min(active, key=lambda w: (w.load(), w.wid))
        incoming = [w for w in self.workers
                    if (w.swapping and w.swap_target == model)
                    or (w.has_pending and w.pending_model == model)]
        if incoming:
            return min(incoming, key=lambda w: (w.load(), w.wid))
        return None

    def _admit(self, q: Query, stage: str, now: float, fresh: bool) -> None:
        """Enqueue q for its stage. fresh=False replays a displaced query,
        which was already admitted once and is never shed a second time."""
        row = self.plan.row
        model = row.light_id if stage == "light" else row.heavy_id
        q.stage = stage
        w = self._pick_worker(model)
        if w is None:
            other = row.heavy_id if stage == "light" else row.light_id
            w = self._pick_worker(other)
            if w is None:
                # no staffed role at all: park on worker 0, it will be
                # displaced into a sane queue at the next plan application
                w = self.workers[0]
            else:
                model = other
            q.role_starved = True
            if stage == "light":
                q.stage = "light"  # will be served by whatever model runs
        if fresh and self._predict_miss(q, w, model, now):
            # the queue it is joining already blows the deadline: shed the
            # query at admission instead of wasting capacity on it
            self._drop(q, now)
            return
        if q.stage == "heavy":
            self._count_heavy(q)
        w.queue.append(q)
        self._dispatch(w, now)

    def _predict_miss(self, q: Query, w: Worker, model: str, now: float) -> bool:
        plan = self.plan
        share = plan.row.shares().get(model, 0.0)
        rate = plan.lam * share
        batch = plan.batches.get(model, self.catalog.batch_sizes[0])
        latency = self.catalog.by_id(model).latency_s[batch]
        wait = queue_delay(len(w.queue), rate, self.cfg.alpha)
        return now + wait + latency > q.deadline + _SLACK

    def _batch_latency_for(self, model: str, n: int) -> float:
        variant = self.catalog.by_id(model)
        for b in self.catalog.batch_sizes:
            if b >= n:
                return variant.latency_s[b]
        return variant.latency_s[self.catalog.batch_sizes[-1]]

    def _dispatch(self, w: Worker, now: float) -> None:
        if w.model is None or w.busy or w.swapping or not w.queue:
            return
        n = min(w.batch_size, len(w.queue))
        w.in_batch = w.queue[:n]
        del w.queue[:n]
        w.busy = True
        self._push(now + self._batch_latency_for(w.model, n), BATCH_DONE, w.wid)

    def _on_batch_done(self, wid: int, now: float) -> None:
        w = self.workers[wid]
        batch = w.in_batch
        w.in_batch = []
        model_ran = w.model
        # completions can reroute queries back onto this worker's queue;
        # stay busy until the post-batch transition is settled so the nested
        # dispatch cannot start a batch that a pending swap would orphan
        for q in batch:
            self._complete(q, model_ran, now)
        w.busy = False
        if w.has_pending:
            target = w.pending_model
            w.has_pending = False
            w.pending_model = None
            if target is None:
                w.model = None
            else:
                w.model = None
                w.swapping = True
                w.swap_target = target
                w.swap_seq += 1
                self._push(now + self.cfg.swap_delay_s, SWAP_DONE,
                           (w.wid, w.swap_seq))
        else:
            self._dispatch(w, now)

    def _complete(self, q: Query, model_ran: str, now: float) -> None:
        cfg = self.cfg
        row = self.plan.row
        pair = (row.light_id, row.heavy_id)
        if model_ran not in pair or q.stage == "heavy":
            # heavy output, or a model the current plan no longer serves:
            # the work is done, deliver it
            self._finalize(q, model_ran, now)
            return
        if cfg.policy in ("hybrid", "discriminator-only", "random"):
            q.overhead_s += DISCRIMINATOR_OVERHEAD_S
            if cfg.policy == "random":
                score = stream_uniform(cfg.seed, q.qid, "accept")
            else:
                variant = self.catalog.by_id(model_ran)
                score = discriminator_score(variant, q.hardness, cfg.seed,
                                            q.prompt_key, cfg.noise_sigma)
            if score >= row.tau or model_ran == row.heavy_id:
                self._finalize(q, model_ran, now)
            else:
                q.rerouted = True
                heavy_worker = self._pick_worker(row.heavy_id)
                if heavy_worker is None:
                    # nothing can serve the heavy tier: deliver the light
                    # output rather than strand the query
                    q.role_starved = True
                    self._finalize(q, model_ran, now)
                else:
                    # a rerouted query joins the heavy queue even when the
                    # deadline already looks lost: there is no better option
                    q.stage = "heavy"
                    self._count_heavy(q)
                    heavy_worker.queue.append(q)
                    self._dispatch(heavy_worker, now)
        else:
            self._finalize(q, model_ran, now)

    def _finalize(self, q: Query, model: str, now: float) -> None:
        q.final_model = model
        q.t_final = now
        q.latency_s = now - q.t_arrival + q.overhead_s
        q.served = True
        q.violation = q.latency_s > self.cfg.t_slo_s + _SLACK
        self.finalized += 1
        b = self._bucket
        b["finalized"] += 1
        b["completed"][model] = b["completed"].get(model, 0) + 1
        if q.violation:
            b["violations"] += 1
        else:
            variant = self.catalog.by_id(model)
            b["fid_sum"] += quality_cost(variant, q.hardness)
            b["fid_n"] += 1

    def _drop(self, q: Query, now: float) -> None:
        """Proactive shed at admission: terminal, counts as an SLO violation."""
        q.dropped = True
        q.t_final = now
        q.violation = True
        self.finalized += 1
        b = self._bucket
        b["finalized"] += 1
        b["violations"] += 1
        b["dropped"] += 1

    # ------------------------------------------------------------------ metrics

    def _new_bucket(self) -> None:
        self._bucket = {"arrivals": 0, "finalized": 0, "violations": 0,
                        "dropped": 0, "fid_sum": 0.0, "fid_n": 0,
                        "heavy_routed": 0, "completed": {}}

    def _flush_buckets(self, t: float) -> None:
        while t >= (self._bucket_idx + 1) * self.cfg.bucket_s - _SLACK:
            self._close_bucket()
            self._bucket_idx += 1
            self._new_bucket()

    def _close_bucket(self) -> None:
        b = self._bucket
        cfg = self.cfg
        row = self.plan.row if self.plan else None
        workers_by_model: dict = {}
        queues_by_model: dict = {}
        for w in self.workers:
            m = w.effective_model()
            if m is not None:
                workers_by_model[m] = workers_by_model.get(m, 0) + 1
                if w.queue:
                    queues_by_model[m] = queues_by_model.get(m, 0) + len(w.queue)
        light_workers = heavy_workers = 0
        if row is not None:
            light_workers = workers_by_model.get(row.light_id, 0)
            heavy_workers = workers_by_model.get(row.heavy_id, 0)
            if row.heavy_id == row.light_id:
                heavy_workers = 0
        out = {
            "bucket_start_s": self._bucket_idx * cfg.bucket_s,
            "demand_qps": b["arrivals"] / cfg.bucket_s,
            "fid_proxy": (b["fid_sum"] / b["fid_n"]) if b["fid_n"] else math.nan,
            "slo_violation_ratio": (b["violations"] / b["finalized"])
                                   if b["finalized"] else math.nan,
            "heavy_route_ratio": (b["heavy_routed"] / b["arrivals"])
                                 if b["arrivals"] else math.nan,
            "light_workers": light_workers,
            "heavy_workers": heavy_workers,
            "arrivals": b["arrivals"],
            "finalized": b["finalized"],
            "violations": b["violations"],
            "dropped": b["dropped"],
        }
        for v in self.catalog.variants:
            out[f"completed_{v.id}"] = b["completed"].get(v.id, 0)
            out[f"workers_{v.id}"] = workers_by_model.get(v.id, 0)
            out[f"queue_{v.id}"] = queues_by_model.get(v.id, 0)
        self.buckets.append(out)

    def _summarize(self) -> dict:
        served = [q for q in self.queries if q.served]
        dropped = sum(1 for q in self.queries if q.dropped)
        # SLO accounting: a violation is a timed-out completion or a drop
        violations = sum(1 for q in served if q.violation) + dropped
        good = [q for q in served if not q.violation]
        fid = None
        if good:
            fid = sum(quality_cost(self.catalog.by_id(q.final_model), q.hardness)
                      for q in good) / len(good)
        completed: dict = {}
        for q in served:
            completed[q.final_model] = completed.get(q.final_model, 0) + 1
        return {
            "n_queries": len(self.queries),
            "served": len(served),
            "dropped": dropped,
            "violations": violations,
            "violation_ratio": (violations / len(self.queries))
                               if self.queries else None,
            "fidelity_cost": fid,
            "heavy_route_ratio": (sum(1 for q in self.queries if q.heavy_counted)
                                  / len(self.queries)) if self.queries else None,
            "role_starved": sum(1 for q in self.queries if q.role_starved),
            "completed_by_model": dict(sorted(completed.items())),
            "policy": self.cfg.policy,
            "seed": self.cfg.seed,
            "t_slo_s": self.cfg.t_slo_s,
            "workers": self.cfg.workers,
            "queue_alpha": self.cfg.alpha,
            "duration_s": max((q.t_final for q in self.queries
                               if q.t_final is not None), default=0.0),
            "epochs": len(self.plans_log),
        }


def simulate(catalog: Catalog, plan_fn, queries, config: EngineConfig,
             initial_lam: float) -> SimResult:
    """One-shot convenience wrapper around Engine."""
    return Engine(catalog, plan_fn, queries, config, initial_lam).run()
