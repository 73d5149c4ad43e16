"""Workload synthesis: demand traces, arrival streams, and prompt pools.

A DemandTrace is a step function of offered load (queries per second) over
simulated time. Arrival streams realize it either as a Poisson process or
as evenly spaced arrivals. Prompt pools supply the query text; a
PhaseSchedule switches pools over time so hardness can shift while demand
stays flat.
"""

from __future__ import annotations

import csv
from bisect import bisect_right
from dataclasses import dataclass
from importlib import resources

import numpy as np

from . import router
from .catalog import Catalog
from .seeds import stable_text_key, stream_uniform

TRACE_HEADER = ("start_s", "qps")


class WorkloadError(ValueError):
    pass


@dataclass(frozen=True)
class DemandTrace:
    """Piecewise-constant offered load: (bucket_start_s, qps) steps."""

    buckets: tuple[tuple[float, float], ...]
    duration_s: float

    def __post_init__(self) -> None:
        if not self.buckets:
            raise WorkloadError("trace: no buckets")
        if self.buckets[0][0] != 0.0:
            raise WorkloadError("trace: first bucket must start at 0")
        starts = [s for s, _ in self.buckets]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise WorkloadError("trace: bucket starts must be strictly increasing")
        if any(q < 0 for _, q in self.buckets):
            raise WorkloadError("trace: qps must be non-negative")
        if self.duration_s <= starts[-1]:
            raise WorkloadError("trace: duration must extend past the last bucket")

    def qps_at(self, t: float) -> float:
        starts = [s for s, _ in self.buckets]
        idx = bisect_right(starts, t) - 1
        return self.buckets[max(idx, 0)][1]

    def edges(self) -> list[tuple[float, float, float]]:
        """(start, end, qps) triples covering [0, duration_s)."""
        out = []
        for i, (start, qps) in enumerate(self.buckets):
            end = self.buckets[i + 1][0] if i + 1 < len(self.buckets) else self.duration_s
            out.append((start, end, qps))
        return out

    def peak_qps(self) -> float:
        return max(q for _, q in self.buckets)

    def scaled(self, factor: float) -> "DemandTrace":
        return DemandTrace(
            buckets=tuple((s, q * factor) for s, q in self.buckets),
            duration_s=self.duration_s,
        )


def gen_piecewise(levels) -> DemandTrace:
    """Build a trace from (qps, dwell_s) pairs starting at t=0."""
    buckets = []
    t = 0.0
    for qps, dwell in levels:
        if dwell <= 0:
            raise WorkloadError("gen_piecewise: dwell must be positive")
        buckets.append((t, float(qps)))
        t += float(dwell)
    return DemandTrace(buckets=tuple(buckets), duration_s=t)


def save_trace(trace: DemandTrace, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_HEADER)
        for start, qps in trace.buckets:
            writer.writerow([repr(float(start)), repr(float(qps))])
        writer.writerow(["duration_s", repr(float(trace.duration_s))])


def load_trace(path: str) -> DemandTrace:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != TRACE_HEADER:
        raise WorkloadError(f"trace file: expected header {','.join(TRACE_HEADER)}")
    buckets = []
    duration = None
    for row in rows[1:]:
        if not row:
            continue
        if row[0] == "duration_s":
            duration = float(row[1])
            continue
        buckets.append((float(row[0]), float(row[1])))
    if duration is None:
        # tolerate traces without an explicit footer: pad the last bucket
        if len(buckets) < 2:
            raise WorkloadError("trace file: need a duration_s row or two buckets")
        duration = buckets[-1][0] + (buckets[-1][0] - buckets[-2][0])
    return DemandTrace(buckets=tuple(buckets), duration_s=duration)


def load_packaged_trace(name: str = "diurnal_sample") -> DemandTrace:
    """Shipped trace shapes; qps column holds fractions of peak (0..1]."""
    ref = resources.files("cascadesim").joinpath("data").joinpath("traces")
    path = ref.joinpath(f"{name}.csv")
    with resources.as_file(path) as real:
        return load_trace(str(real))


def arrivals(trace: DemandTrace, mode: str = "poisson", seed: int = 0) -> list[float]:
    """Materialize arrival times over [0, duration_s), strictly increasing."""
    times: list[float] = []
    if mode == "uniform":
        for start, end, qps in trace.edges():
            if qps <= 0:
                continue
            n = int(round(qps * (end - start)))
            times.extend(start + i / qps for i in range(n))
    elif mode == "poisson":
        rng = np.random.default_rng(seed)
        for start, end, qps in trace.edges():
            if qps <= 0:
                continue
            t = start + float(rng.exponential(1.0 / qps))
            while t < end:
                times.append(t)
                t += float(rng.exponential(1.0 / qps))
    else:
        raise WorkloadError(f"arrivals: unknown mode {mode!r}")
    if any(b <= a for a, b in zip(times, times[1:])):
        raise WorkloadError("arrivals: generated times are not strictly increasing")
    return times


@dataclass(frozen=True)
class PhaseSchedule:
    """Time-phased prompt pools: (phase_start_s, pool_id) plus the pools."""

    phases: tuple[tuple[float, str], ...]
    pools: dict

    def __post_init__(self) -> None:
        if not self.phases or self.phases[0][0] != 0.0:
            raise WorkloadError("schedule: phases must start at t=0")
        starts = [s for s, _ in self.phases]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise WorkloadError("schedule: phase starts must be strictly increasing")
        for _, pool_id in self.phases:
            if pool_id not in self.pools or not self.pools[pool_id]:
                raise WorkloadError(f"schedule: empty or missing pool {pool_id!r}")

    @classmethod
    def single(cls, prompts) -> "PhaseSchedule":
        return cls(phases=((0.0, "all"),), pools={"all": tuple(prompts)})

    def pool_at(self, t: float) -> str:
        starts = [s for s, _ in self.phases]
        idx = bisect_right(starts, t) - 1
        return self.phases[max(idx, 0)][1]


def build_queries(times, schedule: PhaseSchedule) -> list[tuple[float, str]]:
    """Attach prompts to arrival times, round-robin within the active pool."""
    counters = {pool_id: 0 for pool_id in schedule.pools}
    out = []
    for t in times:
        pool_id = schedule.pool_at(t)
        pool = schedule.pools[pool_id]
        out.append((t, pool[counters[pool_id] % len(pool)]))
        counters[pool_id] += 1
    return out


def gen_hardness_phases(
    qps: float,
    phase_s: float,
    n_phases: int,
    easy_pool,
    hard_pool,
) -> tuple[DemandTrace, PhaseSchedule]:
    """Flat demand with alternating easy/hard prompt pools (easy first)."""
    if n_phases < 2:
        raise WorkloadError("gen_hardness_phases: need at least two phases")
    trace = gen_piecewise([(qps, phase_s * n_phases)])
    phases = tuple(
        (i * phase_s, "easy" if i % 2 == 0 else "hard") for i in range(n_phases)
    )
    schedule = PhaseSchedule(
        phases=phases,
        pools={"easy": tuple(easy_pool), "hard": tuple(hard_pool)},
    )
    return trace, schedule


def light_capacity_qps(catalog: Catalog, workers: int) -> float:
    """Cluster throughput with every worker on the lightest variant, max batch."""
    light = catalog.sorted_by_latency()[0]
    best_batch = max(catalog.batch_sizes)
    return workers * light.throughput_qps[best_batch]


# ---------------------------------------------------------------------------
# synthetic prompt builder

_COMMON_NOUNS = ("cat", "dog", "house", "tree", "table", "garden", "park",
                 "bird", "flower", "river", "street", "window", "book", "chair")
_MID_NOUNS = ("castle", "dragon", "robot", "knight", "temple", "tower",
              "harbor", "library", "lantern", "mirror", "compass", "crystal")
_RARE_NOUNS = ("labyrinth", "griffin", "phoenix", "nebula", "aurora", "oasis",
               "glacier", "cathedral", "waterfall", "volcano")
_COMMON_ADJS = ("red", "blue", "green", "small", "dark", "bright")
_RARE_ADJS = ("crystalline", "ethereal", "iridescent", "obsidian", "gossamer",
              "verdant", "opalescent", "holographic", "monolithic")
_ACTIONS = ("running", "jumping", "flying", "dancing", "fighting", "soaring",
            "leaping", "spinning", "floating", "battling")
_CORE_PREPS = ("on", "near", "beside")
_SPATIAL_CLAUSES = ("on top of", "next to", "in front of", "surrounded by",
                    "between", "above", "beneath", "alongside")
_ENTITIES = ("Zephyr", "Kael", "Atlantis", "Elowen", "Myra", "Orin",
             "Selene", "Thane", "Isolde", "Brann")
_ABSTRACTS = ("time", "silence", "wisdom", "eternity", "harmony", "solitude")

MAX_INTENSITY = 24


def _pick(seq, seed: int, variation: int, slot: str):
    u = stream_uniform(seed, "prompt", variation, slot)
    return seq[int(u * len(seq)) % len(seq)]


def build_prompt(seed: int, variation: int, intensity: int) -> str:
    """Deterministic synthetic prompt; higher intensity stacks harder features."""
    if not 0 <= intensity <= MAX_INTENSITY:
        raise WorkloadError(f"build_prompt: intensity {intensity} out of range")
    pick = lambda seq, slot: _pick(seq, seed, variation, slot)

    def article(phrase: str) -> str:
        return "an" if phrase[0] in "aeiou" else "a"

    noun1 = pick(_COMMON_NOUNS, "n1")
    noun2 = pick(_COMMON_NOUNS, "n2")
    if intensity >= 1:
        noun2 = pick(_MID_NOUNS, "m1")
    adj1 = ""
    if intensity >= 2:
        adj1 = pick(_RARE_ADJS if intensity >= 7 else _COMMON_ADJS, "a1") + " "
    head = f"{adj1}{noun1}"
    text = f"{article(head)} {head} {pick(_CORE_PREPS, 'p0')} {article(noun2)} {noun2}"
    parts = [text]
    if intensity >= 3:
        parts.append(f"of {pick(_ABSTRACTS, 'ab1')}")
    if intensity >= 4:
        parts.append(f", {pick(_ACTIONS, 'v1')}")
    if intensity >= 5:
        parts.append(f"{pick(_SPATIAL_CLAUSES, 's1')} the {pick(_MID_NOUNS, 'm2')}")
    if intensity >= 6:
        parts.append(f"with {pick(_ENTITIES, 'e1')}")
    if intensity >= 8:
        phrase = f"{pick(_RARE_ADJS, 'a2')} {pick(_MID_NOUNS, 'm3')}"
        parts.append(f"{article(phrase)} {phrase} "
                     f"{pick(_SPATIAL_CLAUSES, 's2')} the {pick(_RARE_NOUNS, 'r1')}")
    if intensity >= 9:
        parts.append(f", {pick(_ACTIONS, 'v2')}")
    if intensity >= 10:
        parts.append(f"and {pick(_ENTITIES, 'e2')}")
    if intensity >= 11:
        parts.append(f"the {pick(_RARE_ADJS, 'a3')} {pick(_RARE_NOUNS, 'r2')} "
                     f"between several {pick(_RARE_ADJS, 'a4')} {pick(_MID_NOUNS, 'm4')}")
    if intensity >= 12:
        parts.append(f", {pick(_ACTIONS, 'v3')}")
    if intensity >= 13:
        parts.append(f"beside {pick(_ENTITIES, 'e3')}")
    if intensity >= 14:
        parts.append(f"three {pick(_RARE_ADJS, 'a5')} {pick(_RARE_NOUNS, 'r3')}")
    if intensity >= 15:
        parts.append(f"under the {pick(_RARE_ADJS, 'a6')} {pick(_MID_NOUNS, 'm5')}")
    if intensity >= 16:
        parts.append(f", {pick(_ACTIONS, 'v4')}")
    if intensity >= 17:
        parts.append(f"near {pick(_ENTITIES, 'e4')}")
    if intensity >= 18:
        parts.append(f"every {pick(_RARE_ADJS, 'a7')} {pick(_RARE_NOUNS, 'r4')}")
    if intensity >= 19:
        parts.append(f"above the {pick(_MID_NOUNS, 'm6')}")
    if intensity >= 20:
        parts.append(f", {pick(_ACTIONS, 'v5')}")
    if intensity >= 21:
        parts.append(f"with {pick(_ENTITIES, 'e5')}")
    if intensity >= 22:
        parts.append(f"many {pick(_RARE_ADJS, 'a8')} {pick(_RARE_NOUNS, 'r5')}")
    if intensity >= 23:
        parts.append(f"through the {pick(_RARE_NOUNS, 'r6')}")
    if intensity >= 24:
        parts.append(f"of {pick(_ABSTRACTS, 'ab2')}")
    return " ".join(parts).replace(" ,", ",")


def gen_prompts(n: int, seed: int, hardness_range=(0.05, 0.9), weights=None) -> list[str]:
    """Generate n distinct prompts whose router hardness lands in the range.

    Targets are stratified across the range; each prompt picks the builder
    intensity whose hardness is closest to its target while staying inside
    [lo, hi]. Raises if the builder cannot reach the range.
    """
    lo, hi = hardness_range
    if not (0.0 <= lo < hi <= 1.0):
        raise WorkloadError(f"gen_prompts: bad hardness range {hardness_range}")
    lex = router.load_lexicons()
    margin = min(0.05, 0.25 * (hi - lo))
    out: list[str] = []
    seen: set[str] = set()
    variation = 0
    for j in range(n):
        target = (lo + margin) + (j + 0.5) / n * ((hi - margin) - (lo + margin))
        placed = False
        for _attempt in range(50):
            ladder = []
            for intensity in range(MAX_INTENSITY + 1):
                text = build_prompt(seed, variation, intensity)
                h = router.hardness(text, weights, lex)
                if lo <= h <= hi and text not in seen:
                    ladder.append((abs(h - target), intensity, text))
            variation += 1
            if ladder:
                ladder.sort()
                text = ladder[0][2]
                out.append(text)
                seen.add(text)
                placed = True
                break
        if not placed:
            raise WorkloadError(
                f"prompt-synthesis-failed: no builder output in [{lo}, {hi}]")
    out.sort(key=stable_text_key)
    return out
