"""Model catalog: per-variant latency/quality profiles and candidate pruning.

A catalog row describes one model variant entirely through calibrated
numbers: a latency table over profiled batch sizes, derived per-worker
throughput, a scalar quality cost (lower is better), a hardness penalty,
and the two parameters of its simulated acceptance curve. Everything
downstream (profiler, planner, engine) consumes only these numbers.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import yaml

DEFAULT_BATCH_SIZES = (1, 2, 4, 8, 16)
DEFAULT_BATCH_BETA = 0.25
_REL_TOL = 1e-9


class CatalogError(ValueError):
    """Raised for any catalog validation failure; message carries the path."""


@dataclass(frozen=True)
class ModelVariant:
    """One serveable model variant.

    latency_s maps profiled batch size -> wall seconds for that batch;
    throughput_qps is the per-worker rate b / latency_s[b]. accept_params
    is (a, s) of the simulated discriminator curve sigmoid(a - s * hardness).
    """

    id: str
    latency_s: dict[int, float]
    throughput_qps: dict[int, float]
    base_quality_cost: float
    hardness_penalty: float
    accept_params: tuple[float, float]

    def batch_sizes(self) -> tuple[int, ...]:
        return tuple(sorted(self.latency_s))


@dataclass(frozen=True)
class Catalog:
    variants: tuple[ModelVariant, ...]
    batch_sizes: tuple[int, ...] = DEFAULT_BATCH_SIZES
    calibrated: bool = False

    def __post_init__(self) -> None:
        _validate_catalog(self)

    def by_id(self, variant_id: str) -> ModelVariant:
        for v in self.variants:
            if v.id == variant_id:
                return v
        raise CatalogError(f"unknown-variant: {variant_id!r}")

    def ids(self) -> tuple[str, ...]:
        return tuple(v.id for v in self.variants)

    def sorted_by_latency(self) -> tuple[ModelVariant, ...]:
        """Variants ordered light to heavy by b=1 latency, id breaking ties."""
        return tuple(sorted(self.variants, key=lambda v: (v.latency_s[1], v.id)))

    def content_hash(self) -> str:
        """Stable hash of the calibrated numbers, used for table provenance."""
        payload = {
            "batch_sizes": list(self.batch_sizes),
            "calibrated": self.calibrated,
            "variants": [
                {
                    "id": v.id,
                    "latency_s": {str(b): repr(v.latency_s[b]) for b in sorted(v.latency_s)},
                    "base_quality_cost": repr(v.base_quality_cost),
                    "hardness_penalty": repr(v.hardness_penalty),
                    "accept_params": [repr(v.accept_params[0]), repr(v.accept_params[1])],
                }
                for v in self.variants
            ],
        }
        blob = json.dumps(payload, sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:16]


def scaled_batch_profile(
    latency_b1: float,
    batch_sizes: tuple[int, ...] = DEFAULT_BATCH_SIZES,
    beta: float = DEFAULT_BATCH_BETA,
) -> dict[int, float]:
    """Latency table L(b) = L(1) * (1 + beta * (b - 1)) over the batch set."""
    if latency_b1 <= 0:
        raise CatalogError("latency_b1 must be positive")
    if beta <= 0:
        raise CatalogError("beta must be positive")
    return {b: latency_b1 * (1.0 + beta * (b - 1)) for b in batch_sizes}


def make_variant(
    variant_id: str,
    latency_s: dict[int, float],
    base_quality_cost: float,
    hardness_penalty: float,
    accept_params: tuple[float, float],
) -> ModelVariant:
    """Build a variant, deriving throughput_qps = b / L(b)."""
    throughput = {b: b / latency for b, latency in latency_s.items()}
    return ModelVariant(
        id=variant_id,
        latency_s=dict(sorted(latency_s.items())),
        throughput_qps=dict(sorted(throughput.items())),
        base_quality_cost=base_quality_cost,
        hardness_penalty=hardness_penalty,
        accept_params=accept_params,
    )


def _validate_catalog(cat: Catalog) -> None:
    if not cat.variants:
        raise CatalogError("variants: empty pool")
    if list(cat.batch_sizes) != sorted(set(cat.batch_sizes)):
        raise CatalogError("batch_sizes: must be strictly increasing")
    seen: set[str] = set()
    for i, v in enumerate(cat.variants):
        where = f"variants[{i}] ({v.id})"
        if v.id in seen:
            raise CatalogError(f"{where}.id: duplicate")
        seen.add(v.id)
        if tuple(sorted(v.latency_s)) != cat.batch_sizes:
            raise CatalogError(f"{where}.latency_s: batch sizes {sorted(v.latency_s)} "
                              f"do not match catalog set {list(cat.batch_sizes)}")
        prev = 0.0
        for b in cat.batch_sizes:
            lat = v.latency_s[b]
            if lat <= prev:
                raise CatalogError(f"{where}.latency_s[{b}]: not strictly increasing")
            prev = lat
            mu = v.throughput_qps.get(b)
            if mu is None:
                raise CatalogError(f"{where}.throughput_qps[{b}]: missing")
            if abs(mu * lat - b) > _REL_TOL * b:
                raise CatalogError(f"{where}.throughput_qps[{b}]: {mu!r} is not b/latency")
        if v.base_quality_cost <= 0:
            raise CatalogError(f"{where}.base_quality_cost: must be positive")
        if v.hardness_penalty < 0:
            raise CatalogError(f"{where}.hardness_penalty: must be non-negative")
        a, s = v.accept_params
        if s <= 0:
            raise CatalogError(f"{where}.accept_params: slope must be positive")
    if cat.calibrated:
        order = cat.sorted_by_latency()
        for lighter, heavier in zip(order, order[1:]):
            if not heavier.base_quality_cost < lighter.base_quality_cost:
                raise CatalogError(
                    f"variants ({heavier.id}): calibrated catalogs need strictly "
                    f"lower quality cost than the faster {lighter.id}")


def batch_latency(variant: ModelVariant, batch: int) -> float:
    """Exact latency lookup; unprofiled batch sizes are an error, not interpolated."""
    try:
        return variant.latency_s[batch]
    except KeyError:
        raise CatalogError(f"batch-not-profiled: {variant.id} b={batch}") from None


def pareto_prune(rows, key=None):
    """Keep the latency/quality Pareto frontier of tagged rows.

    key extracts (latency, quality) from a row; by default the row is the
    pair itself. A row is dropped when another row is no worse on both axes
    and strictly better on at least one; exact ties on both axes keep the
    row with the smaller original index. The result is sorted by latency
    ascending (quality then strictly descending).
    """
    if key is None:
        key = lambda r: (r[0], r[1])
    tagged = sorted(
        ((key(r)[0], key(r)[1], i, r) for i, r in enumerate(rows)),
        key=lambda t: (t[0], t[1], t[2]),
    )
    kept = []
    best_quality = math.inf
    for lat, qual, _i, row in tagged:
        if qual < best_quality:
            kept.append(row)
            best_quality = qual
    return kept


def _within(a: float, b: float, eps: float) -> bool:
    return abs(a - b) <= eps * max(abs(a), abs(b))


def select_candidates(catalog: Catalog, eps_latency: float, eps_quality: float) -> list[ModelVariant]:
    """Prune near-duplicate, dominated, and redundant-intermediate variants.

    Three passes over (b=1 latency, base quality cost):
      1. adjacency: variants pairwise within both relative tolerances collapse
         to the lexicographically smallest id (the pool's unique latency
         minimum and unique quality minimum are always retained);
      2. dominance: drop any variant another variant Pareto-dominates;
      3. redundancy: drop an interior variant whose point sits within
         eps_quality of the segment between its surviving neighbours,
         measured vertically relative to the pool's quality-cost span.
    """
    for name, eps in (("eps_latency", eps_latency), ("eps_quality", eps_quality)):
        if not (0.0 < eps < 0.5):
            raise CatalogError(f"{name}: must lie in (0, 0.5)")
    pool = list(catalog.variants)
    if not pool:
        raise CatalogError("variants: empty pool")

    def point(v: ModelVariant) -> tuple[float, float]:
        return (v.latency_s[1], v.base_quality_cost)

    lat_values = sorted(p[0] for p in map(point, pool))
    cost_values = sorted(p[1] for p in map(point, pool))
    protected: set[str] = set()
    lat_min = min(pool, key=lambda v: v.latency_s[1])
    if lat_values.count(lat_values[0]) == 1:
        protected.add(lat_min.id)
    cost_min = min(pool, key=lambda v: v.base_quality_cost)
    if cost_values.count(cost_values[0]) == 1:
        protected.add(cost_min.id)

    # pass 1: greedy adjacency groups in stable order
    groups: list[list[ModelVariant]] = []
    for v in pool:
        for group in groups:
            if all(_within(point(v)[0], point(g)[0], eps_latency)
                   and _within(point(v)[1], point(g)[1], eps_quality) for g in group):
                group.append(v)
                break
        else:
            groups.append([v])
    survivors: list[ModelVariant] = []
    for group in groups:
        rep = min(group, key=lambda v: v.id)
        for v in group:
            if v is rep or v.id in protected:
                survivors.append(v)
    survivors.sort(key=lambda v: pool.index(v))

    # pass 2: dominance
    def dominates(a: ModelVariant, b: ModelVariant) -> bool:
        (la, qa), (lb, qb) = point(a), point(b)
        return (la <= lb and qa < qb) or (la < lb and qa <= qb)

    survivors = [v for v in survivors
                 if not any(dominates(o, v) for o in survivors if o is not v)]

    # pass 3: intermediate redundancy against the quality span
    span = max(v.base_quality_cost for v in survivors) - min(v.base_quality_cost for v in survivors)
    if span > 0:
        changed = True
        while changed and len(survivors) > 2:
            changed = False
            ordered = sorted(survivors, key=lambda v: (v.latency_s[1], v.id))
            for left, mid, right in zip(ordered, ordered[1:], ordered[2:]):
                (l0, q0), (lm, qm), (l1, q1) = point(left), point(mid), point(right)
                interp = q0 + (q1 - q0) * (lm - l0) / (l1 - l0)
                if abs(qm - interp) <= eps_quality * span:
                    survivors.remove(mid)
                    changed = True
                    break
    return sorted(survivors, key=lambda v: (v.latency_s[1], v.id))


def default_catalog() -> Catalog:
    """The shipped four-variant diffusion catalog (b=1 seconds, cost, penalty)."""
    specs = [
        ("sdxl-lightning", 0.5, 36.0, 12.0, (2.0, 4.0)),
        ("sd35-turbo", 1.3, 31.0, 8.0, (2.6, 4.0)),
        ("sd35-medium", 13.0, 26.0, 5.0, (3.2, 4.0)),
        ("sd35-large", 27.0, 23.0, 3.0, (3.6, 4.0)),
    ]
    variants = tuple(
        make_variant(vid, scaled_batch_profile(l1), cost, penalty, accept)
        for vid, l1, cost, penalty, accept in specs
    )
    return Catalog(variants=variants, calibrated=True)


def load_catalog(path: str) -> Catalog:
    """Load a catalog from a YAML key-value tree, reporting the first violation."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = yaml.safe_load(fh)
    if not isinstance(raw, dict):
        raise CatalogError("catalog file: top level must be a mapping")
    batch_sizes = tuple(raw.get("batch_sizes", DEFAULT_BATCH_SIZES))
    beta = float(raw.get("batch_scaling_beta", DEFAULT_BATCH_BETA))
    entries = raw.get("variants")
    if not isinstance(entries, list) or not entries:
        raise CatalogError("variants: must be a non-empty list")
    variants = []
    for i, entry in enumerate(entries):
        where = f"variants[{i}]"
        if not isinstance(entry, dict):
            raise CatalogError(f"{where}: must be a mapping")
        try:
            vid = entry["id"]
            cost = float(entry["base_quality_cost"])
            penalty = float(entry["hardness_penalty"])
            accept = tuple(float(x) for x in entry["accept_params"])
        except KeyError as exc:
            raise CatalogError(f"{where}.{exc.args[0]}: missing") from None
        if len(accept) != 2:
            raise CatalogError(f"{where}.accept_params: expected [a, s]")
        lat = entry.get("latency_s")
        if isinstance(lat, dict):
            latency = {int(b): float(x) for b, x in lat.items()}
            if tuple(sorted(latency)) != batch_sizes:
                latency = dict(latency)  # explicit table must cover the batch set
                missing = [b for b in batch_sizes if b not in latency]
                if missing:
                    raise CatalogError(f"{where}.latency_s: missing batch sizes {missing}")
        elif "latency_b1" in entry:
            latency = scaled_batch_profile(float(entry["latency_b1"]), batch_sizes, beta)
        else:
            raise CatalogError(f"{where}.latency_s: give a table or latency_b1")
        variants.append(make_variant(vid, latency, cost, penalty, (accept[0], accept[1])))
    return Catalog(
        variants=tuple(variants),
        batch_sizes=batch_sizes,
        calibrated=bool(raw.get("calibrated", False)),
    )
