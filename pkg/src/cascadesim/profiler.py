"""Offline cascade profiling: (theta, tau) grid sweep over model pairs.

For every ordered light/heavy pair that survives candidate selection, the
profiler replays a fixed prompt population through the routing pipeline at
each grid point: hardness above theta bypasses straight to the heavy model,
light outputs scoring below tau are rerouted. Each grid point becomes one
table row with the resulting load shares, mean fidelity cost, and a static
path-latency summary. Rows are pruned to the per-pair latency/fidelity
Pareto frontier; the theta=1.0 sub-frontier (pure discriminator cascade,
no bypass) is kept alongside so threshold-only baselines stay representable.

Tables carry provenance (catalog hash, prompt-set hash, seed, noise level)
and loading refuses a table profiled against a different catalog unless
explicitly overridden.
"""

from __future__ import annotations

import json
import hashlib
from dataclasses import dataclass, asdict

import numpy as np

from . import router
from .catalog import Catalog, pareto_prune, select_candidates
from .quality import DEFAULT_NOISE_SIGMA
from .seeds import stable_text_key, stream_normal

THRESHOLD_GRID = tuple(i / 10 for i in range(11))


class ProfileError(ValueError):
    pass


@dataclass(frozen=True)
class CascadeRow:
    """One profiled operating point of a light/heavy cascade pair."""

    light_id: str
    heavy_id: str
    theta: float   # bypass threshold on hardness (strictly-greater bypasses)
    tau: float     # accept threshold on discriminator score
    r_light: float  # fraction of queries executed on the light model
    r_heavy: float  # fraction executed on the heavy model (bypass + reroute)
    fidelity_cost: float
    mean_latency_s: float

    @property
    def bypass_fraction(self) -> float:
        return 1.0 - self.r_light

    @property
    def reroute_fraction(self) -> float:
        return self.r_heavy - self.bypass_fraction

    def shares(self) -> dict:
        out = {self.light_id: self.r_light}
        out[self.heavy_id] = out.get(self.heavy_id, 0.0) + self.r_heavy
        return out


@dataclass(frozen=True)
class TableProvenance:
    catalog_hash: str
    prompts_hash: str
    n_prompts: int
    seed: int
    noise_sigma: float
    thresholds: tuple
    eps_latency: float
    eps_quality: float


@dataclass(frozen=True)
class CascadeTable:
    rows: tuple
    provenance: TableProvenance

    def pairs(self) -> list[tuple[str, str]]:
        seen = []
        for row in self.rows:
            pair = (row.light_id, row.heavy_id)
            if pair not in seen:
                seen.append(pair)
        return sorted(seen)

    def rows_for_pair(self, light_id: str, heavy_id: str) -> list[CascadeRow]:
        return [r for r in self.rows
                if r.light_id == light_id and r.heavy_id == heavy_id]

    def find_row(self, light_id: str, heavy_id: str, theta: float, tau: float) -> CascadeRow:
        for r in self.rows_for_pair(light_id, heavy_id):
            if abs(r.theta - theta) < 1e-12 and abs(r.tau - tau) < 1e-12:
                return r
        raise ProfileError(
            f"row-not-found: {light_id}/{heavy_id} theta={theta} tau={tau}")


def prompts_hash(prompts) -> str:
    ordered = sorted(prompts, key=stable_text_key)
    blob = "\x1f".join(ordered).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


def profile_config(
    catalog: Catalog,
    prompts,
    seed: int = 0,
    noise_sigma: float = DEFAULT_NOISE_SIGMA,
    eps_latency: float = 0.1,
    eps_quality: float = 0.1,
    thresholds=THRESHOLD_GRID,
    weights=None,
) -> CascadeTable:
    """Profile every selected light/heavy pair over the threshold grid."""
    if not prompts:
        raise ProfileError("profile_config: empty prompt population")
    pool = select_candidates(catalog, eps_latency, eps_quality)
    if len(pool) < 2:
        raise ProfileError("profile_config: need at least two candidate variants")
    thresholds = tuple(float(t) for t in thresholds)

    texts = sorted(prompts, key=stable_text_key)
    n = len(texts)
    lex = router.load_lexicons()
    h = np.array([router.hardness(t, weights, lex) for t in texts])
    noise = np.array([
        stream_normal(seed, stable_text_key(t), "disc", sigma=noise_sigma)
        for t in texts
    ])
    costs = {v.id: v.base_quality_cost + v.hardness_penalty * h for v in pool}
    scores = {}
    for v in pool:
        a, s = v.accept_params
        scores[v.id] = np.clip(1.0 / (1.0 + np.exp(-(a - s * h))) + noise, 0.0, 1.0)
    bypass_at = {theta: h > theta for theta in thresholds}

    all_rows = []
    ordered = sorted(pool, key=lambda v: (v.latency_s[1], v.id))
    for i, light in enumerate(ordered):
        for heavy in ordered[i + 1:]:
            grid_rows = []
            for theta in thresholds:
                bypass = bypass_at[theta]
                n_bypass = int(bypass.sum())
                for tau in thresholds:
                    reject = ~bypass & (scores[light.id] < tau)
                    n_reject = int(reject.sum())
                    heavy_mask = bypass | reject
                    fid = float(np.where(heavy_mask, costs[heavy.id],
                                         costs[light.id]).mean())
                    mean_lat = ((n - n_bypass) * light.latency_s[1]
                                + (n_bypass + n_reject) * heavy.latency_s[1]) / n
                    grid_rows.append(CascadeRow(
                        light_id=light.id,
                        heavy_id=heavy.id,
                        theta=theta,
                        tau=tau,
                        r_light=(n - n_bypass) / n,
                        r_heavy=(n_bypass + n_reject) / n,
                        fidelity_cost=fid,
                        mean_latency_s=mean_lat,
                    ))
            frontier = pareto_prune(
                grid_rows, key=lambda r: (r.mean_latency_s, r.fidelity_cost))
            no_bypass = [r for r in grid_rows if r.theta == max(thresholds)]
            frontier_nb = pareto_prune(
                no_bypass, key=lambda r: (r.mean_latency_s, r.fidelity_cost))
            merged = {(r.theta, r.tau): r for r in frontier}
            for r in frontier_nb:
                merged.setdefault((r.theta, r.tau), r)
            all_rows.extend(merged[k] for k in sorted(merged))

    prov = TableProvenance(
        catalog_hash=catalog.content_hash(),
        prompts_hash=prompts_hash(texts),
        n_prompts=n,
        seed=seed,
        noise_sigma=noise_sigma,
        thresholds=thresholds,
        eps_latency=eps_latency,
        eps_quality=eps_quality,
    )
    return CascadeTable(rows=tuple(all_rows), provenance=prov)


def save_table(table: CascadeTable, path: str) -> None:
    payload = {
        "provenance": asdict(table.provenance),
        "rows": [asdict(r) for r in table.rows],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_table(path: str, catalog: Catalog | None = None,
               override_provenance: bool = False) -> CascadeTable:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    try:
        prov_raw = dict(payload["provenance"])
        prov_raw["thresholds"] = tuple(prov_raw["thresholds"])
        prov = TableProvenance(**prov_raw)
        rows = tuple(CascadeRow(**r) for r in payload["rows"])
    except (KeyError, TypeError) as exc:
        raise ProfileError(f"table file: malformed ({exc})") from None
    if catalog is not None and prov.catalog_hash != catalog.content_hash():
        if not override_provenance:
            raise ProfileError(
                "provenance-mismatch: table was profiled against catalog "
                f"{prov.catalog_hash}, current catalog is {catalog.content_hash()}; "
                "pass override_provenance to use it anyway")
    return CascadeTable(rows=rows, provenance=prov)
