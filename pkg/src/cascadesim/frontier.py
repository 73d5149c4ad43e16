"""Cascade-depth analysis: does a third serving tier buy anything?

Enumerates every operating point of two-stage cascades (light plus heavy
with bypass and accept thresholds) and three-stage chains (light rejects to
a middle tier, middle rejects to heavy, bypass jumps straight to heavy)
over an abstract hardness population, then compares the lower convex
envelopes of the resulting (mean latency, fidelity cost) clouds. Operators
can timeshare envelope points, so the envelope is the honest notion of an
achievable frontier. Scoring is noise free here: this is capacity analysis,
not simulation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .catalog import Catalog

THRESHOLDS = tuple(i / 10 for i in range(11))


class FrontierError(ValueError):
    pass


@dataclass(frozen=True)
class FrontierPoint:
    latency_s: float
    fidelity_cost: float
    detail: tuple  # (model ids..., thresholds...) for reporting


@dataclass(frozen=True)
class FrontierReport:
    gap: float
    envelope_two: tuple
    envelope_three: tuple
    n_two: int
    n_three: int


def default_hardness(n: int = 256) -> np.ndarray:
    """Evenly spread hardness population on (0, 1): bin midpoints."""
    return (np.arange(n) + 0.5) / n


def _curves(variants, h: np.ndarray):
    costs = {}
    scores = {}
    for v in variants:
        a, s = v.accept_params
        costs[v.id] = v.base_quality_cost + v.hardness_penalty * h
        scores[v.id] = 1.0 / (1.0 + np.exp(-(a - s * h)))
    return costs, scores


def two_stage_points(variants, h: np.ndarray, thresholds=THRESHOLDS) -> list[FrontierPoint]:
    variants = sorted(variants, key=lambda v: (v.latency_s[1], v.id))
    if len(variants) < 2:
        raise FrontierError("two_stage_points: need at least two variants")
    costs, scores = _curves(variants, h)
    n = len(h)
    points = []
    for i, light in enumerate(variants):
        for heavy in variants[i + 1:]:
            for theta in thresholds:
                bypass = h > theta
                nb = int(bypass.sum())
                for tau in thresholds:
                    reject = ~bypass & (scores[light.id] < tau)
                    nr = int(reject.sum())
                    heavy_mask = bypass | reject
                    fid = float(np.where(heavy_mask, costs[heavy.id],
                                         costs[light.id]).sum()) / n
                    lat = ((n - nb) * light.latency_s[1]
                           + (nb + nr) * heavy.latency_s[1]) / n
                    points.append(FrontierPoint(
                        lat, fid, (light.id, heavy.id, theta, tau)))
    return points


def three_stage_points(variants, h: np.ndarray, thresholds=THRESHOLDS) -> list[FrontierPoint]:
    variants = sorted(variants, key=lambda v: (v.latency_s[1], v.id))
    if len(variants) < 3:
        raise FrontierError("three_stage_points: need at least three variants")
    costs, scores = _curves(variants, h)
    n = len(h)
    points = []
    for i, light in enumerate(variants):
        for j in range(i + 1, len(variants)):
            middle = variants[j]
            for heavy in variants[j + 1:]:
                l_cost, m_cost, h_cost = (costs[light.id], costs[middle.id],
                                          costs[heavy.id])
                for theta in thresholds:
                    bypass = h > theta
                    for tau1 in thresholds:
                        reject1 = ~bypass & (scores[light.id] < tau1)
                        for tau2 in thresholds:
                            reject2 = reject1 & (scores[middle.id] < tau2)
                            on_light = ~bypass & ~reject1
                            on_middle = reject1 & ~reject2
                            on_heavy = bypass | reject2
                            fid = float(l_cost[on_light].sum()
                                        + m_cost[on_middle].sum()
                                        + h_cost[on_heavy].sum()) / n
                            lat = (float((~bypass).sum()) * light.latency_s[1]
                                   + float(reject1.sum()) * middle.latency_s[1]
                                   + float(on_heavy.sum()) * heavy.latency_s[1]) / n
                            points.append(FrontierPoint(
                                lat, fid, (light.id, middle.id, heavy.id,
                                           theta, tau1, tau2)))
    return points


def lower_envelope(points) -> list[tuple[float, float]]:
    """Lower convex hull of (latency, fidelity) points, vertices left to right."""
    pts = sorted({(p.latency_s, p.fidelity_cost) for p in points})
    if not pts:
        raise FrontierError("lower_envelope: no points")
    # keep only the cheapest point per latency
    dedup = []
    for x, y in pts:
        if dedup and dedup[-1][0] == x:
            continue  # sorted order means the first y at each x is lowest
        dedup.append((x, y))
    hull: list[tuple[float, float]] = []
    for x, y in dedup:
        while len(hull) >= 2:
            (x1, y1), (x2, y2) = hull[-2], hull[-1]
            # drop the middle vertex when it lies on or above the chord
            if (y2 - y1) * (x - x1) >= (y - y1) * (x2 - x1):
                hull.pop()
            else:
                break
        hull.append((x, y))
    return hull


def envelope_value(hull, x: float) -> float:
    if x < hull[0][0] or x > hull[-1][0]:
        return math.inf
    for (x1, y1), (x2, y2) in zip(hull, hull[1:]):
        if x1 <= x <= x2:
            if x2 == x1:
                return min(y1, y2)
            return y1 + (y2 - y1) * (x - x1) / (x2 - x1)
    return hull[-1][1]


def envelope_gap(hull_a, hull_b) -> float:
    """max over shared-range breakpoints of a(x) - b(x); positive means b dips below a."""
    lo = max(hull_a[0][0], hull_b[0][0])
    hi = min(hull_a[-1][0], hull_b[-1][0])
    if hi < lo:
        return 0.0
    xs = sorted({x for x, _ in hull_a} | {x for x, _ in hull_b} | {lo, hi})
    xs = [x for x in xs if lo <= x <= hi]
    return max(envelope_value(hull_a, x) - envelope_value(hull_b, x) for x in xs)


def frontier_compare(catalog: Catalog, h: np.ndarray | None = None,
                     thresholds=THRESHOLDS) -> FrontierReport:
    """Compare two-stage and three-stage frontiers on one hardness population."""
    if h is None:
        h = default_hardness()
    variants = catalog.sorted_by_latency()
    p2 = two_stage_points(variants, h, thresholds)
    p3 = three_stage_points(variants, h, thresholds)
    env2 = lower_envelope(p2)
    env3 = lower_envelope(p3)
    return FrontierReport(
        gap=envelope_gap(env2, env3),
        envelope_two=tuple(env2),
        envelope_three=tuple(env3),
        n_two=len(p2),
        n_three=len(p3),
    )
