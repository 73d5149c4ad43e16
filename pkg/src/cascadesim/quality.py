"""Simulated quality discriminator and per-query fidelity cost.

Real deployments score generated images with a small verifier model. Here
the score is a calibrated curve of the prompt's hardness plus deterministic
noise: variants with accept_params (a, s) yield sigmoid(a - s * hardness),
so with the default threshold 0.5 a variant accepts exactly the prompts
with hardness below a / s. Fidelity is a quality *cost*: lower is better,
and harder prompts cost more on weaker variants.
"""

from __future__ import annotations

import math

from .catalog import ModelVariant
from .seeds import stream_normal

# fixed per-evaluation cost of the discriminator, charged by the engine
DISCRIMINATOR_OVERHEAD_S = 0.007

DEFAULT_NOISE_SIGMA = 0.05
DEFAULT_ACCEPT_THRESHOLD = 0.5


def sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


def clip01(x: float) -> float:
    return 0.0 if x < 0.0 else 1.0 if x > 1.0 else x


def accept_curve(variant: ModelVariant, hardness: float) -> float:
    """Noise-free discriminator score for this variant's output."""
    a, s = variant.accept_params
    return sigmoid(a - s * hardness)


def discriminator_score(
    variant: ModelVariant,
    hardness: float,
    seed: int,
    prompt_key: int,
    sigma: float = DEFAULT_NOISE_SIGMA,
) -> float:
    """Deterministic noisy score in [0, 1].

    The noise draw depends only on (seed, prompt_key), so the profiler and
    the simulator see identical scores for the same prompt at the same seed.
    """
    noise = stream_normal(seed, prompt_key, "disc", sigma=sigma)
    return clip01(accept_curve(variant, hardness) + noise)


def accepts(score: float, threshold: float) -> bool:
    """Accept rule: reroute to the heavy model only when score < threshold."""
    return score >= threshold


def quality_cost(variant: ModelVariant, hardness: float) -> float:
    """Fidelity cost of serving one query on this variant (lower is better)."""
    return variant.base_quality_cost + variant.hardness_penalty * hardness


def expected_cost_uniform(variant: ModelVariant) -> float:
    """Mean quality cost over hardness uniform on [0, 1]."""
    return variant.base_quality_cost + 0.5 * variant.hardness_penalty


def population_quality(variant: ModelVariant, hardnesses) -> float:
    """Mean quality cost over a finite hardness population."""
    values = list(hardnesses)
    if not values:
        raise ValueError("population_quality: empty hardness population")
    return sum(quality_cost(variant, h) for h in values) / len(values)
