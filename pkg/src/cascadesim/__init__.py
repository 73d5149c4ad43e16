"""Deterministic simulator and planner for two-stage model-cascade serving.

The package models a cluster that serves generative-image queries with a
cascade of a lightweight and a heavyweight model: a rule-based prompt router
may bypass the light stage outright, a quality discriminator re-routes weak
light outputs, and a lookup-table planner re-allocates workers and batch
sizes online. Model execution is replaced by calibrated latency and quality
profiles so every experiment is exact and reproducible.
"""

__version__ = "0.1.0"
