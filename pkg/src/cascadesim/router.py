"""Rule-based prompt router: cheap text features -> scalar hardness in [0, 1].

The router never sees model outputs. It scores a prompt from eight lexical
features, normalizes each against a fixed cap, and combines them with a
weight vector that sums to one. Queries whose hardness exceeds the serving
plan's bypass threshold skip the light model entirely.
"""

from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np

FEATURE_NAMES = (
    "prompt_length",
    "token_rarity",
    "num_objects",
    "abstractness",
    "attribute_density",
    "spatial_relations",
    "action_verbs",
    "named_entities",
)
FEATURE_CAPS = (40.0, 1.0, 5.0, 1.0, 1.0, 5.0, 5.0, 5.0)
DEFAULT_WEIGHTS = tuple(1.0 / len(FEATURE_NAMES) for _ in FEATURE_NAMES)

# fixed per-query cost of running the feature pipeline, charged by the engine
ROUTER_OVERHEAD_S = 0.005

_PUNCT = ".,;:!?\"'()[]{}`"
_SENTENCE_END = re.compile(r"[.!?]$")


class RouterError(ValueError):
    pass


@dataclass(frozen=True)
class Token:
    raw: str
    lower: str
    sentence_initial: bool


@dataclass(frozen=True)
class Lexicons:
    word_freq: dict
    freq_floor: float
    abstract: frozenset
    spatial: tuple  # phrases as token tuples, longest first
    actions: frozenset
    determiners: frozenset
    adjectives: frozenset
    spatial_by_first: dict  # first word -> phrases in scan order


def _read_lines(name: str) -> list[str]:
    root = resources.files("cascadesim")
    text = root.joinpath("data").joinpath("lexicons").joinpath(name).read_text("utf-8")
    return [line.strip() for line in text.splitlines() if line.strip()]


@lru_cache(maxsize=1)
def load_lexicons() -> Lexicons:
    freq = {}
    for line in _read_lines("word_frequency.tsv"):
        word, value = line.split("\t")
        freq[word] = float(value)
    phrases = [tuple(p.split()) for p in _read_lines("spatial_phrases.txt")]
    phrases.sort(key=lambda p: (-len(p), p))
    by_first: dict = {}
    for p in phrases:
        by_first.setdefault(p[0], []).append(p)
    return Lexicons(
        word_freq=freq,
        freq_floor=min(freq.values()),
        abstract=frozenset(_read_lines("abstract_nouns.txt")),
        spatial=tuple(phrases),
        actions=frozenset(_read_lines("action_verbs.txt")),
        determiners=frozenset(_read_lines("noun_markers.txt")),
        adjectives=frozenset(_read_lines("adjectives.txt")),
        spatial_by_first={w: tuple(ps) for w, ps in by_first.items()},
    )


def tokenize(text: str) -> list[Token]:
    tokens = []
    sentence_start = True
    for raw in text.split():
        word = raw.strip(_PUNCT)
        ends_sentence = bool(_SENTENCE_END.search(raw))
        if word:
            tokens.append(Token(raw=word, lower=word.lower(),
                                sentence_initial=sentence_start))
            sentence_start = ends_sentence
        elif ends_sentence:
            sentence_start = True
    return tokens


def _rarity(word: str, lex: Lexicons) -> float:
    freq = lex.word_freq.get(word)
    if freq is None:
        return 1.0
    freq = min(max(freq, lex.freq_floor), 1.0)
    if freq >= 1.0:
        return 0.0
    return math.log(freq) / math.log(lex.freq_floor)


def _count_objects(tokens: list[Token], lex: Lexicons) -> int:
    """Determiner-delimited noun heads: skip adjectives after the determiner."""
    count = 0
    i = 0
    while i < len(tokens):
        if tokens[i].lower in lex.determiners:
            j = i + 1
            while j < len(tokens) and tokens[j].lower in lex.adjectives:
                j += 1
            if j < len(tokens) and tokens[j].lower not in lex.determiners:
                count += 1
                i = j + 1
                continue
        i += 1
    return count


def _count_spatial(tokens: list[Token], lex: Lexicons) -> int:
    """Longest-match, non-overlapping phrase scan over lowered tokens."""
    words = [t.lower for t in tokens]
    count = 0
    i = 0
    n = len(words)
    while i < n:
        matched = False
        for phrase in lex.spatial_by_first.get(words[i], ()):
            k = len(phrase)
            if i + k <= n and tuple(words[i:i + k]) == phrase:
                count += 1
                i += k
                matched = True
                break
        if not matched:
            i += 1
    return count


def raw_features(text: str, lex: Lexicons | None = None) -> dict[str, float]:
    """Uncapped feature values, keyed by FEATURE_NAMES."""
    lex = lex or load_lexicons()
    tokens = tokenize(text)
    n = len(tokens)
    objects = _count_objects(tokens, lex)
    adjectives = sum(1 for t in tokens if t.lower in lex.adjectives)
    return {
        "prompt_length": float(n),
        "token_rarity": (sum(_rarity(t.lower, lex) for t in tokens) / n) if n else 0.0,
        "num_objects": float(objects),
        "abstractness": float(sum(1 for t in tokens if t.lower in lex.abstract)),
        "attribute_density": adjectives / max(1, objects),
        "spatial_relations": float(_count_spatial(tokens, lex)),
        "action_verbs": float(sum(1 for t in tokens if t.lower in lex.actions)),
        "named_entities": float(sum(
            1 for t in tokens if t.raw[0].isupper() and not t.sentence_initial)),
    }


def features(text: str, lex: Lexicons | None = None) -> tuple[float, ...]:
    """Normalized feature vector: min(raw / cap, 1) per FEATURE_NAMES order."""
    raw = raw_features(text, lex)
    return tuple(min(raw[name] / cap, 1.0)
                 for name, cap in zip(FEATURE_NAMES, FEATURE_CAPS))


def check_weights(weights) -> tuple[float, ...]:
    weights = tuple(float(w) for w in weights)
    if len(weights) != len(FEATURE_NAMES):
        raise RouterError(f"weights: expected {len(FEATURE_NAMES)} values")
    if any(w < 0 for w in weights):
        raise RouterError("weights: must be non-negative")
    if abs(sum(weights) - 1.0) > 1e-9:
        raise RouterError("weights: must sum to 1")
    return weights


def hardness(text: str, weights=None, lex: Lexicons | None = None) -> float:
    """Weighted sum of normalized features; always lands in [0, 1]."""
    weights = DEFAULT_WEIGHTS if weights is None else check_weights(weights)
    vec = features(text, lex)
    return min(1.0, max(0.0, sum(w * f for w, f in zip(weights, vec))))


def tune_weights(corpus, levels=(0.0, 1.0, 2.0)):
    """Exhaustive grid search for routing weights on a labeled corpus.

    corpus is a list of (text, label) with label 1 for prompts that should
    bypass to the heavy model. Every weight vector on the normalized grid is
    scored by balanced accuracy at its best threshold; ties keep the first
    vector in enumeration order. Returns (weights, threshold, balanced_acc).
    """
    labels = np.array([int(label) for _, label in corpus], dtype=bool)
    if len(corpus) < 2 or labels.all() or not labels.any():
        raise RouterError("degenerate-corpus: need both hard and easy examples")
    lex = load_lexicons()
    mat = np.array([features(text, lex) for text, _ in corpus])
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos

    best = None  # (acc, weights, threshold)
    for combo in itertools.product(levels, repeat=len(FEATURE_NAMES)):
        total = sum(combo)
        if total <= 0:
            continue
        weights = tuple(value / total for value in combo)
        scores = mat @ np.asarray(weights)
        cuts = np.unique(scores)
        candidates = np.concatenate(([cuts[0] - 1.0], (cuts[:-1] + cuts[1:]) / 2.0,
                                     [cuts[-1] + 1.0]))
        # predict hard when score > threshold
        pred = scores[None, :] > candidates[:, None]
        tpr = (pred & labels).sum(axis=1) / n_pos
        tnr = (~pred & ~labels).sum(axis=1) / n_neg
        acc = (tpr + tnr) / 2.0
        idx = int(np.argmax(acc))
        if best is None or acc[idx] > best[0] + 1e-12:
            best = (float(acc[idx]), weights, float(candidates[idx]))
    acc, weights, threshold = best
    return weights, threshold, acc
