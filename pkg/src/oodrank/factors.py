"""Factor scores over (example, attribution) and the explanation-free baselines.

Convention: a higher factor value means more heuristic-like behaviour, so the
model with the higher mean factor is predicted to be worse out of domain. Baselines
use the opposite convention (higher accuracy/confidence means better).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .corpus import Example, segment_slices


class InapplicableFactor(ValueError):
    """The example lacks the metadata a factor needs."""


class FactorKind(str, Enum):
    WINDOW = "WINDOW"
    MAX_DIFF = "MAX_DIFF"
    SUM_DIFF = "SUM_DIFF"
    INDEX_DIFF = "INDEX_DIFF"
    FIRST_TOK = "FIRST_TOK"
    CONST = "CONST"
    SWAP_AVG = "SWAP_AVG"
    SWAP_MAX_DIFF = "SWAP_MAX_DIFF"

    @property
    def required_meta(self) -> tuple[str, ...]:
        return _REQUIRED_META[self]


_REQUIRED_META = {
    FactorKind.WINDOW: ("feature_index",),
    FactorKind.MAX_DIFF: (),
    FactorKind.SUM_DIFF: (),
    FactorKind.INDEX_DIFF: ("shared_index_pairs",),
    FactorKind.FIRST_TOK: ("separator_index",),
    FactorKind.CONST: ("control_index",),
    FactorKind.SWAP_AVG: ("swap_indices_a", "swap_indices_b"),
    FactorKind.SWAP_MAX_DIFF: ("swap_indices_a", "swap_indices_b"),
}

_ALIASES = {"IRREG": FactorKind.WINDOW, "VERB": FactorKind.WINDOW, "VERG": FactorKind.WINDOW,
            "ADJ": FactorKind.WINDOW}


def parse_factor(name: str) -> FactorKind:
    key = name.strip().upper().replace("-", "_")
    if key in _ALIASES:
        return _ALIASES[key]
    try:
        return FactorKind(key)
    except ValueError:
        choices = ", ".join(k.value.lower().replace("_", "-") for k in FactorKind)
        raise ValueError(f"unknown factor {name!r}; choose from {choices}") from None


def _scores(attribution) -> np.ndarray:
    return np.asarray(getattr(attribution, "scores", attribution), dtype=np.float64)


def _segments(example: Example, attribution) -> tuple[np.ndarray, np.ndarray]:
    if not example.is_pair:
        raise InapplicableFactor(f"{example.id}: pair factor on a single-segment example")
    phi = _scores(attribution)
    sa, sb = segment_slices(example)
    if len(phi) != sb.stop + 1:
        raise ValueError(f"{example.id}: {len(phi)} scores for a {sb.stop + 1}-token input")
    return phi[sa], phi[sb]


def window_factor(example: Example, attribution, half_width: int = 2) -> float:
    """Negated attribution mass within ``half_width`` tokens of the feature-critical word."""
    m = example.meta.feature_index
    if m is None:
        raise InapplicableFactor(f"{example.id}: no feature_index")
    phi = _scores(attribution)
    lo, hi = max(0, m - half_width), min(len(phi), m + half_width + 1)
    return -float(np.sum(phi[lo:hi]))


def surface_shared_pairs(example: Example) -> tuple[tuple[int, int], ...]:
    """Greedy left-to-right matching of equal surface forms between the two segments."""
    a, b = example.segments
    used: set[int] = set()
    pairs = []
    for i, tok in enumerate(a):
        for j, other in enumerate(b):
            if j not in used and tok == other:
                used.add(j)
                pairs.append((i, j))
                break
    return tuple(pairs)


def pair_factor(kind: FactorKind | str, example: Example, attribution,
                allow_surface_fallback: bool = False) -> float:
    kind = FactorKind(kind)
    if kind is FactorKind.FIRST_TOK:
        sep = example.meta.separator_index
        if sep is None or not example.is_pair:
            raise InapplicableFactor(f"{example.id}: no separator_index")
        return float(_scores(attribution)[sep])
    phi_a, phi_b = _segments(example, attribution)
    if kind is FactorKind.MAX_DIFF:
        return float(phi_a.max() - phi_b.max())
    if kind is FactorKind.SUM_DIFF:
        return float(phi_a.sum() - phi_b.sum())
    if kind is FactorKind.INDEX_DIFF:
        pairs = example.meta.shared_index_pairs
        if pairs is None:
            if not allow_surface_fallback:
                raise InapplicableFactor(f"{example.id}: no shared_index_pairs")
            pairs = surface_shared_pairs(example)
        return float(sum(phi_a[i] - phi_b[j] for i, j in pairs))
    raise ValueError(f"{kind.value} is not a general pair factor")


def dataset_factor(kind: FactorKind | str, example: Example, attribution) -> float:
    kind = FactorKind(kind)
    phi_a, phi_b = _segments(example, attribution)
    if kind is FactorKind.CONST:
        c = example.meta.control_index
        if c is None:
            raise InapplicableFactor(f"{example.id}: no control_index")
        return -float(phi_a[c])
    sa, sb = example.meta.swap_indices_a, example.meta.swap_indices_b
    if not sa or not sb:
        raise InapplicableFactor(f"{example.id}: empty or missing swap indices")
    if kind is FactorKind.SWAP_AVG:
        return -float(np.mean(np.concatenate([phi_a[list(sa)], phi_b[list(sb)]])))
    if kind is FactorKind.SWAP_MAX_DIFF:
        return float(np.abs(phi_a[list(sa)]).max() - np.abs(phi_b[list(sb)]).max())
    raise ValueError(f"{kind.value} is not a dataset-specific factor")


def factor_value(kind: FactorKind | str, example: Example, attribution, half_width: int = 2,
                 allow_surface_fallback: bool = False) -> float:
    kind = FactorKind(kind)
    if kind is FactorKind.WINDOW:
        return window_factor(example, attribution, half_width)
    if kind in (FactorKind.CONST, FactorKind.SWAP_AVG, FactorKind.SWAP_MAX_DIFF):
        return dataset_factor(kind, example, attribution)
    return pair_factor(kind, example, attribution, allow_surface_fallback)


# --------------------------------------------------------------------------
# Baselines


class BaselineKind(str, Enum):
    ACC = "ACC"
    CONF = "CONF"
    CONF_GT = "CONF_GT"
    RANDOM = "RANDOM"
    GUESS = "GUESS"

    @property
    def needs_gold(self) -> bool:
        return self in (BaselineKind.ACC, BaselineKind.CONF_GT)


def parse_baseline(name: str) -> BaselineKind:
    key = name.strip().upper().replace("-", "_")
    try:
        return BaselineKind(key)
    except ValueError:
        choices = ", ".join(k.value.lower().replace("_", "-") for k in BaselineKind)
        raise ValueError(f"unknown baseline {name!r}; choose from {choices}") from None


@dataclass(frozen=True)
class Prediction:
    predicted_class: int
    predicted_prob: float
    gold_prob: float

    @classmethod
    def from_attribution(cls, attribution, gold: int) -> "Prediction":
        p = attribution.predicted_prob
        return cls(attribution.explained_class, p, p if attribution.explained_class == gold else 1.0 - p)


def baseline_score(kind: BaselineKind | str, example: Example, prediction: Prediction,
                   rng: np.random.Generator | None = None) -> float:
    kind = BaselineKind(kind)
    if kind is BaselineKind.GUESS:
        raise ValueError("GUESS is a suite-level baseline; use evaluation.guess_baseline")
    if kind.needs_gold and example.label not in (0, 1):
        raise ValueError(f"{example.id}: {kind.value} needs a gold label")
    if kind is BaselineKind.ACC:
        return float(prediction.predicted_class == example.label)
    if kind is BaselineKind.CONF:
        return float(prediction.predicted_prob)
    if kind is BaselineKind.CONF_GT:
        return float(prediction.gold_prob)
    if rng is None:
        raise ValueError("RANDOM baseline needs an explicit generator")
    return float(rng.uniform())


def factor_values(kind: FactorKind | str, examples: Sequence[Example], attributions: Sequence) -> np.ndarray:
    return np.array([factor_value(kind, ex, at) for ex, at in zip(examples, attributions)])
