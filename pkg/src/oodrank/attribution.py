"""Token attributions: LIME, Kernel SHAP, exact Shapley, Integrated Gradients.

LIME and both Shapley routines see a model only through a coalition game: ``v(S)`` is
the probability of the explained class when every attributable token outside ``S`` is
replaced by the mask token. Structural tokens ([CLS]/[SEP]) are never masked and get a
score of 0 from these methods. Integrated Gradients works on embeddings directly and
scores every flattened position, structural tokens included.

Scores are always aligned with the flattened model input (see ``corpus.flatten``).
"""

from __future__ import annotations

import hashlib
import json
import logging
import warnings
from dataclasses import asdict, dataclass
from enum import Enum
from math import comb, factorial
from pathlib import Path
from typing import Iterable, Protocol

import numpy as np

from .corpus import MASK_ID, Example, attributable_positions
from .model import Model

log = logging.getLogger(__name__)

FULL_ENUM = "full"
EXACT_MAX_PLAYERS = 14
FULL_ENUM_MAX_PLAYERS = 20


class AttributionError(ValueError):
    pass


class Method(str, Enum):
    LIME = "LIME"
    KSHAP = "KSHAP"
    EXACT_SHAP = "EXACT_SHAP"
    IG = "IG"


@dataclass(frozen=True)
class Attribution:
    example_id: str
    model_label: str
    method: Method
    scores: tuple[float, ...]
    explained_class: int
    predicted_prob: float
    config_digest: str

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        object.__setattr__(self, "scores", tuple(float(x) for x in self.scores))
        if not all(np.isfinite(self.scores)):
            raise AttributionError(f"{self.example_id}: non-finite attribution scores")

    def to_json(self) -> dict:
        return {"example_id": self.example_id, "model": self.model_label, "method": self.method.value,
                "scores": list(self.scores), "explained_class": self.explained_class,
                "predicted_prob": self.predicted_prob, "config_digest": self.config_digest, "v": 1}

    @classmethod
    def from_json(cls, obj: dict) -> "Attribution":
        if obj.get("v") != 1:
            raise AttributionError(f"unsupported attribution row version {obj.get('v')!r}")
        return cls(obj["example_id"], obj["model"], Method(obj["method"]), tuple(obj["scores"]),
                   int(obj["explained_class"]), float(obj["predicted_prob"]), obj["config_digest"])


# --------------------------------------------------------------------------
# Coalition games


class Game(Protocol):
    n_players: int

    def value(self, masks: np.ndarray) -> np.ndarray:
        """``masks`` is (K, n_players) boolean; returns (K,) coalition values."""


class CoalitionGame:
    """Masking game over the attributable tokens of ``example`` for ``model``."""

    def __init__(self, model: Model, example: Example, batch: int = 4096):
        self.model = model
        self.example = example
        self.ids = model.encode(example)
        self.players = np.array(attributable_positions(example), dtype=np.int64)
        self.n_players = len(self.players)
        self.batch = batch
        probs = model.proba_ids(self.ids)[0]
        self.explained_class = int(np.argmax(probs))
        self.predicted_prob = float(probs[self.explained_class])

    def masked_ids(self, masks: np.ndarray) -> np.ndarray:
        masks = np.asarray(masks, dtype=bool)
        ids = np.tile(self.ids, (masks.shape[0], 1))
        cols = ids[:, self.players]
        ids[:, self.players] = np.where(masks, cols, MASK_ID)
        return ids

    def value(self, masks: np.ndarray) -> np.ndarray:
        masks = np.atleast_2d(np.asarray(masks, dtype=bool))
        out = np.empty(masks.shape[0])
        for start in range(0, masks.shape[0], self.batch):
            chunk = masks[start:start + self.batch]
            out[start:start + len(chunk)] = self.model.proba_ids(self.masked_ids(chunk))[:, self.explained_class]
        return out


def coalition_value(game: Game, subset: Iterable[int]) -> float:
    mask = np.zeros((1, game.n_players), dtype=bool)
    mask[0, list(subset)] = True
    return float(game.value(mask)[0])


def _bits(n: int, ints: np.ndarray) -> np.ndarray:
    return ((ints[:, None] >> np.arange(n)) & 1).astype(bool)


# --------------------------------------------------------------------------
# Method configs


def _digest(method: str, cfg) -> str:
    payload = json.dumps({"method": method, **asdict(cfg)}, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class LimeConfig:
    n_samples: int = 2000
    kernel_width: float | None = None  # None -> 0.75 * sqrt(n_players)
    ridge_lambda: float = 1e-3
    seed: int = 0


@dataclass(frozen=True)
class KernelShapConfig:
    n_samples: int | str = "auto"  # FULL_ENUM, an even sample count, or "auto"
    ridge_lambda: float = 0.0
    seed: int = 0
    auto_full_max: int = 12
    auto_samples: int = 2048


@dataclass(frozen=True)
class IGConfig:
    steps: int = 64
    target: str = "PRED_LOGIT"


@dataclass(frozen=True)
class ExactConfig:
    pass


# --------------------------------------------------------------------------
# LIME


def lime_scores(game: Game, cfg: LimeConfig = LimeConfig(), rng: np.random.Generator | None = None) -> np.ndarray:
    """Ridge-regularized weighted least squares from mask indicators to coalition values.

    Row 0 is the unperturbed input; every other row removes ``k ~ U{1..n}`` tokens.
    Samples are weighted by ``exp(-d^2 / width^2)`` where ``d`` is the cosine distance
    between the mask vector and the all-ones vector.
    """
    if cfg.n_samples < 50:
        raise AttributionError(f"LIME needs n_samples >= 50, got {cfg.n_samples}")
    n = game.n_players
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    remove = rng.integers(1, n + 1, size=cfg.n_samples - 1)
    ranks = rng.random((cfg.n_samples - 1, n)).argsort(axis=1).argsort(axis=1)
    Z = np.ones((cfg.n_samples, n), dtype=bool)
    Z[1:] = ranks >= remove[:, None]
    y = game.value(Z)
    if np.ptp(y) == 0.0:
        warnings.warn("LIME target has zero variance; returning all-zero scores", stacklevel=2)
        return np.zeros(n)

    width = cfg.kernel_width if cfg.kernel_width is not None else 0.75 * np.sqrt(n)
    active = Z.sum(axis=1)
    dist = 1.0 - np.sqrt(active / n)  # cosine distance to all-ones; zero vector -> 1
    w = np.exp(-(dist ** 2) / width ** 2)

    X = Z.astype(np.float64)
    xm = w @ X / w.sum()
    ym = w @ y / w.sum()
    Xc, yc = X - xm, y - ym
    A = (Xc * w[:, None]).T @ Xc + cfg.ridge_lambda * np.eye(n)
    b = (Xc * w[:, None]).T @ yc
    return np.linalg.solve(A, b)


# --------------------------------------------------------------------------
# Shapley


def shapley_kernel_weights(n: int, sizes: np.ndarray) -> np.ndarray:
    sizes = np.asarray(sizes)
    binom = np.array([comb(n, int(k)) for k in sizes], dtype=np.float64)
    return (n - 1) / (binom * sizes * (n - sizes))


def _constrained_wls(XtWX: np.ndarray, XtWy: np.ndarray, ridge: float) -> np.ndarray:
    k = XtWX.shape[0]
    return np.linalg.lstsq(XtWX + ridge * np.eye(k), XtWy, rcond=None)[0]


def kernel_shap_scores(game: Game, cfg: KernelShapConfig = KernelShapConfig(),
                       rng: np.random.Generator | None = None) -> np.ndarray:
    """Shapley-kernel weighted least squares with the efficiency constraint
    ``sum(scores) = v(all) - v(empty)`` enforced by eliminating the last player."""
    n = game.n_players
    ends = game.value(np.array([np.zeros(n, bool), np.ones(n, bool)]))
    v0, delta = ends[0], ends[1] - ends[0]
    if n == 1:
        return np.array([delta])

    mode = cfg.n_samples
    if mode == "auto":
        mode = FULL_ENUM if n <= cfg.auto_full_max else cfg.auto_samples
    XtWX = np.zeros((n - 1, n - 1))
    XtWy = np.zeros(n - 1)

    def accumulate(Z: np.ndarray, weights: np.ndarray) -> None:
        y = game.value(Z) - v0
        Zf = Z.astype(np.float64)
        yp = y - Zf[:, -1] * delta
        Xp = Zf[:, :-1] - Zf[:, -1:]
        Xw = Xp * weights[:, None]
        XtWX[...] += Xw.T @ Xp
        XtWy[...] += Xw.T @ yp

    if mode == FULL_ENUM:
        if n > FULL_ENUM_MAX_PLAYERS:
            raise AttributionError(
                f"FULL_ENUM kernel SHAP limited to {FULL_ENUM_MAX_PLAYERS} tokens, got {n}")
        total = 2 ** n
        for start in range(1, total - 1, 1 << 15):
            ints = np.arange(start, min(start + (1 << 15), total - 1), dtype=np.int64)
            Z = _bits(n, ints)
            accumulate(Z, shapley_kernel_weights(n, Z.sum(axis=1)))
    else:
        n_samples = int(mode)
        if n_samples < 2:
            raise AttributionError("kernel SHAP needs at least 2 samples")
        rng = rng if rng is not None else np.random.default_rng(cfg.seed)
        sizes = np.arange(1, n)
        p = shapley_kernel_weights(n, sizes) * np.array([comb(n, int(k)) for k in sizes])
        half = n_samples // 2
        k = rng.choice(sizes, size=half, p=p / p.sum())
        ranks = rng.random((half, n)).argsort(axis=1).argsort(axis=1)
        Z = ranks < k[:, None]
        Z = np.concatenate([Z, ~Z])  # antithetic: each subset with its complement
        accumulate(Z, np.ones(len(Z)))

    beta = _constrained_wls(XtWX, XtWy, cfg.ridge_lambda)
    return np.append(beta, delta - beta.sum())


def exact_shapley_scores(game: Game) -> np.ndarray:
    """Brute-force Shapley values over all 2^n coalitions."""
    n = game.n_players
    if n > EXACT_MAX_PLAYERS:
        raise AttributionError(f"exact Shapley limited to {EXACT_MAX_PLAYERS} tokens, got {n}")
    ints = np.arange(2 ** n, dtype=np.int64)
    v = game.value(_bits(n, ints))
    sizes = np.array([bin(i).count("1") for i in range(2 ** n)])
    weight = np.array([factorial(s) * factorial(n - s - 1) / factorial(n) if s < n else 0.0
                       for s in range(n + 1)])
    phi = np.zeros(n)
    for i in range(n):
        without = ints[(ints >> i) & 1 == 0]
        phi[i] = np.sum(weight[sizes[without]] * (v[without | (1 << i)] - v[without]))
    return phi


# --------------------------------------------------------------------------
# Model-facing wrappers


def _example_rng(seed: int, example: Example) -> np.random.Generator:
    # same masks for every model on one example: common random numbers across the suite
    key = int.from_bytes(hashlib.sha256(example.id.encode()).digest()[:8], "little")
    return np.random.default_rng([seed, key])


def _scatter(game: CoalitionGame, player_scores: np.ndarray) -> tuple[float, ...]:
    full = np.zeros(len(game.ids))
    full[game.players] = player_scores
    return tuple(full)


def lime(model: Model, example: Example, cfg: LimeConfig = LimeConfig(), model_label: str = "") -> Attribution:
    game = CoalitionGame(model, example)
    scores = lime_scores(game, cfg, _example_rng(cfg.seed, example))
    return Attribution(example.id, model_label, Method.LIME, _scatter(game, scores),
                       game.explained_class, game.predicted_prob, _digest("LIME", cfg))


def kernel_shap(model: Model, example: Example, cfg: KernelShapConfig = KernelShapConfig(),
                model_label: str = "") -> Attribution:
    game = CoalitionGame(model, example)
    scores = kernel_shap_scores(game, cfg, _example_rng(cfg.seed, example))
    return Attribution(example.id, model_label, Method.KSHAP, _scatter(game, scores),
                       game.explained_class, game.predicted_prob, _digest("KSHAP", cfg))


def exact_shapley(model: Model, example: Example, model_label: str = "") -> Attribution:
    game = CoalitionGame(model, example)
    scores = exact_shapley_scores(game)
    return Attribution(example.id, model_label, Method.EXACT_SHAP, _scatter(game, scores),
                       game.explained_class, game.predicted_prob, _digest("EXACT_SHAP", ExactConfig()))


def integrated_gradients(model: Model, example: Example, cfg: IGConfig = IGConfig(),
                         model_label: str = "") -> Attribution:
    """Midpoint-rule path integral of the predicted-class logit's gradient, from the
    all-mask embedding sequence to the input, collapsed per token by a dot product."""
    if cfg.steps < 8:
        raise AttributionError(f"IG needs steps >= 8, got {cfg.steps}")
    if cfg.target != "PRED_LOGIT":
        raise AttributionError(f"unsupported IG target {cfg.target!r}")
    ids = model.encode(example)
    x = model.embedding[ids]
    base = np.broadcast_to(model.mask_embedding, x.shape)
    probs = model.proba_ids(ids)[0]
    target = int(np.argmax(probs))
    alphas = (np.arange(cfg.steps) + 0.5) / cfg.steps
    path = base[None] + alphas[:, None, None] * (x - base)[None]
    _, cache = model.forward(path)
    G = np.zeros((cfg.steps, 2))
    G[:, target] = 1.0
    grads, _ = model.backward(cache, G, want_params=False)
    bad = ~np.isfinite(grads).all(axis=(1, 2))
    if bad.any():
        raise AttributionError(f"{example.id}: non-finite gradient at IG step {int(np.argmax(bad))}")
    scores = ((x - base) * grads.mean(axis=0)).sum(axis=1)
    return Attribution(example.id, model_label, Method.IG, tuple(scores), target,
                       float(probs[target]), _digest("IG", cfg))


def attribute(method: Method | str, model: Model, example: Example, cfg=None, model_label: str = "") -> Attribution:
    method = Method(method)
    if method is Method.LIME:
        return lime(model, example, cfg or LimeConfig(), model_label)
    if method is Method.KSHAP:
        return kernel_shap(model, example, cfg or KernelShapConfig(), model_label)
    if method is Method.EXACT_SHAP:
        return exact_shapley(model, example, model_label)
    return integrated_gradients(model, example, cfg or IGConfig(), model_label)


def config_digest(method: Method | str, cfg=None) -> str:
    method = Method(method)
    default = {Method.LIME: LimeConfig(), Method.KSHAP: KernelShapConfig(),
               Method.EXACT_SHAP: ExactConfig(), Method.IG: IGConfig()}[method]
    return _digest(method.value, cfg or default)


def normalize(attribution: Attribution, mode: str = "RAW") -> Attribution:
    mode = mode.upper()
    if mode == "RAW":
        return attribution
    if mode != "L1":
        raise ValueError(f"unknown normalization {mode!r}")
    total = float(np.sum(np.abs(attribution.scores)))
    if total == 0.0:
        warnings.warn(f"{attribution.example_id}: all-zero scores left unnormalized", stacklevel=2)
        return attribution
    return Attribution(attribution.example_id, attribution.model_label, attribution.method,
                       tuple(np.asarray(attribution.scores) / total), attribution.explained_class,
                       attribution.predicted_prob, attribution.config_digest)


# --------------------------------------------------------------------------
# Store


def write_store(path: str | Path, rows: Iterable[Attribution]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row.to_json()) + "\n")


def read_store(path: str | Path, strict: bool = True) -> list[Attribution]:
    """Parse an attribution store. With ``strict=False`` unparseable lines (e.g. a
    truncated final line from an interrupted run) are skipped instead of raising."""
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rows.append(Attribution.from_json(json.loads(line)))
            except (json.JSONDecodeError, KeyError, ValueError, TypeError) as e:
                if strict:
                    raise AttributionError(f"{path}:{lineno}: bad attribution row ({e})") from None
                log.warning("%s:%d: skipping unreadable row", path, lineno)
    return rows
