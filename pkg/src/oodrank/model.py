"""Small differentiable bag-of-embeddings classifiers written directly in numpy.

All three architectures pool token embeddings into one vector and map it to two
logits. Embeddings are the differentiable input: every forward pass can start from
an embedding tensor instead of token ids, which is what Integrated Gradients and
the finite-difference checks need.

    MEAN_EMBED_LINEAR   mean(e_t) -> W_out
    MEAN_EMBED_MLP      mean(e_t) -> tanh layers -> W_out
    ATTN_POOL_MLP       softmax(e_t . q + pos_t)-weighted sum -> tanh layers -> W_out
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import MASK_ID, Dataset, Example, Vocabulary, flatten, inoculation_mix

log = logging.getLogger(__name__)


class TrainingDivergence(FloatingPointError):
    def __init__(self, step: int, loss: float):
        super().__init__(f"training diverged at step {step} (loss={loss})")
        self.step = step


class Architecture(str, Enum):
    MEAN_EMBED_LINEAR = "MEAN_EMBED_LINEAR"
    MEAN_EMBED_MLP = "MEAN_EMBED_MLP"
    ATTN_POOL_MLP = "ATTN_POOL_MLP"


@dataclass(frozen=True)
class ModelSpec:
    architecture: Architecture
    vocab_size: int
    embed_dim: int = 16
    hidden_dims: tuple[int, ...] = (16,)
    seed: int = 0
    max_len: int = 32

    def __post_init__(self):
        object.__setattr__(self, "architecture", Architecture(self.architecture))
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if self.embed_dim < 2:
            raise ValueError(f"embed_dim must be >= 2, got {self.embed_dim}")
        if self.vocab_size < 1:
            raise ValueError("vocab_size must be positive")
        if any(h < 1 for h in self.hidden_dims):
            raise ValueError("hidden layer sizes must be positive")
        if self.architecture is Architecture.MEAN_EMBED_LINEAR:
            if self.hidden_dims:
                raise ValueError("MEAN_EMBED_LINEAR takes no hidden layers")
        elif not self.hidden_dims:
            raise ValueError(f"{self.architecture.value} needs at least one hidden layer")

    def layout(self) -> list[tuple[str, tuple[int, ...]]]:
        shapes: list[tuple[str, tuple[int, ...]]] = [("embedding", (self.vocab_size, self.embed_dim))]
        if self.architecture is Architecture.ATTN_POOL_MLP:
            shapes += [("attn_query", (self.embed_dim,)), ("pos_bias", (self.max_len,))]
        width = self.embed_dim
        for i, h in enumerate(self.hidden_dims):
            shapes += [(f"W{i}", (h, width)), (f"b{i}", (h,))]
            width = h
        shapes += [("W_out", (2, width)), ("b_out", (2,))]
        return shapes

    def to_json(self) -> dict:
        d = asdict(self)
        d["architecture"] = self.architecture.value
        d["hidden_dims"] = list(self.hidden_dims)
        return d


@dataclass
class TrainingHistory:
    losses: list[float]
    train_accuracy: float
    steps: int


class Model:
    """Parameters live in one flat vector; ``self.p`` holds named views into it."""

    def __init__(self, spec: ModelSpec, parameters: np.ndarray, vocab: Vocabulary | None = None,
                 history: TrainingHistory | None = None):
        self.spec = spec
        self.parameters = np.array(parameters, dtype=np.float64)
        self.vocab = vocab
        self.history = history
        self.p: dict[str, np.ndarray] = {}
        offset = 0
        for name, shape in spec.layout():
            size = int(np.prod(shape))
            self.p[name] = self.parameters[offset:offset + size].reshape(shape)
            offset += size
        if offset != self.parameters.size:
            raise ValueError(f"parameter vector has {self.parameters.size} entries, spec needs {offset}")
        if vocab is not None and len(vocab) != spec.vocab_size:
            raise ValueError("vocabulary size does not match spec")

    @property
    def embedding(self) -> np.ndarray:
        return self.p["embedding"]

    @property
    def mask_embedding(self) -> np.ndarray:
        return self.p["embedding"][MASK_ID]

    @property
    def n_hidden(self) -> int:
        return len(self.spec.hidden_dims)

    def copy(self) -> "Model":
        return Model(self.spec, self.parameters.copy(), self.vocab, self.history)

    # ---- forward / backward over embedding inputs

    def forward(self, X: np.ndarray, valid: np.ndarray | None = None):
        """Logits for embedded inputs ``X`` of shape (B, T, d). ``valid`` (B, T) marks
        real (non-padding) positions. Returns (logits, cache)."""
        B, T, _ = X.shape
        if T > self.spec.max_len:
            raise ValueError(f"sequence length {T} exceeds max_len {self.spec.max_len}")
        valid = np.ones((B, T)) if valid is None else valid.astype(np.float64)
        if self.spec.architecture is Architecture.ATTN_POOL_MLP:
            scores = X @ self.p["attn_query"] + self.p["pos_bias"][:T]
            scores = np.where(valid > 0, scores, -np.inf)
            scores = scores - scores.max(axis=1, keepdims=True)
            w = np.exp(scores)
            w = w / w.sum(axis=1, keepdims=True)
        else:
            w = valid / valid.sum(axis=1, keepdims=True)
        h = np.einsum("bt,btd->bd", w, X)
        acts = [h]
        for i in range(self.n_hidden):
            h = np.tanh(h @ self.p[f"W{i}"].T + self.p[f"b{i}"])
            acts.append(h)
        logits = h @ self.p["W_out"].T + self.p["b_out"]
        return logits, (X, w, acts)

    def backward(self, cache, G: np.ndarray, want_params: bool = True):
        """Backpropagate ``G = dL/dlogits`` (B, 2). Returns (dX, param_grads)."""
        X, w, acts = cache
        grads: dict[str, np.ndarray] = {}
        if want_params:
            grads["W_out"] = G.T @ acts[-1]
            grads["b_out"] = G.sum(axis=0)
        dh = G @ self.p["W_out"]
        for i in reversed(range(self.n_hidden)):
            dz = dh * (1.0 - acts[i + 1] ** 2)
            if want_params:
                grads[f"W{i}"] = dz.T @ acts[i]
                grads[f"b{i}"] = dz.sum(axis=0)
            dh = dz @ self.p[f"W{i}"]
        dX = w[:, :, None] * dh[:, None, :]
        if self.spec.architecture is Architecture.ATTN_POOL_MLP:
            dw = np.einsum("btd,bd->bt", X, dh)
            ds = w * (dw - (w * dw).sum(axis=1, keepdims=True))
            dX = dX + ds[:, :, None] * self.p["attn_query"]
            if want_params:
                grads["attn_query"] = np.einsum("bt,btd->d", ds, X)
                pos = np.zeros(self.spec.max_len)
                pos[: X.shape[1]] = ds.sum(axis=0)
                grads["pos_bias"] = pos
        return dX, grads

    # ---- id-level helpers

    def encode(self, example: Example) -> np.ndarray:
        if self.vocab is None:
            raise ValueError("model has no vocabulary attached")
        if not example.segments or any(len(s) == 0 for s in example.segments):
            raise ValueError(f"{example.id}: empty segment")
        return self.vocab.encode(flatten(example))

    def logits_ids(self, ids: np.ndarray, valid: np.ndarray | None = None) -> np.ndarray:
        ids = np.atleast_2d(ids)
        return self.forward(self.embedding[ids], valid)[0]

    def proba_ids(self, ids: np.ndarray, valid: np.ndarray | None = None, batch: int = 4096) -> np.ndarray:
        ids = np.atleast_2d(ids)
        out = []
        for start in range(0, ids.shape[0], batch):
            v = None if valid is None else valid[start:start + batch]
            out.append(softmax(self.logits_ids(ids[start:start + batch], v)))
        return np.concatenate(out) if out else np.zeros((0, 2))


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def init(spec: ModelSpec, vocab: Vocabulary | None = None) -> Model:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases, seeded by ``spec.seed``."""
    rng = np.random.default_rng(spec.seed)
    chunks = []
    for name, shape in spec.layout():
        if name.startswith("b") or name == "pos_bias":
            chunks.append(np.zeros(shape))
            continue
        fan_in = shape[-1] if len(shape) > 1 else shape[0]
        bound = 1.0 / np.sqrt(fan_in)
        chunks.append(rng.uniform(-bound, bound, size=shape))
    return Model(spec, np.concatenate([c.ravel() for c in chunks]), vocab)


def predict_proba(model: Model, example: Example) -> tuple[float, float]:
    p = model.proba_ids(model.encode(example))[0]
    return float(p[0]), float(p[1])


def grad_wrt_embeddings(model: Model, example: Example, target_logit: int) -> np.ndarray:
    """d logit[target] / d e(x_t) for every flattened position t, shape (T, d)."""
    X = model.embedding[model.encode(example)][None]
    _, cache = model.forward(X)
    G = np.zeros((1, 2))
    G[0, target_logit] = 1.0
    dX, _ = model.backward(cache, G, want_params=False)
    return dX[0]


def _pad(seqs: Sequence[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    T = max(len(s) for s in seqs)
    ids = np.full((len(seqs), T), MASK_ID, dtype=np.int64)
    valid = np.zeros((len(seqs), T))
    for i, s in enumerate(seqs):
        ids[i, : len(s)] = s
        valid[i, : len(s)] = 1.0
    return ids, valid


def encode_dataset(model: Model, dataset: Dataset) -> tuple[np.ndarray, np.ndarray]:
    return _pad([model.encode(ex) for ex in dataset])


def predict_dataset(model: Model, dataset: Dataset) -> np.ndarray:
    """(N, 2) class probabilities."""
    if len(dataset) == 0:
        return np.zeros((0, 2))
    ids, valid = encode_dataset(model, dataset)
    return model.proba_ids(ids, valid)


def accuracy(model: Model, dataset: Dataset) -> float:
    probs = predict_dataset(model, dataset)
    return float(np.mean(probs.argmax(axis=1) == dataset.labels()))


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.1
    epochs: int = 20
    batch_size: int = 32
    l2: float = 1e-4
    momentum: float = 0.9
    seed: int = 0


def train(model: Model, dataset: Dataset, hyper: TrainConfig = TrainConfig()) -> Model:
    """Mini-batch gradient descent (with optional momentum) on mean cross-entropy.

    Returns a new model; per-epoch mean loss and final training accuracy are kept in
    ``model.history``.
    """
    if len(dataset) == 0:
        raise ValueError("cannot train on an empty dataset")
    labels = dataset.labels()
    if not np.isin(labels, (0, 1)).all():
        raise ValueError("labels must be binary")
    out = model.copy()
    ids, valid = encode_dataset(out, dataset)
    Y = np.eye(2)[labels]
    rng = np.random.default_rng(hyper.seed)
    velocity = np.zeros_like(out.parameters)
    offsets = {}
    offset = 0
    for name, shape in out.spec.layout():
        offsets[name] = (offset, offset + int(np.prod(shape)))
        offset = offsets[name][1]

    losses = []
    step = 0
    for _ in range(hyper.epochs):
        order = rng.permutation(len(dataset))
        epoch_loss = 0.0
        for start in range(0, len(order), hyper.batch_size):
            idx = order[start:start + hyper.batch_size]
            bids, bvalid = ids[idx], valid[idx]
            T = int(bvalid.sum(axis=1).max())
            bids, bvalid = bids[:, :T], bvalid[:, :T]
            X = out.embedding[bids]
            logits, cache = out.forward(X, bvalid)
            probs = softmax(logits)
            loss = -np.mean(np.log(np.clip((probs * Y[idx]).sum(axis=1), 1e-300, None)))
            step += 1
            if not np.isfinite(loss):
                raise TrainingDivergence(step, float(loss))
            G = (probs - Y[idx]) / len(idx)
            dX, grads = out.backward(cache, G)
            flat = hyper.l2 * out.parameters
            for name, g in grads.items():
                a, b = offsets[name]
                flat[a:b] += g.ravel()
            emb_grad = np.zeros_like(out.embedding)
            np.add.at(emb_grad, bids, dX)
            a, b = offsets["embedding"]
            flat[a:b] += emb_grad.ravel()
            velocity = hyper.momentum * velocity + flat
            out.parameters -= hyper.lr * velocity
            if not np.isfinite(out.parameters).all():
                raise TrainingDivergence(step, float("nan"))
            epoch_loss += loss * len(idx)
        losses.append(epoch_loss / len(dataset))
    out.history = TrainingHistory(losses, accuracy(out, dataset), step)
    return out


# --------------------------------------------------------------------------
# Suites


@dataclass(frozen=True)
class Recipe:
    """One suite member: an inoculation mix plus architecture and optimizer settings."""

    label: str
    linguistic_pct: float = 0.0
    surface_pct: float = 0.0
    architecture: str = "MEAN_EMBED_MLP"
    embed_dim: int = 16
    hidden_dims: tuple[int, ...] = (16,)
    seed: int = 0
    lr: float = 0.1
    epochs: int = 20
    batch_size: int = 32
    l2: float = 1e-4
    momentum: float = 0.9

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(self.hidden_dims))

    def spec(self, vocab_size: int) -> ModelSpec:
        return ModelSpec(Architecture(self.architecture), vocab_size, self.embed_dim,
                         self.hidden_dims, self.seed)

    def train_config(self) -> TrainConfig:
        return TrainConfig(self.lr, self.epochs, self.batch_size, self.l2, self.momentum, self.seed)

    def to_json(self) -> dict:
        d = asdict(self)
        d["hidden_dims"] = list(self.hidden_dims)
        return d

    @classmethod
    def from_json(cls, obj: dict) -> "Recipe":
        return cls(**{**obj, "hidden_dims": tuple(obj.get("hidden_dims", (16,)))})


def msgs_recipes(seed: int = 0, **overrides) -> list[Recipe]:
    """The six inoculation variants: none, 2% L, 2% S, 2% L + 1% S, 1% L + 2% S, 2% L + 2% S."""
    mixes = [("none", 0.0, 0.0), ("2L", 0.02, 0.0), ("2S", 0.0, 0.02),
             ("2L1S", 0.02, 0.01), ("1L2S", 0.01, 0.02), ("2L2S", 0.02, 0.02)]
    return [Recipe(label, l, s, seed=seed, **overrides) for label, l, s in mixes]


def pair_recipes(seed: int = 0, **overrides) -> list[Recipe]:
    """Inoculation levels on one architecture plus two architecture variants."""
    out = [Recipe(label, l, 0.0, seed=seed, **overrides)
           for label, l in (("none", 0.0), ("2L", 0.02), ("5L", 0.05), ("10L", 0.10))]
    out.append(Recipe("attn-none", architecture="ATTN_POOL_MLP", seed=seed, **overrides))
    out.append(Recipe("linear-none", architecture="MEAN_EMBED_LINEAR", hidden_dims=(), seed=seed,
                      **overrides))
    return out


@dataclass
class ModelSuite:
    labels: list[str]
    models: list[Model]
    ood_performance: list[float]
    provenance: list[dict]
    failures: dict[str, str] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.models)

    def s(self) -> dict[str, float]:
        return dict(zip(self.labels, self.ood_performance))


def build_suite(train_set: Dataset, ood_full: Dataset, recipes: Sequence[Recipe],
                pool: Dataset | None = None) -> ModelSuite:
    """Train one model per recipe and measure its accuracy on ``ood_full``.

    A recipe that fails (divergence, bad inoculation request) is dropped with a warning;
    fewer than two survivors is an error.
    """
    if len(recipes) < 2:
        raise ValueError("a suite needs at least 2 recipes to rank")
    labels = [r.label for r in recipes]
    if len(set(labels)) != len(labels):
        raise ValueError("recipe labels must be unique")
    vocab = train_set.vocabulary
    suite = ModelSuite([], [], [], [])
    for r in recipes:
        try:
            data = train_set
            if r.linguistic_pct or r.surface_pct:
                if pool is None:
                    raise ValueError("inoculation recipe without an inoculation pool")
                data = inoculation_mix(train_set, pool, r.linguistic_pct, r.surface_pct, r.seed)
            model = train(init(r.spec(len(vocab)), vocab), data, r.train_config())
        except (TrainingDivergence, ValueError) as e:
            log.warning("recipe %s failed: %s", r.label, e)
            suite.failures[r.label] = str(e)
            continue
        s = accuracy(model, ood_full)
        log.info("trained %s: train acc %.3f, OOD acc %.3f", r.label, model.history.train_accuracy, s)
        suite.labels.append(r.label)
        suite.models.append(model)
        suite.ood_performance.append(s)
        suite.provenance.append({"recipe": r.to_json(), "train_size": len(data),
                                 "train_accuracy": model.history.train_accuracy,
                                 "final_loss": model.history.losses[-1] if model.history.losses else None})
    if len(suite) < 2:
        raise ValueError(f"only {len(suite)} recipe(s) trained successfully; need at least 2")
    return suite


# --------------------------------------------------------------------------
# Checkpoints


def save_checkpoint(model: Model, path: str | Path) -> None:
    obj = {"v": 1, "spec": model.spec.to_json(),
           "vocab_hash": model.vocab.digest() if model.vocab else None,
           "parameters": model.parameters.tolist()}
    if model.history is not None:
        obj["history"] = asdict(model.history)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(obj) + "\n")


def load_checkpoint(path: str | Path, vocab: Vocabulary | None = None) -> Model:
    obj = json.loads(Path(path).read_text())
    if obj.get("v") != 1:
        raise ValueError(f"{path}: unsupported checkpoint version {obj.get('v')!r}")
    spec_d = dict(obj["spec"])
    spec = ModelSpec(Architecture(spec_d.pop("architecture")), hidden_dims=tuple(spec_d.pop("hidden_dims")),
                     **spec_d)
    if vocab is not None and obj.get("vocab_hash") not in (None, vocab.digest()):
        raise ValueError(f"{path}: checkpoint was trained with a different vocabulary")
    history = TrainingHistory(**obj["history"]) if "history" in obj else None
    return Model(spec, np.array(obj["parameters"]), vocab, history)


def file_digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]
