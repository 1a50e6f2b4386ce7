"""Synthetic in-domain / OOD datasets with planted heuristics, plus JSONL persistence.

Four generators are provided:

* ``gen_msgs``: single-sentence classification where a linguistic feature and the
  surface word "the" are conflated in training and pulled apart out of domain.
* ``gen_pair_subseq``: premise/hypothesis pairs where the hypothesis is a slice of
  the premise; a negator outside the slice flips the label.
* ``gen_pair_control``: the hypothesis is the first clause of the premise; a
  premise-initial control word ("unless", "if", ...) flips the label.
* ``gen_pair_swap``: two sentences with the same words, where two marked content
  words are either in the same order (paraphrase) or swapped (not).

Every generator is a pure function of its parameters and seed.
"""

from __future__ import annotations

import hashlib
import json
import logging
import warnings
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, NamedTuple, Sequence

import numpy as np

log = logging.getLogger(__name__)

FORMAT_VERSION = 1

MASK = "[MASK]"
CLS = "[CLS]"
SEP = "[SEP]"
RESERVED = (MASK, CLS, SEP)
MASK_ID, CLS_ID, SEP_ID = 0, 1, 2

SPLITS = ("train", "ood_full", "ood_population", "inoc_pool")


class DatasetFormatError(ValueError):
    """Raised for malformed dataset files or invalid examples."""


# --------------------------------------------------------------------------
# Vocabulary

WORD_CLASSES: dict[str, tuple[str, ...]] = {
    "the": ("the",),
    "irregular_past": (
        "drew", "slept", "ate", "ran", "wrote", "sang", "swam", "threw", "caught",
        "bought", "brought", "taught", "fought", "sought", "spoke", "broke", "chose",
        "froze", "drove", "rode", "rose", "wore", "tore", "bore", "hid", "bit",
        "shook", "took", "forgot", "began",
    ),
    "regular_past": (
        "walked", "jumped", "played", "cooked", "cleaned", "painted", "watched",
        "visited", "helped", "opened", "closed", "called", "asked", "answered",
        "carried", "followed", "pushed", "pulled", "kicked", "liked", "loved",
        "hated", "moved", "washed", "fixed", "filled", "kissed", "missed", "passed",
        "touched",
    ),
    "ing_verb": (
        "eating", "drawing", "sleeping", "running", "writing", "singing", "swimming",
        "reading", "cooking", "painting", "watching", "visiting", "helping",
        "opening", "carrying", "following", "pushing", "pulling", "washing", "fixing",
    ),
    "base_verb": (
        "eat", "draw", "sleep", "run", "write", "sing", "swim", "read", "cook",
        "paint", "watch", "visit", "help", "open", "carry", "follow", "push", "pull",
        "wash", "fix",
    ),
    "progressive_aux": ("was", "is"),
    "modal": ("can", "will", "might", "should", "must"),
    "adjective": (
        "red", "happy", "tall", "small", "old", "young", "quiet", "bright", "heavy",
        "clever", "lazy", "brave", "green", "soft", "angry", "calm", "proud", "shy",
        "rich", "strange",
    ),
    "quantifier": ("many", "few", "two", "three", "several", "four", "five", "six"),
    "noun": (
        "doctor", "lawyer", "actor", "student", "author", "teacher", "artist",
        "baker", "farmer", "singer", "dancer", "pilot", "judge", "nurse", "chef",
        "banker", "senator", "manager", "tourist", "athlete", "box", "book", "car",
        "table", "window", "picture", "letter", "song", "cake", "ball", "door",
        "lamp", "chair", "flower", "horse", "river", "garden", "house", "bridge",
        "tree",
    ),
    "determiner": ("a", "this", "that", "every", "one", "some", "each", "my", "her", "his"),
    "preposition": ("near", "behind", "beside", "under", "above", "by", "with", "at", "in", "on"),
    "adverb": (
        "quickly", "slowly", "yesterday", "today", "often", "rarely", "quietly",
        "loudly", "again", "later",
    ),
    "negator": ("not", "never", "falsely", "hardly"),
    "affirmer": ("truly", "surely", "clearly", "indeed"),
    "control_word": ("unless", "if", "whether", "lest"),
    "connective": ("since", "because", "after", "although", "as"),
    "place": (
        "california", "texas", "paris", "london", "rome", "boston", "denver",
        "chicago", "seattle", "dallas", "miami", "tokyo", "berlin", "madrid", "vienna",
    ),
    "function": ("from", "to", "over", "what", "makes", "become", "prefers", ",", "?"),
}


class Token(NamedTuple):
    surface: str
    id: int


@dataclass(frozen=True)
class Vocabulary:
    """Bijective token table. Ids 0..2 are reserved for [MASK], [CLS], [SEP]."""

    tokens: tuple[str, ...]
    classes: dict[str, tuple[str, ...]] = field(default_factory=dict, compare=True, hash=False)

    def __post_init__(self):
        if tuple(self.tokens[: len(RESERVED)]) != RESERVED:
            raise DatasetFormatError(f"vocabulary must start with {RESERVED}")
        if len(set(self.tokens)) != len(self.tokens):
            raise DatasetFormatError("vocabulary has duplicate tokens")
        object.__setattr__(self, "_index", {t: i for i, t in enumerate(self.tokens)})

    def __len__(self) -> int:
        return len(self.tokens)

    def id_of(self, surface: str) -> int:
        """Token id; unknown surfaces map to the mask id."""
        return self._index.get(surface, MASK_ID)

    def __contains__(self, surface: str) -> bool:
        return surface in self._index

    def token(self, i: int) -> Token:
        return Token(self.tokens[i], i)

    def encode(self, surfaces: Iterable[str]) -> np.ndarray:
        return np.array([self.id_of(s) for s in surfaces], dtype=np.int64)

    def words(self, cls: str) -> tuple[str, ...]:
        return self.classes[cls]

    def digest(self) -> str:
        return hashlib.sha256("\n".join(self.tokens).encode()).hexdigest()[:16]

    def to_json(self) -> dict:
        return {"v": FORMAT_VERSION, "tokens": list(self.tokens),
                "classes": {k: list(v) for k, v in self.classes.items()}}

    @classmethod
    def from_json(cls, obj: dict) -> "Vocabulary":
        if obj.get("v") != FORMAT_VERSION:
            raise DatasetFormatError(f"unsupported vocabulary version {obj.get('v')!r}")
        return cls(tuple(obj["tokens"]), {k: tuple(v) for k, v in obj.get("classes", {}).items()})

    @classmethod
    def from_classes(cls, classes: dict[str, Sequence[str]]) -> "Vocabulary":
        tokens = list(RESERVED)
        seen: dict[str, str] = {}
        for name, words in classes.items():
            for w in words:
                if w in seen:
                    raise DatasetFormatError(f"word {w!r} is in both {seen[w]!r} and {name!r}")
                seen[w] = name
                tokens.append(w)
        return cls(tuple(tokens), {k: tuple(v) for k, v in classes.items()})


def default_vocabulary() -> Vocabulary:
    return Vocabulary.from_classes(WORD_CLASSES)


# --------------------------------------------------------------------------
# Examples and datasets


@dataclass(frozen=True)
class Meta:
    """Factor metadata. Indices address positions inside a segment, except
    ``separator_index`` which addresses the flattened ``[CLS] a [SEP] b [SEP]`` sequence."""

    feature_index: int | None = None
    shared_index_pairs: tuple[tuple[int, int], ...] | None = None
    swap_indices_a: tuple[int, ...] | None = None
    swap_indices_b: tuple[int, ...] | None = None
    control_index: int | None = None
    separator_index: int | None = None

    def to_json(self) -> dict:
        out: dict = {}
        if self.feature_index is not None:
            out["feature_index"] = self.feature_index
        if self.shared_index_pairs is not None:
            out["shared_index_pairs"] = [list(p) for p in self.shared_index_pairs]
        if self.swap_indices_a is not None:
            out["swap_indices_a"] = list(self.swap_indices_a)
        if self.swap_indices_b is not None:
            out["swap_indices_b"] = list(self.swap_indices_b)
        if self.control_index is not None:
            out["control_index"] = self.control_index
        if self.separator_index is not None:
            out["separator_index"] = self.separator_index
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "Meta":
        pairs = obj.get("shared_index_pairs")
        swap_a = obj.get("swap_indices_a")
        swap_b = obj.get("swap_indices_b")
        return cls(
            feature_index=obj.get("feature_index"),
            shared_index_pairs=None if pairs is None else tuple((int(i), int(j)) for i, j in pairs),
            swap_indices_a=None if swap_a is None else tuple(int(i) for i in swap_a),
            swap_indices_b=None if swap_b is None else tuple(int(i) for i in swap_b),
            control_index=obj.get("control_index"),
            separator_index=obj.get("separator_index"),
        )


@dataclass(frozen=True)
class Example:
    id: str
    segments: tuple[tuple[str, ...], ...]
    label: int
    meta: Meta = Meta()

    @property
    def is_pair(self) -> bool:
        return len(self.segments) == 2

    def validate(self) -> None:
        if len(self.segments) not in (1, 2):
            raise DatasetFormatError(f"{self.id}: expected 1 or 2 segments, got {len(self.segments)}")
        if any(len(seg) == 0 for seg in self.segments):
            raise DatasetFormatError(f"{self.id}: empty segment")
        if self.label not in (0, 1):
            raise DatasetFormatError(f"{self.id}: label must be 0 or 1, got {self.label!r}")
        m = self.meta
        a = self.segments[0]
        b = self.segments[1] if self.is_pair else ()

        def check(idx, seg, what):
            if not 0 <= idx < len(seg):
                raise DatasetFormatError(f"{self.id}: {what}={idx} out of range")

        if m.feature_index is not None:
            check(m.feature_index, a, "feature_index")
        if m.control_index is not None:
            check(m.control_index, a, "control_index")
        for i in m.swap_indices_a or ():
            check(i, a, "swap_indices_a")
        for j in m.swap_indices_b or ():
            check(j, b, "swap_indices_b")
        for i, j in m.shared_index_pairs or ():
            check(i, a, "shared_index_pairs[a]")
            check(j, b, "shared_index_pairs[b]")
        if self.is_pair:
            if m.separator_index is None:
                raise DatasetFormatError(f"{self.id}: two-segment example without separator_index")
            if m.separator_index != len(a) + 1:
                raise DatasetFormatError(
                    f"{self.id}: separator_index={m.separator_index}, expected {len(a) + 1}")

    def to_json(self) -> dict:
        return {"id": self.id, "segments": [list(s) for s in self.segments],
                "label": self.label, "meta": self.meta.to_json(), "v": FORMAT_VERSION}

    def content_key(self) -> tuple:
        return self.segments


def flatten(example: Example) -> list[str]:
    """Model input order: a single segment as-is, pairs as ``[CLS] a [SEP] b [SEP]``."""
    if not example.is_pair:
        return list(example.segments[0])
    a, b = example.segments
    return [CLS, *a, SEP, *b, SEP]


def attributable_positions(example: Example) -> list[int]:
    """Flattened positions of real tokens (everything except [CLS]/[SEP])."""
    if not example.is_pair:
        return list(range(len(example.segments[0])))
    la, lb = map(len, example.segments)
    return list(range(1, 1 + la)) + list(range(la + 2, la + 2 + lb))


def segment_slices(example: Example) -> tuple[slice, slice | None]:
    if not example.is_pair:
        return slice(0, len(example.segments[0])), None
    la, lb = map(len, example.segments)
    return slice(1, 1 + la), slice(la + 2, la + 2 + lb)


@dataclass(frozen=True)
class Dataset:
    name: str
    split: str
    examples: tuple[Example, ...]
    vocabulary: Vocabulary
    provenance: dict = field(default_factory=dict, hash=False)

    def __post_init__(self):
        if self.split not in SPLITS:
            raise DatasetFormatError(f"unknown split {self.split!r}; expected one of {SPLITS}")
        ids = [ex.id for ex in self.examples]
        if len(set(ids)) != len(ids):
            raise DatasetFormatError(f"{self.name}/{self.split}: duplicate example ids")

    def __len__(self) -> int:
        return len(self.examples)

    def __iter__(self):
        return iter(self.examples)

    def labels(self) -> np.ndarray:
        return np.array([ex.label for ex in self.examples], dtype=np.int64)

    def by_id(self) -> dict[str, Example]:
        return {ex.id: ex for ex in self.examples}

    def digest(self) -> str:
        h = hashlib.sha256()
        for ex in self.examples:
            h.update(json.dumps(ex.to_json(), sort_keys=True).encode())
            h.update(b"\n")
        return h.hexdigest()[:16]

    def with_examples(self, examples: Sequence[Example], split: str | None = None, **prov) -> "Dataset":
        return Dataset(self.name, split or self.split, tuple(examples), self.vocabulary,
                       {**self.provenance, **prov})


# --------------------------------------------------------------------------
# Heuristics: the shortcut each task plants


def _is_slice(a: Sequence[str], b: Sequence[str]) -> bool:
    n = len(b)
    return any(tuple(a[i:i + n]) == tuple(b) for i in range(len(a) - n + 1))


def msgs_heuristic(ex: Example) -> int:
    return int("the" in ex.segments[0])


def slice_heuristic(ex: Example) -> int:
    return int(_is_slice(ex.segments[0], ex.segments[1]))


def overlap_heuristic(ex: Example) -> int:
    return int(sorted(ex.segments[0]) == sorted(ex.segments[1]))


HEURISTICS: dict[str, Callable[[Example], int]] = {
    "msgs": msgs_heuristic,
    "pair_subseq": slice_heuristic,
    "pair_control": slice_heuristic,
    "pair_swap": overlap_heuristic,
}


def heuristic_for(dataset: Dataset) -> Callable[[Example], int]:
    gen = dataset.provenance.get("generator")
    if gen not in HEURISTICS:
        raise DatasetFormatError(f"no planted heuristic known for generator {gen!r}")
    return HEURISTICS[gen]


# --------------------------------------------------------------------------
# Generators


class FeatureKind(str, Enum):
    MORPH = "MORPH"
    VERB = "VERB"
    ADJECT = "ADJECT"


MSGS_CLASSES = ("the", "irregular_past", "regular_past", "ing_verb", "base_verb",
                "progressive_aux", "modal", "adjective", "quantifier", "noun",
                "determiner", "preposition", "adverb")
PAIR_CLASSES = ("the", "irregular_past", "regular_past", "noun", "determiner",
                "preposition", "adverb", "negator", "affirmer", "control_word",
                "connective", "place", "adjective", "function")


def _require_classes(vocab: Vocabulary, needed: Iterable[str]) -> None:
    missing = [c for c in needed if not vocab.classes.get(c)]
    if missing:
        raise DatasetFormatError(f"vocabulary lacks required word classes: {', '.join(missing)}")
    if "the" not in vocab.classes.get("the", ()):
        raise DatasetFormatError('vocabulary lacks the surface word "the"')


def _check_counts(**counts: int) -> None:
    for name, n in counts.items():
        if n < 10:
            raise ValueError(f"{name} must be >= 10, got {n}")


class _Sampler:
    def __init__(self, vocab: Vocabulary, seed: int | Sequence[int],
                 lexicon: dict[str, int] | None = None):
        self.vocab = vocab
        self.rng = np.random.default_rng(seed)
        self.lexicon = lexicon or {}

    def pick(self, cls: str, exclude: Iterable[str] = ()) -> str:
        ex = set(exclude)
        words = self.vocab.words(cls)[: self.lexicon.get(cls)]
        words = [w for w in words if w not in ex]
        return words[int(self.rng.integers(len(words)))]

    def coin(self, p: float = 0.5) -> bool:
        return bool(self.rng.random() < p)

    def balanced_labels(self, n: int) -> list[int]:
        labels = [i % 2 for i in range(n)]
        self.rng.shuffle(labels)
        return labels


def _msgs_sentence(s: _Sampler, kind: FeatureKind, feature: bool, the: bool) -> tuple[list[str], int]:
    toks: list[str] = []
    if s.coin():
        toks.append(s.pick("adverb"))
    toks += [s.pick("determiner"), s.pick("noun")]
    if kind is FeatureKind.MORPH:
        m = len(toks)
        toks.append(s.pick("irregular_past" if feature else "regular_past"))
    elif kind is FeatureKind.VERB:
        toks.append(s.pick("progressive_aux" if feature else "modal"))
        m = len(toks)
        toks.append(s.pick("ing_verb" if feature else "base_verb"))
    else:
        toks.append(s.pick("irregular_past" if s.coin() else "regular_past"))
    toks.append(s.pick("determiner"))
    if kind is FeatureKind.ADJECT:
        m = len(toks)
        toks.append(s.pick("adjective" if feature else "quantifier"))
    toks.append(s.pick("noun"))
    # "the" sits in the trailing prepositional phrase, >= 3 positions past the feature slot
    toks += [s.pick("preposition"), "the" if the else s.pick("determiner"), s.pick("noun")]
    if s.coin():
        toks.append(s.pick("adverb"))
    return toks, m


MSGS_SLOT_CLASSES = {
    FeatureKind.MORPH: ("irregular_past", "regular_past"),
    FeatureKind.VERB: ("ing_verb", "base_verb"),
    FeatureKind.ADJECT: ("adjective", "quantifier"),
}


def gen_msgs(feature_kind: FeatureKind | str, n_train: int, n_ood: int, seed: int,
             vocab: Vocabulary | None = None, feature_lexicon: int | None = 3) -> tuple[Dataset, Dataset]:
    """Ambiguous training data and disambiguating OOD data.

    Training: label 1 iff the linguistic feature and "the" are both present (otherwise
    both are absent). OOD: label 1 examples carry the feature without "the"; label 0
    examples carry "the" without the feature. ``feature_index`` marks the feature slot
    in every example (the slot holds a non-feature word in negatives).
    """
    kind = FeatureKind(feature_kind)
    vocab = vocab or default_vocabulary()
    _require_classes(vocab, MSGS_CLASSES)
    _check_counts(n_train=n_train, n_ood=n_ood)
    name = f"msgs-{kind.value.lower()}"
    prov = {"generator": "msgs", "task": name, "seed": seed,
            "params": {"feature_kind": kind.value, "n_train": n_train, "n_ood": n_ood,
                       "feature_lexicon": feature_lexicon},
            "synthetic_templates": True}

    def build(split: str, n: int, stream: int, ambiguous: bool) -> Dataset:
        lex = {c: feature_lexicon for c in MSGS_SLOT_CLASSES[kind]} if feature_lexicon else None
        s = _Sampler(vocab, [seed, stream], lex)
        exs = []
        for i, label in enumerate(s.balanced_labels(n)):
            if ambiguous:
                feature = the = bool(label)
            else:
                feature, the = bool(label), not label
            toks, m = _msgs_sentence(s, kind, feature, the)
            exs.append(Example(f"{name}-{split}-{i:05d}", (tuple(toks),), label, Meta(feature_index=m)))
        return Dataset(name, split, tuple(exs), vocab, dict(prov))

    return build("train", n_train, 0, True), build("ood_full", n_ood, 1, False)


def _clause(s: _Sampler, exclude_nouns: Iterable[str] = ()) -> list[str]:
    verb_cls = "irregular_past" if s.coin() else "regular_past"
    n1 = s.pick("noun", exclude_nouns)
    n2 = s.pick("noun", [*exclude_nouns, n1])
    return [s.pick("determiner"), n1, s.pick(verb_cls), s.pick("determiner"), n2]


def _replace_noun(s: _Sampler, clause: list[str], avoid: Sequence[str]) -> list[str]:
    out = list(clause)
    pos = 1 if s.coin() else 4
    out[pos] = s.pick("noun", avoid)
    return out


def _pair(name: str, split: str, i: int, a: list[str], b: list[str], label: int, **meta) -> Example:
    ex = Example(f"{name}-{split}-{i:05d}", (tuple(a), tuple(b)), label,
                 Meta(separator_index=len(a) + 1, **meta))
    ex.validate()
    return ex


def gen_pair_subseq(n_train: int, n_ood: int, seed: int, agree_rate: float = 0.9,
                    vocab: Vocabulary | None = None) -> tuple[Dataset, Dataset]:
    """Hypothesis-is-a-slice-of-premise pairs. A negator outside the slice makes the
    label 0; with an affirmer instead the hypothesis is entailed (label 1)."""
    vocab = vocab or default_vocabulary()
    _require_classes(vocab, PAIR_CLASSES)
    _check_counts(n_train=n_train, n_ood=n_ood)
    name = "pair-subseq"
    prov = {"generator": "pair_subseq", "task": name, "seed": seed,
            "params": {"n_train": n_train, "n_ood": n_ood, "agree_rate": agree_rate}}

    def premise(s: _Sampler, negated: bool) -> tuple[list[str], list[str], int]:
        core = _clause(s)
        if s.coin(0.3):
            core = core[:3] + [s.pick("preposition")] + core[3:]
        key = s.pick("negator" if negated else "affirmer")
        lead = [s.pick("adverb")] if s.coin() else []
        tail = [s.pick("adverb")] if s.coin() else []
        if s.coin():
            lead.insert(int(s.rng.integers(len(lead) + 1)), key)
        else:
            tail.insert(int(s.rng.integers(len(tail) + 1)), key)
        return lead + core + tail, core, len(lead)

    def build(split: str, n: int, stream: int, ood: bool) -> Dataset:
        s = _Sampler(vocab, [seed, stream])
        exs = []
        labels = s.balanced_labels(n)
        for i, label in enumerate(labels):
            if ood:
                kind = "subseq_pos" if label else "subseq_neg"
            elif label:
                kind = "subseq_pos"
            else:
                # label-0 training examples: either non-slice hypotheses (heuristic agrees)
                # or negated slices (heuristic disagrees); overall agreement = agree_rate
                kind = "subseq_neg" if s.coin(2 * (1 - agree_rate)) else "nonslice"
            if kind == "nonslice":
                a, core, off = premise(s, negated=s.coin())
                b = _replace_noun(s, core, a)
                pairs = tuple((off + k, k) for k in range(len(core)) if core[k] == b[k])
            else:
                a, core, off = premise(s, negated=(kind == "subseq_neg"))
                b = core
                pairs = tuple((off + k, k) for k in range(len(core)))
            exs.append(_pair(name, split, i, a, b, label, shared_index_pairs=pairs))
        return Dataset(name, split, tuple(exs), vocab, dict(prov))

    return build("train", n_train, 0, False), build("ood_full", n_ood, 1, True)


def gen_pair_control(n_train: int, n_ood: int, seed: int, agree_rate: float = 0.9,
                     vocab: Vocabulary | None = None) -> tuple[Dataset, Dataset]:
    """Premise ``C clause1 , clause2`` with hypothesis ``clause1``. A control word C
    ("unless", "if", ...) makes the label 0; a plain connective ("since", ...) keeps the
    hypothesis entailed. The control slot is always premise position 0."""
    vocab = vocab or default_vocabulary()
    _require_classes(vocab, PAIR_CLASSES)
    _check_counts(n_train=n_train, n_ood=n_ood)
    name = "pair-control"
    prov = {"generator": "pair_control", "task": name, "seed": seed,
            "params": {"n_train": n_train, "n_ood": n_ood, "agree_rate": agree_rate}}

    def build(split: str, n: int, stream: int, ood: bool) -> Dataset:
        s = _Sampler(vocab, [seed, stream])
        exs = []
        for i, label in enumerate(s.balanced_labels(n)):
            if ood:
                kind = "clause_pos" if label else "control"
            elif label:
                kind = "clause_pos"
            else:
                kind = "control" if s.coin(2 * (1 - agree_rate)) else "nonclause"
            c1 = _clause(s)
            c2 = _clause(s)
            if kind == "control":
                c = s.pick("control_word")
            elif kind == "clause_pos":
                c = s.pick("connective")
            else:
                c = s.pick("control_word" if s.coin() else "connective")
            a = [c, *c1, ",", *c2]
            if kind == "nonclause":
                b = _replace_noun(s, c1, a)
                pairs = tuple((1 + k, k) for k in range(len(c1)) if c1[k] == b[k])
            elif kind == "clause_pos" and not ood and s.coin():
                b = c2
                pairs = tuple((len(c1) + 2 + k, k) for k in range(len(c2)))
            else:
                b = c1
                pairs = tuple((1 + k, k) for k in range(len(c1)))
            exs.append(_pair(name, split, i, a, b, label, shared_index_pairs=pairs, control_index=0))
        return Dataset(name, split, tuple(exs), vocab, dict(prov))

    return build("train", n_train, 0, False), build("ood_full", n_ood, 1, True)


def _swap_sentence(s: _Sampler, template: int) -> tuple[list[str], int, int]:
    """Returns tokens and positions of the two marked content words."""
    if template == 0:
        x, y = s.pick("place"), None
        y = s.pick("place", [x])
        toks = [s.pick("determiner"), s.pick("noun"),
                s.pick("irregular_past" if s.coin() else "regular_past"), "from", x, "to", y]
        ix, iy = 4, 6
    elif template == 1:
        x = s.pick("adjective")
        y = s.pick("adjective", [x])
        toks = ["what", "makes", s.pick("determiner"), x, s.pick("noun"), "become", y, "?"]
        ix, iy = 3, 6
    else:
        x = s.pick("noun")
        y = s.pick("noun", [x])
        toks = [s.pick("determiner"), s.pick("noun", [x, y]), "prefers", x, "over", y]
        ix, iy = 3, 5
    if s.coin():
        toks.append(s.pick("adverb"))
    return toks, ix, iy


def gen_pair_swap(n_train: int, n_ood: int, seed: int, agree_rate: float = 0.95,
                  vocab: Vocabulary | None = None) -> tuple[Dataset, Dataset]:
    """High-overlap sentence pairs; label 1 iff the two marked content words keep their
    order ("from X to Y" / "from X to Y"), 0 when swapped."""
    vocab = vocab or default_vocabulary()
    _require_classes(vocab, PAIR_CLASSES)
    _check_counts(n_train=n_train, n_ood=n_ood)
    name = "pair-swap"
    prov = {"generator": "pair_swap", "task": name, "seed": seed,
            "params": {"n_train": n_train, "n_ood": n_ood, "agree_rate": agree_rate}}

    def build(split: str, n: int, stream: int, ood: bool) -> Dataset:
        s = _Sampler(vocab, [seed, stream])
        exs = []
        for i, label in enumerate(s.balanced_labels(n)):
            template = int(s.rng.integers(3))
            a, ix, iy = _swap_sentence(s, template)
            if label:
                kind = "same"
            elif ood:
                kind = "swapped"
            else:
                kind = "swapped" if s.coin(2 * (1 - agree_rate)) else "different"
            if kind == "different":
                b, jx, jy = _swap_sentence(s, template)
                while sorted(b) == sorted(a):
                    b, jx, jy = _swap_sentence(s, template)
            else:
                b = list(a)
                jx, jy = ix, iy
                if kind == "swapped":
                    b[ix], b[iy] = a[iy], a[ix]
                    jx, jy = iy, ix
            exs.append(_pair(name, split, i, a, b, label,
                             swap_indices_a=(ix, iy), swap_indices_b=(jx, jy)))
        return Dataset(name, split, tuple(exs), vocab, dict(prov))

    return build("train", n_train, 0, False), build("ood_full", n_ood, 1, True)


TASKS: dict[str, Callable[..., tuple[Dataset, Dataset]]] = {
    "msgs-morph": lambda n_train, n_ood, seed, **kw: gen_msgs("MORPH", n_train, n_ood, seed, **kw),
    "msgs-verb": lambda n_train, n_ood, seed, **kw: gen_msgs("VERB", n_train, n_ood, seed, **kw),
    "msgs-adject": lambda n_train, n_ood, seed, **kw: gen_msgs("ADJECT", n_train, n_ood, seed, **kw),
    "pair-subseq": gen_pair_subseq,
    "pair-control": gen_pair_control,
    "pair-swap": gen_pair_swap,
}


def generate(task: str, n_train: int, n_ood: int, seed: int, **kw) -> tuple[Dataset, Dataset]:
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}; choose from {', '.join(TASKS)}")
    return TASKS[task](n_train, n_ood, seed, **kw)


def make_inoculation_pool(task: str, size: int, seed: int, exclude: Iterable[Dataset] = ()) -> Dataset:
    """Fresh OOD-style examples for inoculation, generated from an independent seed stream
    and filtered so that no token sequence also appears in ``exclude``."""
    _, pool = generate(task, 10, max(size, 10), seed)
    taken = {ex.content_key() for d in exclude for ex in d}
    keep = [replace(ex, id=ex.id.replace("-ood_full-", "-inoc_pool-"))
            for ex in pool if ex.content_key() not in taken]
    return pool.with_examples(keep, split="inoc_pool", pool_seed=seed)


# --------------------------------------------------------------------------
# Inoculation


def inoculation_mix(train: Dataset, ood_pool: Dataset, linguistic_pct: float, surface_pct: float,
                    seed: int, heuristic: Callable[[Example], int] | None = None) -> Dataset:
    """Add disambiguating examples to ``train``.

    ``round(linguistic_pct * len(train))`` pool examples keep their true label (favoring
    the linguistic rule); ``round(surface_pct * len(train))`` further examples are relabeled
    with the heuristic's prediction (favoring the surface rule). Only pool examples on which
    the heuristic and the true label disagree are eligible.
    """
    for name, pct in (("linguistic_pct", linguistic_pct), ("surface_pct", surface_pct)):
        if not 0.0 <= pct <= 0.1:
            raise ValueError(f"{name} must be in [0, 0.1], got {pct}")
    n_l = int(round(linguistic_pct * len(train)))
    n_s = int(round(surface_pct * len(train)))
    if n_l == 0 and n_s == 0:
        return train
    heuristic = heuristic or heuristic_for(ood_pool)
    eligible = [ex for ex in ood_pool if heuristic(ex) != ex.label]
    if n_l + n_s > len(eligible):
        raise ValueError(
            f"inoculation needs {n_l + n_s} disambiguating examples, pool has {len(eligible)}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(eligible))
    chosen = [eligible[i] for i in order[: n_l + n_s]]
    added = [replace(ex, id=f"inoc-L-{ex.id}") for ex in chosen[:n_l]]
    added += [replace(ex, id=f"inoc-S-{ex.id}", label=heuristic(ex)) for ex in chosen[n_l:]]
    merged = list(train.examples) + added
    merged = [merged[i] for i in rng.permutation(len(merged))]
    return train.with_examples(merged, inoculation={"linguistic_pct": linguistic_pct,
                                                    "surface_pct": surface_pct,
                                                    "n_linguistic": n_l, "n_surface": n_s,
                                                    "seed": seed})


# --------------------------------------------------------------------------
# Persistence


def _sidecar(path: Path) -> Path:
    return path.with_name(path.stem + ".dataset.json")


def persist(dataset: Dataset, path: str | Path) -> None:
    """Write ``dataset`` as JSONL plus ``<stem>.dataset.json`` (name, split, provenance)
    and a shared ``vocab.json`` in the same directory."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for ex in dataset.examples:
            fh.write(json.dumps(ex.to_json()) + "\n")
    header = {"v": FORMAT_VERSION, "name": dataset.name, "split": dataset.split,
              "provenance": dataset.provenance, "n": len(dataset), "digest": dataset.digest()}
    _sidecar(path).write_text(json.dumps(header, indent=2, sort_keys=True) + "\n")
    (path.parent / "vocab.json").write_text(json.dumps(dataset.vocabulary.to_json(), indent=1) + "\n")


def parse_example(obj: dict, where: str) -> Example:
    if not isinstance(obj, dict):
        raise DatasetFormatError(f"{where}: expected a JSON object")
    if obj.get("v") != FORMAT_VERSION:
        raise DatasetFormatError(f"{where}: unsupported version {obj.get('v')!r}")
    for key in ("id", "segments", "label"):
        if key not in obj:
            raise DatasetFormatError(f"{where}: missing field {key!r}")
    segs = obj["segments"]
    if not isinstance(segs, list) or not all(isinstance(s, list) and all(isinstance(t, str) for t in s)
                                             for s in segs):
        raise DatasetFormatError(f"{where}: segments must be a list of string lists")
    try:
        ex = Example(str(obj["id"]), tuple(tuple(s) for s in segs), obj["label"],
                     Meta.from_json(obj.get("meta") or {}))
        ex.validate()
    except DatasetFormatError as e:
        raise DatasetFormatError(f"{where}: {e}") from None
    except (TypeError, ValueError) as e:
        raise DatasetFormatError(f"{where}: bad metadata ({e})") from None
    return ex


def load(path: str | Path, vocab: Vocabulary | None = None) -> Dataset:
    path = Path(path)
    examples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise DatasetFormatError(f"{path}:{lineno}: invalid JSON ({e.msg})") from None
            examples.append(parse_example(obj, f"{path}:{lineno}"))
    if not examples:
        warnings.warn(f"{path} contains no examples", stacklevel=2)

    sidecar = _sidecar(path)
    if sidecar.exists():
        header = json.loads(sidecar.read_text())
        if header.get("v") != FORMAT_VERSION:
            raise DatasetFormatError(f"{sidecar}: unsupported version {header.get('v')!r}")
        name, split, prov = header["name"], header["split"], header["provenance"]
    else:
        name = path.stem
        split = path.stem if path.stem in SPLITS else "ood_full"
        prov = {"generator": "external", "source": str(path)}

    if vocab is None:
        vocab_path = path.parent / "vocab.json"
        if vocab_path.exists():
            vocab = Vocabulary.from_json(json.loads(vocab_path.read_text()))
        else:
            seen = dict.fromkeys(t for ex in examples for seg in ex.segments for t in seg
                                 if t not in RESERVED)
            vocab = Vocabulary(RESERVED + tuple(seen), {})
    return Dataset(name, split, tuple(examples), vocab, prov)
