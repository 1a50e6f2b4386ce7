"""Bootstrap few-shot ranking evaluation.

Attributions are precomputed for every (model, population example) and read from a
store; the evaluator never runs a model. Each bootstrap sample draws ``n`` population
examples with replacement, every method's per-example scores are averaged per model,
and each model pair is scored against the models' full-OOD accuracies.
"""

from __future__ import annotations

import csv
import hashlib
import io
import itertools
import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence

import numpy as np

from .attribution import Attribution, Method, normalize
from .corpus import Dataset, DatasetFormatError
from .factors import (BaselineKind, FactorKind, Prediction, baseline_score, factor_value,
                      parse_baseline, parse_factor, surface_shared_pairs)

log = logging.getLogger(__name__)


class IncompleteStore(DatasetFormatError):
    def __init__(self, missing: list[tuple[str, str, str]]):
        preview = "; ".join(f"{m}/{e}/{k}" for m, e, k in missing[:20])
        more = f" (+{len(missing) - 20} more)" if len(missing) > 20 else ""
        super().__init__(f"attribution store is missing {len(missing)} rows: {preview}{more}")
        self.missing = missing


class Convention(str, Enum):
    FACTOR = "FACTOR"      # higher score -> predicted worse
    BASELINE = "BASELINE"  # higher score -> predicted better


class PairOutcome(str, Enum):
    SUCCESS = "success"
    FAILURE = "failure"
    TIE = "tie"

    @property
    def credit(self) -> float:
        return {"success": 1.0, "failure": 0.0, "tie": 0.5}[self.value]


def rank_pair(F_i: float, F_j: float, s_i: float, s_j: float,
              convention: Convention | str = Convention.FACTOR) -> PairOutcome:
    if s_i == s_j:
        raise ValueError("ground-truth tie: pair has no defined ordering")
    if F_i == F_j:
        return PairOutcome.TIE
    i_better = F_i > F_j if Convention(convention) is Convention.BASELINE else F_i < F_j
    return PairOutcome.SUCCESS if i_better == (s_i > s_j) else PairOutcome.FAILURE


# --------------------------------------------------------------------------
# Ranking methods


@dataclass(frozen=True)
class MethodSpec:
    """A factor computed on one attribution method's scores, or a baseline."""

    factor: FactorKind | None = None
    attribution: Method | None = None
    baseline: BaselineKind | None = None

    def __post_init__(self):
        if (self.factor is None) == (self.baseline is None):
            raise ValueError("a method is either a factor or a baseline")
        if self.factor is not None and self.attribution is None:
            raise ValueError("a factor method needs an attribution method")
        if self.baseline is BaselineKind.GUESS:
            raise ValueError("GUESS is computed by guess_baseline, not per example")

    @property
    def name(self) -> str:
        if self.baseline is not None:
            return self.baseline.value
        return f"{self.factor.value}[{self.attribution.value}]"

    @property
    def convention(self) -> Convention:
        return Convention.FACTOR if self.factor is not None else Convention.BASELINE

    @classmethod
    def parse(cls, text: str) -> "MethodSpec":
        """``"ACC"`` or ``"window@lime"`` style names."""
        if "@" in text:
            f, m = text.split("@", 1)
            return cls(factor=parse_factor(f), attribution=Method(m.strip().upper()))
        if "[" in text and text.endswith("]"):
            f, m = text[:-1].split("[", 1)
            return cls(factor=parse_factor(f), attribution=Method(m.strip().upper()))
        return cls(baseline=parse_baseline(text))


class AttributionStore:
    """Index over attribution rows keyed by (model, example id, method)."""

    def __init__(self, rows: Iterable[Attribution]):
        self.rows: dict[tuple[str, str, Method], Attribution] = {}
        for r in rows:
            self.rows[(r.model_label, r.example_id, r.method)] = r

    def __len__(self) -> int:
        return len(self.rows)

    def get(self, model: str, example_id: str, method: Method) -> Attribution | None:
        return self.rows.get((model, example_id, method))

    def any_row(self, model: str, example_id: str) -> Attribution | None:
        for m in Method:
            row = self.rows.get((model, example_id, m))
            if row is not None:
                return row
        return None

    def digest(self) -> str:
        h = hashlib.sha256()
        for key in sorted(self.rows, key=lambda k: (k[0], k[1], k[2].value)):
            h.update(json.dumps(self.rows[key].to_json(), sort_keys=True).encode())
        return h.hexdigest()[:16]


@dataclass
class EvalConfig:
    B: int = 500
    n: int = 10
    seed: int = 0
    normalization: str = "RAW"
    half_width: int = 2
    compare_to: tuple[str, ...] = ("ACC", "RANDOM")
    alpha: float = 0.05
    surface_fallback: bool = False


def score_matrix(method: MethodSpec, models: Sequence[str], population: Dataset, store: AttributionStore,
                 cfg: EvalConfig = EvalConfig(), missing: list | None = None,
                 flags: dict | None = None) -> np.ndarray:
    """(m, P) per-example scores of ``method``; RANDOM yields NaNs (drawn per sample)."""
    out = np.full((len(models), len(population)), np.nan)
    if method.baseline is BaselineKind.RANDOM:
        return out
    missing = missing if missing is not None else []
    for i, label in enumerate(models):
        for j, ex in enumerate(population):
            if method.factor is not None:
                row = store.get(label, ex.id, method.attribution)
                if row is None:
                    missing.append((label, ex.id, method.attribution.value))
                    continue
                row = normalize(row, cfg.normalization)
                fallback = (cfg.surface_fallback and method.factor is FactorKind.INDEX_DIFF
                            and ex.meta.shared_index_pairs is None)
                if fallback and flags is not None:
                    flags[method.name] = flags.get(method.name, 0) + 1
                out[i, j] = factor_value(method.factor, ex, row, cfg.half_width, fallback)
            else:
                row = store.any_row(label, ex.id)
                if row is None:
                    missing.append((label, ex.id, "ANY"))
                    continue
                out[i, j] = baseline_score(method.baseline, ex, Prediction.from_attribution(row, ex.label))
    return out


# --------------------------------------------------------------------------
# Reports


@dataclass
class Significance:
    method_a: str
    method_b: str
    p_value: float
    significant: bool
    alpha: float

    def to_json(self) -> dict:
        return {"method_a": self.method_a, "method_b": self.method_b, "p_value": self.p_value,
                "significant": self.significant, "alpha": self.alpha}


@dataclass
class BootstrapReport:
    name: str
    models: list[str]
    s: list[float]
    pairs: list[tuple[int, int]]
    excluded_pairs: list[tuple[int, int]]
    methods: list[str]
    conventions: dict[str, str]
    successes: dict[str, np.ndarray]  # method -> (B, n_pairs) credits in {0, 0.5, 1}
    population_means: dict[str, list[float] | None]
    sample_indices: np.ndarray
    config: dict
    population_digest: str
    store_digest: str
    significance: list[Significance] = field(default_factory=list)
    flags: dict = field(default_factory=dict)
    samples_available: bool = True

    @property
    def B(self) -> int:
        return int(self.sample_indices.shape[0])

    @property
    def n(self) -> int:
        return int(self.sample_indices.shape[1])

    @property
    def sample_digest(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.sample_indices, dtype=np.int64).tobytes()).hexdigest()[:16]

    def pairwise(self, method: str) -> np.ndarray:
        return self.successes[method].mean(axis=0)

    def few_shot(self, method: str) -> float:
        pw = self.pairwise(method)
        return float(pw.mean()) if pw.size else float("nan")

    def pair_name(self, k: int) -> str:
        i, j = self.pairs[k]
        return f"{self.models[i]}-{self.models[j]}"

    def to_json(self, include_samples: bool = False) -> dict:
        out = {
            "v": 1,
            "name": self.name,
            "models": self.models,
            "s": self.s,
            "pairs": [list(p) for p in self.pairs],
            "excluded_pairs": [list(p) for p in self.excluded_pairs],
            "config": self.config,
            "population_digest": self.population_digest,
            "store_digest": self.store_digest,
            "sample_digest": self.sample_digest,
            "methods": {},
            "significance": [s.to_json() for s in self.significance],
            "flags": self.flags,
        }
        for m in self.methods:
            succ = self.successes[m]
            out["methods"][m] = {
                "convention": self.conventions[m],
                "few_shot_accuracy": self.few_shot(m),
                "pairwise_accuracy": self.pairwise(m).tolist(),
                "success_counts": (succ == 1.0).sum(axis=0).tolist(),
                "tie_counts": (succ == 0.5).sum(axis=0).tolist(),
                "population_means": self.population_means.get(m),
            }
            if include_samples:
                out["methods"][m]["per_sample"] = succ.tolist()
        if include_samples:
            out["sample_indices"] = self.sample_indices.tolist()
        return out

    def dumps(self, include_samples: bool = False) -> str:
        return json.dumps(self.to_json(include_samples), indent=1) + "\n"

    def csv_rows(self) -> list[dict]:
        rows = []
        for m in self.methods:
            succ = self.successes[m]
            pw = self.pairwise(m)
            for k, (i, j) in enumerate(self.pairs):
                rows.append({"set": self.name, "method": m, "pair": self.pair_name(k),
                             "model_i": self.models[i], "model_j": self.models[j],
                             "s_i": self.s[i], "s_j": self.s[j], "accuracy": float(pw[k]),
                             "successes": int((succ[:, k] == 1.0).sum()),
                             "ties": int((succ[:, k] == 0.5).sum()), "B": self.B})
            rows.append({"set": self.name, "method": m, "pair": "ALL", "model_i": "", "model_j": "",
                         "s_i": "", "s_j": "", "accuracy": self.few_shot(m),
                         "successes": int((succ == 1.0).sum()), "ties": int((succ == 0.5).sum()),
                         "B": self.B})
        return rows

    def to_csv(self) -> str:
        buf = io.StringIO()
        rows = self.csv_rows()
        writer = csv.DictWriter(buf, fieldnames=list(rows[0]) if rows else ["method"], lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
        return buf.getvalue()

    @classmethod
    def from_json(cls, obj: dict) -> "BootstrapReport":
        """Rebuild a report; per-sample matrices are only available if they were dumped."""
        methods = list(obj["methods"])
        successes = {}
        dumped = all("per_sample" in obj["methods"][m] for m in methods)
        for m in methods:
            d = obj["methods"][m]
            if "per_sample" in d:
                successes[m] = np.array(d["per_sample"], dtype=np.float64)
            else:
                successes[m] = np.array([d["pairwise_accuracy"]], dtype=np.float64)
        idx = np.array(obj.get("sample_indices", np.zeros((obj["config"]["B"], obj["config"]["n"]))),
                       dtype=np.int64)
        return cls(obj["name"], obj["models"], obj["s"], [tuple(p) for p in obj["pairs"]],
                   [tuple(p) for p in obj["excluded_pairs"]], methods,
                   {m: obj["methods"][m]["convention"] for m in methods}, successes,
                   {m: obj["methods"][m].get("population_means") for m in methods}, idx,
                   obj["config"], obj["population_digest"], obj["store_digest"],
                   [Significance(**s) for s in obj.get("significance", [])], obj.get("flags", {}), dumped)


# --------------------------------------------------------------------------
# Protocol


def draw_population(ood_full: Dataset, size: int, seed: int) -> Dataset:
    """Uniform sample without replacement, as the ``ood_population`` split."""
    if size > len(ood_full):
        raise ValueError(f"population size {size} exceeds |ood_full| = {len(ood_full)}")
    idx = np.random.default_rng(seed).permutation(len(ood_full))[:size]
    return ood_full.with_examples([ood_full.examples[i] for i in idx], split="ood_population",
                                  population={"size": size, "seed": seed,
                                              "source_digest": ood_full.digest()})


def _pair_credits(F: np.ndarray, s: Sequence[float], pairs: Sequence[tuple[int, int]],
                  convention: Convention) -> np.ndarray:
    """F is (m, B). Returns (B, n_pairs) credits."""
    out = np.empty((F.shape[1], len(pairs)))
    for k, (i, j) in enumerate(pairs):
        diff = F[i] - F[j]
        i_pred_better = diff > 0 if convention is Convention.BASELINE else diff < 0
        correct = i_pred_better == (s[i] > s[j])
        out[:, k] = np.where(diff == 0, 0.5, correct.astype(np.float64))
    return out


def evaluate_scores(matrices: Mapping[str, np.ndarray], conventions: Mapping[str, Convention | str],
                    s: Sequence[float], models: Sequence[str], cfg: EvalConfig = EvalConfig(),
                    name: str = "", population_digest: str = "", store_digest: str = "") -> BootstrapReport:
    """Core bootstrap over precomputed (m, P) score matrices. A matrix that is all NaN is
    treated as the RANDOM baseline: fresh uniform scores for every sample slot."""
    s = [float(x) for x in s]
    m = len(models)
    if m < 2:
        raise ValueError("need at least two models")
    P = next(iter(matrices.values())).shape[1]
    if P == 0:
        raise ValueError("empty population")
    pairs, excluded = [], []
    for i, j in itertools.combinations(range(m), 2):
        (excluded if s[i] == s[j] else pairs).append((i, j))
    if not pairs:
        raise ValueError("all models have identical OOD performance; nothing to rank")
    if excluded:
        log.warning("excluding %d pair(s) with tied ground truth", len(excluded))

    idx = np.random.default_rng([cfg.seed, 0]).integers(0, P, size=(cfg.B, cfg.n))
    successes, means = {}, {}
    for k, (mname, mat) in enumerate(matrices.items()):
        conv = Convention(conventions[mname])
        if np.isnan(mat).all():
            rng = np.random.default_rng([cfg.seed, 1, k])
            F = rng.uniform(size=(m, cfg.B, cfg.n)).mean(axis=2)
            means[mname] = None
        else:
            F = mat[:, idx].mean(axis=2)
            means[mname] = mat.mean(axis=1).tolist()
        successes[mname] = _pair_credits(F, s, pairs, conv)

    config = {"B": cfg.B, "n": cfg.n, "seed": cfg.seed, "normalization": cfg.normalization,
              "half_width": cfg.half_width, "alpha": cfg.alpha, "compare_to": list(cfg.compare_to)}
    report = BootstrapReport(name, list(models), s, pairs, excluded, list(matrices),
                             {k: Convention(v).value for k, v in conventions.items()}, successes, means,
                             idx, config, population_digest, store_digest)
    for ref in cfg.compare_to:
        if ref not in report.methods:
            continue
        for mname in report.methods:
            if mname != ref:
                report.significance.append(paired_significance(report, mname, ref, cfg.alpha))
    return report


def bootstrap_eval(suite, population: Dataset, store: AttributionStore | Iterable[Attribution],
                   methods: Sequence[MethodSpec | str], cfg: EvalConfig = EvalConfig()) -> BootstrapReport:
    """Run the protocol for ``methods``. ``suite`` is a ModelSuite or a mapping from model
    label to full-OOD accuracy (in suite order)."""
    s_map = suite.s() if hasattr(suite, "s") and callable(suite.s) else dict(suite)
    models = list(s_map)
    if not isinstance(store, AttributionStore):
        store = AttributionStore(store)
    specs = [m if isinstance(m, MethodSpec) else MethodSpec.parse(m) for m in methods]
    missing: list = []
    flags: dict = {}
    mats = {sp.name: score_matrix(sp, models, population, store, cfg, missing, flags) for sp in specs}
    if missing:
        raise IncompleteStore(sorted(set(missing)))
    report = evaluate_scores(mats, {sp.name: sp.convention for sp in specs}, [s_map[k] for k in models],
                             models, cfg, population.name, population.digest(), store.digest())
    if flags:
        report.flags["index_diff_surface_fallback"] = flags
    return report


def paired_significance(report: BootstrapReport, method_a: str, method_b: str, alpha: float = 0.05,
                        report_b: BootstrapReport | None = None) -> Significance:
    """One-sided paired bootstrap test that ``method_a`` ranks better than ``method_b``.

    p = (#samples where mean pair credit of a <= that of b, + 1) / (B + 1).
    """
    other = report_b or report
    if not (report.samples_available and other.samples_available):
        raise ValueError("per-sample successes were not dumped; rerun eval with --dump-samples")
    if other is not report and (other.sample_digest != report.sample_digest or other.pairs != report.pairs):
        raise ValueError("methods were not evaluated on the same bootstrap samples")
    a = report.successes[method_a]
    b = other.successes[method_b]
    if a.shape != b.shape:
        raise ValueError("methods were not evaluated on the same bootstrap samples")
    diff = a.mean(axis=1) - b.mean(axis=1)
    p = (int(np.sum(diff <= 0)) + 1) / (len(diff) + 1)
    return Significance(method_a, method_b, p, p < alpha, alpha)


def guess_baseline(s: Sequence[float], best_prior: Sequence[float] | None = None) -> float:
    """Expected few-shot accuracy of picking a "best" model from ``best_prior`` and
    ordering the rest uniformly at random, by exhaustive enumeration."""
    m = len(s)
    if m > 6:
        raise ValueError(f"GUESS enumeration is limited to 6 models, got {m}")
    if m < 2:
        raise ValueError("need at least two models")
    prior = np.full(m, 1.0 / m) if best_prior is None else np.asarray(best_prior, dtype=np.float64)
    if prior.shape != (m,) or not np.isclose(prior.sum(), 1.0) or (prior < 0).any():
        raise ValueError("best_prior must be a probability vector over the models")
    pairs = [(i, j) for i, j in itertools.combinations(range(m), 2) if s[i] != s[j]]
    if not pairs:
        raise ValueError("no pairs with distinct ground truth")
    expected = np.zeros(len(pairs))
    for best in range(m):
        if prior[best] == 0:
            continue
        rest = [k for k in range(m) if k != best]
        perms = list(itertools.permutations(rest))
        for perm in perms:
            rank = {model: r for r, model in enumerate((best, *perm))}
            for k, (i, j) in enumerate(pairs):
                correct = (rank[i] < rank[j]) == (s[i] > s[j])
                expected[k] += prior[best] * correct / len(perms)
    return float(expected.mean())


@dataclass
class PooledReport:
    accuracies: dict[str, float]
    set_dependent: float | None
    set_dependent_choice: dict[str, str]
    pairs: list[dict]

    def to_json(self) -> dict:
        return {"v": 1, "accuracies": self.accuracies, "set_dependent": self.set_dependent,
                "set_dependent_choice": self.set_dependent_choice, "pairs": self.pairs}


def pooled_report(reports: Sequence[BootstrapReport], set_dependent: Mapping[str, str] | None = None) -> PooledReport:
    """Unweighted mean over every included pairwise accuracy across ``reports``.

    ``set_dependent`` maps a report name to the method used as that set's dataset-specific
    factor; those pairwise accuracies are pooled into the SET-DEPENDENT row.
    """
    if not reports:
        raise ValueError("need at least one report")
    provenance: list[dict] = []
    per_method: dict[str, list[float]] = {}
    for rep in reports:
        for m in rep.methods:
            for k, acc in enumerate(rep.pairwise(m)):
                per_method.setdefault(m, []).append(float(acc))
                provenance.append({"set": rep.name, "method": m, "pair": rep.pair_name(k),
                                   "accuracy": float(acc)})
    accuracies = {m: float(np.mean(v)) for m, v in per_method.items()}
    choice = dict(set_dependent or {})
    set_dep = None
    if choice:
        pooled = []
        for rep in reports:
            if rep.name not in choice:
                continue
            method = choice[rep.name]
            if method not in rep.methods:
                raise ValueError(f"set {rep.name!r} has no method {method!r}")
            pooled.extend(rep.pairwise(method).tolist())
        set_dep = float(np.mean(pooled)) if pooled else None
    return PooledReport(accuracies, set_dep, choice, provenance)


def spearman_rho(x: Sequence[float], y: Sequence[float]) -> float:
    """Spearman rank correlation (average ranks for ties)."""
    def ranks(v):
        v = np.asarray(v, dtype=np.float64)
        order = v.argsort(kind="mergesort")
        r = np.empty(len(v))
        r[order] = np.arange(len(v))
        for val in np.unique(v):
            tie = v == val
            r[tie] = r[tie].mean()
        return r
    rx, ry = ranks(x), ranks(y)
    rx, ry = rx - rx.mean(), ry - ry.mean()
    denom = np.sqrt((rx ** 2).sum() * (ry ** 2).sum())
    return float((rx * ry).sum() / denom) if denom else float("nan")


__all__ = ["AttributionStore", "BootstrapReport", "Convention", "EvalConfig", "IncompleteStore",
           "MethodSpec", "PairOutcome", "PooledReport", "Significance", "bootstrap_eval",
           "draw_population", "evaluate_scores", "guess_baseline", "paired_significance",
           "pooled_report", "rank_pair", "score_matrix", "spearman_rho", "surface_shared_pairs"]
