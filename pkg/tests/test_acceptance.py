"""Acceptance gate. Each test records one PASS/FAIL line, printed in the terminal summary."""
import json
import shutil
import time
from pathlib import Path

import numpy as np
import pytest

from oodrank import attribution as A
from oodrank import corpus as C
from oodrank import evaluation as E
from oodrank import model as M
from oodrank.cli import main
from conftest import AdditiveGame, fd_grad, random_example, random_model, record

ARCHS = ("MEAN_EMBED_LINEAR", "MEAN_EMBED_MLP", "ATTN_POOL_MLP")
PIPELINE = [
    ["gen", "--task", "msgs-verb"],
    ["train"],
    ["attribute", "--method", "lime"],
    ["eval"],
]


def run_pipeline(root: Path) -> float:
    start = time.perf_counter()
    for argv in PIPELINE:
        assert main([*argv, "--out-dir", str(root)]) == 0, argv
    return time.perf_counter() - start


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("accept")
    elapsed = run_pipeline(root)
    report = E.BootstrapReport.from_json(json.loads((root / "eval" / "report.json").read_text()))
    population = C.load(root / "data" / "ood_population.jsonl")
    store = E.AttributionStore(A.read_store(root / "attributions" / "lime.jsonl"))
    return {"root": root, "elapsed": elapsed, "report": report, "population": population, "store": store}


def test_kshap_full_enumeration_matches_exact(vocab):
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    worst, cases = 0.0, 0
    for case in range(60):
        arch = ARCHS[case % 3]
        model = random_model(arch, vocab, int(rng.integers(1 << 20)), scale=float(rng.uniform(1, 4)))
        n = int(rng.integers(1, 11))
        ex = random_example(vocab, rng, n, pair=bool(rng.integers(2)) and n >= 2)
        full = A.kernel_shap(model, ex, A.KernelShapConfig(n_samples=A.FULL_ENUM)).scores
        exact = A.exact_shapley(model, ex).scores
        worst = max(worst, float(np.abs(np.subtract(full, exact)).max()))
        cases += 1
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-6 and elapsed < 120 and cases >= 50
    record(1, "KSHAP(FULL_ENUM) == exact Shapley", ok,
           f"{cases} cases, max |diff| {worst:.2e} (tol 1e-6), {elapsed:.1f}s (< 120s)")
    assert ok


def test_ig_completeness(vocab):
    rng = np.random.default_rng(7)
    start = time.perf_counter()
    worst_mlp, worst_lin, n_mlp = 0.0, 0.0, 0
    for case in range(120):
        arch = ("MEAN_EMBED_MLP", "ATTN_POOL_MLP")[case % 2]
        model = random_model(arch, vocab, int(rng.integers(1 << 20)), scale=float(rng.uniform(1, 4)))
        ex = random_example(vocab, rng, int(rng.integers(1, 15)), pair=bool(rng.integers(2)))
        phi = A.integrated_gradients(model, ex, A.IGConfig(steps=256))
        ids = model.encode(ex)
        t = phi.explained_class
        gap = model.logits_ids(ids)[0, t] - model.logits_ids(np.zeros_like(ids))[0, t]
        worst_mlp = max(worst_mlp, abs(sum(phi.scores) - gap))
        n_mlp += 1
    for case in range(30):
        model = random_model("MEAN_EMBED_LINEAR", vocab, case, scale=3.0)
        ex = random_example(vocab, rng, int(rng.integers(1, 15)), pair=bool(case % 2))
        ids = model.encode(ex)
        for steps in (8, 33, 256):
            phi = A.integrated_gradients(model, ex, A.IGConfig(steps=steps))
            t = phi.explained_class
            gap = model.logits_ids(ids)[0, t] - model.logits_ids(np.zeros_like(ids))[0, t]
            worst_lin = max(worst_lin, abs(sum(phi.scores) - gap))
    elapsed = time.perf_counter() - start
    ok = n_mlp >= 100 and worst_mlp <= 1e-4 and worst_lin <= 1e-12 and elapsed < 60
    record(2, "IG completeness", ok,
           f"MLP {n_mlp} cases max gap {worst_mlp:.2e} (tol 1e-4); linear max gap {worst_lin:.2e} "
           f"(tol 1e-12); {elapsed:.1f}s (< 60s)")
    assert ok


def test_gradient_finite_differences(vocab):
    rng = np.random.default_rng(11)
    worst, cases = 0.0, 0
    for case in range(120):
        arch = ARCHS[case % 3]
        model = random_model(arch, vocab, int(rng.integers(1 << 20)), scale=float(rng.uniform(0.5, 3)))
        ex = random_example(vocab, rng, int(rng.integers(1, 11)), pair=bool(rng.integers(2)))
        target = int(rng.integers(2))
        g = M.grad_wrt_embeddings(model, ex, target)
        fd = fd_grad(model, model.encode(ex), target)
        worst = max(worst, float(np.abs(g - fd).max() / max(np.abs(fd).max(), 1e-6)))
        cases += 1
    ok = worst <= 1e-4
    record(3, "embedding gradients vs central differences", ok,
           f"{cases} cases, max relative error {worst:.2e} (tol 1e-4)")
    assert ok


def test_lime_additive_games():
    rng = np.random.default_rng(5)
    worst, cases = 0.0, 0
    for n in range(3, 9):
        for _ in range(5):
            c = rng.normal(size=n)
            got = A.lime_scores(AdditiveGame(c, bias=float(rng.normal())), A.LimeConfig(n_samples=2000, seed=0))
            worst = max(worst, float(np.abs(got - c).max()))
            cases += 1
    ok = worst <= 0.02
    record(4, "LIME recovers additive marginals", ok, f"{cases} games, 3-8 tokens, max |err| {worst:.2e} (tol 0.02)")
    assert ok


def test_random_baseline_calibration(pipeline):
    report = pipeline["report"]
    five = dict(list(zip(report.models, report.s))[:5])
    start = time.perf_counter()
    rep = E.bootstrap_eval(five, pipeline["population"], pipeline["store"], ["RANDOM", "ACC"],
                           E.EvalConfig(B=500, n=10, seed=3))
    elapsed = time.perf_counter() - start
    acc = rep.few_shot("RANDOM")
    ok = 0.45 <= acc <= 0.55 and len(rep.models) == 5
    record(5, "RANDOM few-shot accuracy", ok, f"{acc:.3f} on 5 models, B=500 n=10 (range [0.45, 0.55]), "
           f"{elapsed:.2f}s")
    assert ok


def test_window_factor_pattern(pipeline):
    report = pipeline["report"]
    acc = report.few_shot("ACC")
    window = report.few_shot("WINDOW[LIME]")
    rho = E.spearman_rho([-v for v in report.population_means["WINDOW[LIME]"]], report.s)
    elapsed = pipeline["elapsed"]
    ok = acc >= 0.80 and window >= acc - 0.08 and rho == 1.0 and elapsed < 600
    record(6, "msgs-verb suite pattern", ok,
           f"ACC {acc:.3f} (>= 0.80), WINDOW[LIME] {window:.3f} (>= ACC - 0.08), Spearman rho {rho:.3f} (= 1), "
           f"s = {[round(x, 3) for x in report.s]}, pipeline {elapsed:.0f}s (< 600s)")
    assert ok


def test_far_pair_significance(pipeline, tmp_path):
    report = pipeline["report"]
    gap = max(abs(report.s[i] - report.s[j]) for i, j in report.pairs)
    stored = [x for x in report.significance if (x.method_a, x.method_b) == ("WINDOW[LIME]", "RANDOM")]
    rerun = tmp_path / "sig"
    shutil.copytree(pipeline["root"], rerun)
    assert main(["eval", "--out-dir", str(rerun), "--overwrite", "--dump-samples", "--no-figures"]) == 0
    full = E.BootstrapReport.from_json(json.loads((rerun / "eval" / "report.json").read_text()))
    sig = E.paired_significance(full, "WINDOW[LIME]", "RANDOM", alpha=0.05)
    ok = gap >= 0.3 and sig.significant and len(stored) == 1 and stored[0].p_value == sig.p_value
    record(7, "window beats RANDOM (paired bootstrap)", ok, f"max |ds| {gap:.3f} (>= 0.3), p = {sig.p_value:.4f} (< 0.05)")
    assert ok


def test_flip_and_tie_calibration(pipeline):
    report = pipeline["report"]
    models = report.models
    spec = E.MethodSpec.parse("window@lime")
    mat = E.score_matrix(spec, models, pipeline["population"], pipeline["store"])
    conv = spec.convention
    rep = E.evaluate_scores({"F": mat, "NEG": -mat, "CONST": np.ones_like(mat)},
                            {"F": conv, "NEG": conv, "CONST": conv}, report.s, models, E.EvalConfig(B=500))
    flip_err = float(np.abs(rep.pairwise("NEG") - (1 - rep.pairwise("F"))).max())
    const = rep.pairwise("CONST")
    ok = flip_err <= 1e-12 and bool(np.all(const == 0.5))
    record(8, "flip consistency and constant-factor ties", ok,
           f"{len(rep.pairs)} pairs, max |a_neg - (1 - a)| {flip_err:.1e}, constant factor "
           f"{'all 0.5' if np.all(const == 0.5) else const.tolist()}")
    assert ok


def test_pipeline_determinism(pipeline, tmp_path):
    first = pipeline["root"]
    for argv in PIPELINE:
        name = argv[0]
        assert main([name, "--config", str(first / f"{name}_config.json"), "--out-dir", str(tmp_path)]) == 0
    compared, differ = 0, []
    for sub in ("data", "suite", "attributions", "eval"):
        for path in sorted((first / sub).rglob("*")):
            if path.is_file():
                other = tmp_path / path.relative_to(first)
                compared += 1
                if not other.exists() or other.read_bytes() != path.read_bytes():
                    differ.append(str(path.relative_to(first)))
    ok = compared > 0 and not differ
    record(9, "rerun from resolved configs is byte-identical", ok,
           f"{compared} files compared (datasets, checkpoints, stores, reports, figures), {len(differ)} differ"
           + (f": {differ}" if differ else ""))
    assert ok
