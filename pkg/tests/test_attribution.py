import json
from itertools import permutations
from math import factorial

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oodrank import attribution as A
from oodrank import corpus as C
from oodrank import model as M
from conftest import AdditiveGame, TableGame, random_example, random_model


def shapley_by_permutations(game):
    """Independent oracle: average marginal contribution over all orderings."""
    n = game.n_players
    phi = np.zeros(n)
    for order in permutations(range(n)):
        mask = np.zeros(n, dtype=bool)
        prev = game.value(mask[None])[0]
        for i in order:
            mask[i] = True
            cur = game.value(mask[None])[0]
            phi[i] += cur - prev
            prev = cur
    return phi / factorial(n)


# ---------------------------------------------------------------- games


def test_coalition_value_endpoints(vocab, msgs_verb):
    m = random_model("MEAN_EMBED_MLP", vocab, 0, scale=3)
    ex = msgs_verb[1].examples[0]
    game = A.CoalitionGame(m, ex)
    full = A.coalition_value(game, range(game.n_players))
    assert full == pytest.approx(game.predicted_prob, abs=1e-15)
    empty = A.coalition_value(game, [])
    masked = np.full(len(ex.segments[0]), C.MASK_ID)
    assert empty == pytest.approx(m.proba_ids(masked)[0, game.explained_class], abs=1e-15)


def test_masking_is_position_local(vocab, pair_sets):
    m = random_model("MEAN_EMBED_MLP", vocab, 0)
    ex = pair_sets["pair-subseq"][1].examples[0]
    game = A.CoalitionGame(m, ex)
    for i in range(game.n_players):
        mask = np.ones((1, game.n_players), dtype=bool)
        mask[0, i] = False
        ids = game.masked_ids(mask)[0]
        changed = np.flatnonzero(ids != game.ids)
        assert list(changed) == [game.players[i]] or game.ids[game.players[i]] == C.MASK_ID
        assert ids[0] == C.CLS_ID and ids[ex.meta.separator_index] == C.SEP_ID


# ---------------------------------------------------------------- exact Shapley


def test_exact_additive():
    assert np.allclose(A.exact_shapley_scores(AdditiveGame([0.2, 0.5])), [0.2, 0.5], atol=1e-15)


def test_exact_symmetric_and_dummy():
    # v depends on players 0 and 1 symmetrically; player 2 is a dummy
    table = [0.0] * 8
    for s in range(8):
        table[s] = 0.7 * ((s & 1) and (s & 2)) + 0.1 * (bool(s & 1) + bool(s & 2))
    phi = A.exact_shapley_scores(TableGame(table))
    assert phi[0] == pytest.approx(phi[1], abs=1e-15)
    assert abs(phi[2]) <= 1e-12


def test_exact_matches_permutation_oracle():
    rng = np.random.default_rng(3)
    for n in (1, 2, 4, 6):
        game = TableGame(rng.normal(size=2 ** n))
        assert np.allclose(A.exact_shapley_scores(game), shapley_by_permutations(game), atol=1e-12)


def test_exact_size_bound(vocab):
    m = random_model("MEAN_EMBED_MLP", vocab, 0)
    ex = random_example(vocab, np.random.default_rng(0), 15)
    with pytest.raises(A.AttributionError, match="14"):
        A.exact_shapley(m, ex)


# ---------------------------------------------------------------- kernel SHAP


def test_kernel_weights_formula():
    w = A.shapley_kernel_weights(5, np.array([1, 2]))
    assert w == pytest.approx([4 / (5 * 1 * 4), 4 / (10 * 2 * 3)])


def test_kshap_full_enum_equals_exact_on_tables():
    rng = np.random.default_rng(7)
    for n in range(2, 11):
        game = TableGame(rng.uniform(size=2 ** n))
        full = A.kernel_shap_scores(game, A.KernelShapConfig(n_samples=A.FULL_ENUM))
        assert np.abs(full - A.exact_shapley_scores(game)).max() <= 1e-6


def test_kshap_additive_and_efficiency():
    c = np.array([0.3, -0.1, 0.2, 0.05])
    game = AdditiveGame(c, bias=0.1)
    for cfg in (A.KernelShapConfig(n_samples=A.FULL_ENUM), A.KernelShapConfig(n_samples=64)):
        phi = A.kernel_shap_scores(game, cfg, np.random.default_rng(0))
        assert np.allclose(phi, c, atol=1e-10)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(2, 16), samples=st.sampled_from([32, 256, "auto"]))
def test_kshap_efficiency_property(seed, n, samples):
    rng = np.random.default_rng(seed)
    c = rng.normal(size=n)
    inter = rng.normal()

    class Game:
        n_players = n

        def value(self, masks):
            m = np.atleast_2d(masks).astype(float)
            return m @ c + inter * m[:, 0] * m[:, -1]

    phi = A.kernel_shap_scores(Game(), A.KernelShapConfig(n_samples=samples), rng)
    g = Game()
    delta = g.value(np.ones((1, n)))[0] - g.value(np.zeros((1, n)))[0]
    assert abs(phi.sum() - delta) <= 1e-8


def test_kshap_full_enum_bound():
    with pytest.raises(A.AttributionError, match="20"):
        A.kernel_shap_scores(AdditiveGame(np.ones(21)), A.KernelShapConfig(n_samples=A.FULL_ENUM))


def test_kshap_sampled_close_to_exact(vocab, msgs_verb):
    m = random_model("MEAN_EMBED_MLP", vocab, 1, scale=3)
    ex = msgs_verb[1].examples[3]
    exact = A.exact_shapley(m, ex).scores
    sampled = A.kernel_shap(m, ex, A.KernelShapConfig(n_samples=4096)).scores
    assert np.abs(np.subtract(exact, sampled)).max() < 0.02


# ---------------------------------------------------------------- LIME


def test_lime_additive_recovery():
    phi = A.lime_scores(AdditiveGame([0.3, -0.1, 0.2]), A.LimeConfig(n_samples=2000), np.random.default_rng(0))
    assert np.abs(phi - [0.3, -0.1, 0.2]).max() <= 0.02


def test_lime_constant_model_zero_scores():
    with pytest.warns(UserWarning, match="zero variance"):
        phi = A.lime_scores(AdditiveGame(np.zeros(5), bias=0.4), A.LimeConfig(), np.random.default_rng(0))
    assert np.abs(phi).max() <= 1e-9


def test_lime_deterministic_and_min_samples(vocab, msgs_verb):
    m = random_model("MEAN_EMBED_MLP", vocab, 0, scale=3)
    ex = msgs_verb[1].examples[1]
    a = A.lime(m, ex, A.LimeConfig(seed=4))
    b = A.lime(m, ex, A.LimeConfig(seed=4))
    assert a == b
    with pytest.raises(A.AttributionError):
        A.lime(m, ex, A.LimeConfig(n_samples=10))


def test_lime_same_masks_across_models(vocab, msgs_verb):
    # common random numbers: mask draws depend on (seed, example id) only
    ex = msgs_verb[1].examples[2]
    games = [A.CoalitionGame(random_model("MEAN_EMBED_MLP", vocab, s), ex) for s in (0, 1)]
    seen = []
    for g in games:
        orig = g.value
        g.value = lambda masks, orig=orig: (seen.append(masks.copy()), orig(masks))[1]
        A.lime_scores(g, A.LimeConfig(), A._example_rng(0, ex))
    assert np.array_equal(seen[0], seen[1])


# ---------------------------------------------------------------- IG


def test_ig_linear_closed_form(vocab, msgs_verb):
    m = random_model("MEAN_EMBED_LINEAR", vocab, 2, scale=2)
    ex = msgs_verb[1].examples[0]
    ids = m.encode(ex)
    target = int(np.argmax(m.proba_ids(ids)[0]))
    expected = (m.embedding[ids] - m.mask_embedding) @ m.p["W_out"][target] / len(ids)
    for steps in (8, 64, 512):
        got = A.integrated_gradients(m, ex, A.IGConfig(steps=steps)).scores
        assert np.allclose(got, expected, atol=1e-15)


def test_ig_completeness_mlp(vocab, pair_sets):
    rng = np.random.default_rng(0)
    for arch in ("MEAN_EMBED_MLP", "ATTN_POOL_MLP"):
        m = random_model(arch, vocab, 5, scale=3)
        ex = random_example(vocab, rng, 8, pair=True)
        ids = m.encode(ex)
        phi = A.integrated_gradients(m, ex, A.IGConfig(steps=256))
        t = phi.explained_class
        gap = m.logits_ids(ids)[0, t] - m.logits_ids(np.zeros_like(ids))[0, t]
        assert abs(sum(phi.scores) - gap) <= 1e-4
        assert len(phi.scores) == len(C.flatten(ex))


def test_ig_refinement(vocab, msgs_verb):
    m = random_model("MEAN_EMBED_MLP", vocab, 8, scale=3)
    ex = msgs_verb[1].examples[5]
    a = np.array(A.integrated_gradients(m, ex, A.IGConfig(steps=256)).scores)
    b = np.array(A.integrated_gradients(m, ex, A.IGConfig(steps=512)).scores)
    assert np.abs(a - b).max() <= 1e-4


def test_ig_validation(vocab, msgs_verb):
    m = random_model("MEAN_EMBED_MLP", vocab, 0)
    ex = msgs_verb[1].examples[0]
    with pytest.raises(A.AttributionError):
        A.integrated_gradients(m, ex, A.IGConfig(steps=4))
    m.p["W_out"][:, 0] = np.nan
    with pytest.raises(A.AttributionError, match="step"):
        A.integrated_gradients(m, ex, A.IGConfig(steps=8))


# ---------------------------------------------------------------- records


@pytest.mark.parametrize("method", list(A.Method))
def test_attribution_contract(method, vocab, pair_sets):
    m = random_model("ATTN_POOL_MLP", vocab, 0, scale=3)
    ex = pair_sets["pair-control"][1].examples[0]
    if method is A.Method.EXACT_SHAP and len(C.attributable_positions(ex)) > 14:
        ex = C.Example("short", (("if", "dogs", "ran"), ("dogs", "ran")), 0,
                       C.Meta(control_index=0, separator_index=4))
    at = A.attribute(method, m, ex, model_label="m")
    probs = M.predict_proba(m, ex)
    assert at.explained_class == int(np.argmax(probs))
    assert at.predicted_prob == pytest.approx(max(probs), abs=1e-15)
    assert len(at.scores) == len(C.flatten(ex))
    if method is not A.Method.IG:
        assert at.scores[0] == 0 and at.scores[ex.meta.separator_index] == 0 and at.scores[-1] == 0
    assert at.config_digest == A.config_digest(method)


def test_nonfinite_scores_rejected():
    with pytest.raises(A.AttributionError):
        A.Attribution("e", "m", A.Method.LIME, (1.0, float("nan")), 0, 0.5, "x")


def test_normalize():
    at = A.Attribution("e", "m", "LIME", (2.0, -2.0), 1, 0.9, "d")
    assert A.normalize(at, "L1").scores == (0.5, -0.5)
    assert A.normalize(at, "RAW") is at
    zero = A.Attribution("e", "m", "LIME", (0.0, 0.0), 1, 0.9, "d")
    with pytest.warns(UserWarning):
        assert A.normalize(zero, "L1") is zero


def test_digest_tracks_config():
    assert A.config_digest("LIME") != A.config_digest("LIME", A.LimeConfig(n_samples=500))
    assert A.config_digest("LIME") == A.config_digest("LIME", A.LimeConfig())


def test_store_roundtrip(tmp_path, vocab, msgs_verb):
    m = random_model("MEAN_EMBED_MLP", vocab, 0)
    rows = [A.attribute("IG", m, ex, model_label="m") for ex in msgs_verb[1].examples[:5]]
    path = tmp_path / "ig.jsonl"
    A.write_store(path, rows)
    assert A.read_store(path) == rows
    line = json.loads(path.read_text().splitlines()[0])
    assert set(line) == {"example_id", "model", "method", "scores", "explained_class", "predicted_prob",
                         "config_digest", "v"}
    with open(path, "a") as fh:
        fh.write('{"example_id": "trunc')
    with pytest.raises(A.AttributionError, match=":6:"):
        A.read_store(path)
    assert A.read_store(path, strict=False) == rows
