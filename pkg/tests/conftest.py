import numpy as np
import pytest

from oodrank import corpus as C
from oodrank import model as M

ACCEPTANCE_LINES: list[str] = []


def record(criterion: int, name: str, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(f"[{criterion}] {'PASS' if ok else 'FAIL'} {name}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s[1:s.index("]")])):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def vocab():
    return C.default_vocabulary()


@pytest.fixture(scope="session")
def msgs_verb():
    return C.generate("msgs-verb", 200, 200, 0)


@pytest.fixture(scope="session")
def pair_sets():
    return {t: C.generate(t, 100, 200, 1) for t in ("pair-subseq", "pair-control", "pair-swap")}


def random_model(arch: str, vocab, seed: int, scale: float = 1.0) -> M.Model:
    hidden = () if arch == "MEAN_EMBED_LINEAR" else (8,)
    spec = M.ModelSpec(M.Architecture(arch), len(vocab), embed_dim=6, hidden_dims=hidden, seed=seed)
    model = M.init(spec, vocab)
    if scale != 1.0:
        model.parameters *= scale
    return model


def random_example(vocab, rng, n_tokens: int, pair: bool = False) -> C.Example:
    words = list(vocab.tokens[3:])
    if not pair:
        seg = tuple(str(w) for w in rng.choice(words, size=n_tokens))
        return C.Example(f"r{rng.integers(1 << 30)}", (seg,), 0, C.Meta(feature_index=0))
    la = max(1, n_tokens // 2)
    lb = max(1, n_tokens - la)
    a = tuple(str(w) for w in rng.choice(words, size=la))
    b = tuple(str(w) for w in rng.choice(words, size=lb))
    return C.Example(f"p{rng.integers(1 << 30)}", (a, b), 1, C.Meta(separator_index=la + 1))


def fd_grad(model, ids, target, h=1e-4):
    X = model.embedding[ids][None].copy()
    out = np.zeros(X.shape[1:])
    for t in range(X.shape[1]):
        for k in range(X.shape[2]):
            Xp, Xm = X.copy(), X.copy()
            Xp[0, t, k] += h
            Xm[0, t, k] -= h
            out[t, k] = (model.forward(Xp)[0][0, target] - model.forward(Xm)[0][0, target]) / (2 * h)
    return out


class AdditiveGame:
    """v(S) = bias + sum of c_i over S."""

    def __init__(self, c, bias=0.0):
        self.c = np.asarray(c, dtype=float)
        self.bias = bias
        self.n_players = len(self.c)

    def value(self, masks):
        return self.bias + np.atleast_2d(masks).astype(float) @ self.c


class TableGame:
    """Arbitrary set function given as a table over bitmask integers."""

    def __init__(self, table):
        self.table = np.asarray(table, dtype=float)
        self.n_players = int(np.log2(len(self.table)))

    def value(self, masks):
        masks = np.atleast_2d(masks)
        ints = (masks.astype(np.int64) << np.arange(self.n_players)).sum(axis=1)
        return self.table[ints]
