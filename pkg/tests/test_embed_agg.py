import numpy as np
import pytest

from newsbt.embed_agg import (
    TokenStates,
    document_vector,
    document_vectors,
    select_variant,
    select_variant_or_default,
    truncate_tail,
)
from newsbt.errors import EmptyDocumentError, InsufficientHistoryError, ShapeError
from newsbt.variants import DEFAULT_VARIANT, VARIANT_ORDER, Variant


def loop_oracle(layers, mask, variant):
    """Explicit double loop over layers and tokens."""
    L, n, d = layers.shape
    def layer_mean(l):
        acc = [0.0] * d
        cnt = 0
        for t in range(n):
            if mask[t]:
                cnt += 1
                for k in range(d):
                    acc[k] += layers[l, t, k]
        return [a / cnt for a in acc]

    if variant == "last_layer":
        return np.array(layer_mean(L - 1))
    if variant == "first_layer":
        return np.array(layer_mean(0))
    per = [layer_mean(l) for l in range(L)]
    return np.array([sum(p[k] for p in per) / L for k in range(d)])


def test_single_token_is_its_vector():
    layers = np.array([[[1.0, 2.0]], [[3.0, 4.0]], [[5.0, 6.0]]])
    st = TokenStates(layers)
    assert np.allclose(document_vector(st, "last_layer"), [5, 6])
    assert np.allclose(document_vector(st, "first_layer"), [1, 2])
    assert np.allclose(document_vector(st, "all_layer_mean"), [3, 4])


def test_opposite_tokens_cancel():
    v = np.array([0.3, -1.2, 4.0])
    layers = np.stack([np.stack([v * (l + 1), -v * (l + 1)]) for l in range(3)])
    for var in VARIANT_ORDER:
        assert np.allclose(document_vector(TokenStates(layers), var), 0.0)


def test_random_fixture_matches_double_loop():
    rng = np.random.default_rng(11)
    layers = rng.standard_normal((3, 4, 5))
    mask = np.array([True, False, True, True])
    st = TokenStates(layers, mask)
    for var in ("last_layer", "all_layer_mean", "first_layer"):
        assert np.allclose(document_vector(st, var), loop_oracle(layers, mask, var), atol=1e-14)


def test_mask_excludes_special_positions():
    layers = np.zeros((2, 3, 1))
    layers[:, 0] = 100.0  # e.g. a begin-of-sequence token
    layers[:, 1:] = 1.0
    st = TokenStates(layers, [False, True, True])
    assert document_vector(st, "last") == pytest.approx([1.0])


def test_linearity_and_permutation():
    rng = np.random.default_rng(5)
    layers = rng.standard_normal((4, 6, 3))
    perm = rng.permutation(6)
    for var in VARIANT_ORDER:
        base = document_vector(TokenStates(layers), var)
        assert np.allclose(document_vector(TokenStates(-2.5 * layers), var), -2.5 * base)
        assert np.allclose(document_vector(TokenStates(layers[:, perm]), var), base)


def test_all_layer_mean_is_mean_of_single_layers():
    rng = np.random.default_rng(8)
    layers = rng.standard_normal((5, 7, 4))
    singles = [document_vector(TokenStates(layers[l : l + 1]), "last") for l in range(5)]
    assert np.allclose(document_vector(TokenStates(layers), "mean"), np.mean(singles, axis=0))


def test_empty_document():
    with pytest.raises(EmptyDocumentError):
        document_vector(TokenStates(np.ones((2, 3, 2)), [False] * 3), "last")


def test_token_state_shapes():
    with pytest.raises(ShapeError):
        TokenStates(np.ones((3, 2)))
    with pytest.raises(ShapeError):
        TokenStates(np.ones((1, 3, 2)), [True, False])


def test_document_vectors_keys():
    out = document_vectors(TokenStates(np.ones((2, 2, 2))))
    assert list(out) == list(VARIANT_ORDER)


def test_truncate_tail_keeps_head():
    assert truncate_tail("first\nsecond\nthird", 12) == "first\nsecond"
    assert truncate_tail("abc", None) == "abc"


# -- selection -------------------------------------------------------------


def _sr(x):
    x = np.asarray(x)
    return np.sqrt(252) * x.mean() / x.std(ddof=1)


def test_dominant_variant_wins():
    rng = np.random.default_rng(1)
    base = rng.normal(0, 0.01, 300)
    hist = {"last_layer": base, "all_layer_mean": base, "first_layer": base + 0.005}
    assert select_variant(hist) is Variant.FIRST_LAYER


def test_identical_histories_tie_to_last():
    x = np.random.default_rng(2).normal(0.001, 0.01, 100)
    assert select_variant({v: x for v in VARIANT_ORDER}) is Variant.LAST_LAYER
    assert select_variant({"first_layer": x, "all_layer_mean": x}) is Variant.ALL_LAYER_MEAN


def test_random_histories_match_direct_sharpe():
    rng = np.random.default_rng(3)
    for _ in range(50):
        hist = {v: rng.normal(rng.normal(0, 0.001), 0.01, 250) for v in VARIANT_ORDER}
        expected = max(VARIANT_ORDER, key=lambda v: _sr(hist[v]))
        assert select_variant(hist) is expected
        assert select_variant({k: 3.7 * h for k, h in hist.items()}) is expected


def test_empty_history():
    with pytest.raises(InsufficientHistoryError):
        select_variant({v: [] for v in VARIANT_ORDER})
    assert select_variant_or_default({v: [0.1] for v in VARIANT_ORDER}) is DEFAULT_VARIANT
    assert DEFAULT_VARIANT is Variant.ALL_LAYER_MEAN


def test_unequal_lengths_rejected():
    with pytest.raises(ShapeError):
        select_variant({"last": [0.1, 0.2], "mean": [0.1, 0.2, 0.3]})


def test_variant_short_codes():
    assert [v.short for v in VARIANT_ORDER] == ["last", "mean", "first"]
    assert Variant.parse("mean") is Variant.ALL_LAYER_MEAN
    with pytest.raises(ValueError):
        Variant.parse("middle")
