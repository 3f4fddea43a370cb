import math

import numpy as np
import pytest

from conftest import random_document
from structbias.attention.bias import (
    KINDS,
    BiasTable,
    ClipBounds,
    bias_matrix_dec,
    bias_matrix_enc,
    bias_vector_dec,
    dump_bias_table,
    index_matrix,
    table_size,
)
from structbias.attention.model import attend_biased
from structbias.docmodel import RelationKind, parse_document, token_position


def random_table(kind, heads=3, seed=0, clips=ClipBounds()):
    rng = np.random.default_rng(seed)
    return BiasTable(kind, rng.normal(size=(heads, table_size(kind, clips))), clips)


def test_zero_table_gives_zero_matrix(nested_tree):
    for kind in KINDS:
        t = BiasTable.zeros(kind, 2)
        assert not bias_matrix_enc(nested_tree, t, nested_tree.n_tokens).any()


def test_same_section_reads_self_bucket(nested_tree):
    t = random_table("full")
    b = bias_matrix_enc(nested_tree, t, nested_tree.n_tokens)
    i, j = nested_tree.node(3).token_span
    assert np.array_equal(b[:, i, j - 1], t.lookup((0, 0)))


def test_enc_matrix_composes_token_position(nested_tree):
    rng = np.random.default_rng(5)
    n = nested_tree.n_tokens
    t = random_table("full")
    b = bias_matrix_enc(nested_tree, t, n)
    for _ in range(20):
        i, j = (int(x) for x in rng.integers(0, n, 2))
        pos = token_position(nested_tree, i, j)
        assert np.array_equal(b[:, i, j], t.lookup((pos.path_len, pos.lvl_diff)))


def test_selected_other_is_pinned(nested_tree):
    t = random_table("selected")
    b = bias_matrix_enc(nested_tree, t, nested_tree.n_tokens)
    i = nested_tree.node(3).token_span[0]
    j = nested_tree.node(6).token_span[0]
    assert nested_tree.relation_matrix[3, 6] == RelationKind.OTHER
    assert not b[:, i, j].any()
    assert not t.lookup(RelationKind.OTHER).any()


def test_linear_kinds(nested_tree):
    t = random_table("token_linear", clips=ClipBounds(linear=3))
    b = bias_matrix_enc(nested_tree, t, 10)
    assert np.array_equal(b[:, 0, 9], t.lookup(-9))
    assert np.array_equal(b[:, 0, 9], t.lookup(-3))
    s = random_table("section_linear")
    bs = bias_matrix_enc(nested_tree, s, nested_tree.n_tokens)
    i, j = nested_tree.node(1).token_span[0], nested_tree.node(5).token_span[0]
    assert np.array_equal(bs[:, i, j], s.lookup(1 - 5))


def test_attend_biased_closed_form():
    w = attend_biased(np.zeros(2), np.zeros((2, 2)), [math.log(2), 0.0])
    assert w == pytest.approx([2 / 3, 1 / 3], abs=1e-15)
    rng = np.random.default_rng(0)
    q, K, b = rng.normal(size=4), rng.normal(size=(5, 4)), rng.normal(size=5)
    assert np.allclose(attend_biased(q, K, b), attend_biased(q, K, b + 3.7), atol=1e-15)
    plain = np.exp(K @ q / 2) / np.exp(K @ q / 2).sum()
    assert np.allclose(attend_biased(q, K, np.zeros(5)), plain, atol=1e-15)


def test_dec_vector_cases(nested_tree):
    t = random_table("full")
    n = nested_tree.n_tokens
    l_star = nested_tree.node(2).token_span[0]
    j = nested_tree.node(5).token_span[0]
    onehot = np.zeros(n)
    onehot[l_star] = 1.0
    pos = token_position(nested_tree, l_star, j)
    assert np.allclose(bias_vector_dec(nested_tree, t, onehot, j),
                       t.lookup((pos.path_len, pos.lvl_diff)), atol=1e-15)
    assert not bias_vector_dec(nested_tree, BiasTable.zeros("full", 3), onehot, j).any()
    # two tokens of one section share every position, so averaging changes nothing
    a, b = nested_tree.node(5).token_span[0], nested_tree.node(5).token_span[0] + 1
    uni = np.zeros(n)
    uni[[a, b]] = 0.5
    single = np.zeros(n)
    single[a] = 1.0
    assert np.allclose(bias_vector_dec(nested_tree, t, uni, 0), bias_vector_dec(nested_tree, t, single, 0),
                       atol=1e-15)
    with pytest.raises(IndexError):
        bias_vector_dec(nested_tree, t, onehot, n)


def test_dec_matrix_matches_vector(nested_tree):
    rng = np.random.default_rng(2)
    n = nested_tree.n_tokens
    align = rng.dirichlet(np.ones(n), size=3)
    t = random_table("selected")
    m = bias_matrix_dec(nested_tree, t, align)
    for step in range(3):
        for j in (0, 5, n - 1):
            assert np.allclose(m[:, step, j], bias_vector_dec(nested_tree, t, align[step], j), atol=1e-14)


def test_dump_grid(nested_tree):
    assert not dump_bias_table(BiasTable.zeros("full", 2), nested_tree).any()
    t = random_table("full", heads=4)
    grid = dump_bias_table(t, nested_tree)
    assert grid[1, 5] == pytest.approx(100 * t.lookup((1, -1)).mean(), abs=1e-12)
    assert grid[5, 1] == pytest.approx(100 * t.lookup((-1, 1)).mean(), abs=1e-12)
    assert grid[1, 5] != pytest.approx(-grid[5, 1])
    layers = np.stack([t.values, 2 * t.values])
    assert np.allclose(dump_bias_table(layers, nested_tree, "full"), 1.5 * grid)


def test_clipping_is_total(rng):
    clips = ClipBounds(path=2, level=1, linear=4)
    for _ in range(40):
        tree = parse_document(random_document(rng, max_sections=15))
        n = int(rng.integers(1, tree.n_tokens + 1)) if tree.n_tokens else 0
        if not n:
            continue
        for kind in KINDS:
            idx = index_matrix(kind, tree, n, clips)
            assert idx.shape == (n, n)
            assert idx.min() >= 0 and idx.max() < table_size(kind, clips)


def test_entries_roundtrip_and_bounds():
    t = random_table("full", clips=ClipBounds(path=2, level=1))
    back = BiasTable.from_entries("full", 3, t.to_entries(), t.clips)
    assert np.array_equal(back.values, t.values)
    with pytest.raises(ValueError):
        BiasTable.from_entries("full", 3, [{"head": 0, "key": [5, 0], "value": 1.0}], t.clips)
    sel = random_table("selected")
    assert sel.to_entries()[0]["key"] == "Self"


def test_bad_shapes():
    with pytest.raises(ValueError):
        BiasTable("full", np.zeros((2, 3)))
    with pytest.raises(ValueError):
        BiasTable.zeros("diagonal", 2)
