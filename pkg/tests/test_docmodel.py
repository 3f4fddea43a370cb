import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import ancestors, positions_oracle
from conftest import random_document
from structbias.docmodel import (
    ParseError,
    RelationKind,
    TreePosition,
    classify_relation,
    insert_section_tokens,
    parse_document,
    relation_stats,
    token_position,
    tree_position,
)

R = RelationKind


def test_small_document_preorder():
    doc = {"title": "t", "sections": [
        {"title": "a", "subsections": [{"title": "b"}, {"title": "c"}]},
        {"title": "d"}]}
    tree = parse_document(doc)
    assert tree.n_nodes == 5
    assert [n.title for n in tree.nodes] == ["t", "a", "b", "c", "d"]
    assert [n.level for n in tree.nodes] == [0, 1, 2, 2, 1]
    assert tree.node(1).children == (2, 3)


def test_empty_document_root_owns_everything():
    tree = parse_document({"title": "", "front": ["Only a lead paragraph."]})
    assert tree.n_nodes == 1
    assert tree.n_tokens == 5
    assert set(tree.token_to_section.tolist()) == {0}


def test_nested_levels(nested_tree):
    assert [nested_tree.node(k).level for k in range(1, 6)] == [1, 2, 3, 4, 2]
    assert [nested_tree.label(k) for k in range(7)] == ["root", "1", "1.1", "1.1.1", "1.1.1.1", "1.2", "2"]


def test_nested_positions(nested_tree):
    assert tree_position(nested_tree, 1, 5) == TreePosition(1, -1)
    assert tree_position(nested_tree, 5, 1) == TreePosition(-1, 1)
    assert tree_position(nested_tree, 2, 5) == TreePosition(2, 0)
    assert tree_position(nested_tree, 3, 1) == TreePosition(-2, 2)
    for k in range(7):
        assert tree_position(nested_tree, k, k) == TreePosition(0, 0)


def test_token_positions(nested_tree):
    s1 = nested_tree.node(1).token_span
    s12 = nested_tree.node(5).token_span
    assert token_position(nested_tree, s1[0], s12[0]) == TreePosition(1, -1)
    assert token_position(nested_tree, s1[0], s1[1] - 1) == TreePosition(0, 0)
    assert token_position(nested_tree, 0, s1[0]) == TreePosition(1, -1)   # front matter -> section 1
    with pytest.raises(IndexError):
        token_position(nested_tree, 0, nested_tree.n_tokens)


def test_unknown_section_id(nested_tree):
    with pytest.raises(KeyError):
        tree_position(nested_tree, 0, 99)


def test_nested_relations(nested_tree):
    assert classify_relation(nested_tree, 1, 2) is R.PARENT_OF
    assert classify_relation(nested_tree, 2, 1) is R.CHILD_OF
    assert classify_relation(nested_tree, 3, 5) is R.SAME_TOP_LEVEL
    assert classify_relation(nested_tree, 4, 4) is R.SELF
    assert classify_relation(nested_tree, 1, 3) is R.ANCESTOR_OF
    assert classify_relation(nested_tree, 2, 5) is R.SIBLING_BEFORE
    assert classify_relation(nested_tree, 4, 5) is R.NEIGHBOR_BEFORE
    assert classify_relation(nested_tree, 3, 6) is R.OTHER


def brute_relation(parent, a, b):
    """Priority list applied literally, one pair at a time."""
    top = lambda x: ([x] + ancestors(parent, x))[-2] if x != 0 else None
    if a == b:
        return R.SELF
    if parent[b] == a:
        return R.PARENT_OF
    if parent[a] == b:
        return R.CHILD_OF
    if a in ancestors(parent, b):
        return R.ANCESTOR_OF
    if b in ancestors(parent, a):
        return R.DESCENDANT_OF
    if parent[a] == parent[b]:
        return R.SIBLING_BEFORE if a < b else R.SIBLING_AFTER
    if b == a + 1:
        return R.NEIGHBOR_BEFORE
    if a == b + 1:
        return R.NEIGHBOR_AFTER
    if a and b and top(a) == top(b):
        return R.SAME_TOP_LEVEL
    return R.OTHER


def test_relation_stats_match_enumeration(nested_tree):
    parent = nested_tree.parent_array.tolist()
    stats = relation_stats(nested_tree)
    want = {k: 0 for k in R}
    for a in range(1, 7):
        for b in range(1, 7):
            want[brute_relation(parent, a, b)] += 1
    assert stats.section_counts == want
    assert sum(stats.section_fractions.values()) == pytest.approx(1.0)
    assert sum(stats.token_fractions.values()) == pytest.approx(1.0)


def test_single_section_stats():
    tree = parse_document({"sections": [{"title": "only", "paragraphs": ["x y"]}]})
    assert relation_stats(tree).section_fractions[R.SELF] == 1.0


def test_section_markers(nested_tree):
    uni = insert_section_tokens(nested_tree, "uniform")
    assert uni.tokens.count("[SEC]") == 6
    lev = insert_section_tokens(nested_tree, "leveled")
    assert lev.section_tokens(1)[0] == "[SEC-L1]"
    assert lev.section_tokens(2)[0] == "[SEC-L2]"
    bare = parse_document({"title": "x", "front": ["a b"]})
    assert insert_section_tokens(bare).tokens == bare.tokens


def test_parse_errors_have_paths():
    with pytest.raises(ParseError) as e:
        parse_document({"sections": [{"title": "a", "subsections": [{"paragraphs": []}]}]})
    assert e.value.path == "$.sections[0].subsections[0]"
    with pytest.raises(ParseError):
        parse_document({"sections": [{"title": 3}]})
    with pytest.raises(ParseError):
        parse_document({"front": "not a list"})


def test_roundtrip_document(nested_tree):
    again = parse_document(nested_tree.to_document())
    assert again.tokens == nested_tree.tokens
    assert np.array_equal(again.parent_array, nested_tree.parent_array)


@st.composite
def documents(draw):
    seed = draw(st.integers(0, 2**32 - 1))
    return random_document(np.random.default_rng(seed), max_sections=draw(st.integers(0, 20)))


@settings(max_examples=60, deadline=None)
@given(documents())
def test_structural_invariants(doc):
    tree = parse_document(doc)
    parent = tree.parent_array
    levels = tree.level_array
    for k in range(1, tree.n_nodes):
        assert parent[k] < k                       # pre-order: parents come first
        assert levels[k] == levels[parent[k]] + 1
    spans = sorted(n.token_span for n in tree.nodes)
    covered = sum(b - a for a, b in spans)
    assert covered == tree.n_tokens
    for (a0, a1), (b0, b1) in zip(spans, spans[1:]):
        assert a1 <= b0
    for n in tree.nodes:
        assert np.all(tree.token_to_section[n.token_span[0]:n.token_span[1]] == n.id)


@settings(max_examples=60, deadline=None)
@given(documents())
def test_positions_against_oracle(doc):
    tree = parse_document(doc)
    parent = [None] + tree.parent_array[1:].tolist()
    want = positions_oracle(parent)
    P, L = tree.path_matrix, tree.level_matrix
    for (a, b), (p, l) in want.items():
        assert (P[a, b], L[a, b]) == (p, l)
        assert abs(l) <= abs(p)
    assert np.array_equal(P, -P.T) and np.array_equal(L, -L.T)


@settings(max_examples=60, deadline=None)
@given(documents())
def test_relations_against_brute_force(doc):
    tree = parse_document(doc)
    parent = tree.parent_array.tolist()
    for a in range(tree.n_nodes):
        for b in range(tree.n_nodes):
            kind = classify_relation(tree, a, b)
            assert kind is brute_relation(parent, a, b)
            assert classify_relation(tree, b, a) is kind.mirror
