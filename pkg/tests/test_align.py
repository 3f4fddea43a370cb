import dataclasses
import itertools

import numpy as np
import pytest

from conftest import load_json, random_document
from structbias.align import (
    AlignmentConfig,
    SelectionConfig,
    align_sentence,
    align_summary,
    bigram_overlap,
    build_task_input,
    entities,
    entity_overlap,
    extractive_density,
    fragments,
    score_pair,
    select_paragraphs,
    words,
)
from structbias.docmodel import ParseError, parse_document


def test_bigram_hand_count():
    # unique bigrams: the budget, budget rose, rose last, last year
    assert bigram_overlap("the budget rose last year", "the budget rose sharply this year") == 0.5
    assert bigram_overlap("the budget rose", "so the budget rose again") == 1.0
    assert bigram_overlap("the budget rose", "costs fell") == 0.0
    assert bigram_overlap("budget", "budget") == 0.0


def test_entity_hand_count():
    sent = "In 2019 the Senate asked GAO for data."
    assert entities(sent) == [("2019",), ("Senate",), ("GAO",)]
    assert entity_overlap(sent, "The GAO report was late.") == pytest.approx(1 / 3)
    assert entity_overlap(sent, "GAO told the Senate about 2019.") == 1.0
    assert entity_overlap("costs rose quietly", "Anything") == 0.0
    assert entities("The Federal Reserve met.") == [("Federal", "Reserve")]


def test_combined_score():
    assert AlignmentConfig().combine(0.5, 0.5, 0.5) == pytest.approx(0.8)
    with pytest.raises(ValueError):
        AlignmentConfig(w_bigram=-1)
    low = score_pair("a b", "a b", AlignmentConfig(similarity=lambda a, b: -0.5))
    high = score_pair("a b", "a b", AlignmentConfig(similarity=lambda a, b: 3.0))
    assert low.embed == 0.0 and high.embed == 1.0


def test_align_sentence_choices():
    sent = "The agency cut spending on IT projects by 12 percent in 2020."
    paras = [
        "Spending on buildings rose in 2020.",
        "The agency reviewed projects.",
        "Officials said the agency cut spending on IT projects by 12 percent in 2020.",
        "IT spending was flat.",
    ]
    idx, scores = align_sentence(sent, paras)
    assert idx == 2 and scores.bigram == 1.0
    assert align_sentence(sent, ["unrelated words only"])[0] == 0
    assert align_sentence(sent, [paras[1], paras[1]])[0] == 0
    with pytest.raises(ValueError):
        align_sentence(sent, [])


def test_align_summary_maps_to_sections(nested_tree):
    index = nested_tree.paragraph_index()
    target = nested_tree.node(index[-1][0]).paragraphs[index[-1][1]]
    out = align_summary(nested_tree, [[target]])
    assert out[0].paragraph == len(index) - 1 and out[0].section == index[-1][0]


def brute_fragments(s, d):
    out, i = [], 0
    while i < len(s):
        best = 0
        for j in range(len(d)):
            k = 0
            while i + k < len(s) and j + k < len(d) and s[i + k] == d[j + k]:
                k += 1
            best = max(best, k)
        if best:
            out.append(best)
            i += best
        else:
            i += 1
    return out


def test_density_hand_case():
    dens = extractive_density("a b c x y d e z w v", "a b c q d e")
    assert (dens.coverage, dens.density, dens.normalized_density) == pytest.approx((0.5, 1.3, 0.13))
    copy = "the report found costs rose"
    assert extractive_density(copy, "before " + copy + " after").normalized_density == 1.0
    assert extractive_density("x y", "a b").normalized_density == 0.0


def test_fragments_against_brute_force():
    rng = np.random.default_rng(9)
    for _ in range(400):
        s = list(rng.choice(list("abcde"), int(rng.integers(0, 31))))
        d = list(rng.choice(list("abcdef"), int(rng.integers(0, 31))))
        f = fragments(s, d)
        assert f == brute_fragments(s, d)
        dens = extractive_density(s, d)
        assert 0 <= dens.normalized_density <= 1 and 0 <= dens.coverage <= 1


def fixture_record():
    return load_json("filter_corpus.json")[0]


def test_filter_fixture_labels():
    rec = fixture_record()
    res = select_paragraphs([rec])
    assert [v.rejected_by for v in res.verdicts] == rec["expected"]
    assert res.verdicts[3].normalized_density == 1.0
    assert res.accepted == [(rec["id"], 0), (rec["id"], 5)]
    hist = dict(line.split(",") for line in res.histogram_csv().strip().splitlines()[1:])
    assert hist == {"doc_sections": "0", "avg_paragraphs": "0", "summary_paragraphs": "0",
                    "sentences": "1", "words": "1", "density": "2", "accepted": "2"}


def test_filter_document_level_rules():
    rec = fixture_record()
    short = dict(rec, summary_paragraphs=rec["summary_paragraphs"][:2])
    assert {v.rejected_by for v in select_paragraphs([short]).verdicts} == {"summary_paragraphs"}
    thin = dict(rec, sections=rec["sections"][:2])
    assert {v.rejected_by for v in select_paragraphs([thin]).verdicts} == {"doc_sections"}
    with pytest.raises(ParseError):
        select_paragraphs([dict(rec, summary_paragraphs="oops")])
    with pytest.raises(ValueError):
        SelectionConfig(min_words=0)


RELAXED = {"min_sentences": 2, "min_words": 40, "max_normalized_density": 0.2,
           "min_doc_sections": 2, "min_avg_paragraphs_per_section": 2, "min_summary_paragraphs": 2}


def test_filter_monotone():
    rec = fixture_record()
    base = set(select_paragraphs([rec]).accepted)
    for k in range(1, len(RELAXED) + 1):
        for names in itertools.combinations(RELAXED, k):
            cfg = SelectionConfig(**{n: RELAXED[n] for n in names})
            assert base <= set(select_paragraphs([rec], cfg).accepted)


def stub_doc():
    return {"title": "report", "front": ["front matter text"], "sections": [
        {"title": "one", "paragraphs": ["p one"]},
        {"title": "two", "paragraphs": ["p two"]},
        {"title": "three", "paragraphs": ["p three"], "subsections": [
            {"title": "three one", "paragraphs": ["p three one a", "p three one b"]},
            {"title": "three four", "paragraphs": ["p three four"]},
        ]},
    ]}


def test_build_task_input_stub():
    tree = parse_document(stub_doc())
    index = tree.paragraph_index()
    p31 = [k for k, (s, _) in enumerate(index) if tree.node(s).title == "three one"]
    reduced, kept = build_task_input(tree, p31[:1])
    assert [reduced.node(s).title for s in range(reduced.n_nodes)] == ["report", "three", "three one"]
    assert reduced.node(1).paragraphs == () and reduced.node(2).paragraphs == ("p three one a", "p three one b")
    assert list(reduced.level_array) == [0, 1, 2]
    assert [tree.node(s).title for s in kept] == ["report", "three", "three one"]
    front, kept = build_task_input(tree, [0])
    assert front.n_nodes == 1 and front.root.paragraphs == ("front matter text",) and kept == [0]
    with pytest.raises(IndexError):
        build_task_input(tree, [len(index)])


def test_build_task_input_positions_agree(rng):
    for _ in range(100):
        tree = parse_document(random_document(rng, max_sections=15))
        n_par = len(tree.paragraph_index())
        if not n_par:
            continue
        chosen = sorted(set(rng.integers(0, n_par, int(rng.integers(1, 4))).tolist()))
        reduced, kept = build_task_input(tree, chosen)
        k = np.array(kept)
        assert np.array_equal(reduced.path_matrix, tree.path_matrix[np.ix_(k, k)])
        assert np.array_equal(reduced.level_matrix, tree.level_matrix[np.ix_(k, k)])
        again = parse_document(reduced.to_document())
        assert np.array_equal(again.parent_array, reduced.parent_array)
