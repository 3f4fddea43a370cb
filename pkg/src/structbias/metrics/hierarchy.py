"""Attachment-style F1 between a generated and a reference QS hierarchy.

1. Every generated pair maps to the reference pair whose summary has the
   highest ROUGE-1 F1 + ROUGE-2 F1 against it (ties go to the smaller
   reference pre-order index).
2. A generated edge ``(p, c)`` matches when ``map(p)`` is a proper ancestor
   of ``map(c)`` in the reference (parent or further up).
3. A match weighs ``(sim(p, map(p)) + sim(c, map(c))) / 4``.

Precision averages match weights over generated edges. Recall credits each
reference edge ``(parent(map(c)), map(c))`` with the best weight of the
matches that land on it, averaged over reference edges.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from structbias.metrics.overlap import _rouge_n, score_tokens
from structbias.qshier import QSHierarchy


@dataclass
class HierMatch:
    mapping: list[int]                                   # generated index -> reference index
    matched_edges: dict[tuple[int, int], float] = field(default_factory=dict)
    similarity: np.ndarray | None = None


@dataclass(frozen=True)
class HierScore:
    precision: float
    recall: float
    f1: float


def _parents(h: QSHierarchy) -> list[int]:
    par = [-1] * len(h.pairs())
    for p, c in h.edges():
        par[c] = p
    return par


def summary_similarity(gen: QSHierarchy, ref: QSHierarchy) -> np.ndarray:
    """``(n_gen, n_ref)`` matrix of ROUGE-1 F1 + ROUGE-2 F1 between summaries."""
    gt = [score_tokens(n.summary) for n in gen.pairs()]
    rt = [score_tokens(n.summary) for n in ref.pairs()]
    sim = np.zeros((len(gt), len(rt)))
    for i, a in enumerate(gt):
        for k, b in enumerate(rt):
            sim[i, k] = _rouge_n(a, b, 1).f1 + _rouge_n(a, b, 2).f1
    return sim


def hierarchy_match(gen: QSHierarchy, ref: QSHierarchy) -> HierMatch:
    sim = summary_similarity(gen, ref)
    mapping = [int(np.argmax(row)) for row in sim] if sim.shape[1] else []
    rpar = _parents(ref)
    match = HierMatch(mapping, {}, sim)
    for p, c in gen.edges():
        mp, mc = mapping[p], mapping[c]
        a = rpar[mc]
        while a != -1 and a != mp:
            a = rpar[a]
        if a == mp:
            match.matched_edges[(p, c)] = float(sim[p, mp] + sim[c, mc]) / 4
    return match


def hierarchy_f1(gen: QSHierarchy, ref: QSHierarchy) -> HierScore:
    """Weighted precision, recall and F1 of generated edges.

    When neither side has an edge the score is (1, 1, 1); when only one side
    has edges it is (0, 0, 0).
    """
    g_edges, r_edges = gen.edges(), ref.edges()
    if not g_edges and not r_edges:
        return HierScore(1.0, 1.0, 1.0)
    if not g_edges or not r_edges:
        return HierScore(0.0, 0.0, 0.0)
    m = hierarchy_match(gen, ref)
    rpar = _parents(ref)
    precision = sum(m.matched_edges.values()) / len(g_edges)
    best: dict[tuple[int, int], float] = {}
    for (_, c), w in m.matched_edges.items():
        mc = m.mapping[c]
        key = (rpar[mc], mc)
        best[key] = max(best.get(key, 0.0), w)
    recall = sum(best.values()) / len(r_edges)
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return HierScore(float(precision), float(recall), float(f1))
