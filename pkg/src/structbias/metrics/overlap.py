"""ROUGE-1/2/L and sentence BLEU-4 over the shared tokenizer.

Texts are case-folded and tokens made only of punctuation are dropped
before counting. No stemming and no stopword removal. When neither text is
long enough to hold a single n-gram of the requested order, ROUGE-N is 1 for
identical token sequences and 0 otherwise.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

from structbias import kernels
from structbias.text import is_word, tokenize

VARIANTS = ("R1", "R2", "RL")
BLEU_EPS = 1e-9


@dataclass(frozen=True)
class RougeScore:
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_counts(cls, hit: float, n_cand: int, n_ref: int) -> "RougeScore":
        p = hit / n_cand if n_cand else 0.0
        r = hit / n_ref if n_ref else 0.0
        return cls(p, r, 2 * p * r / (p + r) if p + r > 0 else 0.0)


ZERO = RougeScore(0.0, 0.0, 0.0)


def score_tokens(text: str | Sequence[str]) -> list[str]:
    """Tokens that take part in ROUGE and BLEU counting."""
    toks = tokenize(text) if isinstance(text, str) else [t.lower() for t in text]
    return [t for t in toks if is_word(t)]


def ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def _rouge_n(c: list[str], r: list[str], n: int) -> RougeScore:
    if c and len(c) < n and len(r) < n:
        # too short for any n-gram on either side: only an exact copy scores
        return RougeScore(1.0, 1.0, 1.0) if c == r else ZERO
    cc, rc = ngrams(c, n), ngrams(r, n)
    hit = sum((cc & rc).values())
    return RougeScore.from_counts(hit, sum(cc.values()), sum(rc.values()))


def _rouge_l(c: list[str], r: list[str]) -> RougeScore:
    if not c or not r:
        return ZERO
    ids: dict[str, int] = {}
    a = [ids.setdefault(t, len(ids)) for t in c]
    b = [ids.setdefault(t, len(ids)) for t in r]
    return RougeScore.from_counts(kernels.lcs_length(a, b), len(c), len(r))


def rouge(candidate, reference, variant: str = "R1") -> RougeScore:
    c, r = score_tokens(candidate), score_tokens(reference)
    if variant == "R1":
        return _rouge_n(c, r, 1)
    if variant == "R2":
        return _rouge_n(c, r, 2)
    if variant == "RL":
        return _rouge_l(c, r)
    raise ValueError(f"unknown ROUGE variant {variant!r}")


def rouge_all(candidate, reference) -> dict[str, RougeScore]:
    c, r = score_tokens(candidate), score_tokens(reference)
    return {"R1": _rouge_n(c, r, 1), "R2": _rouge_n(c, r, 2), "RL": _rouge_l(c, r)}


def bleu4(candidate, reference) -> float:
    """Sentence BLEU with uniform 1..4-gram weights and add-epsilon smoothing.

    A zero clipped count (or an order with no candidate n-grams) contributes
    ``1e-9`` in place of its precision. The brevity penalty is
    ``exp(1 - r/c)`` when the candidate is not longer than the reference.
    """
    c, r = score_tokens(candidate), score_tokens(reference)
    if not c:
        return 0.0
    logs = 0.0
    for n in range(1, 5):
        cc, rc = ngrams(c, n), ngrams(r, n)
        total = sum(cc.values())
        hit = sum((cc & rc).values())
        p = hit / total if hit > 0 else BLEU_EPS
        logs += math.log(p) / 4
    bp = 1.0 if len(c) > len(r) else math.exp(1 - len(r) / len(c))
    return min(1.0, bp * math.exp(logs))
