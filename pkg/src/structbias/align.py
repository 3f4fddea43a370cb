"""Summary-to-document alignment and summary-paragraph selection.

Similarity between a summary sentence and a document paragraph combines
three components, each in ``[0, 1]``:

* ``embed``: a pluggable sentence-similarity provider (term-frequency
  cosine by default), clamped to ``[0, 1]``;
* ``bigram``: share of the sentence's unique bigrams found in the paragraph;
* ``entity``: share of the sentence's entity-like spans found in the
  paragraph, where an entity is a maximal run of capitalized or numeric
  tokens.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Sequence

from structbias import kernels
from structbias.docmodel import ParseError, StructureTree, parse_document
from structbias.text import is_word, tokenize

_NUMBER = re.compile(r"^\d[\d,.]*%?$")


def words(text: str | Sequence[str]) -> list[str]:
    toks = tokenize(text) if isinstance(text, str) else list(text)
    return [t for t in toks if is_word(t)]


def tf_cosine(a: str, b: str) -> float:
    ca, cb = Counter(words(a)), Counter(words(b))
    dot = sum(v * cb[k] for k, v in ca.items())
    if not dot:
        return 0.0
    na = math.sqrt(sum(v * v for v in ca.values()))
    nb = math.sqrt(sum(v * v for v in cb.values()))
    return dot / (na * nb)


@dataclass(frozen=True)
class AlignmentConfig:
    w_embed: float = 0.4
    w_bigram: float = 1.0
    w_entity: float = 0.2
    similarity: Callable[[str, str], float] = tf_cosine

    def __post_init__(self):
        if min(self.w_embed, self.w_bigram, self.w_entity) < 0:
            raise ValueError("alignment weights must be nonnegative")

    def combine(self, embed: float, bigram: float, entity: float) -> float:
        return self.w_embed * embed + self.w_bigram * bigram + self.w_entity * entity


@dataclass(frozen=True)
class SelectionConfig:
    min_sentences: int = 3
    min_words: int = 70
    max_normalized_density: float = 0.15
    min_doc_sections: int = 3
    min_avg_paragraphs_per_section: float = 5
    min_summary_paragraphs: int = 3

    def __post_init__(self):
        for name, v in vars(self).items():
            if not v > 0:
                raise ValueError(f"{name} must be positive")


def bigram_overlap(sentence: str, paragraph: str) -> float:
    s = words(sentence)
    if len(s) < 2:
        return 0.0
    sb = set(zip(s, s[1:]))
    p = words(paragraph)
    pb = set(zip(p, p[1:]))
    return len(sb & pb) / len(sb)


def entities(text: str) -> list[tuple[str, ...]]:
    """Unique maximal runs of capitalized or numeric tokens, in order of appearance.

    A title-case word that opens a sentence is not counted.
    """
    runs, cur = [], []
    start = True
    for t in tokenize(text, lower=False):
        # a title-case word opening a sentence is only capitalized by position
        positional = start and t[:1].isupper() and not t.isupper()
        if not positional and ((t[:1].isupper() and is_word(t)) or _NUMBER.match(t)):
            cur.append(t)
        else:
            if cur:
                runs.append(tuple(cur))
            cur = []
        start = t in (".", "!", "?")
    if cur:
        runs.append(tuple(cur))
    return list(dict.fromkeys(runs))


def _contains(hay: list[str], needle: tuple[str, ...]) -> bool:
    n = len(needle)
    return any(tuple(hay[i:i + n]) == needle for i in range(len(hay) - n + 1))


def entity_overlap(sentence: str, paragraph: str) -> float:
    ents = entities(sentence)
    if not ents:
        return 0.0
    hay = tokenize(paragraph, lower=False)
    return sum(_contains(hay, e) for e in ents) / len(ents)


@dataclass(frozen=True)
class ComponentScores:
    embed: float
    bigram: float
    entity: float
    combined: float


def score_pair(sentence: str, paragraph: str, cfg: AlignmentConfig = AlignmentConfig()) -> ComponentScores:
    e = min(1.0, max(0.0, float(cfg.similarity(sentence, paragraph))))
    b = bigram_overlap(sentence, paragraph)
    n = entity_overlap(sentence, paragraph)
    return ComponentScores(e, b, n, cfg.combine(e, b, n))


def align_sentence(sentence: str, paragraphs: Sequence[str],
                   cfg: AlignmentConfig = AlignmentConfig()) -> tuple[int, ComponentScores]:
    """Best paragraph for ``sentence``; ties go to the smallest index."""
    if not paragraphs:
        raise ValueError("no paragraphs to align against")
    best, best_s = 0, None
    for k, p in enumerate(paragraphs):
        s = score_pair(sentence, p, cfg)
        if best_s is None or s.combined > best_s.combined:
            best, best_s = k, s
    return best, best_s


@dataclass
class SentenceAlignment:
    summary_paragraph: int
    sentence: int
    paragraph: int          # global index into tree.paragraph_index()
    section: int
    scores: ComponentScores

    def to_json(self) -> dict:
        return {"summary_paragraph": self.summary_paragraph, "sentence": self.sentence,
                "paragraph": self.paragraph, "section": self.section,
                "scores": vars(self.scores).copy()}


def align_summary(tree: StructureTree, summary_paragraphs: Sequence[Sequence[str]],
                  cfg: AlignmentConfig = AlignmentConfig()) -> list[SentenceAlignment]:
    index = tree.paragraph_index()
    texts = [tree.node(s).paragraphs[k] for s, k in index]
    out = []
    for i, sents in enumerate(summary_paragraphs):
        for j, sent in enumerate(sents):
            p, sc = align_sentence(sent, texts, cfg)
            out.append(SentenceAlignment(i, j, p, index[p][0], sc))
    return out


# ---------------------------------------------------------------------------
# extractive fragments

def fragments(summary: Sequence[str], document: Sequence[str]) -> list[int]:
    """Greedy fragment lengths: take the longest document match at each
    summary position, or step one token when there is none."""
    vocab: dict[str, int] = {}
    s = [vocab.setdefault(t, len(vocab)) for t in summary]
    d = [vocab.setdefault(t, len(vocab)) for t in document]
    best = kernels.match_lengths(s, d)
    out, i = [], 0
    while i < len(s):
        k = int(best[i])
        if k:
            out.append(k)
            i += k
        else:
            i += 1
    return out


@dataclass(frozen=True)
class Density:
    coverage: float
    density: float
    normalized_density: float


def extractive_density(summary, document) -> Density:
    """Coverage, density and density divided by summary length."""
    s, d = words(summary), words(document)
    if not s:
        return Density(0.0, 0.0, 0.0)
    f = fragments(s, d)
    n = len(s)
    dens = sum(k * k for k in f) / n
    return Density(sum(f) / n, dens, dens / n)


# ---------------------------------------------------------------------------
# paragraph selection

FILTERS = ("doc_sections", "avg_paragraphs", "summary_paragraphs", "sentences", "words", "density")


@dataclass
class ParagraphVerdict:
    doc_id: str
    paragraph: int
    rejected_by: str | None     # None when accepted
    n_sentences: int
    n_words: int
    normalized_density: float | None


@dataclass
class SelectionResult:
    verdicts: list[ParagraphVerdict]
    rejections: dict[str, int] = field(default_factory=dict)

    @property
    def accepted(self) -> list[tuple[str, int]]:
        return [(v.doc_id, v.paragraph) for v in self.verdicts if v.rejected_by is None]

    def histogram_csv(self) -> str:
        rows = ["filter,rejected"] + [f"{k},{self.rejections.get(k, 0)}" for k in FILTERS]
        rows.append(f"accepted,{len(self.accepted)}")
        return "\n".join(rows) + "\n"


def _summary(record: dict, path: str) -> list[list[str]]:
    sp = record.get("summary_paragraphs")
    if not isinstance(sp, list):
        raise ParseError(f"{path}.summary_paragraphs", "expected a list of sentence lists")
    for i, para in enumerate(sp):
        if not isinstance(para, list) or not all(isinstance(s, str) for s in para):
            raise ParseError(f"{path}.summary_paragraphs[{i}]", "expected a list of strings")
    return sp


def select_paragraphs(corpus: Sequence[dict], cfg: SelectionConfig = SelectionConfig()) -> SelectionResult:
    """Apply the selection filters in order and label every summary paragraph."""
    verdicts = []
    hist = {k: 0 for k in FILTERS}
    for r, record in enumerate(corpus):
        path = f"$[{r}]"
        if not isinstance(record, dict):
            raise ParseError(path, "record must be an object")
        try:
            tree = parse_document(record)
        except ParseError as e:
            raise ParseError(path + e.path[1:], e.message) from None
        summary = _summary(record, path)
        doc_id = str(record.get("id", r))
        n_sec = tree.n_nodes - 1
        avg_par = sum(len(n.paragraphs) for n in tree.nodes[1:]) / n_sec if n_sec else 0.0
        doc_words = [t for n in tree.nodes for p in n.paragraphs for t in words(p)]
        for i, sents in enumerate(summary):
            text = " ".join(sents)
            nw = len(words(text))
            nd = None
            if n_sec < cfg.min_doc_sections:
                why = "doc_sections"
            elif avg_par < cfg.min_avg_paragraphs_per_section:
                why = "avg_paragraphs"
            elif len(summary) < cfg.min_summary_paragraphs:
                why = "summary_paragraphs"
            elif len(sents) < cfg.min_sentences:
                why = "sentences"
            elif nw < cfg.min_words:
                why = "words"
            else:
                nd = extractive_density(text, doc_words).normalized_density
                why = None if nd < cfg.max_normalized_density else "density"
            if why:
                hist[why] += 1
            verdicts.append(ParagraphVerdict(doc_id, i, why, len(sents), nw, nd))
    return SelectionResult(verdicts, hist)


# ---------------------------------------------------------------------------
# task inputs

def build_task_input(tree: StructureTree, paragraph_ids: Sequence[int]) -> tuple[StructureTree, list[int]]:
    """Reduced tree: sections owning a matched paragraph in full, their
    ancestors as title-only stubs, all in document order.

    ``paragraph_ids`` index :meth:`StructureTree.paragraph_index`. Returns the
    reduced tree and, for each of its nodes, the id of the original section.
    """
    index = tree.paragraph_index()
    full = set()
    for p in paragraph_ids:
        if not 0 <= p < len(index):
            raise IndexError(f"paragraph id {p} out of range for {len(index)} paragraphs")
        full.add(index[p][0])
    keep = set(full)
    for s in full:
        while tree.node(s).parent is not None:
            s = tree.node(s).parent
            keep.add(s)
    keep.add(0)
    kept = sorted(keep)

    def section(sid: int) -> dict:
        n = tree.node(sid)
        return {"title": n.title,
                "paragraphs": list(n.paragraphs) if sid in full else [],
                "subsections": [section(c) for c in n.children if c in keep]}

    root = tree.root
    doc = {"title": root.title, "front": list(root.paragraphs) if 0 in full else [],
           "sections": [section(c) for c in root.children if c in keep]}
    return parse_document(doc), kept
