"""Synthetic probe: recover the parent-section title of a marked token.

Every document is a small random section tree whose titles are single
tokens. One body token in a section at level 2 or deeper is preceded by
``[MARK]``; the target is the title of that section's parent. Solving it
needs to relate a token to an ancestor section, which is what structural
attention biases encode.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from structbias.attention.model import ModelConfig, Sample, Seq2Seq, Vocab, make_batch
from structbias.attention.train import train_toy
from structbias.docmodel import parse_document

MARK = "[MARK]"
DEFAULT_PLACEMENTS = ("none", "enc", "tok_linear")


def _random_doc(rng: np.random.Generator, n_titles: int, n_fill: int) -> dict:
    titles = [f"t{k}" for k in rng.permutation(n_titles)[:6]]

    def para():
        return " ".join(f"w{k}" for k in rng.integers(0, n_fill, size=int(rng.integers(2, 4))))

    it = iter(titles)
    sections = []
    for _ in range(2):
        kids = [{"title": next(it), "paragraphs": [para()], "subsections": []}
                for _ in range(int(rng.integers(1, 3)))]
        sections.append({"title": next(it), "paragraphs": [para()], "subsections": kids})
    return {"title": "", "front": [], "sections": sections}


def make_probe_samples(n: int, seed: int, n_titles: int = 12, n_fill: int = 10) -> list[Sample]:
    rng = np.random.default_rng(seed)
    out = []
    for k in range(n):
        doc = _random_doc(rng, n_titles, n_fill)
        deep = [(top, sub) for top in doc["sections"] for sub in top["subsections"]]
        top, sub = deep[int(rng.integers(len(deep)))]
        words = sub["paragraphs"][0].split()
        at = int(rng.integers(len(words)))
        sub["paragraphs"][0] = " ".join(words[:at] + [MARK] + words[at:])
        out.append(Sample(parse_document(doc), (top["title"],), f"probe-{seed}-{k}"))
    return out


def title_accuracy(model: Seq2Seq, batch) -> float:
    """Share of samples whose first predicted token is the right title."""
    logits = model.forward(batch, keep=False)
    return float((logits[:, 0].argmax(-1) == batch.tgt_out[:, 0]).mean())


@dataclass
class ProbeRow:
    placement: str
    train_accuracy: float
    test_accuracy: float
    final_loss: float


def run_probe(placements=DEFAULT_PLACEMENTS, seed: int = 0, n_train: int = 48, n_test: int = 32,
              steps: int = 200, lr: float = 0.1, d_model: int = 32, n_heads: int = 2) -> list[ProbeRow]:
    """Train one model per placement with the same seed and data; report accuracy."""
    train = make_probe_samples(n_train, seed)
    test = make_probe_samples(n_test, seed + 1)
    vocab = Vocab.build(train + test)
    rows = []
    for placement in placements:
        cfg = ModelConfig(len(vocab), d_model=d_model, n_heads=n_heads, n_enc_layers=2,
                          n_dec_layers=2, d_ff=2 * d_model, placement=placement, seed=seed,
                          clip_linear=32)
        model = Seq2Seq(cfg)
        tb, eb = make_batch(train, vocab, cfg), make_batch(test, vocab, cfg)
        trace = train_toy(model, [tb], steps, lr, clip_norm=1.0)
        rows.append(ProbeRow(placement, title_accuracy(model, tb), title_accuracy(model, eb),
                             float(trace[-1])))
    return rows


def format_table(rows: list[ProbeRow]) -> str:
    head = f"{'placement':<12} {'train_acc':>9} {'test_acc':>9} {'loss':>8}"
    body = [f"{r.placement:<12} {r.train_accuracy:>9.4f} {r.test_accuracy:>9.4f} {r.final_loss:>8.4f}"
            for r in rows]
    return "\n".join([head] + body) + "\n"
