"""Greedy and beam-search decoding with repeated n-gram blocking."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from structbias.attention.model import BOS, EOS, PAD, UNK, Sample, Seq2Seq, Vocab, make_batch


@dataclass
class Hypothesis:
    ids: list[int]        # generated ids, EOS excluded
    logprob: float        # summed log-probability, EOS included when finished
    finished: bool

    @property
    def length(self) -> int:
        return len(self.ids) + (1 if self.finished else 0)

    def score(self, length_penalty: float = 1.0) -> float:
        return self.logprob / max(self.length, 1) ** length_penalty


def banned_tokens(seq: list[int], n: int) -> set[int]:
    """Tokens that would complete an n-gram already present in ``seq``."""
    if n <= 0 or len(seq) < n - 1:
        return set()
    if n == 1:
        return set(seq)
    key = tuple(seq[len(seq) - n + 1:])
    return {seq[i + n - 1] for i in range(len(seq) - n + 1) if tuple(seq[i:i + n - 1]) == key}


def has_repeated_ngram(seq, n: int) -> bool:
    if n <= 0:
        return False
    seen = set()
    for i in range(len(seq) - n + 1):
        g = tuple(seq[i:i + n])
        if g in seen:
            return True
        seen.add(g)
    return False


def beam_search(model: Seq2Seq, batch1, beam: int = 4, max_len: int = 64,
                no_repeat_ngram: int = 0, length_penalty: float = 1.0,
                greedy_floor: bool = True) -> list[Hypothesis]:
    """Beam search for a single-sample batch; returns finished hypotheses, best first.

    Hypotheses are ranked by ``logprob / length ** length_penalty``. A beam of
    1 is greedy decoding. Plain beam search can prune the greedy path and end
    below it; with ``greedy_floor`` the greedy result joins the finished pool,
    so a wider beam never scores worse than greedy.
    """
    if beam < 1:
        raise ValueError("beam must be >= 1")
    if batch1.size != 1:
        raise ValueError("beam_search decodes one sample at a time")
    mem, key_mask, _ = model.encode(batch1.src, batch1.src_len, batch1.enc_index)
    alive = [Hypothesis([], 0.0, False)]
    finished: list[Hypothesis] = []
    for step in range(max_len + 1):
        k = len(alive)
        tgt = np.array([[BOS] + h.ids for h in alive], dtype=np.int64)
        dec_index = None if batch1.dec_index is None else np.repeat(batch1.dec_index, k, axis=0)
        logits, _ = model.decode_step_logits(np.repeat(mem, k, axis=0),
                                             np.repeat(key_mask, k, axis=0), tgt, dec_index)
        z = logits[:, -1]
        z = z - z.max(-1, keepdims=True)
        logp = z - np.log(np.exp(z).sum(-1, keepdims=True))
        logp[:, [PAD, BOS, UNK]] = -np.inf
        if step == max_len:
            # out of room: only EOS may follow
            keep = logp[:, EOS].copy()
            logp[:] = -np.inf
            logp[:, EOS] = keep
        for r, h in enumerate(alive):
            for t in banned_tokens(h.ids, no_repeat_ngram):
                logp[r, t] = -np.inf
        cand = []
        for r, h in enumerate(alive):
            row = logp[r]
            top = np.argsort(-row, kind="stable")[: 2 * beam]
            for t in top:
                if np.isfinite(row[t]):
                    cand.append((h.logprob + float(row[t]), r, int(t)))
        cand.sort(key=lambda c: (-c[0], c[1], c[2]))
        nxt = []
        for rank, (lp, r, t) in enumerate(cand):
            if t == EOS:
                # an ending only counts when it ranks inside the beam
                if rank < beam:
                    finished.append(Hypothesis(list(alive[r].ids), lp, True))
            elif len(nxt) < beam:
                nxt.append(Hypothesis(alive[r].ids + [t], lp, False))
            if len(nxt) >= beam and rank >= beam - 1:
                break
        if not nxt:
            break
        alive = nxt
        if len(finished) >= beam and _settled(finished, alive, max_len, length_penalty):
            break
    if not finished:
        finished = [Hypothesis(h.ids, h.logprob, True) for h in alive]
    if greedy_floor and beam > 1:
        finished.append(beam_search(model, batch1, 1, max_len, no_repeat_ngram, length_penalty)[0])
    finished.sort(key=lambda h: -h.score(length_penalty))
    return finished


def _settled(finished, alive, max_len, length_penalty) -> bool:
    """True once no live hypothesis can still outscore the best finished one.

    Log-probabilities only fall as a hypothesis grows, so the best a live
    hypothesis can reach is its current log-probability spread over the
    longest allowed length.
    """
    best = max(h.score(length_penalty) for h in finished)
    ceiling = max(h.logprob / (max_len + 1) ** length_penalty if h.logprob < 0 else h.logprob
                  for h in alive)
    return best >= ceiling


def decode(model: Seq2Seq, sample: Sample, vocab: Vocab, beam: int = 4, max_len: int = 64,
           no_repeat_ngram: int = 0, length_penalty: float = 1.0, greedy_floor: bool = True) -> list[str]:
    """Decode one sample into target tokens."""
    best = decode_hypothesis(model, sample, vocab, beam, max_len, no_repeat_ngram, length_penalty,
                             greedy_floor)
    return vocab.decode(best.ids)


def decode_hypothesis(model, sample, vocab, beam=4, max_len=64, no_repeat_ngram=0,
                      length_penalty=1.0, greedy_floor=True) -> Hypothesis:
    probe = Sample(sample.tree, (), sample.id)
    batch = make_batch([probe], vocab, model.config)
    return beam_search(model, batch, beam, max_len, no_repeat_ngram, length_penalty,
                       greedy_floor)[0]


def sequence_logprob(model: Seq2Seq, sample: Sample, vocab: Vocab, ids: list[int]) -> float:
    """Teacher-forced log-probability of ``ids`` followed by EOS."""
    probe = Sample(sample.tree, tuple(vocab.itos[i] for i in ids), sample.id)
    batch = make_batch([probe], vocab, model.config)
    batch.tgt_in[0, 1:len(ids) + 1] = ids
    batch.tgt_out[0, :len(ids)] = ids
    logits = model.forward(batch, keep=False)
    _, logp = model.cross_entropy(logits, batch.tgt_out, batch.tgt_mask)
    return float(np.take_along_axis(logp[0], batch.tgt_out[0][:, None], -1)[: len(ids) + 1].sum())
