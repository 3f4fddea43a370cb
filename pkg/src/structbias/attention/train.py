"""Plain gradient-descent training loop for toy-scale runs."""

from __future__ import annotations

import logging

import numpy as np

from structbias.attention.model import Batch, Seq2Seq

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    def __init__(self, step: int, loss: float):
        super().__init__(f"loss became {loss} at step {step}")
        self.step = step
        self.loss = loss


def sgd_step(model: Seq2Seq, grads: dict, lr: float, clip_norm: float | None = None) -> float:
    """In-place update ``p -= lr * g``; returns the pre-clip gradient norm."""
    norm = float(np.sqrt(sum(float((g * g).sum()) for g in grads.values())))
    scale = lr
    if clip_norm is not None and norm > clip_norm:
        scale = lr * clip_norm / norm
    for name, g in grads.items():
        model.params[name] -= scale * g
    return norm


def token_accuracy(model: Seq2Seq, batch: Batch) -> float:
    """Teacher-forced argmax accuracy over target tokens (EOS included)."""
    logits = model.forward(batch, keep=False)
    pred = logits.argmax(-1)
    mask = batch.tgt_mask > 0
    return float((pred[mask] == batch.tgt_out[mask]).mean())


def train_toy(model: Seq2Seq, batches, steps: int, lr: float, clip_norm: float | None = 1.0,
              target_accuracy: float | None = None, eval_every: int = 50) -> list[float]:
    """Full-batch SGD over ``batches`` (a list cycled step by step).

    Returns the loss trace. Stops early once ``target_accuracy`` is reached on
    every batch, checked every ``eval_every`` steps. Raises
    :class:`TrainingDiverged` when the loss stops being finite.
    """
    if isinstance(batches, Batch):
        batches = [batches]
    trace = []
    for step in range(steps):
        batch = batches[step % len(batches)]
        loss = model.loss(batch)
        if not np.isfinite(loss):
            raise TrainingDiverged(step, loss)
        trace.append(loss)
        grads = model.backward(batch)
        sgd_step(model, grads, lr, clip_norm)
        if target_accuracy is not None and (step + 1) % eval_every == 0:
            acc = min(token_accuracy(model, b) for b in batches)
            log.debug("step %d loss %.4f acc %.4f", step + 1, loss, acc)
            if acc >= target_accuracy:
                break
    return trace
