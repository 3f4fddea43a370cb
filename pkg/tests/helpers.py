import numpy as np

from conftest import random_document
from structbias.attention.model import ModelConfig, Sample, Seq2Seq, Vocab, make_batch
from structbias.docmodel import parse_document

WORDS = ("alpha", "beta", "gamma", "delta", "eps", "zeta")


def random_samples(rng, n, max_sections=6, target_len=(2, 5)):
    out = []
    while len(out) < n:
        tree = parse_document(random_document(rng, max_sections, 3, WORDS))
        if tree.n_tokens < 2:
            continue
        tgt = tuple(rng.choice(WORDS, int(rng.integers(*target_len))))
        out.append(Sample(tree, tgt, f"s{len(out)}"))
    return out


def build(samples, placement="none", seed=0, **kw):
    vocab = Vocab.build(samples)
    opts = dict(d_model=16, n_heads=2, n_enc_layers=2, n_dec_layers=2, d_ff=32)
    opts.update(kw)
    cfg = ModelConfig(len(vocab), placement=placement, seed=seed, **opts)
    return Seq2Seq(cfg), vocab, make_batch(samples, vocab, cfg)


def randomize_biases(model, rng, scale=0.5):
    c = model.config
    for name in ("bias.enc", "bias.dec"):
        if name in model.params:
            model.params[name][:] = rng.normal(0, scale, model.params[name].shape)
            kind = c.enc_kind if name == "bias.enc" else c.dec_kind
            if kind == "selected":
                model.params[name][..., 10] = 0.0
