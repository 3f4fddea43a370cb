"""A small pre-LN encoder-decoder in numpy with hand-written gradients.

Bias injection points, chosen by ``ModelConfig.placement``:

* encoder side (``enc``, ``enc_selected``, ``tok_linear``, ``sec_linear``):
  one table per encoder layer and head, added to self-attention scores;
* decoder side (``dec``, ``dec_selected``): one table per head of the last
  decoder layer, added to its cross-attention scores after weighting by the
  head-averaged cross-attention of the second-to-last layer.

Scores are scaled by ``1/sqrt(head_dim)`` before any bias is added. Tables
start at zero, so an untrained biased model matches the plain one exactly.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from structbias import kernels
from structbias.attention.bias import (
    OTHER_BUCKET,
    BiasTable,
    ClipBounds,
    index_matrix,
    table_size,
)
from structbias.docmodel import StructureTree

NEG = -1e30

ENC_PLACEMENTS = {"enc": "full", "enc_selected": "selected",
                  "tok_linear": "token_linear", "sec_linear": "section_linear"}
DEC_PLACEMENTS = {"dec": "full", "dec_selected": "selected"}
PLACEMENTS = ("none",) + tuple(ENC_PLACEMENTS) + tuple(DEC_PLACEMENTS)


class ConfigError(ValueError):
    pass


def parse_placement(placement: str) -> tuple[str | None, str | None]:
    """Split ``"enc+dec"``-style placements into (encoder kind, decoder kind)."""
    enc = dec = None
    parts = [p.strip().replace("-", "_") for p in placement.split("+") if p.strip()]
    if not parts:
        raise ConfigError("empty placement")
    for part in parts:
        if part == "none":
            if len(parts) > 1:
                raise ConfigError("'none' cannot be combined with other placements")
        elif part in ENC_PLACEMENTS:
            if enc is not None:
                raise ConfigError(f"two encoder-side placements in {placement!r}")
            enc = ENC_PLACEMENTS[part]
        elif part in DEC_PLACEMENTS:
            if dec is not None:
                raise ConfigError(f"two decoder-side placements in {placement!r}")
            dec = DEC_PLACEMENTS[part]
        else:
            raise ConfigError(f"unknown placement {part!r}; choose from {', '.join(PLACEMENTS)}")
    return enc, dec


@dataclass
class ModelConfig:
    vocab_size: int
    d_model: int = 64
    n_heads: int = 4
    n_enc_layers: int = 2
    n_dec_layers: int = 2
    d_ff: int = 128
    clip_path: int = 16
    clip_level: int = 8
    clip_linear: int = 128
    placement: str = "none"
    seed: int = 0
    max_len: int = 1024

    def __post_init__(self):
        if self.d_model % self.n_heads:
            raise ConfigError(f"d_model={self.d_model} is not divisible by n_heads={self.n_heads}")
        if min(self.vocab_size, self.d_model, self.n_heads, self.n_enc_layers,
               self.n_dec_layers, self.d_ff) < 1:
            raise ConfigError("sizes and layer counts must be positive")
        enc, dec = parse_placement(self.placement)
        if dec is not None and self.n_dec_layers < 2:
            raise ConfigError("decoder biases need at least 2 decoder layers")

    @property
    def clips(self) -> ClipBounds:
        return ClipBounds(self.clip_path, self.clip_level, self.clip_linear)

    @property
    def enc_kind(self) -> str | None:
        return parse_placement(self.placement)[0]

    @property
    def dec_kind(self) -> str | None:
        return parse_placement(self.placement)[1]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        return cls(**known)


@dataclass
class Batch:
    src: np.ndarray           # (B, S) token ids
    src_len: np.ndarray       # (B,)
    tgt_in: np.ndarray        # (B, T)
    tgt_out: np.ndarray       # (B, T)
    tgt_mask: np.ndarray      # (B, T) float, 1 where a target token counts
    enc_index: np.ndarray | None = None  # (B, S, S) bucket ids
    dec_index: np.ndarray | None = None
    trees: list = field(default_factory=list)

    @property
    def size(self) -> int:
        return self.src.shape[0]


def sinusoid(n: int, d: int) -> np.ndarray:
    pos = np.arange(n)[:, None]
    div = np.exp(np.arange(0, d, 2) * (-math.log(10000.0) / d))
    pe = np.zeros((n, d))
    pe[:, 0::2] = np.sin(pos * div)
    pe[:, 1::2] = np.cos(pos * div[: d // 2])
    return pe


# ---------------------------------------------------------------------------
# primitive layers; every *_fwd returns (out, cache), every *_bwd accumulates
# parameter gradients into ``g`` and returns input gradients

def ln_fwd(x, gain, shift, eps=1e-5):
    mu = x.mean(-1, keepdims=True)
    xc = x - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(-1, keepdims=True) + eps)
    xh = xc * inv
    return xh * gain + shift, (xh, inv)


def ln_bwd(dy, cache, gain, g, name):
    xh, inv = cache
    g[name + ".g"] += (dy * xh).reshape(-1, xh.shape[-1]).sum(0)
    g[name + ".b"] += dy.reshape(-1, xh.shape[-1]).sum(0)
    dxh = dy * gain
    return inv * (dxh - dxh.mean(-1, keepdims=True) - xh * (dxh * xh).mean(-1, keepdims=True))


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(x):
    """tanh-approximated GELU; smooth, so finite differences stay valid."""
    return 0.5 * x * (1.0 + np.tanh(_GELU_C * (x + 0.044715 * x**3)))


def gelu_grad(x):
    t = np.tanh(_GELU_C * (x + 0.044715 * x**3))
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * _GELU_C * (1.0 + 3 * 0.044715 * x * x)


def ff_fwd(x, p, name):
    hpre = x @ p[name + ".w1"] + p[name + ".b1"]
    h = gelu(hpre)
    return h @ p[name + ".w2"] + p[name + ".b2"], (x, hpre, h)


def ff_bwd(dy, cache, p, g, name):
    x, hpre, h = cache
    d = x.shape[-1]
    f = h.shape[-1]
    g[name + ".w2"] += h.reshape(-1, f).T @ dy.reshape(-1, d)
    g[name + ".b2"] += dy.reshape(-1, d).sum(0)
    dh = (dy @ p[name + ".w2"].T) * gelu_grad(hpre)
    g[name + ".w1"] += x.reshape(-1, d).T @ dh.reshape(-1, f)
    g[name + ".b1"] += dh.reshape(-1, f).sum(0)
    return dh @ p[name + ".w1"].T


def _split(x, h):
    b, t, d = x.shape
    return x.reshape(b, t, h, d // h).transpose(0, 2, 1, 3)


def _merge(x):
    b, h, t, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, t, h * dh)


def attend_biased(q, keys, bias, scale: float | None = None) -> np.ndarray:
    """One attention row: ``softmax(keys @ q * scale + bias)``.

    ``scale`` defaults to ``1 / sqrt(len(q))``, the same scaling the model uses.
    """
    q = np.asarray(q, dtype=np.float64)
    keys = np.atleast_2d(np.asarray(keys, dtype=np.float64))
    if scale is None:
        scale = 1.0 / math.sqrt(q.shape[-1])
    s = keys @ q * scale + np.asarray(bias, dtype=np.float64)
    e = np.exp(s - s.max())
    return e / e.sum()


def attn_fwd(xq, xkv, p, name, n_heads, mask, bias=None):
    """Multi-head attention ``softmax(q k^T / sqrt(dh) + bias + mask) v``."""
    q = _split(xq @ p[name + ".wq"], n_heads)
    k = _split(xkv @ p[name + ".wk"], n_heads)
    v = _split(xkv @ p[name + ".wv"], n_heads)
    scale = 1.0 / math.sqrt(q.shape[-1])
    s = (q @ k.transpose(0, 1, 3, 2)) * scale
    if bias is not None:
        s = s + bias
    s = s + mask
    s = s - s.max(-1, keepdims=True)
    e = np.exp(s)
    probs = e / e.sum(-1, keepdims=True)
    o = _merge(probs @ v)
    return o @ p[name + ".wo"], (xq, xkv, q, k, v, probs, o, scale)


def attn_bwd(dy, cache, p, g, name, n_heads, dprobs_extra=None):
    """Returns (d xq, d xkv, d scores); d scores is also d bias."""
    xq, xkv, q, k, v, probs, o, scale = cache
    d = xq.shape[-1]
    g[name + ".wo"] += o.reshape(-1, d).T @ dy.reshape(-1, d)
    do = _split(dy @ p[name + ".wo"].T, n_heads)
    dprobs = do @ v.transpose(0, 1, 3, 2)
    if dprobs_extra is not None:
        dprobs = dprobs + dprobs_extra
    dv = probs.transpose(0, 1, 3, 2) @ do
    ds = probs * (dprobs - (dprobs * probs).sum(-1, keepdims=True))
    dq = _merge((ds @ k) * scale)
    dk = _merge((ds.transpose(0, 1, 3, 2) @ q) * scale)
    dv = _merge(dv)
    g[name + ".wq"] += xq.reshape(-1, d).T @ dq.reshape(-1, d)
    g[name + ".wk"] += xkv.reshape(-1, d).T @ dk.reshape(-1, d)
    g[name + ".wv"] += xkv.reshape(-1, d).T @ dv.reshape(-1, d)
    dxq = dq @ p[name + ".wq"].T
    dxkv = dk @ p[name + ".wk"].T + dv @ p[name + ".wv"].T
    return dxq, dxkv, ds


def _gather_bias(values, index, kind):
    """values (H, K), index (B, S, S') -> (B, H, S, S')."""
    out = np.moveaxis(values[:, index], 0, 1)
    if kind == "selected":
        out = np.where((index == OTHER_BUCKET)[:, None], 0.0, out)
    return out


def _scatter_bias(dbias, index, size):
    """Inverse of :func:`_gather_bias`: dbias (B, H, S, S') -> (H, K)."""
    heads = dbias.shape[1]
    out = np.empty((heads, size))
    for h in range(heads):
        out[h] = kernels.scatter_add(index, dbias[:, h], size)
    return out


class Seq2Seq:
    """Encoder-decoder transformer holding its parameters in ``self.params``."""

    def __init__(self, config: ModelConfig, params: dict | None = None):
        self.config = config
        self.params = params if params is not None else self._init_params()
        self._pe = sinusoid(config.max_len, config.d_model)
        self._cache = None

    # -- parameters -------------------------------------------------------

    def _init_params(self) -> dict:
        c = self.config
        rng = np.random.default_rng(c.seed)
        d, f = c.d_model, c.d_ff
        p = {"emb": rng.normal(0.0, 1.0, (c.vocab_size, d))}

        def dense(name, fan_in, fan_out):
            p[name] = rng.normal(0.0, 1.0 / math.sqrt(fan_in), (fan_in, fan_out))

        def norm(name):
            p[name + ".g"] = np.ones(d)
            p[name + ".b"] = np.zeros(d)

        def attn(name):
            for w in ("wq", "wk", "wv", "wo"):
                dense(f"{name}.{w}", d, d)

        def ff(name):
            dense(name + ".w1", d, f)
            p[name + ".b1"] = np.zeros(f)
            dense(name + ".w2", f, d)
            p[name + ".b2"] = np.zeros(d)

        for l in range(c.n_enc_layers):
            norm(f"enc.{l}.ln1")
            attn(f"enc.{l}.self")
            norm(f"enc.{l}.ln2")
            ff(f"enc.{l}.ff")
        norm("enc.lnf")
        for l in range(c.n_dec_layers):
            norm(f"dec.{l}.ln1")
            attn(f"dec.{l}.self")
            norm(f"dec.{l}.ln2")
            attn(f"dec.{l}.cross")
            norm(f"dec.{l}.ln3")
            ff(f"dec.{l}.ff")
        norm("dec.lnf")
        dense("out.w", d, c.vocab_size)
        p["out.b"] = np.zeros(c.vocab_size)
        if c.enc_kind is not None:
            p["bias.enc"] = np.zeros((c.n_enc_layers, c.n_heads, table_size(c.enc_kind, c.clips)))
        if c.dec_kind is not None:
            p["bias.dec"] = np.zeros((c.n_heads, table_size(c.dec_kind, c.clips)))
        return p

    def bias_tables(self) -> dict[str, BiasTable]:
        """Views of the learned tables as :class:`BiasTable` objects."""
        c = self.config
        out = {}
        if "bias.enc" in self.params:
            for l in range(c.n_enc_layers):
                out[f"enc.{l}"] = BiasTable(c.enc_kind, self.params["bias.enc"][l], c.clips)
        if "bias.dec" in self.params:
            out["dec"] = BiasTable(c.dec_kind, self.params["bias.dec"], c.clips)
        return out

    def n_params(self) -> int:
        return int(sum(v.size for v in self.params.values()))

    # -- forward ----------------------------------------------------------

    def _embed(self, ids):
        n = ids.shape[1]
        if n > self.config.max_len:
            raise ValueError(f"sequence length {n} exceeds max_len {self.config.max_len}")
        if ids.size and (ids.min() < 0 or ids.max() >= self.config.vocab_size):
            raise ValueError("token id out of vocabulary range")
        return self.params["emb"][ids] + self._pe[:n]

    def encode(self, src, src_len, enc_index=None, keep=False):
        c, p = self.config, self.params
        B, S = src.shape
        key_mask = np.where(np.arange(S)[None, :] < src_len[:, None], 0.0, NEG)[:, None, None, :]
        x = self._embed(src)
        caches = []
        for l in range(c.n_enc_layers):
            bias = None
            if c.enc_kind is not None:
                bias = _gather_bias(p["bias.enc"][l], enc_index, c.enc_kind)
            h, ln1 = ln_fwd(x, p[f"enc.{l}.ln1.g"], p[f"enc.{l}.ln1.b"])
            a, at = attn_fwd(h, h, p, f"enc.{l}.self", c.n_heads, key_mask, bias)
            x = x + a
            h, ln2 = ln_fwd(x, p[f"enc.{l}.ln2.g"], p[f"enc.{l}.ln2.b"])
            f, ffc = ff_fwd(h, p, f"enc.{l}.ff")
            x = x + f
            if keep:
                caches.append((ln1, at, ln2, ffc))
        mem, lnf = ln_fwd(x, p["enc.lnf.g"], p["enc.lnf.b"])
        return mem, key_mask, (caches, lnf)

    def decode_step_logits(self, mem, key_mask, tgt_in, dec_index=None, keep=False):
        c, p = self.config, self.params
        T = tgt_in.shape[1]
        causal = np.where(np.tri(T, dtype=bool), 0.0, NEG)[None, None]
        y = self._embed(tgt_in)
        caches = []
        align = None
        dec_pairs = None
        last = c.n_dec_layers - 1
        for l in range(c.n_dec_layers):
            h, ln1 = ln_fwd(y, p[f"dec.{l}.ln1.g"], p[f"dec.{l}.ln1.b"])
            a, sa = attn_fwd(h, h, p, f"dec.{l}.self", c.n_heads, causal)
            y = y + a
            h, ln2 = ln_fwd(y, p[f"dec.{l}.ln2.g"], p[f"dec.{l}.ln2.b"])
            bias = None
            if c.dec_kind is not None and l == last:
                dec_pairs = _gather_bias(p["bias.dec"], dec_index, c.dec_kind)  # (B,H,S,S)
                bias = align[:, None] @ dec_pairs                               # (B,H,T,S)
            a, ca = attn_fwd(h, mem, p, f"dec.{l}.cross", c.n_heads, key_mask, bias)
            if c.dec_kind is not None and l == last - 1:
                align = ca[5].mean(axis=1)  # (B, T, S)
            y = y + a
            h, ln3 = ln_fwd(y, p[f"dec.{l}.ln3.g"], p[f"dec.{l}.ln3.b"])
            f, ffc = ff_fwd(h, p, f"dec.{l}.ff")
            y = y + f
            if keep:
                caches.append((ln1, sa, ln2, ca, ln3, ffc))
        z, lnf = ln_fwd(y, p["dec.lnf.g"], p["dec.lnf.b"])
        logits = z @ p["out.w"] + p["out.b"]
        return logits, (caches, lnf, z, align, dec_pairs)

    def forward(self, batch: Batch, keep: bool = True) -> np.ndarray:
        """Teacher-forced logits, shape ``(B, T, vocab)``."""
        mem, key_mask, enc_c = self.encode(batch.src, batch.src_len, batch.enc_index, keep)
        logits, dec_c = self.decode_step_logits(mem, key_mask, batch.tgt_in, batch.dec_index, keep)
        self._cache = (batch, mem, enc_c, dec_c, logits) if keep else None
        return logits

    # -- loss and backward -----------------------------------------------

    @staticmethod
    def cross_entropy(logits, targets, mask):
        z = logits - logits.max(-1, keepdims=True)
        logp = z - np.log(np.exp(z).sum(-1, keepdims=True))
        picked = np.take_along_axis(logp, targets[..., None], -1)[..., 0]
        count = max(mask.sum(), 1.0)
        return float(-(picked * mask).sum() / count), logp

    def loss(self, batch: Batch) -> float:
        logits = self.forward(batch)
        return self.cross_entropy(logits, batch.tgt_out, batch.tgt_mask)[0]

    def backward(self, batch: Batch | None = None) -> dict[str, np.ndarray]:
        """Exact gradients of the mean token cross-entropy for the cached batch."""
        if self._cache is None or (batch is not None and self._cache[0] is not batch):
            if batch is None:
                raise RuntimeError("backward called before forward")
            self.forward(batch)
        batch, mem, (enc_caches, enc_lnf), dec_c, logits = self._cache
        dec_caches, dec_lnf, z, align, dec_pairs = dec_c
        c, p = self.config, self.params
        g = {k: np.zeros_like(v) for k, v in p.items()}

        _, logp = self.cross_entropy(logits, batch.tgt_out, batch.tgt_mask)
        count = max(batch.tgt_mask.sum(), 1.0)
        dlogits = np.exp(logp)
        np.put_along_axis(dlogits, batch.tgt_out[..., None],
                          np.take_along_axis(dlogits, batch.tgt_out[..., None], -1) - 1.0, -1)
        dlogits *= (batch.tgt_mask / count)[..., None]

        V = c.vocab_size
        d = c.d_model
        g["out.w"] += z.reshape(-1, d).T @ dlogits.reshape(-1, V)
        g["out.b"] += dlogits.reshape(-1, V).sum(0)
        dy = ln_bwd(dlogits @ p["out.w"].T, dec_lnf, p["dec.lnf.g"], g, "dec.lnf")

        dmem = np.zeros_like(mem)
        dalign = None
        last = c.n_dec_layers - 1
        for l in range(last, -1, -1):
            ln1, sa, ln2, ca, ln3, ffc = dec_caches[l]
            dh = ff_bwd(dy, ffc, p, g, f"dec.{l}.ff")
            dy = dy + ln_bwd(dh, ln3, p[f"dec.{l}.ln3.g"], g, f"dec.{l}.ln3")
            extra = None
            if dalign is not None and l == last - 1:
                extra = np.repeat(dalign[:, None] / c.n_heads, c.n_heads, axis=1)
            dh, dkv, dscore = attn_bwd(dy, ca, p, g, f"dec.{l}.cross", c.n_heads, extra)
            if c.dec_kind is not None and l == last:
                # bias = align @ pairs: route to the table and to the alignment
                dpairs = align[:, None].transpose(0, 1, 3, 2) @ dscore
                g["bias.dec"] += _scatter_bias(dpairs, batch.dec_index, p["bias.dec"].shape[1])
                dalign = (dscore @ dec_pairs.transpose(0, 1, 3, 2)).sum(axis=1)
            dmem += dkv
            dy = dy + ln_bwd(dh, ln2, p[f"dec.{l}.ln2.g"], g, f"dec.{l}.ln2")
            dq, dkv, _ = attn_bwd(dy, sa, p, g, f"dec.{l}.self", c.n_heads)
            dy = dy + ln_bwd(dq + dkv, ln1, p[f"dec.{l}.ln1.g"], g, f"dec.{l}.ln1")
        self._embed_grad(g, batch.tgt_in, dy)

        dx = ln_bwd(dmem, enc_lnf, p["enc.lnf.g"], g, "enc.lnf")
        for l in range(c.n_enc_layers - 1, -1, -1):
            ln1, at, ln2, ffc = enc_caches[l]
            dh = ff_bwd(dx, ffc, p, g, f"enc.{l}.ff")
            dx = dx + ln_bwd(dh, ln2, p[f"enc.{l}.ln2.g"], g, f"enc.{l}.ln2")
            dq, dkv, dscore = attn_bwd(dx, at, p, g, f"enc.{l}.self", c.n_heads)
            if c.enc_kind is not None:
                g["bias.enc"][l] += _scatter_bias(dscore, batch.enc_index, p["bias.enc"].shape[2])
            dx = dx + ln_bwd(dq + dkv, ln1, p[f"enc.{l}.ln1.g"], g, f"enc.{l}.ln1")
        self._embed_grad(g, batch.src, dx)

        if c.enc_kind == "selected":
            g["bias.enc"][..., OTHER_BUCKET] = 0.0
        if c.dec_kind == "selected":
            g["bias.dec"][..., OTHER_BUCKET] = 0.0
        return g

    def _embed_grad(self, g, ids, dx):
        d = self.config.d_model
        flat = (ids.reshape(-1, 1) * d + np.arange(d)).ravel()
        g["emb"] += kernels.scatter_add(flat, dx.reshape(-1, d), g["emb"].size).reshape(g["emb"].shape)


# ---------------------------------------------------------------------------
# vocabulary and batching

SPECIALS = ("<pad>", "<bos>", "<eos>", "<unk>")
PAD, BOS, EOS, UNK = range(4)


class Vocab:
    def __init__(self, tokens=()):
        self.itos = list(SPECIALS)
        self.stoi = {t: k for k, t in enumerate(self.itos)}
        for t in tokens:
            self.add(t)

    def add(self, token: str) -> int:
        if token not in self.stoi:
            self.stoi[token] = len(self.itos)
            self.itos.append(token)
        return self.stoi[token]

    def __len__(self):
        return len(self.itos)

    def encode(self, tokens) -> list[int]:
        return [self.stoi.get(t, UNK) for t in tokens]

    def decode(self, ids) -> list[str]:
        out = []
        for i in ids:
            if i == EOS:
                break
            if i in (PAD, BOS):
                continue
            out.append(self.itos[i])
        return out

    @classmethod
    def build(cls, samples) -> "Vocab":
        v = cls()
        for s in samples:
            for t in s.tree.tokens:
                v.add(t)
            for t in s.target:
                v.add(t)
        return v


@dataclass
class Sample:
    tree: StructureTree
    target: tuple[str, ...]
    id: str = ""

    @property
    def source(self) -> tuple[str, ...]:
        return self.tree.tokens


def make_batch(samples, vocab: Vocab, config: ModelConfig) -> Batch:
    B = len(samples)
    S = max(max(s.tree.n_tokens for s in samples), 1)
    T = max(len(s.target) for s in samples) + 1
    src = np.full((B, S), PAD, dtype=np.int64)
    src_len = np.zeros(B, dtype=np.int64)
    tgt_in = np.full((B, T), PAD, dtype=np.int64)
    tgt_out = np.full((B, T), PAD, dtype=np.int64)
    mask = np.zeros((B, T))
    for b, s in enumerate(samples):
        ids = vocab.encode(s.tree.tokens)
        src[b, : len(ids)] = ids
        src_len[b] = max(len(ids), 1)
        tid = vocab.encode(s.target)
        tgt_in[b, 0] = BOS
        tgt_in[b, 1 : len(tid) + 1] = tid
        tgt_out[b, : len(tid)] = tid
        tgt_out[b, len(tid)] = EOS
        mask[b, : len(tid) + 1] = 1.0
    return Batch(src, src_len, tgt_in, tgt_out, mask,
                 _batch_index(samples, config.enc_kind, S, config),
                 _batch_index(samples, config.dec_kind, S, config),
                 [s.tree for s in samples])


def _batch_index(samples, kind, S, config):
    if kind is None:
        return None
    out = np.zeros((len(samples), S, S), dtype=np.int64)
    for b, s in enumerate(samples):
        n = s.tree.n_tokens
        if n:
            out[b, :n, :n] = index_matrix(kind, s.tree, n, config.clips)
    return out
