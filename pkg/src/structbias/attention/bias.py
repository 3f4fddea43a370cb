"""Per-head learnable bias tables and the index maps that read them.

Every table kind flattens to ``K`` buckets per head, and a sequence of ``n``
tokens maps to an ``(n, n)`` integer matrix of bucket ids. Gathering and the
gradient scatter then look the same for all kinds.

Bucket layout per kind:

``full``
    ``(clip(path_len) + P) * (2L + 1) + clip(lvl_diff) + L``
``selected``
    the :class:`~structbias.docmodel.RelationKind` value; the ``OTHER``
    bucket is pinned to zero and never trained
``token_linear``
    ``clip(i - j) + D``
``section_linear``
    ``clip(sec(i) - sec(j)) + D`` with pre-order section ids
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from structbias import kernels
from structbias.docmodel import RelationKind, StructureTree

KINDS = ("full", "selected", "token_linear", "section_linear")
OTHER_BUCKET = int(RelationKind.OTHER)


@dataclass(frozen=True)
class ClipBounds:
    path: int = 16
    level: int = 8
    linear: int = 128


def table_size(kind: str, clips: ClipBounds) -> int:
    if kind == "full":
        return (2 * clips.path + 1) * (2 * clips.level + 1)
    if kind == "selected":
        return len(RelationKind)
    if kind in ("token_linear", "section_linear"):
        return 2 * clips.linear + 1
    raise ValueError(f"unknown bias table kind {kind!r}")


def bucket_keys(kind: str, clips: ClipBounds) -> list:
    """Human-readable key of every bucket, in bucket order."""
    if kind == "full":
        return [(p, l) for p in range(-clips.path, clips.path + 1)
                for l in range(-clips.level, clips.level + 1)]
    if kind == "selected":
        return [k.label for k in RelationKind]
    return list(range(-clips.linear, clips.linear + 1))


def bucket_of(kind: str, key, clips: ClipBounds) -> int:
    if kind == "full":
        p, l = key
        p = min(max(int(p), -clips.path), clips.path)
        l = min(max(int(l), -clips.level), clips.level)
        return (p + clips.path) * (2 * clips.level + 1) + l + clips.level
    if kind == "selected":
        if isinstance(key, str):
            return bucket_keys(kind, clips).index(key)
        return int(RelationKind(key))
    d = min(max(int(key), -clips.linear), clips.linear)
    return d + clips.linear


@dataclass
class BiasTable:
    """One bias table per attention head; ``values`` has shape ``(heads, K)``."""

    kind: str
    values: np.ndarray
    clips: ClipBounds = field(default_factory=ClipBounds)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown bias table kind {self.kind!r}")
        self.values = np.asarray(self.values, dtype=np.float64)
        k = table_size(self.kind, self.clips)
        if self.values.ndim != 2 or self.values.shape[1] != k:
            raise ValueError(f"{self.kind} table needs shape (heads, {k}), got {self.values.shape}")

    @classmethod
    def zeros(cls, kind: str, n_heads: int, clips: ClipBounds | None = None) -> "BiasTable":
        clips = clips or ClipBounds()
        return cls(kind, np.zeros((n_heads, table_size(kind, clips))), clips)

    @property
    def n_heads(self) -> int:
        return self.values.shape[0]

    def lookup(self, key) -> np.ndarray:
        """Per-head values at ``key`` (clipped to the table bounds)."""
        b = bucket_of(self.kind, key, self.clips)
        if self.kind == "selected" and b == OTHER_BUCKET:
            return np.zeros(self.n_heads)
        return self.values[:, b].copy()

    def to_entries(self) -> list[dict]:
        """Explicit (head, key, value) records, stable under clip-bound changes."""
        keys = bucket_keys(self.kind, self.clips)
        out = []
        for h in range(self.n_heads):
            for b, key in enumerate(keys):
                v = float(self.values[h, b])
                if v != 0.0:
                    out.append({"head": h, "key": list(key) if isinstance(key, tuple) else key,
                                "value": v})
        return out

    @classmethod
    def from_entries(cls, kind: str, n_heads: int, entries, clips: ClipBounds) -> "BiasTable":
        """Rebuild a table; keys outside ``clips`` raise instead of being folded."""
        table = cls.zeros(kind, n_heads, clips)
        valid = set(map(_hashable, bucket_keys(kind, clips)))
        for e in entries:
            key = _hashable(e["key"])
            if key not in valid:
                raise ValueError(f"bias entry {e['key']!r} is outside the {kind} table bounds")
            table.values[int(e["head"]), bucket_of(kind, key, clips)] = float(e["value"])
        return table


def _hashable(key):
    return tuple(key) if isinstance(key, list) else key


def _clip(a, bound):
    return np.clip(a, -bound, bound)


def section_index(kind: str, tree: StructureTree, clips: ClipBounds) -> np.ndarray:
    """``(n_sections, n_sections)`` bucket ids between sections."""
    n = tree.n_nodes
    if kind == "full":
        p = _clip(tree.path_matrix, clips.path) + clips.path
        l = _clip(tree.level_matrix, clips.level) + clips.level
        return p * (2 * clips.level + 1) + l
    if kind == "selected":
        return np.asarray(tree.relation_matrix, dtype=np.int64)
    if kind == "section_linear":
        ids = np.arange(n)
        return _clip(ids[:, None] - ids[None, :], clips.linear) + clips.linear
    raise ValueError(f"{kind} tables are not defined between sections")


def index_matrix(kind: str, tree: StructureTree, n: int, clips: ClipBounds) -> np.ndarray:
    """``(n, n)`` bucket ids for the first ``n`` tokens of ``tree``."""
    if n > tree.n_tokens:
        raise ValueError(f"sequence of {n} tokens exceeds the tree's {tree.n_tokens} tokens")
    if kind == "token_linear":
        ids = np.arange(n)
        return _clip(ids[:, None] - ids[None, :], clips.linear) + clips.linear
    owner = tree.token_to_section[:n]
    return kernels.gather_pairs(owner, section_index(kind, tree, clips))


def gather(values: np.ndarray, index: np.ndarray, kind: str) -> np.ndarray:
    """Read ``values[..., index]`` with the pinned ``OTHER`` bucket forced to 0."""
    out = values[..., index]
    if kind == "selected":
        out = np.where(index == OTHER_BUCKET, 0.0, out)
    return out


def bias_matrix_enc(tree: StructureTree, table: BiasTable, n: int) -> np.ndarray:
    """Encoder self-attention biases, shape ``(heads, n, n)``."""
    idx = index_matrix(table.kind, tree, n, table.clips)
    return gather(table.values, idx, table.kind)


def bias_matrix_dec(tree: StructureTree, table: BiasTable, align: np.ndarray) -> np.ndarray:
    """Decoder cross-attention biases for all steps, shape ``(heads, T, n)``.

    ``align`` is the ``(T, n)`` head-averaged cross-attention of the
    second-to-last decoder layer. Entry ``[h, t, j]`` is
    ``sum_l align[t, l] * B_h[pos(l, j)]``.
    """
    if table.kind not in ("full", "selected"):
        raise ValueError("decoder biases use full or selected tables")
    align = np.atleast_2d(np.asarray(align, dtype=np.float64))
    n = align.shape[-1]
    idx = index_matrix(table.kind, tree, n, table.clips)
    per_pair = gather(table.values, idx, table.kind)  # (H, n, n)
    return align[None] @ per_pair


def bias_vector_dec(tree: StructureTree, table: BiasTable, align_t, j: int) -> np.ndarray:
    """Per-head bias ``b_tj`` for one decoding step and one input token."""
    align_t = np.asarray(align_t, dtype=np.float64)
    if align_t.ndim != 1:
        raise ValueError("alignment row must be one-dimensional")
    n = align_t.shape[0]
    if n > tree.n_tokens:
        raise ValueError(f"alignment over {n} tokens exceeds the tree's {tree.n_tokens}")
    if not 0 <= j < n:
        raise IndexError(f"input index {j} out of range for {n} tokens")
    return bias_matrix_dec(tree, table, align_t[None])[:, 0, j]


def dump_bias_table(table: BiasTable | np.ndarray, tree: StructureTree, kind: str | None = None,
                    clips: ClipBounds | None = None) -> np.ndarray:
    """Section-by-section grid of head-averaged biases, scaled by 100.

    ``table`` may be a :class:`BiasTable` or a raw array whose last axis is
    the bucket axis (e.g. ``(layers, heads, K)``); every leading axis is
    averaged.
    """
    if isinstance(table, BiasTable):
        values, kind, clips = table.values, table.kind, table.clips
    else:
        values = np.asarray(table, dtype=np.float64)
        if kind is None:
            raise ValueError("kind is required for raw arrays")
        clips = clips or ClipBounds()
    mean = values.reshape(-1, values.shape[-1]).mean(axis=0)
    idx = section_index(kind, tree, clips)
    return 100.0 * gather(mean, idx, kind)


def grid_to_csv(grid: np.ndarray, tree: StructureTree) -> str:
    labels = [tree.label(k) for k in range(tree.n_nodes)]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["src\\dst"] + labels)
    for k, row in enumerate(grid):
        w.writerow([labels[k]] + [f"{v:.6g}" for v in row])
    return buf.getvalue()
