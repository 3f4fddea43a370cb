"""Document structure trees and tree-relative positions.

A document is a nested list of sections. It becomes a tree whose node 0 is
a virtual root at level 0. The root owns the document title and any front
matter, so every pair of sections is connected. Node ids follow pre-order,
which is also document order.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from structbias import kernels
from structbias.text import tokenize


class ParseError(ValueError):
    """Malformed document record; ``path`` names the offending element."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.message = message


class RelationKind(enum.IntEnum):
    SELF = 0
    PARENT_OF = 1
    CHILD_OF = 2
    ANCESTOR_OF = 3
    DESCENDANT_OF = 4
    SIBLING_BEFORE = 5
    SIBLING_AFTER = 6
    NEIGHBOR_BEFORE = 7
    NEIGHBOR_AFTER = 8
    SAME_TOP_LEVEL = 9
    OTHER = 10

    @property
    def mirror(self) -> "RelationKind":
        return _MIRROR.get(self, self)

    @property
    def label(self) -> str:
        return "".join(part.capitalize() for part in self.name.split("_"))


_MIRROR = {
    RelationKind.PARENT_OF: RelationKind.CHILD_OF,
    RelationKind.CHILD_OF: RelationKind.PARENT_OF,
    RelationKind.ANCESTOR_OF: RelationKind.DESCENDANT_OF,
    RelationKind.DESCENDANT_OF: RelationKind.ANCESTOR_OF,
    RelationKind.SIBLING_BEFORE: RelationKind.SIBLING_AFTER,
    RelationKind.SIBLING_AFTER: RelationKind.SIBLING_BEFORE,
    RelationKind.NEIGHBOR_BEFORE: RelationKind.NEIGHBOR_AFTER,
    RelationKind.NEIGHBOR_AFTER: RelationKind.NEIGHBOR_BEFORE,
}


@dataclass(frozen=True)
class TreePosition:
    path_len: int
    lvl_diff: int

    def __neg__(self) -> "TreePosition":
        return TreePosition(-self.path_len, -self.lvl_diff)


@dataclass(frozen=True)
class SectionNode:
    id: int
    title: str
    level: int
    parent: int | None
    children: tuple[int, ...]
    paragraphs: tuple[str, ...]
    token_span: tuple[int, int]

    @property
    def is_root(self) -> bool:
        return self.parent is None


@dataclass(frozen=True)
class _NodeSpec:
    title: str
    level: int
    parent: int | None
    paragraphs: tuple[str, ...]
    tokens: tuple[str, ...]


@dataclass(frozen=True, eq=False)
class StructureTree:
    """Immutable section tree plus the token sequence it partitions."""

    nodes: tuple[SectionNode, ...]
    tokens: tuple[str, ...]
    token_to_section: np.ndarray = field(repr=False)

    @property
    def root(self) -> SectionNode:
        return self.nodes[0]

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_tokens(self) -> int:
        return len(self.tokens)

    def node(self, sid: int) -> SectionNode:
        if not isinstance(sid, (int, np.integer)) or not 0 <= sid < len(self.nodes):
            raise KeyError(f"unknown section id {sid!r}")
        return self.nodes[sid]

    def section_tokens(self, sid: int) -> tuple[str, ...]:
        a, b = self.node(sid).token_span
        return self.tokens[a:b]

    @cached_property
    def parent_array(self) -> np.ndarray:
        return np.array([-1 if n.parent is None else n.parent for n in self.nodes], dtype=np.int64)

    @cached_property
    def level_array(self) -> np.ndarray:
        return np.array([n.level for n in self.nodes], dtype=np.int64)

    @cached_property
    def _positions(self) -> tuple[np.ndarray, np.ndarray]:
        path, lvl = kernels.pair_positions(self.parent_array, self.level_array)
        path.setflags(write=False)
        lvl.setflags(write=False)
        return path, lvl

    @property
    def path_matrix(self) -> np.ndarray:
        """Signed path lengths between all section pairs, ``(n, n)``."""
        return self._positions[0]

    @property
    def level_matrix(self) -> np.ndarray:
        return self._positions[1]

    @cached_property
    def relation_matrix(self) -> np.ndarray:
        rel = _relation_matrix(self)
        rel.setflags(write=False)
        return rel

    def top_level_ancestor(self, sid: int) -> int | None:
        node = self.node(sid)
        if node.level == 0:
            return None
        while node.level > 1:
            node = self.nodes[node.parent]
        return node.id

    def label(self, sid: int) -> str:
        """Dotted section number, e.g. ``"1.2"``; the root is ``"root"``."""
        node = self.node(sid)
        if node.is_root:
            return "root"
        parts = []
        while node.parent is not None:
            parent = self.nodes[node.parent]
            parts.append(str(parent.children.index(node.id) + 1))
            node = parent
        return ".".join(reversed(parts))

    def paragraph_index(self) -> list[tuple[int, int]]:
        """(section id, paragraph offset) for every paragraph in document order."""
        return [(n.id, k) for n in self.nodes for k in range(len(n.paragraphs))]

    # -- derived trees ------------------------------------------------------

    def _specs(self) -> list[_NodeSpec]:
        return [
            _NodeSpec(n.title, n.level, n.parent, n.paragraphs, self.section_tokens(n.id))
            for n in self.nodes
        ]

    def with_prefix(self, tokens: Sequence[str]) -> "StructureTree":
        """Prepend ``tokens`` to the sequence; they belong to the virtual root."""
        specs = self._specs()
        root = specs[0]
        specs[0] = _NodeSpec(root.title, root.level, root.parent, root.paragraphs,
                             tuple(tokens) + root.tokens)
        return _build(specs)

    def with_section_markers(self, mode: str = "uniform") -> "StructureTree":
        """Prepend a ``[SEC]`` (uniform) or ``[SEC-Lk]`` (leveled) marker to every section."""
        if mode not in ("uniform", "leveled"):
            raise ValueError(f"unknown marker mode {mode!r}")
        specs = self._specs()
        for k in range(1, len(specs)):
            s = specs[k]
            marker = "[SEC]" if mode == "uniform" else f"[SEC-L{s.level}]"
            specs[k] = _NodeSpec(s.title, s.level, s.parent, s.paragraphs, (marker,) + s.tokens)
        return _build(specs)

    def to_document(self) -> dict:
        def section(sid: int) -> dict:
            n = self.nodes[sid]
            return {
                "title": n.title,
                "paragraphs": list(n.paragraphs),
                "subsections": [section(c) for c in n.children],
            }

        return {
            "title": self.root.title,
            "front": list(self.root.paragraphs),
            "sections": [section(c) for c in self.root.children],
        }


def _build(specs: list[_NodeSpec]) -> StructureTree:
    children: list[list[int]] = [[] for _ in specs]
    for k, s in enumerate(specs):
        if s.parent is not None:
            children[s.parent].append(k)
    nodes = []
    tokens: list[str] = []
    owner: list[int] = []
    for k, s in enumerate(specs):
        start = len(tokens)
        tokens.extend(s.tokens)
        owner.extend([k] * len(s.tokens))
        nodes.append(SectionNode(k, s.title, s.level, s.parent, tuple(children[k]),
                                 s.paragraphs, (start, len(tokens))))
    owner_arr = np.array(owner, dtype=np.int64)
    owner_arr.setflags(write=False)
    return StructureTree(tuple(nodes), tuple(tokens), owner_arr)


def _text_list(value, path: str) -> tuple[str, ...]:
    if value is None:
        return ()
    if not isinstance(value, list):
        raise ParseError(path, "expected a list of strings")
    for k, item in enumerate(value):
        if not isinstance(item, str):
            raise ParseError(f"{path}[{k}]", "expected a string")
    return tuple(value)


def parse_document(doc: dict) -> StructureTree:
    """Build a :class:`StructureTree` from a document record.

    The record is ``{"title", "front", "sections"}`` where each section is
    ``{"title", "paragraphs", "subsections"}``, nested to any depth.
    """
    if not isinstance(doc, dict):
        raise ParseError("$", "document must be an object")
    title = doc.get("title", "")
    if not isinstance(title, str):
        raise ParseError("$.title", "expected a string")
    front = _text_list(doc.get("front"), "$.front")
    root_tokens = tokenize(title) + [t for p in front for t in tokenize(p)]
    specs = [_NodeSpec(title, 0, None, front, tuple(root_tokens))]

    def visit(sections, path: str, parent: int, level: int) -> None:
        if sections is None:
            return
        if not isinstance(sections, list):
            raise ParseError(path, "expected a list of sections")
        for k, sec in enumerate(sections):
            here = f"{path}[{k}]"
            if not isinstance(sec, dict):
                raise ParseError(here, "section must be an object")
            if "title" not in sec:
                raise ParseError(here, "missing title")
            if not isinstance(sec["title"], str):
                raise ParseError(f"{here}.title", "expected a string")
            paras = _text_list(sec.get("paragraphs"), f"{here}.paragraphs")
            toks = tokenize(sec["title"]) + [t for p in paras for t in tokenize(p)]
            specs.append(_NodeSpec(sec["title"], level, parent, paras, tuple(toks)))
            visit(sec.get("subsections"), f"{here}.subsections", len(specs) - 1, level + 1)

    visit(doc.get("sections"), "$.sections", 0, 1)
    return _build(specs)


def tree_position(tree: StructureTree, src: int, dst: int) -> TreePosition:
    tree.node(src)
    tree.node(dst)
    return TreePosition(int(tree.path_matrix[src, dst]), int(tree.level_matrix[src, dst]))


def token_position(tree: StructureTree, i: int, j: int) -> TreePosition:
    n = tree.n_tokens
    if not (0 <= i < n and 0 <= j < n):
        raise IndexError(f"token index out of range: ({i}, {j}) with {n} tokens")
    owner = tree.token_to_section
    return tree_position(tree, int(owner[i]), int(owner[j]))


def _relation_matrix(tree: StructureTree) -> np.ndarray:
    n = tree.n_nodes
    parent = tree.parent_array
    ids = np.arange(n)
    anc = np.eye(n, dtype=bool)
    for x in range(1, n):
        anc[x] |= anc[parent[x]]
    top = np.array([-1 if tree.top_level_ancestor(k) is None else tree.top_level_ancestor(k)
                    for k in range(n)])
    x = ids[:, None]
    y = ids[None, :]
    rules = [
        (x == y, RelationKind.SELF),
        (parent[None, :] == x, RelationKind.PARENT_OF),
        (parent[:, None] == y, RelationKind.CHILD_OF),
        (anc.T, RelationKind.ANCESTOR_OF),
        (anc, RelationKind.DESCENDANT_OF),
        ((parent[:, None] == parent[None, :]) & (x < y), RelationKind.SIBLING_BEFORE),
        ((parent[:, None] == parent[None, :]) & (x > y), RelationKind.SIBLING_AFTER),
        (y == x + 1, RelationKind.NEIGHBOR_BEFORE),
        (x == y + 1, RelationKind.NEIGHBOR_AFTER),
        ((top[:, None] == top[None, :]) & (top[:, None] >= 0), RelationKind.SAME_TOP_LEVEL),
    ]
    rel = np.full((n, n), int(RelationKind.OTHER), dtype=np.int64)
    # lowest priority first so earlier rules overwrite later ones
    for mask, kind in reversed(rules):
        rel[mask] = int(kind)
    return rel


def classify_relation(tree: StructureTree, src: int, dst: int) -> RelationKind:
    tree.node(src)
    tree.node(dst)
    return RelationKind(int(tree.relation_matrix[src, dst]))


@dataclass
class RelationStats:
    section_counts: dict[RelationKind, int]
    token_counts: dict[RelationKind, int]

    @staticmethod
    def _fractions(counts):
        total = sum(counts.values())
        return {k: (v / total if total else 0.0) for k, v in counts.items()}

    @property
    def section_fractions(self) -> dict[RelationKind, float]:
        return self._fractions(self.section_counts)

    @property
    def token_fractions(self) -> dict[RelationKind, float]:
        return self._fractions(self.token_counts)

    def selected_share(self, weighting: str = "section") -> float:
        """Fraction of pairs falling in any kind other than ``OTHER``."""
        fr = self.section_fractions if weighting == "section" else self.token_fractions
        return 1.0 - fr[RelationKind.OTHER]


def relation_stats(tree: StructureTree, include_root: bool = False) -> RelationStats:
    """Histogram of relation kinds over ordered section pairs and token pairs."""
    rel = tree.relation_matrix
    sizes = np.array([b - a for a, b in (n.token_span for n in tree.nodes)], dtype=np.int64)
    if not include_root:
        rel = rel[1:, 1:]
        sizes = sizes[1:]
    weights = sizes[:, None] * sizes[None, :]
    sec = {k: 0 for k in RelationKind}
    tok = {k: 0 for k in RelationKind}
    for k in RelationKind:
        mask = rel == int(k)
        sec[k] = int(mask.sum())
        tok[k] = int(weights[mask].sum())
    return RelationStats(sec, tok)


def insert_section_tokens(tree: StructureTree, mode: str = "uniform") -> StructureTree:
    return tree.with_section_markers(mode)
