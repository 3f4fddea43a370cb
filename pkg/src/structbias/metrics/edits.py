"""Minimum number of reattachment moves between two QS hierarchies.

A move takes one pair and hangs it under its current grandparent or under
one of its current siblings; its subtree travels along. Top-level pairs sit
under a dummy root, so a top-level pair can only move under a sibling.
Moves are reversible, which makes the distance symmetric.

The search is A* over parent arrays with the number of pairs whose parent
is still wrong as heuristic. One move fixes at most one parent, so the
heuristic is consistent and the first goal popped is optimal.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

from structbias.qshier import QSHierarchy

DEFAULT_MAX_STATES = 500_000


class EditInputError(ValueError):
    pass


class EditSearchCapped(RuntimeError):
    def __init__(self, result: "EditResult"):
        super().__init__(f"search stopped after {result.expanded} states; "
                         f"distance is at least {result.steps}")
        self.result = result


@dataclass(frozen=True)
class EditResult:
    steps: int          # exact when not capped, otherwise a lower bound
    capped: bool
    expanded: int


def parent_array(h: QSHierarchy, keys: list | None = None) -> tuple[tuple[int, ...], list]:
    """Parent of each pair as an index into ``[dummy root] + pairs``.

    Pairs are identified by their (question, summary) text. With ``keys``
    given, that ordering is used instead of pre-order.
    """
    pairs = h.pairs()
    own = [(n.question, n.summary) for n in pairs]
    if len(set(own)) != len(own):
        raise EditInputError("hierarchy contains duplicate pairs")
    if keys is None:
        keys = own
    elif set(keys) != set(own):
        raise EditInputError("the two hierarchies do not contain the same pairs")
    slot = {k: i + 1 for i, k in enumerate(keys)}
    par = [0] * (len(keys) + 1)
    for p, c in h.edges():
        par[slot[own[c]]] = slot[own[p]]
    return tuple(par), keys


def neighbours(par: tuple[int, ...]):
    """Every parent array one move away from ``par``."""
    n = len(par)
    kids: list[list[int]] = [[] for _ in range(n)]
    for v in range(1, n):
        kids[par[v]].append(v)
    for v in range(1, n):
        p = par[v]
        targets = [u for u in kids[p] if u != v]
        if p != 0:
            targets.append(par[p])
        for t in targets:
            nxt = list(par)
            nxt[v] = t
            yield tuple(nxt)


def search(start: tuple[int, ...], goal: tuple[int, ...],
           max_states: int = DEFAULT_MAX_STATES) -> EditResult:
    def h(s):
        return sum(a != b for a, b in zip(s, goal))

    if start == goal:
        return EditResult(0, False, 0)
    best = {start: 0}
    heap = [(h(start), 0, start)]
    expanded = 0
    bound = 0
    while heap:
        f, g, s = heapq.heappop(heap)
        if g > best.get(s, g):
            continue
        if s == goal:
            return EditResult(g, False, expanded)
        bound = max(bound, f)
        expanded += 1
        if expanded > max_states:
            return EditResult(bound, True, expanded)
        for t in neighbours(s):
            if g + 1 < best.get(t, 1 << 30):
                best[t] = g + 1
                heapq.heappush(heap, (g + 1 + h(t), g + 1, t))
    raise AssertionError("goal unreachable")  # any tree reaches any other


def edit_search(generated: QSHierarchy, corrected: QSHierarchy,
                max_states: int = DEFAULT_MAX_STATES) -> EditResult:
    start, keys = parent_array(generated)
    goal, _ = parent_array(corrected, keys)
    return search(start, goal, max_states)


def edit_count(generated: QSHierarchy, corrected: QSHierarchy,
               max_states: int = DEFAULT_MAX_STATES) -> int:
    """Exact move count; raises :class:`EditSearchCapped` past ``max_states``."""
    res = edit_search(generated, corrected, max_states)
    if res.capped:
        raise EditSearchCapped(res)
    return res.steps
