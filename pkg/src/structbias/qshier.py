"""Question-summary hierarchies and their level-token linearization.

A hierarchy is flattened depth-first. Before every pair except the first,
level markers encode the depth change from the previous pair:

* ``[L_DOWN]``: one level deeper (a child of the previous pair);
* ``[L_SAME]``: same level (a sibling);
* ``[L_UP]`` repeated ``k`` times: ``k`` levels shallower.

Inside a pair the question and summary are separated by ``[QS_SEP]``. In
rooted mode the first root's question is supplied from outside, so the
sequence opens with that root's summary alone.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

from structbias.docmodel import StructureTree
from structbias.text import tokenize

L_DOWN = "[L_DOWN]"
L_UP = "[L_UP]"
L_SAME = "[L_SAME]"
QS_SEP = "[QS_SEP]"
RESERVED = (L_DOWN, L_UP, L_SAME, QS_SEP)

_ALIASES = {"[L↓]": L_DOWN, "[L↑]": L_UP, "[L-]": L_SAME}
_ARROWS = {L_DOWN: "[L↓]", L_UP: "[L↑]", L_SAME: "[L-]"}
_STEP = {L_DOWN: 1, L_UP: -1, L_SAME: 0}


class LinearizationError(ValueError):
    def __init__(self, offset: int, reason: str):
        super().__init__(f"token {offset}: {reason}")
        self.offset = offset
        self.reason = reason


@dataclass
class QSNode:
    question: str
    summary: str
    children: list["QSNode"] = field(default_factory=list)

    def walk(self, depth: int = 1) -> Iterator[tuple["QSNode", int]]:
        yield self, depth
        for c in self.children:
            yield from c.walk(depth + 1)

    def to_json(self) -> dict:
        return {"question": self.question, "summary": self.summary,
                "children": [c.to_json() for c in self.children]}

    @classmethod
    def from_json(cls, d: dict, path: str = "$") -> "QSNode":
        if not isinstance(d, dict):
            raise ValueError(f"{path}: pair must be an object")
        q, s = d.get("question"), d.get("summary")
        if not isinstance(q, str) or not isinstance(s, str):
            raise ValueError(f"{path}: question and summary must be strings")
        kids = d.get("children", [])
        if not isinstance(kids, list):
            raise ValueError(f"{path}.children: expected a list")
        return cls(q, s, [cls.from_json(c, f"{path}.children[{k}]") for k, c in enumerate(kids)])


@dataclass
class QSHierarchy:
    roots: list[QSNode]
    mode: str = "full"   # "full" or "rooted"

    def walk(self) -> Iterator[tuple[QSNode, int]]:
        for r in self.roots:
            yield from r.walk(1)

    def pairs(self) -> list[QSNode]:
        """All pairs in pre-order."""
        return [n for n, _ in self.walk()]

    def edges(self) -> list[tuple[int, int]]:
        """(parent, child) pre-order indices; top-level pairs have no edge."""
        out = []
        index = {id(n): k for k, n in enumerate(self.pairs())}
        for n in self.pairs():
            for c in n.children:
                out.append((index[id(n)], index[id(c)]))
        return out

    def depth(self) -> int:
        return max((d for _, d in self.walk()), default=0)

    def validate(self) -> None:
        if not self.roots:
            raise ValueError("hierarchy has no pairs")
        for k, (n, _) in enumerate(self.walk()):
            for name in ("question", "summary"):
                text = getattr(n, name)
                if not text.strip():
                    raise ValueError(f"pair {k}: empty {name}")
                if any(m in text.split() for m in RESERVED):
                    raise ValueError(f"pair {k}: {name} contains a reserved marker")

    def to_json(self) -> dict:
        return {"roots": [r.to_json() for r in self.roots]}

    @classmethod
    def from_json(cls, d: dict, mode: str = "full") -> "QSHierarchy":
        if not isinstance(d, dict) or not isinstance(d.get("roots"), list):
            raise ValueError("hierarchy must be an object with a 'roots' list")
        return cls([QSNode.from_json(r, f"$.roots[{k}]") for k, r in enumerate(d["roots"])], mode)

    def dumps(self) -> str:
        return json.dumps(self.to_json(), ensure_ascii=False, indent=2)


Tokenizer = Callable[[str], Sequence[str]]


def _split(text: str) -> list[str]:
    return text.split()


def linearize(h: QSHierarchy, tokenizer: Tokenizer = _split) -> list[str]:
    out: list[str] = []
    prev = None
    for node, depth in h.walk():
        if prev is None:
            if h.mode == "rooted":
                out.extend(tokenizer(node.summary))
            else:
                out.extend(tokenizer(node.question))
                out.append(QS_SEP)
                out.extend(tokenizer(node.summary))
        else:
            delta = depth - prev
            if delta == 1:
                out.append(L_DOWN)
            elif delta == 0:
                out.append(L_SAME)
            else:
                out.extend([L_UP] * (-delta))
            out.extend(tokenizer(node.question))
            out.append(QS_SEP)
            out.extend(tokenizer(node.summary))
        prev = depth
    return out


def level_tokens_expected(h: QSHierarchy) -> int:
    """Number of level markers :func:`linearize` emits for ``h``."""
    depths = [d for _, d in h.walk()]
    return sum(a - b if b < a else 1 for a, b in zip(depths, depths[1:]))


def render(tokens: Sequence[str], style: str = "plain") -> str:
    """Join tokens; ``style="arrows"`` uses arrow markers and hides separators."""
    if style == "plain":
        return " ".join(tokens)
    if style != "arrows":
        raise ValueError(f"unknown style {style!r}")
    return " ".join(_ARROWS.get(t, t) for t in tokens if t != QS_SEP)


def _units(tokens: Sequence[str]):
    """Split into (marker run, run offset, content, content offset) tuples."""
    units = []
    run: list[str] = []
    run_at = 0
    content: list[str] = []
    content_at = 0
    for k, raw in enumerate(tokens):
        t = _ALIASES.get(raw, raw)
        if t in _STEP:
            if content:
                units.append((run, run_at, content, content_at))
                run, content = [], []
            if not run:
                run_at = k
            run.append(t)
        else:
            if not content:
                content_at = k
            content.append(t)
    if run or content:
        units.append((run, run_at, content, content_at))
    return units


def parse_linearized(tokens: Sequence[str] | str, mode: str = "strict", rooted: bool = False,
                     root_question: str | None = None) -> QSHierarchy:
    """Rebuild a hierarchy from its linearized tokens.

    ``mode="strict"`` raises :class:`LinearizationError` on any grammar
    violation. ``mode="lenient"`` never raises: level moves are clamped to
    the nearest legal level and pairs with an empty question or summary are
    dropped, their would-be children attaching to the last kept pair.
    """
    if isinstance(tokens, str):
        tokens = tokens.split()
    tokens = list(tokens)
    if mode == "strict":
        return _parse_strict(tokens, rooted, root_question)
    if mode == "lenient":
        return _parse_lenient(tokens, rooted, root_question)
    raise ValueError(f"unknown parse mode {mode!r}")


def _attach(roots, stack, level, node):
    del stack[level - 1:]
    if level == 1:
        roots.append(node)
    else:
        stack[-1].children.append(node)
    stack.append(node)


def _parse_strict(tokens, rooted, root_question):
    if not tokens:
        raise LinearizationError(0, "empty sequence")
    if rooted and root_question is None:
        raise LinearizationError(0, "rooted parsing needs the root question")
    units = _units(tokens)
    roots: list[QSNode] = []
    stack: list[QSNode] = []
    level = 0
    for k, (run, run_at, content, content_at) in enumerate(units):
        if k == 0:
            if run:
                raise LinearizationError(run_at, "sequence starts with a level token, "
                                                 "cannot go above the first level")
            new_level = 1
        else:
            if not content:
                raise LinearizationError(run_at, "level token without a following pair")
            if run == [L_DOWN]:
                new_level = level + 1
            elif run == [L_SAME]:
                new_level = level
            elif run and all(t == L_UP for t in run):
                new_level = level - len(run)
                if new_level < 1:
                    raise LinearizationError(run_at, "cannot go above the first level")
            else:
                raise LinearizationError(run_at, f"invalid level-token run {' '.join(run)}")
        if k == 0 and rooted:
            if QS_SEP in content:
                raise LinearizationError(content_at + content.index(QS_SEP),
                                         "rooted sequence must open with a summary only")
            question, summary = [root_question], content
            if not root_question.strip():
                raise LinearizationError(0, "empty root question")
        else:
            if content.count(QS_SEP) != 1:
                raise LinearizationError(content_at, "pair needs exactly one question/summary separator")
            cut = content.index(QS_SEP)
            question, summary = content[:cut], content[cut + 1:]
            if not question:
                raise LinearizationError(content_at, "empty question")
        if not summary:
            raise LinearizationError(content_at, "empty summary")
        level = new_level
        _attach(roots, stack, level, QSNode(" ".join(question), " ".join(summary)))
    return QSHierarchy(roots, "rooted" if rooted else "full")


def _parse_lenient(tokens, rooted, root_question):
    roots: list[QSNode] = []
    stack: list[QSNode] = []
    for k, (run, _, content, _) in enumerate(_units(tokens)):
        if k == 0 and rooted:
            question = root_question or ""
            summary = [t for t in content if t != QS_SEP]
            keep = bool(summary)
        else:
            if QS_SEP in content:
                cut = content.index(QS_SEP)
                question = " ".join(content[:cut])
                summary = [t for t in content[cut + 1:] if t != QS_SEP]
            else:
                question, summary = " ".join(content), []
            keep = bool(question) and bool(summary)
        if not keep:
            continue
        target = len(stack) + sum(_STEP[t] for t in run) if stack else 1
        level = min(max(target, 1), len(stack) + 1)
        _attach(roots, stack, level, QSNode(question, " ".join(summary)))
    return QSHierarchy(roots, "rooted" if rooted else "full")


# ---------------------------------------------------------------------------
# task framing

@dataclass
class TaskSample:
    tree: StructureTree        # document tokens with the prompt prepended to the root
    target: list[str]
    id: str = ""
    prompt: list[str] = field(default_factory=list)


TASKS = ("qsgen_hier", "qsgen_childq")


def encode_task(tree: StructureTree, h: QSHierarchy, task: str, parent: QSNode | None = None,
                strict: bool = True, tokenizer: Tokenizer = tokenize, sample_id: str = "") -> list[TaskSample]:
    """Frame a hierarchy plus aligned sections as generation samples.

    ``qsgen_hier``: the first root's question is prepended to the source and
    the target is the rooted linearization (one sample).

    ``qsgen_childq``: for each pair with children (or only ``parent``) the
    pair's question and summary are prepended and the target is its child
    questions concatenated.
    """
    task = task.replace("-", "_").lower()
    if task == "qsgen_hier":
        if not h.roots:
            raise ValueError("hierarchy has no pairs")
        prompt = list(tokenizer(h.roots[0].question))
        target = linearize(QSHierarchy(h.roots, "rooted"), tokenizer)
        return [TaskSample(tree.with_prefix(prompt), target, sample_id, prompt)]
    if task == "qsgen_childq":
        parents = [parent] if parent is not None else [n for n in h.pairs() if n.children]
        out = []
        for k, p in enumerate(parents):
            if not p.children and strict:
                raise ValueError("pair has no children to generate")
            prompt = list(tokenizer(p.question)) + list(tokenizer(p.summary))
            target = [t for c in p.children for t in tokenizer(c.question)]
            sid = f"{sample_id}#{k}" if sample_id else str(k)
            out.append(TaskSample(tree.with_prefix(prompt), target, sid, prompt))
        return out
    raise ValueError(f"unknown task {task!r}; choose from {', '.join(TASKS)}")
