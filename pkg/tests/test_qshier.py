import numpy as np
import pytest

from structbias.docmodel import parse_document
from structbias.qshier import (
    L_DOWN,
    L_SAME,
    L_UP,
    QS_SEP,
    LinearizationError,
    QSHierarchy,
    QSNode,
    encode_task,
    level_tokens_expected,
    linearize,
    parse_linearized,
    render,
)

ARROW_FORM = "A1 [L↓] Q1.1 A1.1 [L-] Q1.2 A1.2 [L↓] Q1.2.1 A1.2.1"
POOL = ["what", "is", "the", "plan", "cost", "who", "pays", "states", "report", "gains", "risk"]


def example_hierarchy(mode="full"):
    return QSHierarchy([QSNode("Q1", "A1", [
        QSNode("Q1.1", "A1.1"),
        QSNode("Q1.2", "A1.2", [QSNode("Q1.2.1", "A1.2.1")]),
    ])], mode)


def random_hierarchy(rng, max_pairs=10, max_depth=4):
    n = int(rng.integers(1, max_pairs + 1))

    def text():
        return " ".join(rng.choice(POOL, int(rng.integers(1, 4))))

    roots, stack = [], []
    for _ in range(n):
        depth = 1 if not stack else int(rng.integers(1, min(len(stack) + 1, max_depth) + 1))
        node = QSNode(text(), text())
        del stack[depth - 1:]
        (stack[-1].children if stack else roots).append(node)
        stack.append(node)
    return QSHierarchy(roots)


def test_example_rooted():
    toks = linearize(example_hierarchy("rooted"))
    assert render(toks, "arrows") == ARROW_FORM
    back = parse_linearized(toks, rooted=True, root_question="Q1")
    assert back == example_hierarchy("rooted")
    aliased = [{"[L_DOWN]": "[L↓]", "[L_SAME]": "[L-]"}.get(t, t) for t in toks]
    assert parse_linearized(aliased, rooted=True, root_question="Q1") == example_hierarchy("rooted")


def test_single_root_rooted():
    assert linearize(QSHierarchy([QSNode("Q1", "A1")], "rooted")) == ["A1"]


def test_multi_level_drop_and_roots():
    h = QSHierarchy([
        QSNode("a", "x", [QSNode("b", "y", [QSNode("c", "z")])]),
        QSNode("d", "w"),
    ])
    toks = linearize(h)
    assert toks[toks.index("d") - 2: toks.index("d")] == [L_UP, L_UP]
    assert parse_linearized(toks) == h
    flat = QSHierarchy([QSNode("a", "x"), QSNode("b", "y")])
    assert linearize(flat) == ["a", QS_SEP, "x", L_SAME, "b", QS_SEP, "y"]


def test_roundtrip_500():
    rng = np.random.default_rng(0)
    for _ in range(500):
        h = random_hierarchy(rng)
        toks = linearize(h)
        assert parse_linearized(toks, "strict") == h
        n_text = sum(len(n.question.split()) + len(n.summary.split()) + 1 for n in h.pairs())
        assert len(toks) == n_text + level_tokens_expected(h)
        downs, ups = toks.count(L_DOWN), toks.count(L_UP)
        last_depth = list(h.walk())[-1][1]
        assert downs - ups == last_depth - 1


@pytest.mark.parametrize("text, offset", [
    ("[L_UP] Q [QS_SEP] A", 0),
    ("", 0),
    ("Q [QS_SEP] A [L_DOWN]", 3),
    ("Q [QS_SEP] A [L_UP] R [QS_SEP] B", 3),
    ("Q [QS_SEP] A [L_DOWN] [L_DOWN] R [QS_SEP] B", 3),
    ("Q [QS_SEP] A [L_SAME] R B", 4),
    ("[QS_SEP] A", 0),
    ("Q [QS_SEP]", 0),
    ("Q [QS_SEP] A [QS_SEP] B", 0),
])
def test_strict_rejects(text, offset):
    with pytest.raises(LinearizationError) as e:
        parse_linearized(text.split(), "strict")
    assert e.value.offset == offset


def test_rooted_needs_question():
    with pytest.raises(LinearizationError):
        parse_linearized(["A1"], rooted=True)


def reference_repair(tokens, rooted=False, root_question=None):
    """Lenient parse written as a single left-to-right state machine.

    Returns (level, question, summary) triples in pre-order.
    """
    step = {L_DOWN: 1, L_UP: -1, L_SAME: 0, "[L↓]": 1, "[L↑]": -1, "[L-]": 0}
    out = []
    pending = 0
    content = []
    first = True

    def flush():
        nonlocal first, pending
        if not content:
            return
        if first and rooted:
            q, s = root_question or "", [t for t in content if t != QS_SEP]
        elif QS_SEP in content:
            cut = content.index(QS_SEP)
            q = " ".join(content[:cut])
            s = [t for t in content[cut + 1:] if t != QS_SEP]
        else:
            q, s = "", []
        first = False
        ok = bool(s) and (bool(q) or rooted and not out and q == (root_question or ""))
        if ok:
            if not out:
                level = 1
            else:
                prev = out[-1][0]
                level = min(max(prev + pending, 1), prev + 1)
            out.append((level, q, " ".join(s)))
        pending = 0
        content.clear()

    for t in tokens:
        if t in step:
            if content:
                flush()
            pending += step[t]
        else:
            content.append(t)
    flush()
    return out


def triples(h):
    return [(d, n.question, n.summary) for n, d in h.walk()]


def test_lenient_fuzz_10000():
    rng = np.random.default_rng(42)
    alphabet = [L_DOWN, L_UP, L_SAME, QS_SEP, "[L↓]", "a", "b", "c"]
    for k in range(10_000):
        toks = list(rng.choice(alphabet, int(rng.integers(0, 14))))
        rooted = bool(k % 3 == 0)
        h = parse_linearized(toks, "lenient", rooted=rooted, root_question="root q" if rooted else None)
        assert triples(h) == reference_repair(toks, rooted, "root q")
        depths = [d for _, d in h.walk()]
        assert all(b <= a + 1 for a, b in zip([0] + depths, depths))


def test_lenient_truncation_drops_partial_pair():
    toks = linearize(example_hierarchy())
    cut = toks[: toks.index("Q1.2.1") + 1]       # ends inside the last question
    h = parse_linearized(cut, "lenient")
    assert [n.question for n in h.pairs()] == ["Q1", "Q1.1", "Q1.2"]
    assert parse_linearized([], "lenient").roots == []


def test_lenient_clamps_levels():
    h = parse_linearized("[L_UP] a [QS_SEP] x [L_DOWN] [L_DOWN] b [QS_SEP] y [L_UP] [L_UP] [L_UP] c [QS_SEP] z".split(),
                         "lenient")
    assert triples(h) == [(1, "a", "x"), (2, "b", "y"), (1, "c", "z")]


def test_json_roundtrip():
    h = example_hierarchy()
    assert QSHierarchy.from_json(h.to_json()) == h
    with pytest.raises(ValueError):
        QSHierarchy.from_json({"roots": [{"question": 1, "summary": "x"}]})
    with pytest.raises(ValueError):
        QSHierarchy([]).validate()
    with pytest.raises(ValueError):
        QSHierarchy([QSNode("q [QS_SEP]", "s")]).validate()


def test_encode_child_questions():
    tree = parse_document({"title": "r", "sections": [{"title": "one", "paragraphs": ["body text"]}]})
    samples = encode_task(tree, example_hierarchy(), "qsgen_childq", tokenizer=str.split)
    assert [s.target for s in samples] == [["Q1.1", "Q1.2"], ["Q1.2.1"]]
    assert samples[0].prompt == ["Q1", "A1"]
    assert samples[0].tree.tokens[:2] == ("Q1", "A1")
    assert samples[0].tree.token_to_section[0] == 0
    leaf = example_hierarchy().roots[0].children[0]
    with pytest.raises(ValueError):
        encode_task(tree, example_hierarchy(), "qsgen_childq", parent=leaf)
    assert encode_task(tree, example_hierarchy(), "qsgen_childq", parent=leaf, strict=False)[0].target == []


def test_encode_hierarchy_task():
    tree = parse_document({"title": "r", "sections": [{"title": "one", "paragraphs": ["body"]}]})
    (s,) = encode_task(tree, example_hierarchy(), "qsgen-hier", tokenizer=str.split)
    assert s.prompt == ["Q1"]
    assert render(s.target, "arrows") == ARROW_FORM
    with pytest.raises(ValueError):
        encode_task(tree, example_hierarchy(), "summarize")
