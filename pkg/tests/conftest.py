import json
from pathlib import Path

import numpy as np
import pytest

from structbias.docmodel import parse_document

DATA = Path(__file__).parent / "data"
PROBE_TABLE = pytest.StashKey[str]()


def load_json(name):
    return json.loads((DATA / name).read_text())


def random_document(rng, max_sections=12, max_depth=4, words=("alpha", "beta", "gamma", "delta")):
    """Random nested document with at most ``max_sections`` sections."""
    budget = [int(rng.integers(0, max_sections + 1))]

    def level(depth):
        out = []
        while budget[0] > 0 and (not out or rng.random() < 0.6):
            budget[0] -= 1
            n_par = int(rng.integers(0, 3))
            paras = [" ".join(rng.choice(words, int(rng.integers(1, 4)))) for _ in range(n_par)]
            sec = {"title": str(rng.choice(words)), "paragraphs": paras, "subsections": []}
            if depth < max_depth and rng.random() < 0.5:
                sec["subsections"] = level(depth + 1)
            out.append(sec)
        return out

    front = [" ".join(rng.choice(words, 2))] if rng.random() < 0.5 else []
    return {"title": "doc", "front": front, "sections": level(1)}


@pytest.fixture
def nested_tree():
    """Sections 1 (1.1 (1.1.1 (1.1.1.1)), 1.2) and 2; ids in pre-order."""
    return parse_document(load_json("nested_doc.json"))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter, config):
    table = config.stash.get(PROBE_TABLE, None)
    if table:
        terminalreporter.write_sep("-", "structure probe")
        terminalreporter.write(table)
