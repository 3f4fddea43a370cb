"""Per-sample scoring of generated hierarchies and macro-averaged reports."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from typing import Mapping

from structbias.metrics.edits import edit_search
from structbias.metrics.hierarchy import hierarchy_f1
from structbias.metrics.overlap import bleu4, rouge_all
from structbias.qshier import QSHierarchy

METRICS = ("hier_p", "hier_r", "hier_f1", "r1", "r2", "rl", "bleu4")


class SampleMismatch(ValueError):
    def __init__(self, missing: list[str], extra: list[str]):
        parts = []
        if missing:
            parts.append("missing from generated: " + ", ".join(missing))
        if extra:
            parts.append("not in reference: " + ", ".join(extra))
        super().__init__("; ".join(parts))
        self.missing = missing
        self.extra = extra


@dataclass
class SampleScores:
    id: str
    hier_p: float
    hier_r: float
    hier_f1: float
    r1: float
    r2: float
    rl: float
    bleu4: float
    edit_count: int | None = None
    edit_capped: bool = False
    answerability: float | None = None   # filled in by human judges


@dataclass
class EvalReport:
    samples: list[SampleScores]
    aggregate: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"aggregate": self.aggregate, "samples": [asdict(s) for s in self.samples]}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, d: dict) -> "EvalReport":
        return cls([SampleScores(**s) for s in d["samples"]], dict(d["aggregate"]))

    def table(self) -> str:
        """Aggregate scores as an aligned plain-text table (percentages)."""
        cols = ["n"] + list(METRICS) + (["edit_count"] if "edit_count" in self.aggregate else [])
        head = ["Hier P", "Hier R", "Hier F1", "R1", "R2", "RL", "Ques B4"]
        names = ["n"] + head + (["Edits"] if len(cols) > len(METRICS) + 1 else [])
        vals = []
        for c in cols:
            v = self.aggregate.get(c)
            if c == "n":
                vals.append(str(v))
            elif c == "edit_count":
                vals.append(f"{v:.2f}")
            else:
                vals.append(f"{100 * v:.2f}")
        widths = [max(len(a), len(b)) for a, b in zip(names, vals)]
        line = lambda xs: "  ".join(x.rjust(w) for x, w in zip(xs, widths))
        return line(names) + "\n" + line(vals) + "\n"

    def csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        fields = ["id"] + list(METRICS) + ["edit_count", "edit_capped"]
        w.writerow(fields)
        for s in self.samples:
            w.writerow([getattr(s, f) if getattr(s, f) is not None else "" for f in fields])
        w.writerow(["mean"] + [self.aggregate.get(m) for m in METRICS]
                   + [self.aggregate.get("edit_count", ""), ""])
        return buf.getvalue()


def _joined(h: QSHierarchy, attr: str) -> str:
    return " ".join(getattr(n, attr) for n in h.pairs())


def score_sample(sid: str, gen: QSHierarchy, ref: QSHierarchy,
                 corrected: QSHierarchy | None = None) -> SampleScores:
    """Scores for one sample.

    ROUGE compares all summaries concatenated in pre-order; BLEU compares all
    questions concatenated the same way.
    """
    hs = hierarchy_f1(gen, ref)
    rg = rouge_all(_joined(gen, "summary"), _joined(ref, "summary"))
    s = SampleScores(sid, hs.precision, hs.recall, hs.f1, rg["R1"].f1, rg["R2"].f1, rg["RL"].f1,
                     bleu4(_joined(gen, "question"), _joined(ref, "question")))
    if corrected is not None:
        res = edit_search(gen, corrected)
        s.edit_count, s.edit_capped = res.steps, res.capped
    return s


def aggregate(samples: list[SampleScores]) -> dict:
    if not samples:
        raise ValueError("no samples to aggregate")
    out: dict = {"n": len(samples)}
    for m in METRICS:
        out[m] = sum(getattr(s, m) for s in samples) / len(samples)
    edits = [s.edit_count for s in samples if s.edit_count is not None]
    if edits:
        out["edit_count"] = sum(edits) / len(edits)
    return out


def evaluate_run(generated: Mapping[str, QSHierarchy], reference: Mapping[str, QSHierarchy],
                 corrected: Mapping[str, QSHierarchy] | None = None) -> EvalReport:
    """Score every sample id and macro-average; ids must match exactly."""
    missing = sorted(set(reference) - set(generated))
    extra = sorted(set(generated) - set(reference))
    if missing or extra:
        raise SampleMismatch(missing, extra)
    if corrected is not None and set(corrected) - set(reference):
        raise SampleMismatch([], sorted(set(corrected) - set(reference)))
    samples = []
    for sid in sorted(reference):
        fix = corrected.get(sid) if corrected is not None else None
        samples.append(score_sample(sid, generated[sid], reference[sid], fix))
    return EvalReport(samples, aggregate(samples))
