from structbias.metrics.edits import (EditInputError, EditResult, EditSearchCapped, edit_count,
                                      edit_search)
from structbias.metrics.hierarchy import HierMatch, HierScore, hierarchy_f1, hierarchy_match
from structbias.metrics.overlap import RougeScore, bleu4, rouge, rouge_all, score_tokens
from structbias.metrics.report import (EvalReport, SampleMismatch, SampleScores, evaluate_run,
                                       score_sample)

__all__ = [
    "EditInputError", "EditResult", "EditSearchCapped", "edit_count", "edit_search",
    "HierMatch", "HierScore", "hierarchy_f1", "hierarchy_match",
    "RougeScore", "bleu4", "rouge", "rouge_all", "score_tokens",
    "EvalReport", "SampleMismatch", "SampleScores", "evaluate_run", "score_sample",
]
