"""Structure-aware attention biases over document section trees."""

from structbias.docmodel import (
    RelationKind,
    SectionNode,
    StructureTree,
    TreePosition,
    classify_relation,
    parse_document,
    tree_position,
    token_position,
)

__version__ = "0.1.0"

__all__ = [
    "RelationKind",
    "SectionNode",
    "StructureTree",
    "TreePosition",
    "classify_relation",
    "parse_document",
    "token_position",
    "tree_position",
]
