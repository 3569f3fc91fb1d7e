"""Turn intent/slot parse trees into question answering data and back."""
from __future__ import annotations

__version__ = "0.1.0"

from .answers import (ReconstructionError, ReconstructionReason, parse_multiturn_answers,
                      parse_singleturn_answer)
from .generation import (PathStep, QaInstance, QaKind, QaOptions, generate_multiturn,
                         generate_singleturn, to_msp)
from .metrics import evaluate_corpus, unordered_em
from .ontology import Lexicon, Ontology, extract_ontology, load_lexicon, load_schema
from .tree import ParseTree, TreeNode, compute_stats, parse_linearized, to_decoupled

__all__ = [
    "ParseTree", "TreeNode", "parse_linearized", "to_decoupled", "compute_stats",
    "Ontology", "Lexicon", "extract_ontology", "load_schema", "load_lexicon",
    "QaInstance", "QaKind", "QaOptions", "PathStep", "generate_multiturn",
    "generate_singleturn", "to_msp", "ReconstructionError", "ReconstructionReason",
    "parse_multiturn_answers", "parse_singleturn_answer", "unordered_em", "evaluate_corpus",
]
