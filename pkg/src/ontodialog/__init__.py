"""Ontology-grounded dialog interpretation engine.

Loads a frame ontology, scriptlets, and a construction lexicon/opticon,
interprets utterances and symbolic gestures into meaning representations,
and resolves elliptical responses through anticipated-next-event
expectations.
"""

from .agent import ActionSpec, Session, SessionConfig
from .analyzer import Analyzer, Token, TurnContext, tokenize
from .attention import AttentionState, Expectation
from .errors import (
    CommandError, EngineError, KbSyntaxError, KbValidationError,
    RenderError, UnanalyzedInputError, UnknownConceptError,
    UnresolvedFragmentError,
)
from .kb import (
    BoundFrame, Comparison, Frame, Ontology, ProcedureValue, VariableRef,
    load_ontology,
)
from .lexicon import (
    ContentMap, Sense, SenseStore, load_content_map, load_lexicon,
    load_opticon, match_syn,
)
from .meaning import (
    Counters, InstanceRef, MeaningRep, ValueCellRef, canonical_text,
    renumbered_text, rep_from_text, reps_equivalent,
)
from .memory import FactRepository, Instance, NameDescriptor

__version__ = "0.1.0"

__all__ = [
    "ActionSpec", "Analyzer", "AttentionState", "BoundFrame", "CommandError",
    "Comparison", "ContentMap", "Counters", "EngineError", "Expectation",
    "FactRepository", "Frame", "Instance", "InstanceRef", "KbSyntaxError",
    "KbValidationError", "MeaningRep", "NameDescriptor", "Ontology",
    "ProcedureValue", "RenderError", "Sense", "SenseStore", "Session",
    "SessionConfig", "Token", "TurnContext", "UnanalyzedInputError",
    "UnknownConceptError", "UnresolvedFragmentError", "ValueCellRef",
    "VariableRef", "canonical_text", "load_content_map", "load_lexicon",
    "load_ontology", "load_opticon", "match_syn", "renumbered_text",
    "rep_from_text", "reps_equivalent", "tokenize",
]
