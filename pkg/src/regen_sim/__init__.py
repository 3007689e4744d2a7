"""Simulator for functional-repair regenerating codes with repair by transfer.

Helpers send one stored symbol each, unchanged; the newcomer stores random
linear combinations of what it receives. The library tracks the global
encoding vectors, the signal flow graph and its gammoid, and checks that
data stays recoverable from any k nodes however long the run.
"""
from .choice import FailureHistory, compute_choice, choose_history, verify_fpair_condition
from .codec import (EncodingState, RepairRecord, StorageSystem, build_transfer_matrix,
                    init_state, reconstruct, repair)
from .errors import (CoefficientSearchExhausted, FieldTooSmall, InvalidHistory,
                     InvalidParams, RegenError, SingularSystem, TooLarge)
from .field import FieldContext, field_context
from .flowgraph import FlowGraph, build_graph, gammoid_rank, is_independent
from .params import (SystemParams, auto_field_size, min_field_size, normalized_params,
                     tradeoff_vertices)
from .verdict import Verdict

__version__ = "0.1.0"

__all__ = [
    "CoefficientSearchExhausted", "EncodingState", "FailureHistory", "FieldContext",
    "FieldTooSmall", "FlowGraph", "InvalidHistory", "InvalidParams", "RegenError",
    "RepairRecord", "SingularSystem", "StorageSystem", "SystemParams", "TooLarge",
    "Verdict", "auto_field_size", "build_graph", "build_transfer_matrix", "choose_history",
    "compute_choice", "field_context", "gammoid_rank", "init_state", "is_independent",
    "min_field_size", "normalized_params", "reconstruct", "repair", "tradeoff_vertices",
    "verify_fpair_condition",
]
