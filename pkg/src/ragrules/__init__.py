"""Rule mining for retrieval-augmented model outputs.

Given an ordered set of sources, a black-box model, and a boolean judgment
over its outputs, the miners here find every source subset whose retention
(or omission) guarantees the judgment holds, and reduce those to a minimal
explanatory frontier.
"""

__version__ = "0.1.0"

from .lattice import (
    InputSet,
    Interpretation,
    Rule,
    children,
    complement,
    concrete_input,
    enumerate_level,
    mask_from_indices,
    mask_to_indices,
    minimal_rules,
    parents,
    rules_from_masks,
    subsumes,
)
from .miner_dual import DualMineResult, DualTelemetry, mine_dual
from .miner_mono import MineResult, MineTelemetry, MiningAborted, mine
from .model import (
    InferenceError,
    ModelClient,
    ModelError,
    QueryContext,
    RagPrompt,
    RemoteLLMClient,
    ScriptedClient,
    ScriptedInputError,
    TranscriptReplayClient,
    ValidityAssignment,
    ValidityAssignmentClient,
    assemble_prompt,
    chat_completion,
    infer,
)
from .oracle import OracleCache, OracleResult, brute_force_valid, verify_rule
from .predicate import (
    ComplementPredicate,
    JudgePredicate,
    OutputPredicate,
    PredicateError,
    PredicatePair,
    RegexPredicate,
    ScriptedPredicate,
    TargetMatchPredicate,
    evaluate,
    evaluate_with_judge,
)

__all__ = [name for name in dir() if not name.startswith("_")]
