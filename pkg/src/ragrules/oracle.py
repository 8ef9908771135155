"""Brute-force ground truth, straight from the rule definitions.

verify_rule checks one mask by enumerating every quantified subset its
definition ranges over; brute_force_valid judges all 2^n nodes once and
propagates validity downward (a node is valid iff its own check passes and
every immediate superset is valid). No pruning, ever: this is the reference
the miners are measured against, so it must not share their shortcuts.

Per-node outcomes can be cached across calls within a run so verify_rule
loops do not multiply inference. For deterministic clients this changes
nothing; for stochastic clients it pins each node to a single sample, which
is the only consistent reading of the definitions anyway.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .lattice import Interpretation, InputSet, concrete_input, retained_mask
from .model import ModelClient
from .predicate import OutputPredicate, evaluate

ORACLE_MAX_WIDTH = 20


@dataclass
class OracleCache:
    """Shared per-run memo: model outputs by retained mask, verdicts by node."""

    outputs: dict[int, str] = field(default_factory=dict)
    satisfaction: dict[tuple[Interpretation, int], int] = field(default_factory=dict)


@dataclass
class OracleResult:
    valid: frozenset[int]
    evaluations: int
    per_node_satisfaction: dict[int, int]

    def satisfaction_dump(self) -> dict[str, int]:
        """JSON-friendly mask -> 0/1 map, loadable as a validity assignment."""
        return {str(mask): bit for mask, bit in sorted(self.per_node_satisfaction.items())}


def _guard(input_set: InputSet) -> int:
    n = input_set.width
    if n > ORACLE_MAX_WIDTH:
        raise ValueError(
            f"oracle refuses width {n}: exhaustive enumeration is capped at "
            f"{ORACLE_MAX_WIDTH} sources"
        )
    return n


def _node_satisfied(mask: int, interpretation: Interpretation, input_set: InputSet,
                    predicate: OutputPredicate, client: ModelClient,
                    cache: OracleCache) -> int:
    node_key = (interpretation, mask)
    verdict = cache.satisfaction.get(node_key)
    if verdict is not None:
        return verdict
    key = retained_mask(mask, interpretation, input_set.width)
    output = cache.outputs.get(key)
    if output is None:
        output = client.infer(concrete_input(mask, interpretation, input_set),
                              input_set.context)
        cache.outputs[key] = output
    verdict = evaluate(predicate, output)
    cache.satisfaction[node_key] = verdict
    return verdict


def verify_rule(mask: int, interpretation: Interpretation, input_set: InputSet,
                predicate: OutputPredicate, client: ModelClient,
                cache: OracleCache | None = None) -> bool:
    """Check one candidate directly against its definition.

    Retention: every superset of the mask must satisfy the predicate.
    Omission: every subset disjoint from the mask must. Either way that is
    2^(n - popcount) judgments, enumerated here without shortcuts.
    """
    n = _guard(input_set)
    if mask < 0 or mask >> n:
        raise ValueError(f"mask {mask:#x} does not fit width {n}")
    if cache is None:
        cache = OracleCache()
    free = ((1 << n) - 1) ^ mask
    # Enumerate subsets of the free bits; under retention the quantified set
    # is mask | extra, under omission it is the node whose complement-driven
    # concrete input equals each subset of the complement.
    extra = free
    while True:
        if interpretation is Interpretation.RETENTION:
            node = mask | extra
        else:
            node = mask | (free ^ extra)
        if not _node_satisfied(node, interpretation, input_set, predicate, client, cache):
            return False
        if extra == 0:
            break
        extra = (extra - 1) & free
    return True


def brute_force_valid(interpretation: Interpretation, input_set: InputSet,
                      predicate: OutputPredicate, client: ModelClient,
                      cache: OracleCache | None = None) -> OracleResult:
    """Judge every node once, then propagate validity down the lattice."""
    n = _guard(input_set)
    if cache is None:
        cache = OracleCache()
    total = 1 << n
    satisfaction = {
        mask: _node_satisfied(mask, interpretation, input_set, predicate, client, cache)
        for mask in range(total)
    }
    valid: set[int] = set()
    for mask in sorted(range(total), key=lambda m: -m.bit_count()):
        if not satisfaction[mask]:
            continue
        supersets = (mask | (1 << i) for i in range(n) if not mask >> i & 1)
        if all(s in valid for s in supersets):
            valid.add(mask)
    return OracleResult(valid=frozenset(valid), evaluations=total,
                        per_node_satisfaction=satisfaction)
