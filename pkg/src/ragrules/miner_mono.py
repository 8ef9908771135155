"""Single-interpretation rule miner.

Walks the lattice top-down, one level at a time. The invalid frontier holds
only the previous level's failures; before each level it is replaced by
those failures' children, which are skipped without inference (no descendant
of a failed node can be valid). A level that contributes no valid mask ends
the search outright: nothing below it can be valid either.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .lattice import (
    Interpretation,
    InputSet,
    concrete_input,
    enumerate_level,
    minimal_rules,
)
from .model import ModelClient
from .predicate import OutputPredicate, evaluate


@dataclass
class MineTelemetry:
    """Per-run counters. Level lists run top-down, starting at level n."""

    model_calls: int = 0
    cache_hits: int = 0
    evaluated_per_level: list[int] = field(default_factory=list)
    pruned_per_level: list[int] = field(default_factory=list)
    early_terminated_at: int | None = None

    def as_dict(self) -> dict:
        return {
            "model_calls": self.model_calls,
            "cache_hits": self.cache_hits,
            "evaluated_per_level": list(self.evaluated_per_level),
            "pruned_per_level": list(self.pruned_per_level),
            "early_terminated_at": self.early_terminated_at,
        }


@dataclass
class MineResult:
    valid: frozenset[int]
    minimal: tuple[int, ...]
    telemetry: MineTelemetry


class MiningAborted(Exception):
    """Inference or judgment failed mid-run.

    Partial rule sets are unsound (pruning decisions would rest on nodes
    never checked), so no rules are returned; the telemetry gathered so far
    rides along for diagnostics.
    """

    def __init__(self, level: int, mask: int, telemetry: MineTelemetry, cause: Exception) -> None:
        super().__init__(f"mining aborted at level {level}, node {mask:#b}: {cause}")
        self.level = level
        self.mask = mask
        self.telemetry = telemetry
        self.cause = cause


def _frontier_children(frontier: set[int]) -> set[int]:
    """All masks obtained by clearing one bit of any frontier member."""
    out: set[int] = set()
    for z in frontier:
        m = z
        while m:
            b = m & -m
            out.add(z ^ b)
            m ^= b
    return out


def _evaluate_queue(queue, check, max_workers, level, telemetry):
    """Run check(mask) over a level's queue, preserving queue order.

    Returns [(mask, verdict)] on success. On failure, in-flight evaluations
    are allowed to finish, model calls made so far are folded into the
    telemetry, and the failure at the smallest mask is raised as
    MiningAborted.
    """
    if max_workers > 1 and len(queue) > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            futures = [(mask, pool.submit(check, mask)) for mask in queue]
        results = []
        failure = None
        for mask, future in futures:
            exc = future.exception()
            if exc is None:
                results.append((mask, future.result()))
            elif failure is None:
                failure = (mask, exc)
        if failure is not None:
            telemetry.model_calls += len(queue)
            raise MiningAborted(level, failure[0], telemetry, failure[1]) from failure[1]
        return results
    results = []
    for mask in queue:
        try:
            results.append((mask, check(mask)))
        except Exception as exc:
            telemetry.model_calls += len(results) + 1
            raise MiningAborted(level, mask, telemetry, exc) from exc
    return results


def mine(input_set: InputSet, predicate: OutputPredicate, client: ModelClient,
         interpretation: Interpretation, max_workers: int = 1) -> MineResult:
    """Find every valid rule of one interpretation, plus its minimal frontier.

    Deterministic for deterministic clients: nodes are processed in ascending
    mask order within each level and results are merged in that order, so
    telemetry and rule sets are identical run to run (and identical whether
    or not evaluations run concurrently).
    """
    n = input_set.width
    telemetry = MineTelemetry()
    valid: set[int] = set()
    frontier: set[int] = set()

    def check(mask: int) -> int:
        output = client.infer(concrete_input(mask, interpretation, input_set),
                              input_set.context)
        return evaluate(predicate, output)

    for level in range(n, -1, -1):
        nodes = enumerate_level(n, level)
        frontier = _frontier_children(frontier)
        queue = [m for m in nodes if m not in frontier]
        telemetry.pruned_per_level.append(len(nodes) - len(queue))
        telemetry.evaluated_per_level.append(len(queue))
        outcomes = _evaluate_queue(queue, check, max_workers, level, telemetry)
        telemetry.model_calls += len(outcomes)
        found = 0
        for mask, verdict in outcomes:
            if verdict == 1:
                valid.add(mask)
                found += 1
            else:
                frontier.add(mask)
        if found == 0 and level > 0:
            telemetry.early_terminated_at = level
            break

    return MineResult(valid=frozenset(valid),
                      minimal=tuple(minimal_rules(valid)),
                      telemetry=telemetry)
