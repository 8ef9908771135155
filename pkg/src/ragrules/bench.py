"""Desk-scale experiment harness.

Three workloads live here: an exhaustive synthetic sweep that runs the
single-type miner against every possible satisfaction assignment of a small
lattice, a loader plus source-selection policy for HotpotQA-shaped question
files, and a curves runner that measures pruning, rule frequency, and
duplicate-inference behavior per lattice size. Everything emits plain CSV;
plotting is someone else's job.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from statistics import mean
from typing import Any, Callable, Iterable, Sequence

from .lattice import Interpretation, InputSet
from .miner_dual import mine_dual
from .miner_mono import MiningAborted, mine
from .model import (
    ModelClient,
    ModelError,
    QueryContext,
    ValidityAssignment,
    ValidityAssignmentClient,
)
from .oracle import brute_force_valid
from .predicate import (
    ComplementPredicate,
    OutputPredicate,
    PredicateError,
    PredicatePair,
    ScriptedPredicate,
    TargetMatchPredicate,
)

logger = logging.getLogger(__name__)

SWEEP_MAX_WIDTH = 4


@dataclass
class SweepRow:
    """Visit statistics for all assignments sharing one valid-rule count."""

    valid_rule_count: int
    mean_visited: float
    min_visited: int
    max_visited: int
    assignment_count: int


def token_predicate() -> OutputPredicate:
    """Judgment for validity-assignment clients: the literal token 1 passes."""
    return ScriptedPredicate({"1": 1, "0": 0}, description="the model emits token 1")


def synthetic_input_set(n: int) -> InputSet:
    return InputSet(tuple(f"s{i + 1}" for i in range(n)))


def synth_sweep(n: int) -> list[SweepRow]:
    """Run the single-type miner against every satisfaction assignment.

    Each of the 2^(2^n) assignments is realized as a validity-assignment
    client; the true rule count comes from the brute-force oracle and the
    visit count from the miner's own telemetry. Rows are grouped by rule
    count, ascending.
    """
    if n < 0 or n > SWEEP_MAX_WIDTH:
        raise ValueError(
            f"sweep refuses n={n}: 2^(2^n) assignments is only tractable for n <= {SWEEP_MAX_WIDTH}"
        )
    input_set = synthetic_input_set(n)
    predicate = token_predicate()
    nodes = 1 << n
    visited_by_count: dict[int, list[int]] = {}
    for bits in range(1 << nodes):
        satisfied = frozenset(m for m in range(nodes) if bits >> m & 1)
        client = ValidityAssignmentClient(ValidityAssignment(n, satisfied), input_set.sources)
        result = mine(input_set, predicate, client, Interpretation.RETENTION)
        truth = brute_force_valid(Interpretation.RETENTION, input_set, predicate, client)
        if result.valid != truth.valid:
            raise AssertionError(
                f"miner diverged from oracle on assignment {bits:#x}: "
                f"{sorted(result.valid)} != {sorted(truth.valid)}"
            )
        visited_by_count.setdefault(len(truth.valid), []).append(result.telemetry.model_calls)
    rows = []
    for count in sorted(visited_by_count):
        visits = visited_by_count[count]
        rows.append(SweepRow(
            valid_rule_count=count,
            mean_visited=mean(visits),
            min_visited=min(visits),
            max_visited=max(visits),
            assignment_count=len(visits),
        ))
    return rows


def write_sweep_csv(rows: Sequence[SweepRow], path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["valid_rule_count", "mean_visited", "min_visited",
                         "max_visited", "assignment_count"])
        for row in rows:
            writer.writerow([row.valid_rule_count, f"{row.mean_visited:.6f}",
                             row.min_visited, row.max_visited, row.assignment_count])
    return path


# ---------------------------------------------------------------------------
# HotpotQA-shaped data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HotpotExample:
    """One multi-hop question with titled, sentence-split context sources."""

    example_id: str
    question: str
    answer: str
    context: tuple[tuple[str, tuple[str, ...]], ...]
    supporting_facts: tuple[tuple[str, int], ...]

    def sentence(self, title: str, index: int) -> str:
        for name, sentences in self.context:
            if name == title:
                return sentences[index]
        raise KeyError(title)

    def supporting_sentences(self) -> list[str]:
        return [self.sentence(title, idx) for title, idx in self.supporting_facts]


def load_hotpot(path: str | Path) -> list[HotpotExample]:
    """Parse a HotpotQA distribution file, dropping malformed entries.

    An entry is malformed when required fields are missing, a supporting
    fact points at a sentence that does not exist, or fewer than two
    supporting facts are given. Skips are logged and tallied in one summary
    warning.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, list):
        raise ValueError(f"{path} does not contain a list of examples")
    examples = []
    skipped = 0
    for position, entry in enumerate(raw):
        try:
            examples.append(_parse_entry(entry, position))
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            skipped += 1
            logger.warning("skipping malformed example %s: %s",
                           entry.get("_id", position) if isinstance(entry, dict) else position,
                           exc)
    if skipped:
        logger.warning("skipped %d malformed example(s) from %s", skipped, path)
    return examples


def _parse_entry(entry: dict, position: int) -> HotpotExample:
    context = tuple(
        (title, tuple(sentences)) for title, sentences in entry["context"]
    )
    by_title = {title: sentences for title, sentences in context}
    facts = []
    for title, index in entry["supporting_facts"]:
        sentences = by_title.get(title)
        if sentences is None or not 0 <= int(index) < len(sentences):
            raise ValueError(f"supporting fact ({title!r}, {index}) does not resolve")
        facts.append((title, int(index)))
    if len(facts) < 2:
        raise ValueError("fewer than two supporting facts")
    return HotpotExample(
        example_id=str(entry.get("_id", position)),
        question=entry["question"],
        answer=entry["answer"],
        context=context,
        supporting_facts=tuple(facts),
    )


def filter_by_supporting_count(examples: Iterable[HotpotExample],
                               count: int) -> list[HotpotExample]:
    return [ex for ex in examples if len(ex.supporting_facts) == count]


def build_source_set(example: HotpotExample, k: int) -> InputSet:
    """Pick k sentences as the input set: supporting facts first, then fillers.

    Up to min(k, 3) supporting-fact sentences are chosen in their listed
    order, the remainder is filled with non-supporting sentences in context
    order, and the final set keeps the sentences' original relative order.
    """
    flat = [(title, idx, text)
            for title, sentences in example.context
            for idx, text in enumerate(sentences)]
    if not 0 <= k <= len(flat):
        raise ValueError(f"k={k} out of range: example has {len(flat)} sentences")
    chosen: set[tuple[str, int]] = set()
    for title, idx in example.supporting_facts[:min(k, 3)]:
        chosen.add((title, idx))
    for title, idx, _ in flat:
        if len(chosen) >= k:
            break
        chosen.add((title, idx))
    selected = [(title, idx, text) for title, idx, text in flat if (title, idx) in chosen]
    return InputSet(
        sources=[text for _, _, text in selected],
        context=QueryContext(question=example.question),
        labels=[f"{title}[{idx}]" for title, idx, _ in selected],
    )


def default_predicate_pair(example: HotpotExample) -> PredicatePair:
    correct = TargetMatchPredicate(example.answer, "the answer is correct")
    return PredicatePair(
        retention_predicate=correct,
        omission_predicate=ComplementPredicate(correct, "the answer is incorrect"),
    )


# ---------------------------------------------------------------------------
# Curves
# ---------------------------------------------------------------------------

@dataclass
class LatticeMetrics:
    """Per-(lattice size, strategy) averages over the surviving examples."""

    n: int
    miner: str  # mono_retention | mono_omission | dual | two_mono
    examples: int
    errors: int
    proportion_explored: float
    retention_rule_fraction: float
    omission_rule_fraction: float
    subsets_fraction: float  # evaluations over both readings: calls / (2 * 2^n)
    duplicate_subset_fraction: float


@dataclass
class ScatterPoint:
    example_id: str
    n: int
    rule_type: str
    valid_rules: int
    visited: int


@dataclass
class CurvesResult:
    metrics: list[LatticeMetrics] = field(default_factory=list)
    scatter: list[ScatterPoint] = field(default_factory=list)


class _LoggingClient(ModelClient):
    """Pass-through wrapper that records each concrete input sent."""

    def __init__(self, inner: ModelClient) -> None:
        self.inner = inner
        self.log: list[tuple[str, ...]] = []

    def infer(self, retained_sources, context) -> str:
        self.log.append(tuple(retained_sources))
        return self.inner.infer(retained_sources, context)


def _duplicates(logs: list[list[tuple[str, ...]]]) -> int:
    total = sum(len(log) for log in logs)
    distinct = len({entry for log in logs for entry in log})
    return total - distinct


def run_curves(examples: Sequence[HotpotExample], k_range: Iterable[int],
               client: ModelClient,
               predicate_factory: Callable[[HotpotExample], PredicatePair] | None = None,
               ) -> CurvesResult:
    """Mine each example at each lattice size and aggregate the telemetry.

    Per example and size this runs the single-type miner once per rule type
    and the dual miner once with caching; an inference or judgment failure
    drops that example from the size's aggregates and is counted in the
    rows' error field.
    """
    if predicate_factory is None:
        predicate_factory = default_predicate_pair
    result = CurvesResult()
    for k in k_range:
        per_example: list[dict[str, Any]] = []
        errors = 0
        for example in examples:
            try:
                per_example.append(_run_example(example, k, client, predicate_factory))
            except (MiningAborted, ModelError, PredicateError, ValueError) as exc:
                errors += 1
                logger.warning("example %s failed at k=%d: %s", example.example_id, k, exc)
        if per_example:
            result.metrics.extend(_aggregate(k, per_example, errors))
            for row in per_example:
                result.scatter.append(ScatterPoint(
                    row["example_id"], k, "retention",
                    row["valid_ret"], row["mono_ret_calls"]))
                result.scatter.append(ScatterPoint(
                    row["example_id"], k, "omission",
                    row["valid_omi"], row["mono_omi_calls"]))
    return result


def _run_example(example: HotpotExample, k: int, client: ModelClient,
                 predicate_factory) -> dict[str, Any]:
    input_set = build_source_set(example, k)
    pair = predicate_factory(example)

    ret_log = _LoggingClient(client)
    mono_ret = mine(input_set, pair.retention_predicate, ret_log, Interpretation.RETENTION)
    omi_log = _LoggingClient(client)
    mono_omi = mine(input_set, pair.omission_predicate, omi_log, Interpretation.OMISSION)
    dual_log = _LoggingClient(client)
    dual = mine_dual(input_set, pair.retention_predicate, pair.omission_predicate,
                     dual_log, cache_enabled=True)

    nodes = 1 << input_set.width
    return {
        "example_id": example.example_id,
        "nodes": nodes,
        "mono_ret_calls": mono_ret.telemetry.model_calls,
        "mono_omi_calls": mono_omi.telemetry.model_calls,
        "dual_nodes_seen": sum(dual.telemetry.evaluated_per_level),
        "dual_calls": dual.telemetry.model_calls,
        "valid_ret": len(mono_ret.valid),
        "valid_omi": len(mono_omi.valid),
        "mono_duplicates": _duplicates([ret_log.log, omi_log.log]),
        "dual_duplicates": _duplicates([dual_log.log]),
    }


def _aggregate(k: int, rows: list[dict[str, Any]], errors: int) -> list[LatticeMetrics]:
    two = [2 * r["nodes"] for r in rows]
    ret_frac = mean(r["valid_ret"] / r["nodes"] for r in rows)
    omi_frac = mean(r["valid_omi"] / r["nodes"] for r in rows)

    def metrics(miner: str, explored: float, calls_key: str,
                duplicates_key: str | None) -> LatticeMetrics:
        return LatticeMetrics(
            n=k, miner=miner, examples=len(rows), errors=errors,
            proportion_explored=explored,
            retention_rule_fraction=ret_frac,
            omission_rule_fraction=omi_frac,
            subsets_fraction=mean(
                r[calls_key] / t for r, t in zip(rows, two)),
            duplicate_subset_fraction=(
                0.0 if duplicates_key is None
                else mean(r[duplicates_key] / t for r, t in zip(rows, two))),
        )

    mono_pair_calls = [r["mono_ret_calls"] + r["mono_omi_calls"] for r in rows]
    for row, total in zip(rows, mono_pair_calls):
        row["two_mono_calls"] = total
    return [
        metrics("mono_retention",
                mean(r["mono_ret_calls"] / r["nodes"] for r in rows),
                "mono_ret_calls", None),
        metrics("mono_omission",
                mean(r["mono_omi_calls"] / r["nodes"] for r in rows),
                "mono_omi_calls", None),
        metrics("dual",
                mean(r["dual_nodes_seen"] / r["nodes"] for r in rows),
                "dual_calls", "dual_duplicates"),
        metrics("two_mono",
                mean(r["two_mono_calls"] / (2 * r["nodes"]) for r in rows),
                "two_mono_calls", "mono_duplicates"),
    ]


def write_curves_csvs(result: CurvesResult, outdir: str | Path) -> dict[str, Path]:
    """Emit one CSV per plot family; returns the written paths by name."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = {}

    explored = outdir / "lattice_explored.csv"
    with explored.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "miner", "examples", "errors", "proportion_explored"])
        for m in result.metrics:
            if m.miner in ("mono_retention", "mono_omission", "dual"):
                writer.writerow([m.n, m.miner, m.examples, m.errors,
                                 f"{m.proportion_explored:.6f}"])
    paths["lattice_explored"] = explored

    frequency = outdir / "rule_frequency.csv"
    with frequency.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "examples", "retention_rule_fraction",
                         "omission_rule_fraction"])
        for m in result.metrics:
            if m.miner == "mono_retention":
                writer.writerow([m.n, m.examples,
                                 f"{m.retention_rule_fraction:.6f}",
                                 f"{m.omission_rule_fraction:.6f}"])
    paths["rule_frequency"] = frequency

    dual_vs = outdir / "dual_vs_mono.csv"
    with dual_vs.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "strategy", "subsets_fraction",
                         "duplicate_subset_fraction"])
        for m in result.metrics:
            if m.miner in ("dual", "two_mono"):
                writer.writerow([m.n, m.miner, f"{m.subsets_fraction:.6f}",
                                 f"{m.duplicate_subset_fraction:.6f}"])
    paths["dual_vs_mono"] = dual_vs

    scatter = outdir / "visited_scatter.csv"
    with scatter.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["example_id", "n", "rule_type", "valid_rules", "visited"])
        for point in result.scatter:
            writer.writerow([point.example_id, point.n, point.rule_type,
                             point.valid_rules, point.visited])
    paths["visited_scatter"] = scatter
    return paths
