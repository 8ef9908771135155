"""Output predicates: total boolean judgments over model output text.

Every predicate maps an output string to exactly 0 or 1. Deterministic kinds
(target match, regex, scripted tables) are pure; the judge-backed kind may
call out to a second model and can therefore fail, which raises
PredicateError rather than silently returning 0. Miners treat that as a
run-aborting condition: recording a fabricated 0 would prune subtrees that
may contain valid rules.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping

DEFAULT_JUDGE_TEMPLATE = (
    "You are grading a model answer against a known correct answer.\n"
    "Correct answer: {ground_truth}\n"
    "Model answer: {output}\n"
    "Reply with a single digit and nothing else: 1 if the model answer is "
    "correct, 0 if it is not."
)


class PredicateError(Exception):
    """Judgment could not be produced (judge transport failure, bad verdict,
    or a hole in a scripted table). Distinct from a 0 verdict."""


def normalize_text(text: str) -> str:
    """Trim, collapse whitespace, and casefold. Idempotent."""
    return " ".join(text.split()).casefold()


class OutputPredicate:
    """Base judgment: evaluate(output) -> 0 or 1."""

    description: str = "output predicate"

    def evaluate(self, output: str) -> int:
        raise NotImplementedError


class TargetMatchPredicate(OutputPredicate):
    """1 iff the normalized target appears as a substring of the normalized output."""

    def __init__(self, target: str, description: str | None = None) -> None:
        if not normalize_text(target):
            raise ValueError("target must be non-empty")
        self.target = target
        self._needle = normalize_text(target)
        self.description = description or f'the output contains "{target}"'

    def evaluate(self, output: str) -> int:
        return int(self._needle in normalize_text(output))


class RegexPredicate(OutputPredicate):
    """1 iff the pattern matches anywhere in the raw output."""

    def __init__(self, pattern: str, description: str | None = None) -> None:
        self._regex = re.compile(pattern)
        self.pattern = pattern
        self.description = description or f"the output matches /{pattern}/"

    def evaluate(self, output: str) -> int:
        return int(self._regex.search(output) is not None)


class ScriptedPredicate(OutputPredicate):
    """Verdicts from an explicit output -> {0,1} table.

    A lookup miss raises PredicateError unless a default verdict is given;
    a miss means the table does not actually cover the model under test.
    """

    def __init__(self, table: Mapping[str, int], default: int | None = None,
                 description: str | None = None) -> None:
        for key, verdict in table.items():
            if verdict not in (0, 1):
                raise ValueError(f"scripted verdict for {key!r} must be 0 or 1")
        if default is not None and default not in (0, 1):
            raise ValueError("default verdict must be 0 or 1")
        self._table = dict(table)
        self._default = default
        self.description = description or "a scripted verdict table"

    def evaluate(self, output: str) -> int:
        verdict = self._table.get(output, self._default)
        if verdict is None:
            raise PredicateError(f"no scripted verdict for output {output!r}")
        return verdict


class ComplementPredicate(OutputPredicate):
    """1 - inner. Lets a pair like correct/incorrect share one matcher."""

    def __init__(self, inner: OutputPredicate, description: str | None = None) -> None:
        self.inner = inner
        self.description = description or f"not ({inner.description})"

    def evaluate(self, output: str) -> int:
        return 1 - self.inner.evaluate(output)


class JudgePredicate(OutputPredicate):
    """Correctness check with a model-as-judge fallback.

    Cheap checks run first: normalized-substring match against the ground
    truth, then an optional regex. Only when both miss is the judge client
    asked, via a prompt template with {output} and {ground_truth} slots. The
    judge must reply with the single token 0 or 1; anything else raises
    PredicateError. Determinism is inherited from the judge client, so runs
    using a sampling judge are only as reproducible as that judge.
    """

    def __init__(self, ground_truth: str, judge, template: str = DEFAULT_JUDGE_TEMPLATE,
                 pattern: str | None = None, description: str | None = None) -> None:
        if "{output}" not in template or "{ground_truth}" not in template:
            raise ValueError("judge template must contain {output} and {ground_truth}")
        self.ground_truth = ground_truth
        self.judge = judge
        self.template = template
        self._regex = re.compile(pattern) if pattern else None
        self.description = description or f'the output answers "{ground_truth}"'

    def evaluate(self, output: str) -> int:
        if normalize_text(self.ground_truth) in normalize_text(output):
            return 1
        if self._regex is not None and self._regex.search(output):
            return 1
        return evaluate_with_judge(self, output, self.ground_truth, self.judge)


@dataclass(frozen=True)
class PredicatePair:
    """The two judgments a dual mining run applies, one per rule type."""

    retention_predicate: OutputPredicate
    omission_predicate: OutputPredicate


def evaluate(predicate: OutputPredicate, output: str) -> int:
    """Apply a predicate. Always 0 or 1; never an abstention."""
    verdict = predicate.evaluate(output)
    if verdict not in (0, 1):
        raise PredicateError(f"predicate returned {verdict!r}, expected 0 or 1")
    return verdict


def evaluate_with_judge(predicate: JudgePredicate, output: str,
                        ground_truth: str, judge) -> int:
    """Run the judge leg of a correctness check.

    The fast match is retried here so the function is safe to call directly;
    it short-circuits without a judge call when the ground truth already
    appears in the output.
    """
    if normalize_text(ground_truth) in normalize_text(output):
        return 1
    prompt = predicate.template.format(output=output, ground_truth=ground_truth)
    try:
        reply = judge.complete(prompt)
    except Exception as exc:
        raise PredicateError(f"judge call failed: {exc}") from exc
    verdict = reply.strip()
    if verdict == "1":
        return 1
    if verdict == "0":
        return 0
    raise PredicateError(f"unparseable judge verdict {reply!r}")


def predicate_from_config(block: Mapping, judge=None) -> OutputPredicate:
    """Build a predicate from a run-config block.

    Recognized kinds: target_match (target), regex (pattern), scripted
    (table, optional default), judge (ground_truth, optional template and
    pattern; requires a judge client). An optional negate flag wraps the
    result in its complement, and description overrides the default wording.
    """
    kind = block.get("kind")
    description = block.get("description")
    if kind == "target_match":
        pred: OutputPredicate = TargetMatchPredicate(block["target"], description)
    elif kind == "regex":
        pred = RegexPredicate(block["pattern"], description)
    elif kind == "scripted":
        pred = ScriptedPredicate(block["table"], block.get("default"), description)
    elif kind == "judge":
        if judge is None:
            raise ValueError("judge predicate requires a judge client")
        pred = JudgePredicate(
            block["ground_truth"], judge,
            template=block.get("template", DEFAULT_JUDGE_TEMPLATE),
            pattern=block.get("pattern"), description=description,
        )
    else:
        raise ValueError(f"unknown predicate kind {kind!r}")
    if block.get("negate"):
        pred = ComplementPredicate(pred, block.get("negate_description"))
    return pred
