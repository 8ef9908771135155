#!/usr/bin/env python3
"""Regenerate the offline transcript fixture for the hotpot-curves workflow.

Runs the curves workload against a deterministic stand-in answerer (correct
exactly when every supporting sentence is retained in the prompt) while
recording every request/response pair in the replay transcript format. The
output is deterministic, so re-running this script reproduces the committed
file byte for byte.

Usage: python scripts/make_hotpot_transcripts.py [dataset] [out.jsonl]
"""

from __future__ import annotations

import sys
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "src"))

from ragrules.bench import filter_by_supporting_count, load_hotpot, run_curves
from ragrules.model import ModelClient, RecordingClient

MODEL_NAME = "sim-answerer-v1"
INSUFFICIENT = "The provided sources are insufficient to answer the question."


class SimulatedAnswerer(ModelClient):
    """Answers correctly iff all supporting sentences appear in the prompt."""

    def __init__(self, examples) -> None:
        self._by_question = {
            ex.question: (ex.answer, set(ex.supporting_sentences()))
            for ex in examples
        }

    def infer(self, retained_sources, context) -> str:
        answer, supporting = self._by_question[context.question]
        if supporting <= set(retained_sources):
            return answer
        return INSUFFICIENT


def main() -> int:
    dataset = Path(sys.argv[1]) if len(sys.argv) > 1 else REPO / "fixtures" / "hotpot_sample.json"
    out = Path(sys.argv[2]) if len(sys.argv) > 2 else REPO / "fixtures" / "hotpot_transcripts.jsonl"
    examples = filter_by_supporting_count(load_hotpot(dataset), 3)
    if not examples:
        print("no examples with exactly three supporting facts", file=sys.stderr)
        return 1
    out.unlink(missing_ok=True)
    recorder = RecordingClient(SimulatedAnswerer(examples), out, model=MODEL_NAME)
    result = run_curves(examples, range(0, 7), recorder)
    rows = sum(1 for _ in out.open(encoding="utf-8"))
    print(f"{len(examples)} example(s), {len(result.metrics)} metric rows, "
          f"{rows} transcript entries -> {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
