from __future__ import annotations

import json
import subprocess
import sys
from pathlib import Path

import pytest

from ragrules.bench import (
    HotpotExample,
    build_source_set,
    default_predicate_pair,
    filter_by_supporting_count,
    load_hotpot,
    run_curves,
    synth_sweep,
    token_predicate,
    write_curves_csvs,
    write_sweep_csv,
)
from ragrules.model import ModelClient, TranscriptReplayClient

REPO = Path(__file__).resolve().parent.parent
SAMPLE = REPO / "fixtures" / "hotpot_sample.json"
TRANSCRIPTS = REPO / "fixtures" / "hotpot_transcripts.jsonl"


def test_sweep_width_two_exact_table() -> None:
    # Hand-enumerated over all 16 assignments of the width-2 lattice:
    # a failed root costs one visit; one-rule lattices take 3 visits; and so on.
    rows = {r.valid_rule_count: r for r in synth_sweep(2)}
    expect = {
        0: (1.0, 1, 1, 8),
        1: (3.0, 3, 3, 2),
        2: (3.0, 3, 3, 4),
        3: (4.0, 4, 4, 1),
        4: (4.0, 4, 4, 1),
    }
    assert set(rows) == set(expect)
    for count, (mean_v, min_v, max_v, assignments) in expect.items():
        row = rows[count]
        assert row.mean_visited == pytest.approx(mean_v)
        assert (row.min_visited, row.max_visited, row.assignment_count) == \
            (min_v, max_v, assignments)


def test_sweep_guard_refuses_large_widths() -> None:
    with pytest.raises(ValueError):
        synth_sweep(5)


def test_sweep_csv_shape(tmp_path) -> None:
    path = write_sweep_csv(synth_sweep(1), tmp_path / "sweep.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == "valid_rule_count,mean_visited,min_visited,max_visited,assignment_count"
    assert len(lines) == 1 + 3  # counts 0, 1, 2 are all reachable at width 1


def test_token_predicate_judges_tokens_only() -> None:
    pred = token_predicate()
    assert pred.evaluate("1") == 1
    assert pred.evaluate("0") == 0


def test_load_hotpot_sample() -> None:
    examples = load_hotpot(SAMPLE)
    assert len(examples) == 4
    first = examples[0]
    assert first.answer == "Einsteinium"
    assert len(first.supporting_facts) == 3
    assert first.supporting_sentences()[0] == "He developed the theory of relativity."
    assert len(filter_by_supporting_count(examples, 3)) == 3


def test_load_hotpot_skips_malformed_entries(tmp_path, caplog) -> None:
    entries = json.loads(SAMPLE.read_text())
    entries[1]["supporting_facts"].append(["No Such Title", 0])
    del entries[2]["answer"]
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(entries))
    with caplog.at_level("WARNING"):
        examples = load_hotpot(bad)
    assert len(examples) == 2
    assert "skipping malformed example" in caplog.text
    assert "skipped 2 malformed" in caplog.text


def test_load_hotpot_rejects_non_json(tmp_path) -> None:
    path = tmp_path / "nope.json"
    path.write_text("not json at all {")
    with pytest.raises(ValueError):
        load_hotpot(path)


def _einsteinium() -> HotpotExample:
    return load_hotpot(SAMPLE)[0]


def test_build_source_set_supporting_facts_first() -> None:
    example = _einsteinium()
    three = build_source_set(example, 3)
    assert set(three.sources) == set(example.supporting_sentences())
    # original relative order: the Einstein sentence precedes both element ones
    assert three.sources[0] == "He developed the theory of relativity."
    assert three.labels == ("Albert Einstein[1]", "Einsteinium[0]", "Einsteinium[1]")


def test_build_source_set_k_zero_and_fillers() -> None:
    example = _einsteinium()
    assert build_source_set(example, 0).sources == ()
    six = build_source_set(example, 6)
    flat = [text for _, sentences in example.context for text in sentences]
    assert list(six.sources) == flat  # everything, dataset order
    four = build_source_set(example, 4)
    assert four.sources[0] == "Albert Einstein was a theoretical physicist born in Ulm."
    assert len(four.sources) == 4


def test_build_source_set_rejects_oversized_k() -> None:
    with pytest.raises(ValueError):
        build_source_set(_einsteinium(), 7)


def test_curves_on_replay_fixture_are_deterministic() -> None:
    examples = filter_by_supporting_count(load_hotpot(SAMPLE), 3)
    client = TranscriptReplayClient(TRANSCRIPTS, model="sim-answerer-v1")
    first = run_curves(examples, range(0, 7), client)
    second = run_curves(examples, range(0, 7), client)
    assert first.metrics == second.metrics
    assert first.scatter == second.scatter
    assert len(first.metrics) == 7 * 4  # four strategies per lattice size
    for m in first.metrics:
        assert 0.0 <= m.proportion_explored <= 1.0
        assert m.errors == 0
        if m.miner == "dual":
            assert m.duplicate_subset_fraction == 0.0
        if m.n == 0:
            assert m.proportion_explored == 1.0


def test_curves_two_mono_duplicates_exceed_dual() -> None:
    examples = filter_by_supporting_count(load_hotpot(SAMPLE), 3)
    client = TranscriptReplayClient(TRANSCRIPTS, model="sim-answerer-v1")
    result = run_curves(examples, [2, 4], client)
    by = {(m.n, m.miner): m for m in result.metrics}
    for k in (2, 4):
        assert by[(k, "two_mono")].duplicate_subset_fraction > 0.0
        assert by[(k, "dual")].duplicate_subset_fraction == 0.0
        assert by[(k, "dual")].subsets_fraction <= by[(k, "two_mono")].subsets_fraction


class _FailingClient(ModelClient):
    def __init__(self, inner: ModelClient, poison_question: str) -> None:
        self.inner = inner
        self.poison = poison_question

    def infer(self, retained_sources, context) -> str:
        if context.question == self.poison:
            raise ConnectionError("endpoint unavailable")
        return self.inner.infer(retained_sources, context)


def test_curves_count_and_exclude_failing_examples() -> None:
    examples = filter_by_supporting_count(load_hotpot(SAMPLE), 3)
    replay = TranscriptReplayClient(TRANSCRIPTS, model="sim-answerer-v1")
    client = _FailingClient(replay, examples[0].question)
    result = run_curves(examples, [3], client)
    rows = [m for m in result.metrics if m.miner == "mono_retention"]
    assert rows[0].examples == len(examples) - 1
    assert rows[0].errors == 1


def test_curves_csv_schemas(tmp_path) -> None:
    examples = filter_by_supporting_count(load_hotpot(SAMPLE), 3)
    client = TranscriptReplayClient(TRANSCRIPTS, model="sim-answerer-v1")
    result = run_curves(examples, range(0, 3), client)
    paths = write_curves_csvs(result, tmp_path)
    assert set(paths) == {"lattice_explored", "rule_frequency", "dual_vs_mono",
                          "visited_scatter"}
    headers = {
        "lattice_explored": "n,miner,examples,errors,proportion_explored",
        "rule_frequency": "n,examples,retention_rule_fraction,omission_rule_fraction",
        "dual_vs_mono": "n,strategy,subsets_fraction,duplicate_subset_fraction",
        "visited_scatter": "example_id,n,rule_type,valid_rules,visited",
    }
    for name, header in headers.items():
        lines = paths[name].read_text().splitlines()
        assert lines[0] == header
        assert len(lines) > 1


def test_default_predicate_pair_is_reciprocal() -> None:
    pair = default_predicate_pair(_einsteinium())
    assert pair.retention_predicate.evaluate("It is Einsteinium.") == 1
    assert pair.omission_predicate.evaluate("It is Einsteinium.") == 0
    assert pair.omission_predicate.evaluate("insufficient sources") == 1


def test_transcript_fixture_regenerates_byte_identical(tmp_path) -> None:
    out = tmp_path / "regen.jsonl"
    script = REPO / "scripts" / "make_hotpot_transcripts.py"
    subprocess.run([sys.executable, str(script), str(SAMPLE), str(out)],
                   check=True, capture_output=True)
    assert out.read_bytes() == TRANSCRIPTS.read_bytes()
