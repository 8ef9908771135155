from __future__ import annotations

import random
from collections import Counter

import pytest

from conftest import echo_client, node_predicate, random_sat, synthetic_sources, true_valid
from ragrules.lattice import InputSet, Interpretation, complement, enumerate_level
from ragrules.miner_dual import mine_dual
from ragrules.miner_mono import MiningAborted, mine
from ragrules.model import ModelClient, ScriptedInputError

RET = Interpretation.RETENTION
OMI = Interpretation.OMISSION


def dual_setup(n: int, sat_ret: set[int], sat_omi: set[int]):
    iset = InputSet(synthetic_sources(n))
    client = echo_client(n)
    return (iset, node_predicate(n, sat_ret, RET),
            node_predicate(n, sat_omi, OMI), client)


def test_narrative_mixed_validity_trace() -> None:
    # Width 4. Everything passes both checks except: {s1,s4} fails its
    # omission check and {s1} fails its retention check. So {s1} and {s4}
    # stay retention candidates while pre-invalidated for omission; once
    # {s1} also fails retention it sits in both frontiers and {} is pruned
    # without any inference.
    n = 4
    s1, s4 = 0b0001, 0b1000
    sat_ret = set(range(16)) - {s1}
    sat_omi = set(range(16)) - {s1 | s4}

    iset, pred_ret, pred_omi, client = dual_setup(n, sat_ret, sat_omi)
    result = mine_dual(iset, pred_ret, pred_omi, client, cache_enabled=False)

    assert result.valid_ret == set(range(16)) - {0, s1}
    assert result.valid_omi == set(range(16)) - {0, s1, s4, s1 | s4}
    assert result.minimal_ret == (0b0010, 0b0100, 0b1000)
    assert result.minimal_omi == (0b0010, 0b0100)

    t = result.telemetry
    assert t.model_calls == 28
    assert t.evaluated_per_level == [1, 4, 6, 4, 0]
    assert t.pruned_per_level == [0, 0, 0, 0, 1]
    assert t.retention_disabled_at == 0
    assert t.omission_disabled_at == 0
    assert t.early_terminated_at is None

    counts = Counter(client.calls)
    # {} was pruned outright: the full set is queried once (root retention)
    # and the empty set once (root omission), never for node {}.
    assert counts[0b1111] == 1
    assert counts[0b0000] == 1
    # {s1} and {s4} were never queried on their omission side.
    assert counts[complement(s1, n)] == 1  # only node {s2,s3,s4}'s retention check
    assert counts[complement(s4, n)] == 1


def test_narrative_trace_with_cache() -> None:
    n = 4
    sat_ret = set(range(16)) - {0b0001}
    sat_omi = set(range(16)) - {0b1001}
    iset, pred_ret, pred_omi, client = dual_setup(n, sat_ret, sat_omi)
    result = mine_dual(iset, pred_ret, pred_omi, client, cache_enabled=True)
    t = result.telemetry
    assert t.model_calls == 16
    assert t.cache_hits == 12
    assert t.cache_entries == 16
    assert Counter(client.calls).most_common(1)[0][1] == 1  # no duplicate inference
    # cache on/off agree on everything but the call pattern
    iset, pred_ret, pred_omi, client2 = dual_setup(n, sat_ret, sat_omi)
    uncached = mine_dual(iset, pred_ret, pred_omi, client2, cache_enabled=False)
    assert uncached.valid_ret == result.valid_ret
    assert uncached.valid_omi == result.valid_omi
    assert t.model_calls + t.cache_hits == uncached.telemetry.model_calls


@pytest.mark.parametrize("cache_enabled", [False, True])
def test_dual_equals_two_mono_runs(cache_enabled: bool) -> None:
    rng = random.Random(411)
    for _ in range(50):
        n = rng.randint(0, 6)
        sat_ret = random_sat(n, rng)
        sat_omi = random_sat(n, rng)
        iset, pred_ret, pred_omi, client = dual_setup(n, sat_ret, sat_omi)
        dual = mine_dual(iset, pred_ret, pred_omi, client, cache_enabled=cache_enabled)
        mono_ret = mine(iset, pred_ret, echo_client(n), RET)
        mono_omi = mine(iset, pred_omi, echo_client(n), OMI)
        assert dual.valid_ret == mono_ret.valid
        assert dual.valid_omi == mono_omi.valid
        assert dual.minimal_ret == mono_ret.minimal
        assert dual.minimal_omi == mono_omi.minimal
        assert dual.valid_ret == true_valid(n, sat_ret)
        assert dual.valid_omi == true_valid(n, sat_omi)


def test_cached_dual_never_repeats_a_concrete_input() -> None:
    rng = random.Random(88)
    for _ in range(40):
        n = rng.randint(1, 6)
        iset, pred_ret, pred_omi, client = dual_setup(
            n, random_sat(n, rng), random_sat(n, rng))
        result = mine_dual(iset, pred_ret, pred_omi, client, cache_enabled=True)
        counts = Counter(client.calls)
        assert all(count == 1 for count in counts.values())
        assert result.telemetry.model_calls == len(counts)
        assert result.telemetry.model_calls <= 2 ** n


def test_cached_call_budget_never_exceeds_two_monos() -> None:
    rng = random.Random(1905)
    for _ in range(40):
        n = rng.randint(0, 6)
        sat_ret, sat_omi = random_sat(n, rng), random_sat(n, rng)
        iset, pred_ret, pred_omi, client = dual_setup(n, sat_ret, sat_omi)
        dual = mine_dual(iset, pred_ret, pred_omi, client, cache_enabled=True)
        ret_calls = mine(iset, pred_ret, echo_client(n), RET).telemetry.model_calls
        omi_calls = mine(iset, pred_omi, echo_client(n), OMI).telemetry.model_calls
        assert dual.telemetry.model_calls <= ret_calls + omi_calls


def _reference_pruned_levels(n: int, sat: set[int]) -> list[set[int]]:
    """Frontier simulation straight from the search contract: per-level
    pruned sets, with everything below an early termination counted pruned."""
    frontier: set[int] = set()
    pruned_levels = []
    for level in range(n, -1, -1):
        nodes = enumerate_level(n, level)
        frontier = {c for z in frontier for c in
                    (z ^ (1 << i) for i in range(n) if z >> i & 1)}
        pruned = {m for m in nodes if m in frontier}
        pruned_levels.append(pruned)
        found = 0
        for m in nodes:
            if m in pruned:
                continue
            if m in sat:
                found += 1
            else:
                frontier.add(m)
        if found == 0 and level > 0:
            for below in range(level - 1, -1, -1):
                pruned_levels.append(set(enumerate_level(n, below)))
            break
    return pruned_levels


def test_dual_prunes_exactly_the_intersection_of_mono_prunes() -> None:
    rng = random.Random(2718)
    for _ in range(40):
        n = rng.randint(1, 5)
        sat_ret, sat_omi = random_sat(n, rng), random_sat(n, rng)
        ret_levels = _reference_pruned_levels(n, sat_ret)
        omi_levels = _reference_pruned_levels(n, sat_omi)

        # the reference agrees with the single-type miner on its own runs
        iset, pred_ret, pred_omi, client = dual_setup(n, sat_ret, sat_omi)
        mono = mine(iset, pred_ret, echo_client(n), RET)
        for count, pruned in zip(mono.telemetry.pruned_per_level, ret_levels):
            assert count == len(pruned)

        dual = mine_dual(iset, pred_ret, pred_omi, client, cache_enabled=False)
        for i, count in enumerate(dual.telemetry.pruned_per_level):
            assert count == len(ret_levels[i] & omi_levels[i])


def test_per_type_shutdown_is_telemetry_visible() -> None:
    # retention dies at the top (root fails retention) while omission rules
    # keep coming; the search must continue for omission alone.
    n = 3
    sat_ret: set[int] = set()
    sat_omi = set(range(8))
    iset, pred_ret, pred_omi, client = dual_setup(n, sat_ret, sat_omi)
    result = mine_dual(iset, pred_ret, pred_omi, client, cache_enabled=False)
    assert result.valid_ret == frozenset()
    assert result.valid_omi == frozenset(range(8))
    t = result.telemetry
    assert t.retention_disabled_at == n
    assert t.omission_disabled_at is None
    assert t.early_terminated_at is None
    # after the root, only omission checks run: 1 level-n node makes 2 calls,
    # every other node exactly 1
    assert t.model_calls == 2 + (2 ** n - 1)


def test_concurrent_dual_is_bit_identical_and_cache_sound() -> None:
    rng = random.Random(3)
    for _ in range(8):
        n = rng.randint(2, 5)
        sat_ret, sat_omi = random_sat(n, rng), random_sat(n, rng)
        iset, pred_ret, pred_omi, client = dual_setup(n, sat_ret, sat_omi)
        sequential = mine_dual(iset, pred_ret, pred_omi, client, cache_enabled=True)
        iset, pred_ret, pred_omi, client2 = dual_setup(n, sat_ret, sat_omi)
        threaded = mine_dual(iset, pred_ret, pred_omi, client2,
                             cache_enabled=True, max_workers=4)
        assert threaded.valid_ret == sequential.valid_ret
        assert threaded.valid_omi == sequential.valid_omi
        assert threaded.telemetry.as_dict() == sequential.telemetry.as_dict()
        assert all(c == 1 for c in Counter(client2.calls).values())


class _PoisonedClient(ModelClient):
    def __init__(self, n: int, poison: int) -> None:
        self._inner = echo_client(n)
        self._poison = poison

    def infer(self, retained_sources, context) -> str:
        out = self._inner.infer(retained_sources, context)
        if int(out) == self._poison:
            raise ScriptedInputError("boom")
        return out


def test_dual_aborts_on_inference_failure() -> None:
    n = 3
    iset = InputSet(synthetic_sources(n))
    pred_ret = node_predicate(n, set(range(8)), RET)
    pred_omi = node_predicate(n, set(range(8)), OMI)
    with pytest.raises(MiningAborted) as aborted:
        mine_dual(iset, pred_ret, pred_omi, _PoisonedClient(n, poison=0b101), False)
    assert aborted.value.level == 2
    assert aborted.value.telemetry.model_calls >= 2
