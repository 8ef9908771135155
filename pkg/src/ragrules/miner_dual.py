"""Dual rule miner: retention and omission rules in one lattice pass.

Each node carries one canonical mask and two readings. The retention check
feeds the model the masked sources; the omission check feeds it the rest.
Separate invalid frontiers advance per rule type, and a node is skipped
outright only when both frontiers cover it. A check whose frontier flag is
already down is recorded as invalid without inference, which is exactly what
keeps that frontier propagating.

With the response cache enabled, concrete inputs are keyed by the mask of
the sources actually sent, so the retention reading of m and the omission
reading of its complement share one inference. The cache also deduplicates
identical in-flight requests under concurrent evaluation.
"""

from __future__ import annotations

import threading
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass

from .lattice import InputSet, enumerate_level, minimal_rules
from .miner_mono import MineTelemetry, MiningAborted, _frontier_children
from .model import ModelClient
from .predicate import OutputPredicate, evaluate


@dataclass
class DualTelemetry(MineTelemetry):
    """Adds per-type shutdown levels and cache accounting to the base counters.

    evaluated_per_level counts nodes that received at least one inference;
    model_calls counts inferences that reached the client.
    """

    retention_disabled_at: int | None = None
    omission_disabled_at: int | None = None
    cache_entries: int = 0
    cache_chars: int = 0

    def as_dict(self) -> dict:
        data = super().as_dict()
        data.update({
            "retention_disabled_at": self.retention_disabled_at,
            "omission_disabled_at": self.omission_disabled_at,
            "cache_entries": self.cache_entries,
            "cache_chars": self.cache_chars,
        })
        return data


@dataclass
class DualMineResult:
    valid_ret: frozenset[int]
    valid_omi: frozenset[int]
    minimal_ret: tuple[int, ...]
    minimal_omi: tuple[int, ...]
    telemetry: DualTelemetry


class _ResponseCache:
    """Future-backed response cache keyed by concrete retained mask.

    The first caller of a key owns the inference; every other caller (even a
    concurrent one arriving while the call is in flight) blocks on the same
    future and counts as a hit, so no concrete input is ever sent twice.
    """

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._futures: dict[int, Future] = {}

    def get_or_compute(self, key: int, fn) -> tuple[str, bool]:
        with self._lock:
            future = self._futures.get(key)
            owner = future is None
            if owner:
                future = Future()
                self._futures[key] = future
        if owner:
            try:
                value = fn()
            except Exception as exc:
                future.set_exception(exc)
                raise
            future.set_result(value)
            return value, False
        return future.result(), True

    def stats(self) -> tuple[int, int]:
        with self._lock:
            done = [f for f in self._futures.values()
                    if f.done() and f.exception() is None]
            return len(done), sum(len(f.result()) for f in done)


@dataclass
class _NodeOutcome:
    mask: int
    sat_ret: int | None = None  # None when the retention check was short-circuited
    sat_omi: int | None = None
    calls: int = 0
    hits: int = 0


def mine_dual(input_set: InputSet, retention_predicate: OutputPredicate,
              omission_predicate: OutputPredicate, client: ModelClient,
              cache_enabled: bool = False, max_workers: int = 1) -> DualMineResult:
    """Mine both rule types in a single top-down pass.

    Rule sets equal those of two independent single-type runs with the
    matching predicates. Once a level yields no rule of one type, inference
    for that type stops (its frontier already covers every node below); the
    whole search stops when a level yields neither type.
    """
    n = input_set.width
    full = (1 << n) - 1
    sources = input_set.sources
    telemetry = DualTelemetry()
    cache = _ResponseCache() if cache_enabled else None
    valid_ret: set[int] = set()
    valid_omi: set[int] = set()
    z_ret: set[int] = set()
    z_omi: set[int] = set()
    ret_active = True
    omi_active = True

    def raw_infer(key: int) -> str:
        retained = [sources[i] for i in range(n) if key >> i & 1]
        return client.infer(retained, input_set.context)

    def judged(key: int, pred: OutputPredicate, outcome: _NodeOutcome) -> int:
        if cache is not None:
            output, hit = cache.get_or_compute(key, lambda: raw_infer(key))
            if hit:
                outcome.hits += 1
            else:
                outcome.calls += 1
        else:
            output = raw_infer(key)
            outcome.calls += 1
        return evaluate(pred, output)

    def check(entry: tuple[int, bool, bool]) -> _NodeOutcome:
        mask, v_ret, v_omi = entry
        outcome = _NodeOutcome(mask)
        if v_ret:
            outcome.sat_ret = judged(mask, retention_predicate, outcome)
        if v_omi:
            outcome.sat_omi = judged(full ^ mask, omission_predicate, outcome)
        return outcome

    for level in range(n, -1, -1):
        nodes = enumerate_level(n, level)
        if ret_active:
            z_ret = _frontier_children(z_ret)
        if omi_active:
            z_omi = _frontier_children(z_omi)
        entries = []
        for mask in nodes:
            v_ret = ret_active and mask not in z_ret
            v_omi = omi_active and mask not in z_omi
            if v_ret or v_omi:
                entries.append((mask, v_ret, v_omi))
        telemetry.pruned_per_level.append(len(nodes) - len(entries))
        telemetry.evaluated_per_level.append(len(entries))

        outcomes = _run_checks(entries, check, max_workers, level, telemetry)
        found_ret = 0
        found_omi = 0
        for entry, outcome in zip(entries, outcomes):
            mask, v_ret, v_omi = entry
            telemetry.model_calls += outcome.calls
            telemetry.cache_hits += outcome.hits
            if ret_active:
                if v_ret and outcome.sat_ret == 1:
                    valid_ret.add(mask)
                    found_ret += 1
                else:
                    z_ret.add(mask)
            if omi_active:
                if v_omi and outcome.sat_omi == 1:
                    valid_omi.add(mask)
                    found_omi += 1
                else:
                    z_omi.add(mask)
        if ret_active and found_ret == 0:
            ret_active = False
            telemetry.retention_disabled_at = level
        if omi_active and found_omi == 0:
            omi_active = False
            telemetry.omission_disabled_at = level
        if not ret_active and not omi_active:
            if level > 0:
                telemetry.early_terminated_at = level
            break

    if cache is not None:
        telemetry.cache_entries, telemetry.cache_chars = cache.stats()
    return DualMineResult(
        valid_ret=frozenset(valid_ret),
        valid_omi=frozenset(valid_omi),
        minimal_ret=tuple(minimal_rules(valid_ret)),
        minimal_omi=tuple(minimal_rules(valid_omi)),
        telemetry=telemetry,
    )


def _run_checks(entries, check, max_workers, level, telemetry):
    """Evaluate a level's surviving nodes, preserving entry order."""
    if max_workers > 1 and len(entries) > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            futures = [(entry, pool.submit(check, entry)) for entry in entries]
        outcomes = []
        failure = None
        for entry, future in futures:
            exc = future.exception()
            if exc is None:
                outcomes.append(future.result())
            elif failure is None:
                failure = (entry[0], exc)
        if failure is not None:
            for _, future in futures:
                if future.exception() is None:
                    outcome = future.result()
                    telemetry.model_calls += outcome.calls
                    telemetry.cache_hits += outcome.hits
            raise MiningAborted(level, failure[0], telemetry, failure[1]) from failure[1]
        return outcomes
    outcomes = []
    for entry in entries:
        try:
            outcomes.append(check(entry))
        except Exception as exc:
            for outcome in outcomes:
                telemetry.model_calls += outcome.calls
                telemetry.cache_hits += outcome.hits
            raise MiningAborted(level, entry[0], telemetry, exc) from exc
    return outcomes
