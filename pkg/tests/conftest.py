from __future__ import annotations

import random
from pathlib import Path

import pytest

from ragrules.lattice import InputSet, Interpretation, complement
from ragrules.model import ScriptedClient
from ragrules.predicate import ScriptedPredicate

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


def synthetic_sources(n: int) -> tuple[str, ...]:
    return tuple(f"s{i + 1}" for i in range(n))


def echo_client(n: int) -> ScriptedClient:
    """Client whose output for any retained set is the set's mask, as text."""
    sources = synthetic_sources(n)
    return ScriptedClient(sources, {q: str(q) for q in range(1 << n)})


def node_predicate(n: int, sat_nodes: set[int],
                   interpretation: Interpretation) -> ScriptedPredicate:
    """Predicate that makes node m's own check pass iff m is in sat_nodes.

    Works against echo_client: under retention the check for node m sees the
    output str(m); under omission it sees str(complement(m)).
    """
    if interpretation is Interpretation.RETENTION:
        table = {str(q): int(q in sat_nodes) for q in range(1 << n)}
    else:
        table = {str(q): int(complement(q, n) in sat_nodes) for q in range(1 << n)}
    return ScriptedPredicate(table)


def node_setup(n: int, sat_nodes: set[int], interpretation: Interpretation):
    """(input_set, client, predicate) realizing a node-level satisfaction set."""
    client = echo_client(n)
    return InputSet(synthetic_sources(n)), client, node_predicate(n, sat_nodes, interpretation)


def random_sat(n: int, rng: random.Random) -> set[int]:
    return {m for m in range(1 << n) if rng.random() < 0.5}


def true_valid(n: int, sat_nodes: set[int]) -> set[int]:
    """Reference validity: node valid iff itself and every superset satisfied.

    Computed straight from the definition by subset testing, independent of
    both the miners and the oracle's downward propagation.
    """
    return {
        m for m in range(1 << n)
        if all(t in sat_nodes for t in range(1 << n) if t & m == m)
    }
