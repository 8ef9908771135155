"""Powerset lattice over an ordered set of sources, encoded as integer bitmasks.

Bit i of a mask corresponds to source i+1 (1-based) of the input set. A mask
is read under one of two interpretations: the sources it *retains* or the
sources it *omits*. All functions here are pure and safe to call concurrently.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Iterable, Sequence

MAX_WIDTH = 64


class Interpretation(enum.Enum):
    """How a mask is applied to the input set."""

    RETENTION = "retention"
    OMISSION = "omission"


@dataclass(frozen=True)
class InputSet:
    """The ordered sources under analysis plus the fixed remainder of the input.

    `context` is opaque to the lattice; model clients decide what to do with
    it (for RAG prompts it carries the question and instructions). Source
    order is fixed for the lifetime of the object.
    """

    sources: tuple[str, ...]
    context: Any = None
    labels: tuple[str, ...] = field(default=())

    def __init__(self, sources: Sequence[str], context: Any = None,
                 labels: Sequence[str] | None = None) -> None:
        sources = tuple(sources)
        if len(sources) > MAX_WIDTH:
            raise ValueError(f"at most {MAX_WIDTH} sources supported, got {len(sources)}")
        if labels is None:
            labels = tuple(f"s{i + 1}" for i in range(len(sources)))
        else:
            labels = tuple(labels)
            if len(labels) != len(sources):
                raise ValueError("labels must match sources one to one")
        object.__setattr__(self, "sources", sources)
        object.__setattr__(self, "context", context)
        object.__setattr__(self, "labels", labels)

    @property
    def width(self) -> int:
        return len(self.sources)

    @property
    def full_mask(self) -> int:
        return (1 << len(self.sources)) - 1


@dataclass(frozen=True)
class Rule:
    """A certified-valid mask under one interpretation.

    Construct these only for masks a miner or the oracle has validated;
    nothing here re-checks validity.
    """

    interpretation: Interpretation
    mask: int
    width: int
    minimal: bool = False


def _check_mask(mask: int, n: int) -> None:
    if mask < 0 or mask >> n:
        raise ValueError(f"mask {mask:#x} does not fit width {n}")


def complement(mask: int, n: int) -> int:
    """Flip a mask within width n."""
    _check_mask(mask, n)
    return ((1 << n) - 1) ^ mask


def mask_to_indices(mask: int) -> list[int]:
    """Set bits as 1-based source indices, ascending."""
    if mask < 0:
        raise ValueError("mask must be non-negative")
    out = []
    i = 1
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return out


def mask_from_indices(indices: Iterable[int], n: int) -> int:
    """Build a mask from 1-based source indices."""
    mask = 0
    for i in indices:
        if not 1 <= i <= n:
            raise ValueError(f"source index {i} out of range 1..{n}")
        mask |= 1 << (i - 1)
    return mask


@lru_cache(maxsize=8192)
def enumerate_level(n: int, l: int) -> tuple[int, ...]:
    """All masks of width n with exactly l bits set, ascending.

    Uses Gosper's hack to step through same-popcount masks in numeric order.
    """
    if n < 0 or l < 0 or l > n or n > MAX_WIDTH:
        raise ValueError(f"invalid level: n={n}, l={l}")
    if l == 0:
        return (0,)
    limit = 1 << n
    v = (1 << l) - 1
    out = []
    while v < limit:
        out.append(v)
        low = v & -v
        ripple = v + low
        v = ripple | (((v ^ ripple) >> 2) // low)
    return tuple(out)


def children(mask: int) -> list[int]:
    """Immediate subsets: clear exactly one set bit. Ascending order."""
    if mask < 0:
        raise ValueError("mask must be non-negative")
    out = []
    m = mask
    while m:
        b = m & -m
        out.append(mask ^ b)
        m ^= b
    out.reverse()  # clearing the highest bit yields the smallest child
    return out


def parents(mask: int, n: int) -> list[int]:
    """Immediate supersets within width n: set exactly one unset bit. Ascending."""
    _check_mask(mask, n)
    return [mask | (1 << i) for i in range(n) if not mask >> i & 1]


def subsumes(r1: Rule, r2: Rule) -> bool:
    """Whether r1's per-source predicates include all of r2's (r2.mask is a subset)."""
    if r1.interpretation is not r2.interpretation:
        raise ValueError("rules of different interpretations are not comparable")
    if r1.width != r2.width:
        raise ValueError("rules of different widths are not comparable")
    return r2.mask & ~r1.mask == 0


def minimal_rules(valid: Iterable[int]) -> list[int]:
    """The strict-subset-minimal masks of a valid set, ascending.

    The result is an antichain. When `valid` is closed under supersets its
    upward closure within the mask width reconstructs `valid` exactly.
    """
    # Smaller popcounts first; a mask is minimal iff no already-accepted
    # minimal mask is a strict subset of it.
    ordered = sorted(set(valid), key=lambda m: (m.bit_count(), m))
    minimal: list[int] = []
    for m in ordered:
        if m < 0:
            raise ValueError("mask must be non-negative")
        if not any(a & m == a for a in minimal):
            minimal.append(m)
    minimal.sort()
    return minimal


def concrete_input(mask: int, interpretation: Interpretation,
                   input_set: InputSet) -> list[str]:
    """The ordered source texts actually given to the model for this node.

    Retention keeps the masked sources; omission keeps everything else. Both
    preserve the input set's original order.
    """
    n = input_set.width
    _check_mask(mask, n)
    if interpretation is Interpretation.RETENTION:
        return [input_set.sources[i] for i in range(n) if mask >> i & 1]
    return [input_set.sources[i] for i in range(n) if not mask >> i & 1]


def retained_mask(mask: int, interpretation: Interpretation, n: int) -> int:
    """Canonical mask of the sources the model actually sees for this node."""
    if interpretation is Interpretation.RETENTION:
        _check_mask(mask, n)
        return mask
    return complement(mask, n)


def rules_from_masks(valid: Iterable[int], interpretation: Interpretation,
                     width: int) -> list[Rule]:
    """Wrap a certified valid set as Rule records with minimality flags set."""
    valid = sorted(set(valid))
    minimal = set(minimal_rules(valid))
    return [Rule(interpretation, m, width, minimal=m in minimal) for m in valid]
