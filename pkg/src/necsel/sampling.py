"""Deterministic sampling primitives.

All samplers consume exactly one uniform draw per candidate item, in input
order, from the supplied RngStream; results are therefore reproducible for
a fixed (input, stream) pair on any host or thread schedule. Outputs are
duplicate-free and returned in sorted-id order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .core import RngStream, ValidationError

_PROB_SUM_TOL = 1e-9


@dataclass(frozen=True)
class WeightedItem:
    id: str
    prob: float


def uniform_sample(ids: Sequence[str], n: int, rng: RngStream) -> list[str]:
    """Draw n ids uniformly without replacement; every size-n subset equally likely.

    Selection sampling: item t is kept with probability (still needed) /
    (still available), one uniform draw per item.
    """
    total = len(ids)
    if n > total:
        raise ValidationError(f"cannot sample {n} from {total} ids")
    picked: list[str] = []
    remaining = n
    for seen, item in enumerate(ids):
        if remaining == 0:
            break
        if rng.random() * (total - seen) < remaining:
            picked.append(item)
            remaining -= 1
    return sorted(picked)


def reservoir_sample(ids: Iterable[str], n: int, rng: RngStream) -> list[str]:
    """Single-pass uniform sample of n ids from a stream, O(n) memory.

    Distribution matches uniform_sample over the materialized stream.
    """
    reservoir: list[str] = []
    count = 0
    for item in ids:
        if count < n:
            reservoir.append(item)
        else:
            j = int(rng.random() * (count + 1))
            if j < n:
                reservoir[j] = item
        count += 1
    if count < n:
        raise ValidationError(f"stream yielded {count} ids, fewer than requested {n}")
    return sorted(reservoir)


def weighted_sample_by_logits(
    ids: Sequence[str], logits: Sequence[float], quota: int, rng: RngStream
) -> list[str]:
    """Draw quota ids without replacement, item i weighted by exp(logits[i]).

    Order-statistics method: rank by logit + Gumbel noise and keep the top
    quota. The outcome-set distribution provably equals drawing one item at
    a time with probability proportional to exp(logit), removing it, and
    renormalizing. Working in log space keeps extreme weight ratios exact
    where materialized probabilities would underflow to zero.
    """
    if quota > len(ids):
        raise ValidationError(f"quota {quota} exceeds {len(ids)} items")
    if len(logits) != len(ids):
        raise ValidationError("ids and logits length mismatch")
    keyed = []
    for item, logit in zip(ids, logits):
        u = rng.random()
        # -log(-log u) is Gumbel(0, 1); u == 0.0 maps to -inf (never chosen).
        key = logit - math.log(-math.log(u)) if u > 0.0 else float("-inf")
        keyed.append((-key, item))
    keyed.sort()
    return sorted(item for _, item in keyed[:quota])


def weighted_sample_without_replacement(
    items: Sequence[WeightedItem], quota: int, rng: RngStream
) -> list[str]:
    """Draw quota ids under successive-renormalization semantics.

    Probabilities must be positive and sum to 1 (within 1e-9); zero-prob
    items are the caller's job to filter out.
    """
    if quota > len(items):
        raise ValidationError(f"quota {quota} exceeds {len(items)} items")
    total = 0.0
    for item in items:
        if not (item.prob > 0.0):
            raise ValidationError(f"item {item.id!r} has nonpositive prob {item.prob!r}")
        total += item.prob
    if items and abs(total - 1.0) > _PROB_SUM_TOL:
        raise ValidationError(f"probs sum to {total!r}, expected 1 within {_PROB_SUM_TOL}")
    ids = [item.id for item in items]
    logits = [math.log(item.prob) for item in items]
    return weighted_sample_by_logits(ids, logits, quota, rng)
