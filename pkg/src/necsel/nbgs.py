"""Necessity-based grouped selection and the top/bottom/random baselines.

The grouped strategy sorts candidates by score (descending, ids break
ties), partitions the ranking into groups of k, softmax-weights scores
within each group at temperature tau, and draws a per-group quota without
replacement. Per-group draws use independently derived streams, so groups
may be processed in any order or in parallel with identical results.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import ScoredSample, SelectionConfig, ValidationError, derive_stream
from .sampling import uniform_sample, weighted_sample_by_logits

GROUP_STREAM_LABEL = "group"
RANDOM_STREAM_LABEL = "random"


@dataclass(frozen=True)
class Group:
    index: int
    members: tuple[ScoredSample, ...]
    probs: tuple[float, ...] | None = None
    quota: int | None = None


@dataclass(frozen=True)
class GroupDraw:
    index: int
    quota: int
    drawn: tuple[str, ...]


@dataclass(frozen=True)
class SelectionResult:
    selected_ids: tuple[str, ...]
    per_group: tuple[GroupDraw, ...]
    strategy: str
    config: SelectionConfig

    def as_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "config": dataclasses.asdict(self.config),
            "selected_ids": list(self.selected_ids),
            "per_group": [
                {"group": g.index, "quota": g.quota, "drawn": list(g.drawn)}
                for g in self.per_group
            ],
        }


def sort_scored(scored: Sequence[ScoredSample]) -> list[ScoredSample]:
    """Descending by score, ties broken by ascending id: a stable total order."""
    return sorted(scored, key=lambda s: (-s.score, s.id))


def partition_groups(sorted_scored: Sequence[ScoredSample], k: int) -> list[Group]:
    """Consecutive rank groups of size k; the last group takes the remainder."""
    if k < 1:
        raise ValidationError(f"group size must be >= 1, got {k}")
    return [
        Group(index=j, members=tuple(sorted_scored[start : start + k]))
        for j, start in enumerate(range(0, len(sorted_scored), k))
    ]


def group_softmax(scores: Sequence[float], tau: float) -> np.ndarray:
    """Stabilized softmax of scores / tau; sums to 1 up to rounding.

    The max-shift makes the result invariant to adding a constant to every
    score. Entries far below the group maximum may underflow to 0.0.
    """
    if not (tau > 0):
        raise ValidationError(f"temperature must be > 0, got {tau}")
    if len(scores) == 0:
        raise ValidationError("cannot softmax an empty group")
    scaled = np.asarray(scores, dtype=np.float64) / tau
    shifted = np.exp(scaled - scaled.max())
    return shifted / shifted.sum()


def assign_quotas(group_sizes: Sequence[int], n2: int) -> list[int]:
    """Per-group draw counts summing to n2.

    Base quota floor(n2/N) everywhere; the remainder goes one each to the
    lowest-indexed (highest-score) groups. Quotas above a group's size are
    capped and the deficit flows to groups with spare capacity in ascending
    index order until exhausted.
    """
    n = len(group_sizes)
    if n == 0:
        if n2 != 0:
            raise ValidationError("cannot assign a nonzero quota to zero groups")
        return []
    capacity = sum(group_sizes)
    if n2 > capacity:
        raise ValidationError(f"quota {n2} exceeds total candidates {capacity}")
    base, remainder = divmod(n2, n)
    quotas = [base + (1 if j < remainder else 0) for j in range(n)]
    deficit = 0
    for j, size in enumerate(group_sizes):
        if quotas[j] > size:
            deficit += quotas[j] - size
            quotas[j] = size
    while deficit:
        for j, size in enumerate(group_sizes):
            if deficit == 0:
                break
            spare = size - quotas[j]
            if spare > 0:
                take = min(spare, deficit)
                quotas[j] += take
                deficit -= take
    return quotas


def build_groups(scored: Sequence[ScoredSample], cfg: SelectionConfig) -> list[Group]:
    """Completed groups for the grouped strategy: rank-partitioned members
    with their in-group sampling probabilities and draw quotas attached.

    The selection path itself draws from logits and never needs the
    materialized probabilities; this is the diagnostic view.
    """
    ordered = sort_scored(scored)
    groups = partition_groups(ordered, cfg.k)
    quotas = assign_quotas([len(g.members) for g in groups], cfg.n2)
    return [
        Group(
            index=group.index,
            members=group.members,
            probs=tuple(float(p) for p in group_softmax([m.score for m in group.members], cfg.tau)),
            quota=quota,
        )
        for group, quota in zip(groups, quotas)
    ]


def _select_nbgs(scored: Sequence[ScoredSample], cfg: SelectionConfig) -> tuple[list[str], list[GroupDraw]]:
    ordered = sort_scored(scored)
    groups = partition_groups(ordered, cfg.k)
    quotas = assign_quotas([len(g.members) for g in groups], cfg.n2)
    selected: list[str] = []
    draws: list[GroupDraw] = []
    for group, quota in zip(groups, quotas):
        if quota:
            ids = [m.id for m in group.members]
            logits = [m.score / cfg.tau for m in group.members]
            stream = derive_stream(cfg.rng_seed, GROUP_STREAM_LABEL, group.index)
            drawn = weighted_sample_by_logits(ids, logits, quota, stream)
        else:
            drawn = []
        draws.append(GroupDraw(index=group.index, quota=quota, drawn=tuple(drawn)))
        selected.extend(drawn)
    return selected, draws


def select(scored: Sequence[ScoredSample], cfg: SelectionConfig) -> SelectionResult:
    """Apply the configured strategy to the scored candidates.

    Deterministic given (candidates, config): grouped draws derive one
    stream per group index, the random baseline derives its own stream,
    and top/bottom are pure order statistics.
    """
    if cfg.n2 > len(scored):
        raise ValidationError(f"n2 = {cfg.n2} exceeds candidate count {len(scored)}")
    per_group: list[GroupDraw] = []
    if cfg.strategy == "nbgs":
        selected, per_group = _select_nbgs(scored, cfg)
    elif cfg.strategy == "top":
        selected = [s.id for s in sort_scored(scored)[: cfg.n2]]
    elif cfg.strategy == "bottom":
        ordered = sorted(scored, key=lambda s: (s.score, s.id))
        selected = [s.id for s in ordered[: cfg.n2]]
    elif cfg.strategy == "random":
        stream = derive_stream(cfg.rng_seed, RANDOM_STREAM_LABEL, 0)
        selected = uniform_sample([s.id for s in scored], cfg.n2, stream)
    else:
        raise ValidationError(f"unknown strategy {cfg.strategy!r}")
    return SelectionResult(
        selected_ids=tuple(sorted(selected)),
        per_group=tuple(per_group),
        strategy=cfg.strategy,
        config=cfg,
    )
