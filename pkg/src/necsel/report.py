"""Diagnostics over score files and selection results.

Source entropy, coverage, score histograms, and decile occupancy are the
directly computable proxies for whether a selection kept its diversity;
exemplar extraction surfaces the highest- and lowest-scored samples with
their full text for qualitative reading. Reports are emitted as JSON and
CSV data files; rendering is someone else's job.
"""

from __future__ import annotations

import csv
import dataclasses
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import DataError, Sample, ScoredSample, SelectionConfig, ValidationError
from .ingest import read_pool

HISTOGRAM_BINS = 50
NUM_DECILES = 10


@dataclass(frozen=True)
class DiversityReport:
    per_source: dict[str, int]
    source_entropy: float | None
    coverage: float | None
    histogram_counts: list[int]
    histogram_min: float
    histogram_max: float
    per_group_drawn: list[int]

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


def source_entropy(counts: Mapping[str, int]) -> float | None:
    """Shannon entropy (nats) of a source-count distribution.

    None when there are no source tags at all: an untagged pool has no
    diversity signal, which is not the same as zero entropy.
    """
    total = sum(counts.values())
    if total == 0:
        return None
    entropy = 0.0
    for count in counts.values():
        if count:
            p = count / total
            entropy -= p * math.log(p)
    return entropy


def source_counts(selected_ids: set[str], pool: Iterable[Sample]) -> tuple[dict[str, int], set[str]]:
    """Per-source counts of the selection plus the set of sources in the pool.

    Untagged samples fall into an explicit "(untagged)" bucket.
    """
    counts: dict[str, int] = {}
    pool_sources: set[str] = set()
    any_tag = False
    for sample in pool:
        tag = sample.source
        if tag is not None:
            any_tag = True
        pool_sources.add(tag if tag is not None else "(untagged)")
        if sample.id in selected_ids:
            key = tag if tag is not None else "(untagged)"
            counts[key] = counts.get(key, 0) + 1
    if not any_tag:
        return {}, set()
    return counts, pool_sources


def score_histogram(scores: Sequence[float], bins: int = HISTOGRAM_BINS) -> tuple[list[int], float, float]:
    """Fixed-bin histogram over the observed range; bounds are recorded so
    reports stay comparable across runs."""
    if len(scores) == 0:
        return [0] * bins, 0.0, 0.0
    arr = np.asarray(scores, dtype=np.float64)
    lo, hi = float(arr.min()), float(arr.max())
    counts, _ = np.histogram(arr, bins=bins, range=(lo, hi) if hi > lo else (lo, lo + 1.0))
    return [int(c) for c in counts], lo, hi


def decile_occupancy(selected_scores: Sequence[float], reference_scores: Sequence[float]) -> tuple[int, list[int]]:
    """How many score deciles of the reference distribution the selection hits.

    Decile edges come from the reference (the full scored candidate set);
    returns (number of occupied deciles, per-decile counts).
    """
    if len(reference_scores) == 0:
        raise DataError("empty reference score list")
    edges = np.quantile(np.asarray(reference_scores, dtype=np.float64),
                        [i / NUM_DECILES for i in range(1, NUM_DECILES)])
    counts = [0] * NUM_DECILES
    for score in selected_scores:
        decile = int(np.searchsorted(edges, score, side="right"))
        counts[decile] += 1
    return sum(1 for c in counts if c), counts


def exemplars(
    scored: Sequence[ScoredSample],
    samples_by_id: Mapping[str, Sample],
    n_top: int,
    n_bottom: int,
) -> tuple[list[tuple[ScoredSample, Sample]], list[tuple[ScoredSample, Sample]]]:
    """The n_top highest- and n_bottom lowest-scored samples with full text.

    Ties break by id. Requests larger than the scored list are truncated
    with a warning on stderr.
    """
    if not scored:
        raise DataError("cannot extract exemplars from an empty score list")
    if n_top + n_bottom > len(scored):
        print(
            f"warning: requested {n_top}+{n_bottom} exemplars from {len(scored)} samples; truncating",
            file=sys.stderr,
        )
        n_top = min(n_top, len(scored))
        n_bottom = min(n_bottom, len(scored) - n_top)
    ordered = sorted(scored, key=lambda s: (-s.score, s.id))

    def resolve(items: Sequence[ScoredSample]) -> list[tuple[ScoredSample, Sample]]:
        out = []
        for item in items:
            sample = samples_by_id.get(item.id)
            if sample is None:
                raise DataError(f"exemplar id {item.id!r} not found in the pool")
            out.append((item, sample))
        return out

    top = resolve(ordered[:n_top])
    bottom = resolve(list(reversed(ordered[len(ordered) - n_bottom :])) if n_bottom else [])
    return top, bottom


def render_exemplars_markdown(
    top: Sequence[tuple[ScoredSample, Sample]],
    bottom: Sequence[tuple[ScoredSample, Sample]],
) -> str:
    lines = ["# Selection exemplars", ""]

    def block(title: str, rows: Sequence[tuple[ScoredSample, Sample]]) -> None:
        lines.append(f"## {title}")
        lines.append("")
        for item, sample in rows:
            lines.append(f"### `{sample.id}` (score {item.score:.6g}, {item.num_tokens} tokens)")
            if sample.source:
                lines.append(f"*source: {sample.source}*")
            if sample.image:
                lines.append(f"*image: {sample.image}*")
            lines.append("")
            for turn in sample.conversations:
                lines.append(f"**{turn.role}:** {turn.value}")
                lines.append("")

    block("Highest scores", top)
    block("Lowest scores", bottom)
    return "\n".join(lines) + "\n"


def diversity_report(
    selected_ids: set[str],
    selected_scores: Sequence[float],
    pool: Iterable[Sample],
    per_group_drawn: Sequence[int],
) -> DiversityReport:
    counts, pool_sources = source_counts(selected_ids, pool)
    entropy = source_entropy(counts) if counts else None
    coverage = len(counts) / len(pool_sources) if pool_sources else None
    hist, lo, hi = score_histogram(selected_scores)
    return DiversityReport(
        per_source=dict(sorted(counts.items())),
        source_entropy=entropy,
        coverage=coverage,
        histogram_counts=hist,
        histogram_min=lo,
        histogram_max=hi,
        per_group_drawn=list(per_group_drawn),
    )


def selection_summary(pool_path: str | Path, run_dir: str | Path) -> dict:
    """Summary metrics for a finished run directory."""
    from .pipeline import load_manifest
    from .scoring import load_scores

    run_dir = Path(run_dir)
    manifest = load_manifest(run_dir)
    _, scored = load_scores(run_dir / "scores.jsonl")
    selected = set(manifest["selected_ids"])
    selected_scores = [s.score for s in scored if s.id in selected]
    all_scores = [s.score for s in scored]
    counts, _ = source_counts(selected, read_pool(pool_path))
    occupancy, _ = decile_occupancy(selected_scores, all_scores) if selected_scores else (0, [])
    return {
        "source_entropy": source_entropy(counts) if counts else None,
        "mean_score": float(np.mean(selected_scores)) if selected_scores else None,
        "median_score": float(np.median(selected_scores)) if selected_scores else None,
        "decile_occupancy": occupancy,
    }


# ---------------------------------------------------------------------------
# Strategy comparison


def compare_strategies(
    pool_path: str | Path,
    base_cfg: SelectionConfig,
    strategies: Sequence[str],
    workdir: str | Path,
    jobs: int = 1,
) -> list[dict]:
    """Run each strategy against a shared seed/score pass; one row each.

    A failing strategy contributes an error row and does not stop the rest.
    """
    import dataclasses as dc

    from .nbgs import select
    from .pipeline import (
        _candidate_scores,
        _load_seed_ids,
        run_scoring_stage,
        run_seed_stage,
        run_lock,
    )

    pool_path = Path(pool_path)
    workdir = Path(workdir)
    base_dir = workdir / "scoring"
    try:
        with run_lock(base_dir):
            run_seed_stage(pool_path, base_dir, base_cfg)
            run_scoring_stage(pool_path, base_dir, base_cfg, jobs=jobs)
            seed_ids = _load_seed_ids(base_dir)
            candidates = _candidate_scores(pool_path, base_dir, seed_ids)
    except (ValidationError, DataError) as exc:
        # The shared seed/score pass failed; every row inherits the error.
        return [{"strategy": s, "error": str(exc)} for s in strategies]

    all_scores = [s.score for s in candidates]
    rows: list[dict] = []
    for strategy in strategies:
        row: dict = {"strategy": strategy}
        try:
            cfg = dc.replace(base_cfg, strategy=strategy)
            result = select(candidates, cfg)
            selected = set(result.selected_ids)
            selected_scores = [s.score for s in candidates if s.id in selected]
            counts, _ = source_counts(selected, read_pool(pool_path))
            occupancy, per_decile = decile_occupancy(selected_scores, all_scores)
            row.update(
                source_entropy=source_entropy(counts) if counts else None,
                mean_score=float(np.mean(selected_scores)),
                median_score=float(np.median(selected_scores)),
                decile_occupancy=occupancy,
                per_decile=per_decile,
            )
        except (ValidationError, DataError) as exc:
            row["error"] = str(exc)
        rows.append(row)
    return rows


def write_csv(rows: Sequence[Mapping], path: str | Path) -> None:
    """RFC-4180 CSV with the union of row keys as the header."""
    fieldnames: list[str] = []
    for row in rows:
        for key in row:
            if key not in fieldnames:
                fieldnames.append(key)
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _csv_cell(v) for k, v in row.items()})


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return " ".join(str(v) for v in value)
    return str(value)
