"""Streaming pool ingestion, canonical re-emission, and synthetic fixtures.

Pools are JSONL in the conversation format: one record per line with keys
id, optional image, conversations ([{from, value}, ...]) and optional
source. The writer is canonical (fixed key order, compact separators) so
identical pools serialize to identical bytes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field as dataclass_field
from pathlib import Path
from typing import Iterable, Iterator

from .core import DataError, Sample, Turn, derive_stream, validate_sample

_ROLE_KEY = "from"


@dataclass
class PoolStats:
    total: int = 0
    per_source: dict[str, int] = dataclass_field(default_factory=dict)
    malformed: int = 0
    duplicate_ids: int = 0

    def as_dict(self) -> dict:
        return {
            "total": self.total,
            "per_source": dict(sorted(self.per_source.items())),
            "malformed": self.malformed,
            "duplicate_ids": self.duplicate_ids,
        }


def _record_to_sample(record: dict) -> Sample:
    if not isinstance(record, dict):
        raise DataError(f"record is not an object: {type(record).__name__}")
    sample_id = record.get("id")
    if not isinstance(sample_id, str):
        raise DataError("record has no string id")
    raw_turns = record.get("conversations")
    if not isinstance(raw_turns, list):
        raise DataError(f"sample {sample_id!r}: conversations missing or not a list")
    turns = []
    for raw in raw_turns:
        if not isinstance(raw, dict) or _ROLE_KEY not in raw or "value" not in raw:
            raise DataError(f"sample {sample_id!r}: malformed conversation turn")
        turns.append(Turn(role=str(raw[_ROLE_KEY]), value=str(raw["value"])))
    image = record.get("image")
    source = record.get("source")
    if image is not None and not isinstance(image, str):
        raise DataError(f"sample {sample_id!r}: image must be a string")
    if source is not None and not isinstance(source, str):
        raise DataError(f"sample {sample_id!r}: source must be a string")
    return validate_sample(Sample(id=sample_id, conversations=tuple(turns), image=image, source=source))


class PoolReader:
    """Single-pass reader over a JSONL pool; holds one record at a time.

    In strict mode the first malformed record or duplicate id aborts with
    its line number. In lenient mode malformed lines are counted and
    skipped and the first occurrence of a duplicated id wins. Stats are
    complete once iteration finishes. The duplicate check keeps the set of
    seen ids, nothing else, so memory stays far below pool size.
    """

    def __init__(self, path: str | Path, strict: bool = True):
        self.path = Path(path)
        self.strict = strict
        self.stats = PoolStats()
        if not self.path.exists():
            raise DataError(f"pool file not found: {self.path}")

    def __iter__(self) -> Iterator[Sample]:
        seen: set[str] = set()
        with open(self.path, "rb") as handle:
            for lineno, raw in enumerate(handle, start=1):
                try:
                    line = raw.decode("utf-8")
                except UnicodeDecodeError as exc:
                    self._reject(lineno, f"not valid UTF-8: {exc}")
                    continue
                try:
                    sample = _record_to_sample(json.loads(line))
                except (json.JSONDecodeError, DataError) as exc:
                    self._reject(lineno, str(exc))
                    continue
                if sample.id in seen:
                    if self.strict:
                        raise DataError(f"{self.path}:{lineno}: duplicate id {sample.id!r}")
                    self.stats.duplicate_ids += 1
                    continue
                seen.add(sample.id)
                self.stats.total += 1
                if sample.source is not None:
                    self.stats.per_source[sample.source] = (
                        self.stats.per_source.get(sample.source, 0) + 1
                    )
                yield sample

    def _reject(self, lineno: int, reason: str) -> None:
        if self.strict:
            raise DataError(f"{self.path}:{lineno}: {reason}")
        self.stats.malformed += 1


def read_pool(path: str | Path, strict: bool = True) -> PoolReader:
    return PoolReader(path, strict=strict)


def sample_to_record(sample: Sample) -> dict:
    record: dict = {"id": sample.id}
    if sample.image is not None:
        record["image"] = sample.image
    record["conversations"] = [
        {_ROLE_KEY: turn.role, "value": turn.value} for turn in sample.conversations
    ]
    if sample.source is not None:
        record["source"] = sample.source
    return record


def write_pool(samples: Iterable[Sample], path: str | Path) -> int:
    """Canonically serialize samples to JSONL; returns the record count."""
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for sample in samples:
            handle.write(json.dumps(sample_to_record(sample), ensure_ascii=False, separators=(",", ":")))
            handle.write("\n")
            count += 1
    return count


# ---------------------------------------------------------------------------
# Synthetic multi-source fixtures

_TOPICS = (
    "a street sign", "a kitchen table", "two dogs", "a bar chart", "an old map",
    "a train station", "a bookshelf", "a receipt", "a whiteboard", "a city park",
)

_TEMPLATES = (
    "What does {topic} show?",
    "Describe {topic} in detail.",
    "How many objects appear near {topic}?",
    "Read the text visible on {topic}.",
    "Is {topic} the main subject? Explain.",
)

_WORDS = (
    "the", "image", "shows", "a", "small", "large", "red", "blue", "green",
    "sign", "table", "chart", "with", "several", "items", "text", "reading",
    "near", "center", "left", "right", "background", "person", "standing",
    "number", "value", "label", "axis", "row", "column", "bright", "dark",
    "scene", "contains", "visible", "clearly", "partially", "behind", "above",
)

_SOURCE_JARGON = (
    "transcript", "ledger", "diagram", "waypoint", "annotation", "caption",
    "heatmap", "glyph", "margin", "footnote", "legend", "stanza",
)


def _pick(rng, seq):
    return seq[int(rng.random() * len(seq))]


def _fixture_sample(index: int, num_sources: int, rng) -> Sample:
    source_idx = index % num_sources
    source = f"src{source_idx}"
    topic = _pick(rng, _TOPICS)
    question = _pick(rng, _TEMPLATES).format(topic=topic)

    def response() -> str:
        # Length grows with the source index so necessity scores correlate
        # with source; jargon words give each source its own flavor.
        length = 4 + 6 * source_idx + int(rng.random() * 7)
        words = [_pick(rng, _WORDS) for _ in range(length)]
        if rng.random() < 0.5:
            words.insert(int(rng.random() * len(words)), _SOURCE_JARGON[source_idx % len(_SOURCE_JARGON)])
        return " ".join(words)

    turns = [Turn("human", question), Turn("gpt", response())]
    if index % 7 == 3:
        turns.append(Turn("human", _pick(rng, _TEMPLATES).format(topic=_pick(rng, _TOPICS))))
        turns.append(Turn("gpt", response()))
    image = f"images/{index:07d}.jpg" if index % 3 == 0 else None
    return Sample(id=f"smp{index:07d}", conversations=tuple(turns), image=image, source=source)


def make_fixture(path: str | Path, num_samples: int, num_sources: int, rng_seed: int) -> PoolStats:
    """Generate a deterministic synthetic pool with round-robin source tags."""
    if num_sources < 1:
        raise DataError(f"num_sources must be >= 1, got {num_sources}")
    rng = derive_stream(rng_seed, "fixture", 0)
    stats = PoolStats()

    def generate() -> Iterator[Sample]:
        for i in range(num_samples):
            sample = _fixture_sample(i, num_sources, rng)
            stats.total += 1
            stats.per_source[sample.source] = stats.per_source.get(sample.source, 0) + 1
            yield sample

    write_pool(generate(), path)
    return stats
