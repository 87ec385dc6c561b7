import math
from pathlib import Path

import pytest

from necsel.core import Sample, ScoredSample, Turn
from necsel.ingest import make_fixture, write_pool


def enumerate_successive_draws(probs: dict[str, float], quota: int) -> dict[frozenset, float]:
    """Exact outcome-set distribution of drawing without replacement:
    pick one item with its probability, remove it, renormalize, repeat.

    Oracle only: independent of the sampler implementations under test.
    """
    outcomes: dict[frozenset, float] = {}

    def recurse(remaining: dict[str, float], chosen: frozenset, mass: float) -> None:
        if len(chosen) == quota:
            outcomes[chosen] = outcomes.get(chosen, 0.0) + mass
            return
        total = sum(remaining.values())
        for item, p in remaining.items():
            rest = {k: v for k, v in remaining.items() if k != item}
            recurse(rest, chosen | {item}, mass * p / total)

    recurse(dict(probs), frozenset(), 1.0)
    return outcomes


def total_variation(empirical: dict[frozenset, float], exact: dict[frozenset, float]) -> float:
    keys = set(empirical) | set(exact)
    return 0.5 * sum(abs(empirical.get(k, 0.0) - exact.get(k, 0.0)) for k in keys)


def simple_sample(sample_id: str, question: str, answer: str, source: str | None = None) -> Sample:
    return Sample(
        id=sample_id,
        conversations=(Turn("human", question), Turn("gpt", answer)),
        source=source,
    )


def scored(sample_id: str, score: float, num_tokens: int = 1) -> ScoredSample:
    return ScoredSample(id=sample_id, score=score, num_tokens=num_tokens)


@pytest.fixture(scope="session")
def pool_1k(tmp_path_factory) -> Path:
    path = tmp_path_factory.mktemp("pools") / "pool1k.jsonl"
    make_fixture(path, 1000, 4, rng_seed=1)
    return path


@pytest.fixture(scope="session")
def pool_10k(tmp_path_factory) -> Path:
    path = tmp_path_factory.mktemp("pools") / "pool10k.jsonl"
    make_fixture(path, 10_000, 4, rng_seed=3)
    return path


def write_tiny_pool(path: Path, n: int = 6, sources: int = 2) -> list[Sample]:
    samples = [
        simple_sample(f"t{i:03d}", f"question {i}?", "answer " * (i + 1), source=f"src{i % sources}")
        for i in range(n)
    ]
    write_pool(samples, path)
    return samples


def assert_close(actual: float, expected: float, tol: float) -> None:
    assert math.isfinite(actual)
    assert abs(actual - expected) <= tol, f"{actual} != {expected} within {tol}"
