"""Necessity scoring: response token log-likelihood under a pluggable scorer.

A scorer maps a sample to the ordered log-probabilities of its response
tokens; the necessity score reduces that list. The built-in scorer is a
byte-level n-gram model with add-one smoothing over 257 symbols (256 byte
values plus an end-of-response marker), trained on the seed subset. It is
deliberately tiny: universal, dependency-free, and deterministic, standing
in for a fine-tuned seed model at desk scale. External scorers interoperate
through the score-file format instead.
"""

from __future__ import annotations

import json
import math
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Iterable, Protocol, Sequence

from .core import DataError, Sample, ScoredSample, ValidationError

VOCAB_SIZE = 257
END_OF_RESPONSE = 256

_LOG_UNSEEN = -math.log(VOCAB_SIZE)


def necessity_score(
    token_logprobs: Sequence[float], orientation: str = "nll", length_norm: bool = False
) -> float:
    """Reduce per-token log-probs to a single score.

    nll is the total negative log-likelihood (higher = harder for the
    scorer); loglik is the raw log-likelihood sum. The two are exact
    negations of each other. length_norm divides by the token count.
    """
    if not token_logprobs:
        raise DataError("empty token log-prob list")
    for lp in token_logprobs:
        if lp != lp or lp == float("inf") or lp == float("-inf"):
            raise DataError(f"non-finite token log-prob: {lp!r}")
        if lp > 0.0:
            raise DataError(f"token log-prob above zero: {lp!r}")
    total = math.fsum(token_logprobs)
    score = -total if orientation == "nll" else total
    if orientation not in ("nll", "loglik"):
        raise ValidationError(f"unknown orientation {orientation!r}")
    if length_norm:
        score /= len(token_logprobs)
    return score


class Scorer(Protocol):
    def response_token_logprobs(self, sample: Sample) -> list[float]:
        """Ordered log p(token | everything before it) for each response token."""
        ...

    def descriptor(self) -> dict:
        """Provenance record for manifests."""
        ...


def sample_symbols(sample: Sample) -> tuple[list[int], list[bool]]:
    """Byte symbols of the whole conversation plus a per-symbol response mask.

    Turns are concatenated in order so every response token is conditioned
    on all preceding turns; each gpt turn is terminated by the
    end-of-response marker, which counts as a response token.
    """
    symbols: list[int] = []
    is_response: list[bool] = []
    for turn in sample.conversations:
        data = turn.value.encode("utf-8")
        scored = turn.role == "gpt"
        symbols.extend(data)
        is_response.extend([scored] * len(data))
        if scored:
            symbols.append(END_OF_RESPONSE)
            is_response.append(True)
    return symbols, is_response


class NgramScorer:
    """Order-n byte model with add-one smoothing; counts commute, so training
    is order-invariant. Conditionals sum to exactly 1 over the 257 symbols."""

    def __init__(self, order: int = 3):
        if order < 1:
            raise ValidationError(f"n-gram order must be >= 1, got {order}")
        self.order = order
        self.counts: dict[int, dict[int, int]] = {}
        self.totals: dict[int, int] = {}
        self.trained_samples = 0

    @staticmethod
    def _context_code(context: Sequence[int]) -> int:
        # Base-257 with a leading 1 so contexts of different lengths
        # (stream starts) never collide.
        code = 1
        for sym in context:
            code = code * VOCAB_SIZE + sym
        return code

    def observe(self, symbols: Iterable[int]) -> None:
        window: deque[int] = deque(maxlen=self.order - 1)
        counts = self.counts
        totals = self.totals
        for sym in symbols:
            code = self._context_code(window)
            by_sym = counts.get(code)
            if by_sym is None:
                counts[code] = by_sym = {}
            by_sym[sym] = by_sym.get(sym, 0) + 1
            totals[code] = totals.get(code, 0) + 1
            window.append(sym)

    def observe_sample(self, sample: Sample) -> None:
        symbols, _ = sample_symbols(sample)
        self.observe(symbols)
        self.trained_samples += 1

    def conditional_prob(self, context: Sequence[int], sym: int) -> float:
        window = context[-(self.order - 1):] if self.order > 1 else ()
        code = self._context_code(window)
        total = self.totals.get(code, 0)
        count = self.counts.get(code, {}).get(sym, 0) if total else 0
        return (count + 1) / (total + VOCAB_SIZE)

    def response_token_logprobs(self, sample: Sample) -> list[float]:
        symbols, is_response = sample_symbols(sample)
        if not any(is_response):
            raise DataError(f"sample {sample.id!r} has no gpt turn to score")
        logprobs: list[float] = []
        window: deque[int] = deque(maxlen=self.order - 1)
        totals = self.totals
        counts = self.counts
        for sym, scored in zip(symbols, is_response):
            if scored:
                code = self._context_code(window)
                total = totals.get(code, 0)
                if total:
                    count = counts[code].get(sym, 0)
                    logprobs.append(math.log((count + 1) / (total + VOCAB_SIZE)))
                else:
                    logprobs.append(_LOG_UNSEEN)
            window.append(sym)
        return logprobs

    def descriptor(self) -> dict:
        return {"kind": "ngram", "order": self.order, "trained_samples": self.trained_samples}


def train_ngram(seed_samples: Iterable[Sample], order: int = 3) -> NgramScorer:
    scorer = NgramScorer(order=order)
    for sample in seed_samples:
        scorer.observe_sample(sample)
    if scorer.trained_samples == 0:
        raise DataError("cannot train the built-in scorer on an empty seed set")
    return scorer


def score_sample(
    scorer: Scorer, sample: Sample, orientation: str = "nll", length_norm: bool = False
) -> ScoredSample:
    logprobs = scorer.response_token_logprobs(sample)
    score = necessity_score(logprobs, orientation=orientation, length_norm=length_norm)
    return ScoredSample(id=sample.id, score=score, num_tokens=len(logprobs))


def score_pool(
    scorer: Scorer,
    pool: Iterable[Sample],
    orientation: str = "nll",
    length_norm: bool = False,
    parallelism: int = 1,
) -> list[ScoredSample]:
    """Score every sample, preserving pool order; bit-identical at any
    parallelism degree because per-sample work is pure and results are
    reduced in input order."""

    def one(sample: Sample) -> ScoredSample:
        try:
            return score_sample(scorer, sample, orientation=orientation, length_norm=length_norm)
        except DataError:
            raise
        except Exception as exc:  # pragma: no cover - defensive
            raise DataError(f"scoring sample {sample.id!r} failed: {exc}") from exc

    if parallelism <= 1:
        return [one(sample) for sample in pool]
    with ThreadPoolExecutor(max_workers=parallelism) as pool_exec:
        return list(pool_exec.map(one, pool))


# ---------------------------------------------------------------------------
# Score files (JSONL: header row, then one row per id)


def write_scores(
    scored: Iterable[ScoredSample],
    path: str | Path,
    orientation: str,
    scorer_name: str,
    length_norm: bool,
) -> int:
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        header = {"orientation": orientation, "scorer": scorer_name, "length_norm": length_norm}
        handle.write(json.dumps(header, ensure_ascii=False, separators=(",", ":")))
        handle.write("\n")
        for item in scored:
            row = {"id": item.id, "score": item.score, "num_tokens": item.num_tokens}
            handle.write(json.dumps(row, ensure_ascii=False, separators=(",", ":")))
            handle.write("\n")
            count += 1
    return count


def load_scores(
    path: str | Path,
    expected_orientation: str | None = None,
    pool_ids: set[str] | None = None,
) -> tuple[dict, list[ScoredSample]]:
    """Load a score file, enforcing the header guard and id uniqueness.

    When pool_ids is given, every scored id must belong to the pool;
    orphans are reported explicitly rather than dropped.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"score file not found: {path}")
    scored: list[ScoredSample] = []
    seen: set[str] = set()
    orphans: list[str] = []
    with open(path, "r", encoding="utf-8") as handle:
        first = handle.readline()
        if not first.strip():
            raise DataError(f"{path}: empty score file (missing header row)")
        try:
            header = json.loads(first)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}:1: malformed header: {exc}") from exc
        if not isinstance(header, dict) or "orientation" not in header:
            raise DataError(f"{path}:1: first row must be a header with an orientation")
        if expected_orientation is not None and header["orientation"] != expected_orientation:
            raise DataError(
                f"{path}: score orientation {header['orientation']!r} does not match "
                f"configured {expected_orientation!r}; refusing to combine"
            )
        for lineno, line in enumerate(handle, start=2):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                item = ScoredSample(
                    id=row["id"], score=float(row["score"]), num_tokens=int(row["num_tokens"])
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DataError(f"{path}:{lineno}: malformed score row: {exc}") from exc
            if item.id in seen:
                raise DataError(f"{path}:{lineno}: duplicate id {item.id!r}")
            seen.add(item.id)
            if pool_ids is not None and item.id not in pool_ids:
                orphans.append(item.id)
            scored.append(item)
    if orphans:
        shown = ", ".join(repr(i) for i in orphans[:10])
        more = "" if len(orphans) <= 10 else f" (+{len(orphans) - 10} more)"
        raise DataError(f"{path}: {len(orphans)} scored ids absent from the pool: {shown}{more}")
    return header, scored
