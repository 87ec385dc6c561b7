"""Necessity-based instruction-tuning data selection toolkit."""

__version__ = "0.1.0"

from .core import (  # noqa: F401
    DataError,
    InternalError,
    NecselError,
    RngStream,
    Sample,
    ScoredSample,
    SelectionConfig,
    Turn,
    ValidationError,
    derive_stream,
    validate_config,
)
from .nbgs import Group, SelectionResult, build_groups, select  # noqa: F401
from .scoring import NgramScorer, Scorer, necessity_score, score_pool, train_ngram  # noqa: F401
