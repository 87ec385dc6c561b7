"""Domain types, configuration, and deterministic RNG-stream derivation.

Everything here is an immutable value; stream derivation is pure, so any
module may derive the same stream from the same (master_seed, label, index)
triple and get identical draws regardless of process, thread, or call order.
The exact mixing function is pinned in FORMATS.md.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field, fields, replace

STRATEGIES = ("nbgs", "random", "top", "bottom")
ORIENTATIONS = ("nll", "loglik")

_U64 = 0xFFFFFFFFFFFFFFFF


class NecselError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(NecselError):
    """Invalid configuration or invalid argument combination."""


class DataError(NecselError):
    """Bad input data: missing files, malformed records, mismatched artifacts."""


class InternalError(NecselError):
    """Broken internal invariant; indicates a bug, never a user error."""


# ---------------------------------------------------------------------------
# Samples


@dataclass(frozen=True)
class Turn:
    role: str  # "human" or "gpt"
    value: str


@dataclass(frozen=True)
class Sample:
    """One instruction-tuning record.

    The image field is an opaque path/URI; nothing here decodes it. The
    source tag names the originating dataset for diversity reporting.
    """

    id: str
    conversations: tuple[Turn, ...]
    image: str | None = None
    source: str | None = None


def validate_sample(sample: Sample) -> Sample:
    """Check the per-record invariants, raising DataError with the reason."""
    if not sample.id:
        raise DataError("sample has an empty id")
    if not sample.conversations:
        raise DataError(f"sample {sample.id!r}: conversations is empty")
    for i, turn in enumerate(sample.conversations):
        if turn.role not in ("human", "gpt"):
            raise DataError(f"sample {sample.id!r}: turn {i} has unknown role {turn.role!r}")
        expected = "human" if i % 2 == 0 else "gpt"
        if turn.role != expected:
            raise DataError(
                f"sample {sample.id!r}: turn {i} is {turn.role!r}, expected {expected!r}"
                " (turns must alternate starting with a human turn)"
            )
        if turn.role == "gpt" and not turn.value:
            raise DataError(f"sample {sample.id!r}: turn {i} has an empty gpt value")
    return sample


@dataclass(frozen=True)
class ScoredSample:
    id: str
    score: float
    num_tokens: int

    def __post_init__(self) -> None:
        if self.score != self.score or self.score in (float("inf"), float("-inf")):
            raise DataError(f"score for {self.id!r} is not finite: {self.score!r}")
        if self.num_tokens < 1:
            raise DataError(f"num_tokens for {self.id!r} must be >= 1, got {self.num_tokens}")


# ---------------------------------------------------------------------------
# Configuration

_CONFIG_FIELDS = ("n1", "n2", "k", "tau", "strategy", "orientation", "rng_seed", "length_norm")


@dataclass(frozen=True)
class SelectionConfig:
    """Full configuration of a selection run.

    n1 is the seed-sample count, n2 the necessity-sample count, k the group
    size, tau the in-group softmax temperature. Defaults follow the standard
    allocation (100k seed + 565k necessity, k = 50k, tau = 1).
    """

    n1: int = 100_000
    n2: int = 565_000
    k: int = 50_000
    tau: float = 1.0
    strategy: str = "nbgs"
    orientation: str = "nll"
    rng_seed: int = 0
    length_norm: bool = False

    def to_text(self) -> str:
        """Canonical flat key/value serialization; round-trips bit-exactly."""
        lines = []
        for name in _CONFIG_FIELDS:
            value = getattr(self, name)
            if isinstance(value, bool):
                text = "true" if value else "false"
            elif isinstance(value, float):
                text = repr(value)
            else:
                text = str(value)
            lines.append(f"{name} = {text}\n")
        return "".join(lines)


def config_from_text(text: str) -> SelectionConfig:
    """Parse the flat `key = value` config format (see FORMATS.md)."""
    values: dict[str, object] = {}
    types = {f.name: f.type for f in fields(SelectionConfig)}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValidationError(f"config line {lineno}: expected `key = value`, got {raw!r}")
        key, _, value = (part.strip() for part in line.partition("="))
        if key not in types:
            raise ValidationError(f"config line {lineno}: unknown key {key!r}")
        if key in values:
            raise ValidationError(f"config line {lineno}: duplicate key {key!r}")
        values[key] = _parse_config_value(key, value)
    return SelectionConfig(**values)  # type: ignore[arg-type]


def _parse_config_value(key: str, value: str) -> object:
    try:
        if key in ("n1", "n2", "k", "rng_seed"):
            return int(value)
        if key == "tau":
            return float(value)
        if key == "length_norm":
            if value not in ("true", "false"):
                raise ValueError(value)
            return value == "true"
        return value
    except ValueError:
        raise ValidationError(f"config key {key!r}: cannot parse value {value!r}") from None


def validate_config(cfg: SelectionConfig, pool_size: int) -> SelectionConfig:
    """Check config invariants against the pool; return cfg unchanged if ok.

    Each failure is reported as a distinct, named error so callers (and
    users) can tell allocation problems from parameter problems.
    """
    if cfg.n1 < 0:
        raise ValidationError(f"negative seed size: n1 = {cfg.n1}")
    if cfg.n2 < 0:
        raise ValidationError(f"negative selection size: n2 = {cfg.n2}")
    if cfg.k < 1:
        raise ValidationError(f"zero group size: k must be >= 1, got {cfg.k}")
    if not (cfg.tau > 0):
        raise ValidationError(f"nonpositive temperature: tau must be > 0, got {cfg.tau}")
    if cfg.strategy not in STRATEGIES:
        raise ValidationError(f"unknown strategy {cfg.strategy!r}; expected one of {STRATEGIES}")
    if cfg.orientation not in ORIENTATIONS:
        raise ValidationError(
            f"unknown orientation {cfg.orientation!r}; expected one of {ORIENTATIONS}"
        )
    if not (0 <= cfg.rng_seed <= _U64):
        raise ValidationError(f"rng_seed out of 64-bit range: {cfg.rng_seed}")
    if cfg.n1 + cfg.n2 > pool_size:
        raise ValidationError(
            f"allocation exceeds pool: n1 + n2 = {cfg.n1 + cfg.n2} > pool size {pool_size}"
        )
    return cfg


def merge_config(base: SelectionConfig, overrides: dict[str, object]) -> SelectionConfig:
    """Apply non-None overrides (e.g. CLI flags) on top of a base config."""
    updates = {k: v for k, v in overrides.items() if v is not None}
    unknown = set(updates) - set(_CONFIG_FIELDS)
    if unknown:
        raise ValidationError(f"unknown config fields: {sorted(unknown)}")
    return replace(base, **updates)  # type: ignore[arg-type]


# ---------------------------------------------------------------------------
# Deterministic RNG streams


def _splitmix64(z: int) -> int:
    z = (z + 0x9E3779B97F4A7C15) & _U64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _U64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _U64
    return z ^ (z >> 31)


def _fnv1a64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for b in data:
        h ^= b
        h = (h * 0x100000001B3) & _U64
    return h


@dataclass(frozen=True)
class RngStream:
    """A reproducible random stream derived from (master_seed, label, index).

    Equal derivation triples produce identical draw sequences on every host
    and thread schedule. All library sampling draws exclusively through
    random(), whose output for an integer seed is stable across Python
    versions; the derivation mixer is pinned in FORMATS.md.
    """

    master_seed: int
    label: str
    index: int
    _rng: random.Random = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        state = _splitmix64(self.master_seed & _U64)
        state = _splitmix64(state ^ _fnv1a64(self.label.encode("utf-8")))
        state = _splitmix64(state ^ (self.index & _U64))
        object.__setattr__(self, "_rng", random.Random(state))

    def random(self) -> float:
        """Next uniform draw in [0, 1)."""
        return self._rng.random()

    def draws(self, n: int) -> list[float]:
        return [self._rng.random() for _ in range(n)]


def derive_stream(master_seed: int, label: str, index: int) -> RngStream:
    """Derive the stream for (master_seed, label, index); pure and order-free."""
    return RngStream(master_seed, label, index)
