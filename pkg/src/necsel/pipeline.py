"""Two-stage selection pipeline: seed draw, scoring, grouped selection, merge.

A run owns an output directory with a fixed artifact layout (seed.ids,
scores.jsonl, selection.json, dataset.jsonl, manifest.json) plus a
state.json that records completed stages and artifact digests, making
interrupted runs resumable with byte-identical final outputs. Everything
is a pure function of (pool bytes, config), so reruns reproduce the same
dataset bytes and manifest hash.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import shutil
from contextlib import contextmanager
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterator

from . import __version__
from .core import (
    DataError,
    InternalError,
    Sample,
    ScoredSample,
    SelectionConfig,
    ValidationError,
    config_from_text,
    derive_stream,
    validate_config,
)
from .ingest import read_pool, write_pool
from .nbgs import SelectionResult, select
from .sampling import reservoir_sample
from .scoring import load_scores, score_pool, train_ngram, write_scores

SEED_STREAM_LABEL = "seed"
NGRAM_ORDER = 3
_SCORE_CHUNK = 2048

STAGES = ("seeded", "scored", "selected", "merged")

SEED_IDS = "seed.ids"
SCORES = "scores.jsonl"
SELECTION = "selection.json"
DATASET = "dataset.jsonl"
MANIFEST = "manifest.json"
STATE = "state.json"
LOCK = ".lock"


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def file_sha256(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for block in iter(lambda: handle.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


# ---------------------------------------------------------------------------
# Run state


@dataclasses.dataclass
class RunState:
    stage: str
    config_text: str
    pool_sha256: str
    artifacts: dict[str, str]
    scorer: dict | None = None

    def stage_index(self) -> int:
        return STAGES.index(self.stage)

    def as_dict(self) -> dict:
        return {
            "stage": self.stage,
            "config": self.config_text,
            "pool_sha256": self.pool_sha256,
            "artifacts": self.artifacts,
            "scorer": self.scorer,
        }


def load_state(out_dir: str | Path) -> RunState | None:
    path = Path(out_dir) / STATE
    if not path.exists():
        return None
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
        return RunState(
            stage=raw["stage"],
            config_text=raw["config"],
            pool_sha256=raw["pool_sha256"],
            artifacts=dict(raw["artifacts"]),
            scorer=raw.get("scorer"),
        )
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise DataError(f"corrupt run state {path}: {exc}") from exc


def save_state(out_dir: str | Path, state: RunState) -> None:
    path = Path(out_dir) / STATE
    tmp = path.with_suffix(".json.tmp")
    tmp.write_text(json.dumps(state.as_dict(), indent=2) + "\n", encoding="utf-8")
    os.replace(tmp, path)


def verify_artifacts(out_dir: str | Path, state: RunState) -> None:
    """Check recorded digests against the files on disk."""
    for name, expected in state.artifacts.items():
        path = Path(out_dir) / name
        if not path.exists():
            raise DataError(f"run artifact missing: {path}")
        actual = file_sha256(path)
        if actual != expected:
            raise DataError(
                f"run artifact hash mismatch for {path}: state has {expected}, file has "
                f"{actual} (stale or edited artifact; refusing to resume)"
            )


def _check_state_compatible(
    state: RunState, cfg: SelectionConfig, pool_sha: str, explicit: dict | None = None
) -> None:
    stored = config_from_text(state.config_text)
    if explicit is not None:
        mismatched = {
            key: (getattr(stored, key), value)
            for key, value in explicit.items()
            if value is not None and getattr(stored, key) != value
        }
        if mismatched:
            parts = ", ".join(f"{k}: run has {a!r}, got {b!r}" for k, (a, b) in mismatched.items())
            raise ValidationError(f"config differs from the in-progress run ({parts})")
    elif stored != cfg:
        raise ValidationError("config differs from the in-progress run")
    if state.pool_sha256 != pool_sha:
        raise DataError(
            f"pool content hash {pool_sha} does not match the in-progress run "
            f"({state.pool_sha256}); the pool file changed"
        )


@contextmanager
def run_lock(out_dir: str | Path) -> Iterator[None]:
    """Exclusive ownership of an output directory for the duration of a command."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lock_path = out_dir / LOCK
    try:
        fd = os.open(lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise DataError(
            f"output directory is locked by another run: {lock_path} "
            "(delete the lock file if that run is dead)"
        ) from None
    try:
        os.write(fd, str(os.getpid()).encode("ascii"))
        os.close(fd)
        yield
    finally:
        try:
            os.unlink(lock_path)
        except FileNotFoundError:
            pass


# ---------------------------------------------------------------------------
# Stages


def _pool_size(pool_path: Path) -> int:
    reader = read_pool(pool_path, strict=True)
    count = 0
    for _ in reader:
        count += 1
    return count


def run_seed_stage(pool_path: str | Path, out_dir: str | Path, cfg: SelectionConfig) -> list[str]:
    """Draw the uniform seed subset and persist its ids."""
    pool_path = Path(pool_path)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    pool_sha = file_sha256(pool_path)

    existing = load_state(out_dir)
    if existing is not None:
        _check_state_compatible(existing, cfg, pool_sha)

    total = _pool_size(pool_path)
    validate_config(cfg, total)
    if cfg.n1 == 0:
        seed_ids: list[str] = []
    else:
        stream = derive_stream(cfg.rng_seed, SEED_STREAM_LABEL, 0)
        seed_ids = reservoir_sample((s.id for s in read_pool(pool_path)), cfg.n1, stream)

    seed_path = out_dir / SEED_IDS
    seed_path.write_text("".join(f"{i}\n" for i in seed_ids), encoding="utf-8")
    state = RunState(
        stage="seeded",
        config_text=cfg.to_text(),
        pool_sha256=pool_sha,
        artifacts={SEED_IDS: file_sha256(seed_path)},
    )
    save_state(out_dir, state)
    return seed_ids


def _load_seed_ids(out_dir: Path) -> set[str]:
    text = (out_dir / SEED_IDS).read_text(encoding="utf-8")
    return {line for line in text.splitlines() if line}


def _require_stage(out_dir: Path, cfg: SelectionConfig, pool_sha: str, minimum: str) -> RunState:
    state = load_state(out_dir)
    if state is None:
        raise DataError(f"no run state in {out_dir}; run the seed stage first")
    _check_state_compatible(state, cfg, pool_sha)
    if state.stage_index() < STAGES.index(minimum):
        raise DataError(
            f"run in {out_dir} is at stage {state.stage!r}, need {minimum!r} first"
        )
    verify_artifacts(out_dir, state)
    return state


def run_scoring_stage(
    pool_path: str | Path,
    out_dir: str | Path,
    cfg: SelectionConfig,
    jobs: int = 1,
    external_scores: str | Path | None = None,
) -> Path:
    """Score every candidate (pool minus seed), writing scores.jsonl.

    With an external score file, the file is validated against the pool and
    copied verbatim; otherwise the built-in n-gram scorer is trained on the
    seed subset only and applied to candidates in pool order.
    """
    pool_path = Path(pool_path)
    out_dir = Path(out_dir)
    pool_sha = file_sha256(pool_path)
    state = _require_stage(out_dir, cfg, pool_sha, "seeded")
    seed_ids = _load_seed_ids(out_dir)
    scores_path = out_dir / SCORES

    if external_scores is not None:
        external_scores = Path(external_scores)
        pool_ids = {s.id for s in read_pool(pool_path)}
        _, scored = load_scores(external_scores, expected_orientation=cfg.orientation, pool_ids=pool_ids)
        covered = {s.id for s in scored}
        missing = sorted(pool_ids - seed_ids - covered)
        if missing:
            shown = ", ".join(repr(i) for i in missing[:10])
            more = "" if len(missing) <= 10 else f" (+{len(missing) - 10} more)"
            raise DataError(
                f"external score file misses {len(missing)} candidate ids: {shown}{more}"
            )
        shutil.copyfile(external_scores, scores_path)
        scorer_desc = {"kind": "external", "score_file_sha256": file_sha256(external_scores)}
    else:
        if not seed_ids:
            raise ValidationError(
                "n1 = 0 leaves nothing to train the built-in scorer on; provide --scores"
            )
        seed_samples = [s for s in read_pool(pool_path) if s.id in seed_ids]
        scorer = train_ngram(seed_samples, order=NGRAM_ORDER)
        scorer_desc = scorer.descriptor()
        with open(scores_path, "w", encoding="utf-8", newline="\n") as handle:
            header = {
                "orientation": cfg.orientation,
                "scorer": f"ngram-{NGRAM_ORDER}",
                "length_norm": cfg.length_norm,
            }
            handle.write(json.dumps(header, ensure_ascii=False, separators=(",", ":")) + "\n")
            chunk: list[Sample] = []

            def flush() -> None:
                for item in score_pool(
                    scorer, chunk, cfg.orientation, cfg.length_norm, parallelism=jobs
                ):
                    row = {"id": item.id, "score": item.score, "num_tokens": item.num_tokens}
                    handle.write(json.dumps(row, ensure_ascii=False, separators=(",", ":")) + "\n")
                chunk.clear()

            for sample in read_pool(pool_path):
                if sample.id in seed_ids:
                    continue
                chunk.append(sample)
                if len(chunk) >= _SCORE_CHUNK:
                    flush()
            flush()

    state.stage = "scored"
    state.scorer = scorer_desc
    state.artifacts[SCORES] = file_sha256(scores_path)
    save_state(out_dir, state)
    return scores_path


def _candidate_scores(pool_path: Path, out_dir: Path, seed_ids: set[str]) -> list[ScoredSample]:
    """Scored candidates in pool order."""
    _, scored = load_scores(out_dir / SCORES)
    by_id = {s.id: s for s in scored}
    ordered: list[ScoredSample] = []
    for sample in read_pool(pool_path):
        if sample.id in seed_ids:
            continue
        item = by_id.get(sample.id)
        if item is None:
            raise DataError(f"candidate {sample.id!r} has no score in {out_dir / SCORES}")
        ordered.append(item)
    return ordered


def run_selection_stage(
    pool_path: str | Path, out_dir: str | Path, cfg: SelectionConfig
) -> SelectionResult:
    """Apply the strategy to scored candidates, then merge and emit the dataset."""
    pool_path = Path(pool_path)
    out_dir = Path(out_dir)
    pool_sha = file_sha256(pool_path)
    state = _require_stage(out_dir, cfg, pool_sha, "scored")
    seed_ids = _load_seed_ids(out_dir)

    candidates = _candidate_scores(pool_path, out_dir, seed_ids)
    result = select(candidates, cfg)

    selection_path = out_dir / SELECTION
    selection_path.write_text(canonical_json(result.as_dict()) + "\n", encoding="utf-8")
    state.stage = "selected"
    state.artifacts[SELECTION] = file_sha256(selection_path)
    save_state(out_dir, state)

    merge_and_emit(pool_path, out_dir, cfg, seed_ids, result, state)
    return result


def merge_and_emit(
    pool_path: Path,
    out_dir: Path,
    cfg: SelectionConfig,
    seed_ids: set[str],
    result: SelectionResult,
    state: RunState,
) -> dict:
    """Write the merged dataset (ascending id order) and the manifest."""
    selected = set(result.selected_ids)
    overlap = seed_ids & selected
    if overlap:
        raise InternalError(
            f"seed and selected sets overlap ({len(overlap)} ids, e.g. {sorted(overlap)[:3]}); "
            "this is a pipeline bug"
        )
    wanted = seed_ids | selected
    records = [s for s in read_pool(pool_path) if s.id in wanted]
    if len(records) != cfg.n1 + cfg.n2:
        raise InternalError(
            f"merged dataset has {len(records)} records, expected n1 + n2 = {cfg.n1 + cfg.n2}"
        )
    records.sort(key=lambda s: s.id)
    dataset_path = out_dir / DATASET
    write_pool(records, dataset_path)

    manifest = {
        "config": dataclasses.asdict(cfg),
        "pool_sha256": state.pool_sha256,
        "seed_ids": sorted(seed_ids),
        "selected_ids": list(result.selected_ids),
        "per_group": [
            {"group": g.index, "quota": g.quota, "drawn": list(g.drawn)} for g in result.per_group
        ],
        "scorer": state.scorer,
        "tool_version": __version__,
        "created_at": datetime.now(timezone.utc).isoformat(),
    }
    manifest["manifest_sha256"] = manifest_hash(manifest)
    manifest_path = out_dir / MANIFEST
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    state.stage = "merged"
    state.artifacts[DATASET] = file_sha256(dataset_path)
    state.artifacts[MANIFEST] = file_sha256(manifest_path)
    save_state(out_dir, state)
    return manifest


def manifest_hash(manifest: dict) -> str:
    """Digest of the canonical manifest serialization, minus the hash itself
    and the timestamp."""
    hashable = {k: v for k, v in manifest.items() if k not in ("manifest_sha256", "created_at")}
    return sha256_text(canonical_json(hashable))


def load_manifest(out_dir: str | Path) -> dict:
    path = Path(out_dir) / MANIFEST
    if not path.exists():
        raise DataError(f"manifest not found: {path}")
    manifest = json.loads(path.read_text(encoding="utf-8"))
    expected = manifest_hash(manifest)
    if manifest.get("manifest_sha256") != expected:
        raise DataError(f"manifest hash mismatch in {path}: stored "
                        f"{manifest.get('manifest_sha256')}, recomputed {expected}")
    return manifest


# ---------------------------------------------------------------------------
# Whole runs


def run_pipeline(
    pool_path: str | Path,
    out_dir: str | Path,
    cfg: SelectionConfig,
    jobs: int = 1,
    external_scores: str | Path | None = None,
) -> dict:
    """Seed, score, select, and merge in one go; returns the manifest."""
    run_seed_stage(pool_path, out_dir, cfg)
    run_scoring_stage(pool_path, out_dir, cfg, jobs=jobs, external_scores=external_scores)
    run_selection_stage(pool_path, out_dir, cfg)
    return load_manifest(out_dir)


def resume_run(
    pool_path: str | Path,
    out_dir: str | Path,
    explicit_overrides: dict | None = None,
    jobs: int = 1,
    external_scores: str | Path | None = None,
) -> dict:
    """Continue an interrupted run from its last completed stage.

    Persisted artifacts must pass their recorded hash checks, the pool must
    be byte-identical, and any explicitly supplied config value must match
    the in-progress run. The final outputs equal an uninterrupted run's.
    """
    pool_path = Path(pool_path)
    out_dir = Path(out_dir)
    state = load_state(out_dir)
    if state is None:
        raise DataError(f"nothing to resume in {out_dir}: no run state found")
    pool_sha = file_sha256(pool_path)
    cfg = config_from_text(state.config_text)
    _check_state_compatible(state, cfg, pool_sha, explicit=explicit_overrides or {})
    verify_artifacts(out_dir, state)

    if state.stage_index() < STAGES.index("scored"):
        run_scoring_stage(pool_path, out_dir, cfg, jobs=jobs, external_scores=external_scores)
        state = load_state(out_dir)
    if state is None or state.stage_index() < STAGES.index("merged"):
        run_selection_stage(pool_path, out_dir, cfg)
    return load_manifest(out_dir)


# ---------------------------------------------------------------------------
# Config grids (ablation sweeps)


def expand_grid(text: str) -> list[dict]:
    """Expand a grid file (config keys, comma-separated values) into the
    cartesian product of override dicts, in deterministic order."""
    from itertools import product

    from .core import _CONFIG_FIELDS, _parse_config_value

    axes: dict[str, list] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValidationError(f"grid line {lineno}: expected `key = v1, v2, ...`")
        key, _, values = (part.strip() for part in line.partition("="))
        if key not in _CONFIG_FIELDS:
            raise ValidationError(f"grid line {lineno}: unknown config key {key!r}")
        if key in axes:
            raise ValidationError(f"grid line {lineno}: duplicate key {key!r}")
        axes[key] = [_parse_config_value(key, v.strip()) for v in values.split(",")]
    ordered_keys = [k for k in _CONFIG_FIELDS if k in axes]
    combos = []
    for values in product(*(axes[k] for k in ordered_keys)):
        combos.append(dict(zip(ordered_keys, values)))
    return combos


def run_sweep(
    pool_path: str | Path,
    out_root: str | Path,
    base_cfg: SelectionConfig,
    grid_text: str,
    jobs: int = 1,
) -> list[dict]:
    """Run the pipeline once per grid point; collect one summary row each.

    Failing grid points are recorded with their error and do not stop the
    sweep.
    """
    from .core import merge_config
    from .report import selection_summary

    out_root = Path(out_root)
    rows: list[dict] = []
    for i, overrides in enumerate(expand_grid(grid_text)):
        run_dir = out_root / f"run-{i:03d}"
        row: dict = {"run": run_dir.name, **overrides}
        try:
            cfg = merge_config(base_cfg, overrides)
            with run_lock(run_dir):
                manifest = run_pipeline(pool_path, run_dir, cfg, jobs=jobs)
            row.update(selection_summary(pool_path, run_dir))
            row["dataset_records"] = len(manifest["seed_ids"]) + len(manifest["selected_ids"])
            row["manifest_sha256"] = manifest["manifest_sha256"]
        except (ValidationError, DataError) as exc:
            row["error"] = str(exc)
        rows.append(row)
    return rows
