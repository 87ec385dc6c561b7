"""Command-line surface for the selection toolkit.

Exit codes: 0 success, 1 usage error, 2 validation error, 3 data error,
4 internal invariant violation. Diagnostics go to stderr; machine-readable
results go to stdout. Every command that takes a selection config prints
the effective config before acting.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__
from .core import (
    _CONFIG_FIELDS,
    ORIENTATIONS,
    STRATEGIES,
    DataError,
    InternalError,
    NecselError,
    SelectionConfig,
    ValidationError,
    config_from_text,
    merge_config,
)
from .ingest import make_fixture, read_pool, write_pool
from .pipeline import (
    load_manifest,
    load_state,
    resume_run,
    run_lock,
    run_pipeline,
    run_scoring_stage,
    run_seed_stage,
    run_selection_stage,
    run_sweep,
    sha256_text,
)
from .report import (
    compare_strategies,
    diversity_report,
    exemplars,
    render_exemplars_markdown,
    write_csv,
)
from .scoring import load_scores

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_DATA = 3
EXIT_INTERNAL = 4

OUTPUT_ROOT_ENV = "NECSEL_OUT_ROOT"


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # noqa: D401 - argparse hook
        raise _UsageError(f"{self.prog}: {message}")


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("selection config")
    group.add_argument("--config", metavar="FILE", help="flat key = value config file; flags override it")
    group.add_argument("--seed-size", dest="n1", type=int, metavar="N1", help="seed sample count")
    group.add_argument("--select-size", dest="n2", type=int, metavar="N2", help="necessity sample count")
    group.add_argument("--group-size", dest="k", type=int, metavar="K", help="rank group size")
    group.add_argument("--temperature", dest="tau", type=float, metavar="TAU", help="in-group softmax temperature")
    group.add_argument("--strategy", choices=STRATEGIES, help="selection strategy")
    group.add_argument("--orientation", choices=ORIENTATIONS, help="score orientation")
    group.add_argument("--rng-seed", dest="rng_seed", type=int, metavar="SEED", help="master RNG seed")
    group.add_argument(
        "--length-norm",
        dest="length_norm",
        action=argparse.BooleanOptionalAction,
        default=None,
        help="per-token mean instead of summed score",
    )


def _explicit_overrides(args: argparse.Namespace) -> dict:
    return {name: getattr(args, name, None) for name in _CONFIG_FIELDS}


def _resolve_config(args: argparse.Namespace) -> SelectionConfig:
    cfg = SelectionConfig()
    config_path = getattr(args, "config", None)
    if config_path:
        path = Path(config_path)
        if not path.exists():
            raise DataError(f"config file not found: {path}")
        cfg = config_from_text(path.read_text(encoding="utf-8"))
    return merge_config(cfg, _explicit_overrides(args))


def _announce(cfg: SelectionConfig) -> None:
    print("effective config:", file=sys.stderr)
    for line in cfg.to_text().splitlines():
        print(f"  {line}", file=sys.stderr)


def _resolve_out(args: argparse.Namespace, cfg: SelectionConfig) -> Path:
    if getattr(args, "out", None):
        return Path(args.out)
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root:
        return Path(root) / f"run-{sha256_text(cfg.to_text())[:12]}"
    raise _UsageError(f"--out is required when {OUTPUT_ROOT_ENV} is unset")


def _emit(payload: dict) -> None:
    print(json.dumps(payload, indent=2, sort_keys=True))


# ---------------------------------------------------------------------------
# Command handlers


def cmd_fixture(args: argparse.Namespace) -> int:
    stats = make_fixture(args.out, args.num_samples, args.num_sources, args.rng_seed)
    _emit({"pool": str(args.out), **stats.as_dict()})
    return EXIT_OK


def cmd_ingest(args: argparse.Namespace) -> int:
    reader = read_pool(args.pool, strict=not args.lenient)
    if args.out:
        written = write_pool(iter(reader), args.out)
        print(f"wrote {written} records to {args.out}", file=sys.stderr)
    else:
        for _ in reader:
            pass
    _emit(reader.stats.as_dict())
    return EXIT_OK


def cmd_seed(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    _announce(cfg)
    out = _resolve_out(args, cfg)
    with run_lock(out):
        seed_ids = run_seed_stage(args.pool, out, cfg)
    _emit({"out": str(out), "seed_count": len(seed_ids)})
    return EXIT_OK


def cmd_score(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    _announce(cfg)
    out = _resolve_out(args, cfg)
    with run_lock(out):
        scores_path = run_scoring_stage(
            args.pool, out, cfg, jobs=args.jobs, external_scores=args.scores
        )
    _emit({"out": str(out), "scores": str(scores_path)})
    return EXIT_OK


def cmd_select(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    _announce(cfg)
    out = _resolve_out(args, cfg)
    with run_lock(out):
        if args.scores:
            run_scoring_stage(args.pool, out, cfg, external_scores=args.scores)
        result = run_selection_stage(args.pool, out, cfg)
    manifest = load_manifest(out)
    _emit(
        {
            "out": str(out),
            "selected": len(result.selected_ids),
            "dataset_records": len(manifest["seed_ids"]) + len(manifest["selected_ids"]),
            "manifest_sha256": manifest["manifest_sha256"],
        }
    )
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    _announce(cfg)
    out = _resolve_out(args, cfg)
    with run_lock(out):
        manifest = run_pipeline(args.pool, out, cfg, jobs=args.jobs, external_scores=args.scores)
    _emit(
        {
            "out": str(out),
            "dataset_records": len(manifest["seed_ids"]) + len(manifest["selected_ids"]),
            "manifest_sha256": manifest["manifest_sha256"],
        }
    )
    return EXIT_OK


def cmd_resume(args: argparse.Namespace) -> int:
    out = Path(args.out)
    state = load_state(out)
    if state is not None:
        _announce(config_from_text(state.config_text))
    with run_lock(out):
        manifest = resume_run(
            args.pool,
            out,
            explicit_overrides=_explicit_overrides(args),
            jobs=args.jobs,
            external_scores=args.scores,
        )
    _emit(
        {
            "out": str(out),
            "dataset_records": len(manifest["seed_ids"]) + len(manifest["selected_ids"]),
            "manifest_sha256": manifest["manifest_sha256"],
        }
    )
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    out = Path(args.out)
    manifest = load_manifest(out)
    _, scored = load_scores(out / "scores.jsonl")
    selected = set(manifest["selected_ids"])
    selected_scores = [s.score for s in scored if s.id in selected]
    per_group_drawn = [len(g["drawn"]) for g in manifest["per_group"]]
    report = diversity_report(selected, selected_scores, read_pool(args.pool), per_group_drawn)

    selected_scored = [s for s in scored if s.id in selected]
    if selected_scored:
        ranked = sorted(selected_scored, key=lambda s: (-s.score, s.id))
        want = {s.id for s in ranked[: args.top]}
        if args.bottom:
            want |= {s.id for s in ranked[-min(args.bottom, len(ranked)) :]}
        samples_by_id = {s.id: s for s in read_pool(args.pool) if s.id in want}
        top, bottom = exemplars(selected_scored, samples_by_id, args.top, args.bottom)
    else:
        top, bottom = [], []

    payload = report.as_dict()
    report_path = out / "report.json"
    report_path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    exemplar_path = out / "exemplars.md"
    exemplar_path.write_text(render_exemplars_markdown(top, bottom), encoding="utf-8")
    print(f"wrote {report_path} and {exemplar_path}", file=sys.stderr)
    _emit(payload)
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    _announce(cfg)
    strategies = [s.strip() for s in args.strategies.split(",") if s.strip()]
    unknown = [s for s in strategies if s not in STRATEGIES]
    if unknown:
        raise ValidationError(f"unknown strategies: {unknown}; expected from {STRATEGIES}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = compare_strategies(args.pool, cfg, strategies, workdir=out, jobs=args.jobs)
    (out / "comparison.json").write_text(json.dumps(rows, indent=2) + "\n", encoding="utf-8")
    write_csv(rows, out / "comparison.csv")
    print(f"wrote {out / 'comparison.json'} and {out / 'comparison.csv'}", file=sys.stderr)
    print(json.dumps(rows, indent=2))
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    _announce(cfg)
    grid_path = Path(args.grid)
    if not grid_path.exists():
        raise DataError(f"grid file not found: {grid_path}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = run_sweep(args.pool, out, cfg, grid_path.read_text(encoding="utf-8"), jobs=args.jobs)
    (out / "sweep.json").write_text(json.dumps(rows, indent=2) + "\n", encoding="utf-8")
    write_csv(rows, out / "sweep.csv")
    print(f"wrote {out / 'sweep.json'} and {out / 'sweep.csv'}", file=sys.stderr)
    print(json.dumps(rows, indent=2))
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="necsel", description="Necessity-based instruction data selection.")
    parser.add_argument("--version", action="version", version=f"necsel {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("fixture", help="generate a deterministic synthetic pool")
    p.add_argument("--out", required=True, metavar="FILE")
    p.add_argument("--num-samples", type=int, required=True)
    p.add_argument("--num-sources", type=int, default=4)
    p.add_argument("--rng-seed", dest="rng_seed", type=int, default=0)
    p.set_defaults(handler=cmd_fixture)

    p = sub.add_parser("ingest", help="validate, deduplicate, and canonically re-emit a pool")
    p.add_argument("--pool", required=True, metavar="FILE")
    p.add_argument("--out", metavar="FILE", help="write the cleaned pool here")
    p.add_argument("--lenient", action="store_true", help="skip malformed records instead of aborting")
    p.set_defaults(handler=cmd_ingest)

    p = sub.add_parser("seed", help="draw the uniform seed subset and persist its ids")
    p.add_argument("--pool", required=True, metavar="FILE")
    p.add_argument("--out", metavar="DIR")
    _add_config_flags(p)
    p.set_defaults(handler=cmd_seed)

    p = sub.add_parser("score", help="score all candidates with the built-in or an external scorer")
    p.add_argument("--pool", required=True, metavar="FILE")
    p.add_argument("--out", metavar="DIR")
    p.add_argument("--scores", metavar="FILE", help="external score file to validate and adopt")
    p.add_argument("--jobs", type=int, default=1, help="internal parallelism; never changes outputs")
    _add_config_flags(p)
    p.set_defaults(handler=cmd_score)

    p = sub.add_parser("select", help="select, merge, and emit the final dataset")
    p.add_argument("--pool", required=True, metavar="FILE")
    p.add_argument("--out", metavar="DIR")
    p.add_argument("--scores", metavar="FILE", help="external score file to validate and adopt")
    _add_config_flags(p)
    p.set_defaults(handler=cmd_select)

    p = sub.add_parser("run", help="full pipeline: seed, score, select, merge")
    p.add_argument("--pool", required=True, metavar="FILE")
    p.add_argument("--out", metavar="DIR")
    p.add_argument("--scores", metavar="FILE", help="external score file to validate and adopt")
    p.add_argument("--jobs", type=int, default=1, help="internal parallelism; never changes outputs")
    _add_config_flags(p)
    p.set_defaults(handler=cmd_run)

    p = sub.add_parser("resume", help="continue an interrupted run from its last completed stage")
    p.add_argument("--pool", required=True, metavar="FILE")
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--scores", metavar="FILE", help="external score file if scoring is pending")
    p.add_argument("--jobs", type=int, default=1, help="internal parallelism; never changes outputs")
    _add_config_flags(p)
    p.set_defaults(handler=cmd_resume)

    p = sub.add_parser("report", help="diversity diagnostics and exemplars for a finished run")
    p.add_argument("--pool", required=True, metavar="FILE")
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--top", type=int, default=5, help="highest-score exemplar count")
    p.add_argument("--bottom", type=int, default=5, help="lowest-score exemplar count")
    p.set_defaults(handler=cmd_report)

    p = sub.add_parser("compare", help="compare strategies over a shared scoring pass")
    p.add_argument("--pool", required=True, metavar="FILE")
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--strategies", default=",".join(STRATEGIES), metavar="LIST", help="comma-separated strategies")
    p.add_argument("--jobs", type=int, default=1, help="internal parallelism; never changes outputs")
    _add_config_flags(p)
    p.set_defaults(handler=cmd_compare)

    p = sub.add_parser("sweep", help="expand a config grid into runs plus a combined report")
    p.add_argument("--pool", required=True, metavar="FILE")
    p.add_argument("--grid", required=True, metavar="FILE", help="config keys with comma-separated values")
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--jobs", type=int, default=1, help="internal parallelism; never changes outputs")
    _add_config_flags(p)
    p.set_defaults(handler=cmd_sweep)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    try:
        return args.handler(args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except InternalError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except NecselError as exc:  # pragma: no cover - future subclasses
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
