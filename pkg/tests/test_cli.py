import json
import os
from pathlib import Path

import pytest

from necsel.cli import build_parser, main
from necsel.ingest import read_pool
from necsel.pipeline import load_manifest

DATA_DIR = Path(__file__).parent / "data"


def run_cli(capsys, *argv: str) -> tuple[int, str, str]:
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestExitCodes:
    def test_run_table_shape_1k_plus_5k(self, pool_10k, tmp_path, capsys):
        out = tmp_path / "d"
        code, stdout, stderr = run_cli(
            capsys,
            "run", "--pool", str(pool_10k), "--seed-size", "1000", "--select-size", "5000",
            "--group-size", "500", "--temperature", "1.0", "--rng-seed", "7", "--out", str(out),
        )
        assert code == 0
        assert sum(1 for _ in open(out / "dataset.jsonl", "rb")) == 6000
        assert "effective config" in stderr
        payload = json.loads(stdout)
        assert payload["dataset_records"] == 6000

    def test_temperature_zero_is_validation_error(self, pool_1k, tmp_path, capsys):
        code, _, stderr = run_cli(
            capsys,
            "run", "--pool", str(pool_1k), "--seed-size", "10", "--select-size", "50",
            "--temperature", "0", "--out", str(tmp_path / "d"),
        )
        assert code == 2
        assert "temperature" in stderr and "> 0" in stderr

    def test_missing_scores_is_data_error(self, pool_1k, tmp_path, capsys):
        out = tmp_path / "d"
        assert run_cli(
            capsys, "seed", "--pool", str(pool_1k), "--seed-size", "10",
            "--select-size", "50", "--out", str(out),
        )[0] == 0
        code, _, stderr = run_cli(
            capsys,
            "select", "--pool", str(pool_1k), "--out", str(out), "--seed-size", "10",
            "--select-size", "50", "--scores", str(tmp_path / "missing.jsonl"),
        )
        assert code == 3
        assert "missing.jsonl" in stderr

    def test_unknown_flag_is_usage_error(self, pool_1k, capsys):
        code, _, stderr = run_cli(capsys, "run", "--pool", str(pool_1k), "--bogus-flag", "1")
        assert code == 1
        assert "bogus-flag" in stderr

    def test_unknown_command_is_usage_error(self, capsys):
        assert run_cli(capsys, "frobnicate")[0] == 1

    def test_internal_overlap_is_exit_4(self, pool_1k, tmp_path, capsys, monkeypatch):
        import necsel.pipeline as pipeline_mod

        out = tmp_path / "d"
        flags = ["--pool", str(pool_1k), "--seed-size", "10", "--select-size", "20",
                 "--group-size", "10", "--out", str(out)]
        monkeypatch.setattr(
            pipeline_mod, "run_selection_stage",
            lambda *a, **k: (_ for _ in ()).throw(pipeline_mod.InternalError("forced")),
        )
        monkeypatch.setattr("necsel.cli.run_pipeline", pipeline_mod.run_pipeline)
        code, _, stderr = run_cli(capsys, "run", *flags)
        assert code == 4
        assert "internal error" in stderr


class TestComposition:
    def test_run_equals_manual_stages(self, pool_1k, tmp_path, capsys):
        flags = ["--seed-size", "20", "--select-size", "100", "--group-size", "50",
                 "--temperature", "1.0", "--rng-seed", "11"]
        whole = tmp_path / "whole"
        code, _, _ = run_cli(capsys, "run", "--pool", str(pool_1k), "--out", str(whole), *flags)
        assert code == 0

        composed = tmp_path / "composed"
        for command in ("seed", "score", "select"):
            code, _, _ = run_cli(capsys, command, "--pool", str(pool_1k), "--out", str(composed), *flags)
            assert code == 0

        for name in ("seed.ids", "scores.jsonl", "selection.json", "dataset.jsonl"):
            assert (whole / name).read_bytes() == (composed / name).read_bytes(), name
        assert load_manifest(whole)["manifest_sha256"] == load_manifest(composed)["manifest_sha256"]

    def test_jobs_do_not_change_outputs(self, pool_1k, tmp_path, capsys):
        flags = ["--seed-size", "20", "--select-size", "60", "--group-size", "30", "--rng-seed", "3"]
        j1, j8 = tmp_path / "j1", tmp_path / "j8"
        assert run_cli(capsys, "run", "--pool", str(pool_1k), "--out", str(j1), "--jobs", "1", *flags)[0] == 0
        assert run_cli(capsys, "run", "--pool", str(pool_1k), "--out", str(j8), "--jobs", "8", *flags)[0] == 0
        assert (j1 / "scores.jsonl").read_bytes() == (j8 / "scores.jsonl").read_bytes()
        assert (j1 / "dataset.jsonl").read_bytes() == (j8 / "dataset.jsonl").read_bytes()
        assert load_manifest(j1)["manifest_sha256"] == load_manifest(j8)["manifest_sha256"]

    def test_resume_command(self, pool_1k, tmp_path, capsys):
        flags = ["--seed-size", "15", "--select-size", "40", "--group-size", "20", "--rng-seed", "2"]
        out = tmp_path / "d"
        assert run_cli(capsys, "seed", "--pool", str(pool_1k), "--out", str(out), *flags)[0] == 0
        code, stdout, _ = run_cli(capsys, "resume", "--pool", str(pool_1k), "--out", str(out))
        assert code == 0
        assert json.loads(stdout)["dataset_records"] == 55


class TestOtherCommands:
    def test_fixture_and_ingest(self, tmp_path, capsys):
        pool = tmp_path / "pool.jsonl"
        code, stdout, _ = run_cli(
            capsys, "fixture", "--out", str(pool), "--num-samples", "40", "--num-sources", "4",
        )
        assert code == 0
        assert json.loads(stdout)["per_source"] == {f"src{i}": 10 for i in range(4)}

        cleaned = tmp_path / "clean.jsonl"
        code, stdout, _ = run_cli(capsys, "ingest", "--pool", str(pool), "--out", str(cleaned))
        assert code == 0
        assert json.loads(stdout)["total"] == 40
        assert cleaned.read_bytes() == pool.read_bytes()

    def test_report_command(self, pool_1k, tmp_path, capsys):
        out = tmp_path / "d"
        flags = ["--seed-size", "20", "--select-size", "100", "--group-size", "50"]
        assert run_cli(capsys, "run", "--pool", str(pool_1k), "--out", str(out), *flags)[0] == 0
        code, stdout, _ = run_cli(
            capsys, "report", "--pool", str(pool_1k), "--out", str(out), "--top", "2", "--bottom", "2",
        )
        assert code == 0
        payload = json.loads(stdout)
        assert sum(payload["histogram_counts"]) == 100
        assert (out / "report.json").exists()
        assert (out / "exemplars.md").exists()

    def test_compare_command(self, pool_1k, tmp_path, capsys):
        out = tmp_path / "cmp"
        code, stdout, _ = run_cli(
            capsys, "compare", "--pool", str(pool_1k), "--out", str(out),
            "--seed-size", "20", "--select-size", "100", "--group-size", "100",
            "--strategies", "nbgs,top",
        )
        assert code == 0
        rows = json.loads(stdout)
        assert [r["strategy"] for r in rows] == ["nbgs", "top"]
        assert (out / "comparison.csv").exists()

    def test_sweep_command(self, pool_1k, tmp_path, capsys):
        grid = tmp_path / "grid.cfg"
        grid.write_text("tau = 0.5, 1\n")
        out = tmp_path / "sweep"
        code, stdout, _ = run_cli(
            capsys, "sweep", "--pool", str(pool_1k), "--grid", str(grid), "--out", str(out),
            "--seed-size", "10", "--select-size", "30", "--group-size", "20",
        )
        assert code == 0
        rows = json.loads(stdout)
        assert len(rows) == 2
        assert all(r["dataset_records"] == 40 for r in rows)
        assert (out / "sweep.csv").exists()

    def test_output_root_env(self, pool_1k, tmp_path, capsys, monkeypatch):
        monkeypatch.setenv("NECSEL_OUT_ROOT", str(tmp_path / "root"))
        code, stdout, _ = run_cli(
            capsys, "run", "--pool", str(pool_1k),
            "--seed-size", "10", "--select-size", "20", "--group-size", "10",
        )
        assert code == 0
        out = Path(json.loads(stdout)["out"])
        assert out.parent == tmp_path / "root"
        assert out.name.startswith("run-")

    def test_out_required_without_env(self, pool_1k, capsys, monkeypatch):
        monkeypatch.delenv("NECSEL_OUT_ROOT", raising=False)
        code, _, stderr = run_cli(
            capsys, "run", "--pool", str(pool_1k), "--seed-size", "1", "--select-size", "1",
        )
        assert code == 1
        assert "--out" in stderr

    def test_config_file_with_flag_override(self, pool_1k, tmp_path, capsys):
        config = tmp_path / "run.cfg"
        config.write_text("n1 = 10\nn2 = 30\nk = 20\ntau = 2.0\n")
        out = tmp_path / "d"
        code, stdout, stderr = run_cli(
            capsys, "run", "--pool", str(pool_1k), "--out", str(out),
            "--config", str(config), "--temperature", "0.5",
        )
        assert code == 0
        assert "tau = 0.5" in stderr
        assert json.loads(stdout)["dataset_records"] == 40


class TestHelp:
    def test_help_snapshot(self, monkeypatch):
        monkeypatch.setenv("COLUMNS", "100")
        parser = build_parser()
        sections = [parser.format_help()]
        for name, sub in parser._subparsers._group_actions[0].choices.items():
            sections.append("=" * 20 + f" {name} " + "=" * 20)
            sections.append(sub.format_help())
        rendered = "\n".join(sections) + "\n"
        expected = (DATA_DIR / "cli_help.txt").read_text()
        assert rendered == expected

    def test_every_config_flag_enumerated(self):
        parser = build_parser()
        sub = parser._subparsers._group_actions[0].choices["run"]
        text = sub.format_help()
        for flag in ("--seed-size", "--select-size", "--group-size", "--temperature",
                     "--strategy", "--orientation", "--rng-seed", "--length-norm",
                     "--config", "--jobs", "--pool", "--out", "--scores"):
            assert flag in text, flag

    def test_help_exits_zero(self, capsys):
        assert main(["--help"]) == 0
        assert "COMMAND" in capsys.readouterr().out
