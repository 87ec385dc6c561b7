import dataclasses
import math
import statistics

import numpy as np
import pytest

from necsel.core import DataError, SelectionConfig
from necsel.ingest import read_pool
from necsel.nbgs import select
from necsel.report import (
    compare_strategies,
    decile_occupancy,
    diversity_report,
    exemplars,
    render_exemplars_markdown,
    score_histogram,
    source_counts,
    source_entropy,
    write_csv,
)

from conftest import scored, simple_sample

# Arbitrary-precision oracles, frozen.
ENTROPY_3_1 = 0.5623351446188084
LN_4 = 1.3862943611198906


class TestSourceEntropy:
    def test_single_source_zero(self):
        assert source_entropy({"only": 25}) == 0.0

    def test_uniform_four_sources(self):
        assert abs(source_entropy({f"s{i}": 10 for i in range(4)}) - LN_4) < 1e-12

    def test_counts_3_1(self):
        assert abs(source_entropy({"a": 3, "b": 1}) - ENTROPY_3_1) < 1e-12

    def test_no_counts_is_none(self):
        assert source_entropy({}) is None

    def test_untagged_pool_yields_explicit_absence(self):
        pool = [simple_sample(f"u{i}", "q", "r") for i in range(5)]
        counts, sources = source_counts({"u0", "u1"}, iter(pool))
        assert counts == {} and sources == set()
        report = diversity_report({"u0"}, [1.0], iter(pool), [])
        assert report.source_entropy is None
        assert report.coverage is None

    def test_bounded_by_log_source_count(self):
        counts = {"a": 5, "b": 9, "c": 1}
        assert 0.0 <= source_entropy(counts) <= math.log(3)


class TestHistogramAndDeciles:
    def test_histogram_conserves_counts(self):
        scores = list(np.linspace(-3, 11, 137))
        counts, lo, hi = score_histogram(scores)
        assert sum(counts) == 137
        assert (lo, hi) == (-3.0, 11.0)

    def test_histogram_single_value(self):
        counts, lo, hi = score_histogram([2.0, 2.0])
        assert sum(counts) == 2

    def test_decile_occupancy_full_and_top(self):
        reference = [float(i) for i in range(1000)]
        spread = [float(i) for i in range(0, 1000, 100)]
        occupancy, per = decile_occupancy(spread, reference)
        assert occupancy == 10
        assert sum(per) == len(spread)
        top_only = [float(i) for i in range(950, 1000)]
        occupancy_top, _ = decile_occupancy(top_only, reference)
        assert occupancy_top == 1

    def test_decile_requires_reference(self):
        with pytest.raises(DataError):
            decile_occupancy([1.0], [])


class TestExemplars:
    POOL = {
        s.id: s
        for s in [simple_sample(f"e{i}", f"q{i}", f"resp {i}", source="src0") for i in range(4)]
    }

    def test_top_one(self):
        items = [scored("e0", 3.0), scored("e1", 1.0)]
        top, bottom = exemplars(items, self.POOL, 1, 0)
        assert [t[0].id for t in top] == ["e0"]
        assert bottom == []

    def test_bottom_lowest_first(self):
        items = [scored("e0", 3.0), scored("e1", 1.0), scored("e2", 2.0)]
        _, bottom = exemplars(items, self.POOL, 0, 2)
        assert [b[0].id for b in bottom] == ["e1", "e2"]

    def test_disjoint_when_counts_fit(self):
        items = [scored(f"e{i}", float(i)) for i in range(4)]
        top, bottom = exemplars(items, self.POOL, 2, 2)
        assert {t[0].id for t in top}.isdisjoint({b[0].id for b in bottom})

    def test_truncates_with_warning(self, capsys):
        items = [scored("e0", 3.0), scored("e1", 1.0)]
        top, bottom = exemplars(items, self.POOL, 5, 5)
        assert len(top) + len(bottom) == 2
        assert "truncating" in capsys.readouterr().err

    def test_markdown_contains_text(self):
        items = [scored("e0", 3.0), scored("e1", 1.0)]
        top, bottom = exemplars(items, self.POOL, 1, 1)
        text = render_exemplars_markdown(top, bottom)
        assert "e0" in text and "resp 0" in text and "## Lowest scores" in text


class TestCompareStrategies:
    def test_table_invariants(self, pool_1k, tmp_path):
        cfg = SelectionConfig(n1=20, n2=100, k=100, tau=1.0, rng_seed=5)
        rows = compare_strategies(pool_1k, cfg, ["nbgs", "top", "bottom", "random"], tmp_path)
        by_strategy = {row["strategy"]: row for row in rows}
        assert len(rows) == 4 and all("error" not in r for r in rows)
        means = {s: r["mean_score"] for s, r in by_strategy.items()}
        assert means["top"] == max(means.values())
        assert means["bottom"] == min(means.values())
        assert by_strategy["nbgs"]["decile_occupancy"] == 10
        assert by_strategy["top"]["decile_occupancy"] < 10

    def test_per_row_errors_continue(self, pool_1k, tmp_path):
        cfg = SelectionConfig(n1=20, n2=5000, k=100, tau=1.0, rng_seed=5)
        rows = compare_strategies(pool_1k, cfg, ["top", "random"], tmp_path)
        assert all("error" in row for row in rows)
        assert len(rows) == 2

    def test_random_mean_tracks_pool_mean(self, pool_1k, tmp_path):
        # Mean selected score under the random strategy, averaged over 50
        # seeds, sits within 3 standard errors of the candidate pool mean.
        from necsel.pipeline import _candidate_scores, _load_seed_ids, run_scoring_stage, run_seed_stage

        cfg = SelectionConfig(n1=20, n2=100, k=100, tau=1.0, strategy="random", rng_seed=0)
        base = tmp_path / "base"
        run_seed_stage(pool_1k, base, cfg)
        run_scoring_stage(pool_1k, base, cfg)
        candidates = _candidate_scores(pool_1k, base, _load_seed_ids(base))
        pool_scores = [c.score for c in candidates]
        pool_mean = statistics.fmean(pool_scores)
        pool_sd = statistics.pstdev(pool_scores)
        seeds = 50
        means = []
        for seed in range(seeds):
            result = select(candidates, dataclasses.replace(cfg, rng_seed=seed))
            chosen = set(result.selected_ids)
            means.append(statistics.fmean(c.score for c in candidates if c.id in chosen))
        grand = statistics.fmean(means)
        stderr = pool_sd / math.sqrt(seeds * cfg.n2)
        assert abs(grand - pool_mean) < 3 * stderr


class TestCsv:
    def test_rfc4180_quoting(self, tmp_path):
        rows = [{"name": 'tricky,"value"', "x": 1.5}, {"name": "plain", "x": None}]
        path = tmp_path / "out.csv"
        write_csv(rows, path)
        text = path.read_text()
        lines = text.splitlines()
        assert lines[0] == "name,x"
        assert '"tricky,""value"""' in lines[1]
        assert lines[2] == "plain,"
