import json

import numpy as np
import pytest

from sgconv.bench import (
    IMPLS,
    BenchRecord,
    fit_loglog_slope,
    run_bench,
    workspace_bytes,
    write_bench_csv,
    write_bench_summary,
)

TINY = dict(lengths=(16, 32), channels=2, batch=2, reps=5, seed=0)


class TestRecord:
    def test_quantile_ordering_enforced(self):
        with pytest.raises(ValueError):
            BenchRecord(
                impl="conv_fft", seq_len=16, channels=1, batch=1,
                median_ms=1.0, p10_ms=2.0, p90_ms=3.0, reps=5,
            )

    def test_min_reps_enforced(self):
        with pytest.raises(ValueError):
            BenchRecord(
                impl="conv_fft", seq_len=16, channels=1, batch=1,
                median_ms=1.0, p10_ms=0.5, p90_ms=2.0, reps=1,
            )


class TestSlopeFit:
    def test_exact_quadratic(self):
        lengths = [256, 512, 1024, 2048]
        values = [float(l) ** 2 for l in lengths]
        assert abs(fit_loglog_slope(lengths, values) - 2.0) < 1e-12

    def test_exact_linear(self):
        lengths = [256, 512, 1024]
        values = [0.25 * l for l in lengths]
        assert abs(fit_loglog_slope(lengths, values) - 1.0) < 1e-12

    def test_needs_two_points(self):
        with pytest.raises(ValueError):
            fit_loglog_slope([256], [1.0])


class TestRunBench:
    def test_produces_all_records(self):
        records, summary = run_bench(**TINY)
        assert len(records) == len(IMPLS) * 2
        for r in records:
            assert r.p10_ms <= r.median_ms <= r.p90_ms
            assert r.reps == 5
        for impl in IMPLS:
            assert "loglog_slope" in summary["impls"][impl]

    def test_direct_cap_skips_long_lengths(self):
        records, summary = run_bench(**{**TINY, "direct_cap": 16})
        direct = [r for r in records if r.impl == "conv_direct"]
        assert [r.seq_len for r in direct] == [16]
        assert summary["impls"]["conv_direct"]["lengths"] == [16]

    def test_rejects_unsorted_lengths(self):
        with pytest.raises(ValueError):
            run_bench(**{**TINY, "lengths": (32, 16)})

    def test_rejects_too_few_reps(self):
        with pytest.raises(ValueError):
            run_bench(**{**TINY, "reps": 1})

    def test_rejects_unknown_impl(self):
        with pytest.raises(ValueError):
            run_bench(**{**TINY, "impls": ("conv_warp",)})

    def test_impl_subset(self):
        records, summary = run_bench(**{**TINY, "impls": ("conv_fft",)})
        assert {r.impl for r in records} == {"conv_fft"}
        assert list(summary["impls"]) == ["conv_fft"]


class TestOutputs:
    def test_csv_schema(self, tmp_path):
        records, _ = run_bench(**TINY)
        path = tmp_path / "bench.csv"
        write_bench_csv(records, path)
        lines = path.read_text().strip().split("\n")
        assert lines[0] == "impl,seq_len,channels,batch,median_ms,p10_ms,p90_ms,reps"
        assert len(lines) == 1 + len(records)
        first = lines[1].split(",")
        assert first[0] in IMPLS and int(first[1]) == 16
        assert len(first) == 8

    def test_summary_json(self, tmp_path):
        _, summary = run_bench(**TINY)
        path = tmp_path / "bench.json"
        write_bench_summary(summary, path)
        loaded = json.loads(path.read_text())
        assert loaded["channels"] == 2 and loaded["batch"] == 2
        for impl in IMPLS:
            entry = loaded["impls"][impl]
            assert entry["lengths"] == [16, 32]
            assert len(entry["median_ms"]) == 2
            assert set(entry["workspace_bytes"]) == {"16", "32"}


class TestWorkspace:
    def test_monotone_in_length(self):
        for impl in IMPLS:
            b16 = workspace_bytes(impl, 16, 4, 2, 8)
            b64 = workspace_bytes(impl, 64, 4, 2, 8)
            assert b64 > b16 > 0

    def test_attention_dominated_by_score_matrix(self):
        b = workspace_bytes("attn_quadratic", 1024, 8, 2, 4)
        assert b >= 1024 * 1024 * 4

    def test_unknown_impl_rejected(self):
        with pytest.raises(ValueError):
            workspace_bytes("other", 16, 1, 1, 8)
