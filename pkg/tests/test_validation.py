# tests/test_validation.py
# -*- coding: utf-8 -*-
import pytest

from app.tools import validation
from app.tools.validation import SUITE_COLUMNS, SuiteOptions, run_suites

QUICK = SuiteOptions(quick=True, timeout_s=20.0)


def test_fast_suites_pass():
    df = run_suites(QUICK, ["translation", "alloc_symmetry", "grid_coverage", "swizzle"])
    assert list(df.columns) == SUITE_COLUMNS
    assert df["passed"].all(), df["detail"].tolist()


def test_concurrency_suites_pass():
    df = run_suites(QUICK, ["atomic_counting", "publication", "lock_protocol"])
    assert df["passed"].all(), df["detail"].tolist()


def test_quick_skips_overlap():
    df = run_suites(QUICK, ["swizzle", "overlap"])
    assert df["suite"].tolist() == ["swizzle"]


def test_unknown_suite_rejected():
    with pytest.raises(ValueError):
        run_suites(QUICK, ["nope"])


def test_failing_suite_is_reported(monkeypatch):
    def broken(opts):
        raise AssertionError("лічильник 3 != 4")

    monkeypatch.setitem(validation.SUITES, "translation", broken)
    df = run_suites(QUICK, ["translation"])
    assert not df["passed"].iloc[0]
    assert "лічильник" in df["detail"].iloc[0]


def test_injected_fault_fails_oracle():
    df = run_suites(SuiteOptions(quick=True, fault="*"), ["oracle"])
    assert not df["passed"].iloc[0]
    assert "оракулом" in df["detail"].iloc[0]


def test_microbench_self_copy_within_band():
    df = run_suites(SuiteOptions(timeout_s=60.0), ["microbench"])
    assert df["passed"].iloc[0], df["detail"].iloc[0]
    assert "самокопіювання 67108864 B" in df["detail"].iloc[0]


def test_overlap_suite_uses_shared_parameters(monkeypatch):
    seen = {}

    def fake_ratios(seed, timeout_s, repeats=validation.OVERLAP_REPEATS):
        seen["repeats"] = repeats
        return {"bulk_sync": 1.0, "producer_consumer": 0.7, "fused_sequential": 0.9, "wg_specialized": 0.8}

    monkeypatch.setattr(validation, "overlap_ratios", fake_ratios)
    df = run_suites(SuiteOptions(), ["overlap"])
    assert not df["passed"].iloc[0]
    assert "wg_specialized=0.80" in df["detail"].iloc[0]
    assert seen["repeats"] == 5
