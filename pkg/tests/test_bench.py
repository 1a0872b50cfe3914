# tests/test_bench.py
# -*- coding: utf-8 -*-
import math
import os

import numpy as np
import pandas as pd
import pytest

from app.tools import bench
from app.tools.bench import (BANDWIDTH_COLUMNS, DESK_SHAPES, NORMALIZED_CAP, OVERLAP_COLUMNS, PATTERN_COLUMNS,
                             REFERENCE_MIN_BYTES, BandwidthMatrix, PatternTiming, bench_all, bench_p2p,
                             bench_patterns, clear_reference_history, desk_shape, expected_bulk_total,
                             format_patterns, note_reference, reference_bandwidth, reference_size,
                             write_bandwidth_csv, write_patterns_csv)
from app.tools.patterns_taxonomy import LABELS, OVERLAP_STUDY
from app.tools.runtime import spmd
from app.tools.validation import OVERLAP_BOUNDS, overlap_ratios

MIB = 1 << 20


def test_desk_shapes():
    assert desk_shape((4096, 2048, 8192)) == (256, 128, 512)
    assert DESK_SHAPES == [(256, 128, 512), (512, 288, 2304), (512, 224, 896)]


def test_reference_bandwidth_is_collective_heap_copy(make_world):
    clear_reference_history()
    contexts = make_world(2, arena_size=8 * MIB)
    values = spmd(contexts, lambda ctx: reference_bandwidth(ctx, nbytes=1 * MIB, repeats=3))
    assert values[0] == values[1]
    assert math.isfinite(values[0]) and values[0] > 0
    assert contexts[0].layout.cursor == 0
    with pytest.raises(ValueError):
        reference_bandwidth(contexts[0], nbytes=0)


def test_reference_bandwidth_clips_to_arena(make_world):
    contexts = make_world(1, arena_size=64 * 1024)
    assert reference_bandwidth(contexts[0], nbytes=1 * MIB, repeats=1) > 0
    assert reference_size([4096, 64 * MIB]) == 64 * MIB
    assert reference_size([4096]) == REFERENCE_MIN_BYTES


def test_reference_history_warns_on_drift_between_calls():
    clear_reference_history()
    assert note_reference(4096, 10.0)
    assert note_reference(4096, 12.0)
    assert not note_reference(4096, 13.0)
    assert note_reference(8192, 1.0)
    clear_reference_history()
    assert note_reference(4096, 13.0)


def test_bandwidth_matrix_normalization():
    m = BandwidthMatrix("store", 4096, np.array([[1.0, 3.0], [0.5, np.nan]]), reference=2.0)
    norm = m.normalized
    assert norm[0].tolist() == [0.5, NORMALIZED_CAP]
    assert norm[1, 0] == 0.25 and math.isnan(norm[1, 1])
    assert m.flagged.tolist() == [[False, True], [False, False]]
    assert m.corrupted_cells() == [(1, 1)]
    df = m.to_frame()
    assert list(df.columns) == BANDWIDTH_COLUMNS
    assert df[["src_rank", "dst_rank"]].values.tolist() == [[0, 0], [0, 1], [1, 0], [1, 1]]
    assert m.csv_name() == "p2p_store_4096.csv"
    assert BandwidthMatrix("all_load", 4096, np.ones((1, 1)), 1.0).csv_name() == "all_load_4096.csv"


@pytest.mark.parametrize("op", ["load", "store"])
def test_bench_p2p_matrix(make_world, op):
    contexts = make_world(2, arena_size=8 * MIB)
    results = spmd(contexts, bench_p2p, op, [4096, 65536], 3, reference=1.0)
    assert results[0].keys() == {4096, 65536}
    m = results[0][65536]
    assert m.measured.shape == (2, 2)
    assert np.all(m.measured > 0)
    assert np.array_equal(results[0][4096].measured, results[1][4096].measured)


def test_bench_p2p_atomics_skip_large(make_world):
    contexts = make_world(2)
    results = spmd(contexts, bench_p2p, "atomic_add", [256, 1024], 3, reference=1.0, max_atomic_bytes=256)
    assert list(results[0]) == [256]
    assert np.all(results[0][256].measured > 0)


def test_bench_p2p_skips_sizes_over_arena(make_world):
    contexts = make_world(2, arena_size=64 * 1024)
    results = spmd(contexts, bench_p2p, "store", [4096, 1 * MIB], 3, reference=1.0)
    assert list(results[0]) == [4096]


def test_bench_p2p_rejects_bad_arguments(make_world):
    ctx = make_world(1)[0]
    with pytest.raises(ValueError):
        bench_p2p(ctx, "all_load", [4096], reference=1.0)
    with pytest.raises(ValueError):
        bench_p2p(ctx, "load", [4096], iters=2, reference=1.0)
    with pytest.raises(ValueError):
        bench_p2p(ctx, "load", [6], reference=1.0)


@pytest.mark.parametrize("op", ["all_load", "all_store"])
def test_bench_all(make_world, op):
    contexts = make_world(3, arena_size=8 * MIB)
    results = spmd(contexts, bench_all, op, [4096, 16384], 3, reference=1.0)
    m = results[0][16384]
    assert m.measured.shape == (3, 3)
    assert np.all(m.measured > 0)


def test_bench_patterns_validates_all(tmp_path):
    timings = bench_patterns([(64, 64, 64)], [1, 2], LABELS, num_cu=4, arena_size=8 * MIB, repeats=1)
    assert len(timings) == 2 * len(LABELS)
    assert all(t.validated for t in timings)
    assert all(t.total_s >= t.compute_s >= 0 for t in timings)
    paths = write_patterns_csv(timings, str(tmp_path))
    df = pd.read_csv(paths[0])
    assert list(df.columns) == PATTERN_COLUMNS
    assert len(paths) == 1
    assert "bulk_sync" in format_patterns(timings)


def test_bench_patterns_skips_indivisible_shard():
    timings = bench_patterns([(32, 63, 32)], [1, 2], ["bulk_sync"], num_cu=2, arena_size=4 * MIB, repeats=1)
    assert [t.world for t in timings] == [1]


def test_bench_patterns_fault_marks_failure():
    timings = bench_patterns([(32, 32, 32)], [2], ["bulk_sync", "fused_sequential"], num_cu=2,
                             arena_size=4 * MIB, repeats=1, fault="fused_sequential")
    by_name = {t.pattern: t for t in timings}
    assert by_name["bulk_sync"].validated
    assert not by_name["fused_sequential"].validated
    assert math.isnan(by_name["fused_sequential"].total_s)


def test_bench_patterns_overlap_csv(tmp_path):
    timings = bench_patterns([(64, 64, 64)], [2], ["bulk_sync", "fused_sequential"], num_cu=4,
                             arena_size=4 * MIB, repeats=1, comm_delay=1e-3)
    assert all(t.overlap_eff is not None for t in timings)
    paths = write_patterns_csv(timings, str(tmp_path))
    assert os.path.basename(paths[1]) == "overlap.csv"
    assert list(pd.read_csv(paths[1]).columns) == OVERLAP_COLUMNS


def test_bench_patterns_rejects_unknown():
    with pytest.raises(ValueError):
        bench_patterns([(32, 32, 32)], [1], ["ring"])
    with pytest.raises(ValueError):
        bench_patterns([(32, 32, 32)], [1], ["bulk_sync"], comm_delay="fast")


def test_write_bandwidth_csv(tmp_path):
    matrices = {4096: BandwidthMatrix("load", 4096, np.ones((2, 2)), 2.0)}
    paths = write_bandwidth_csv(matrices, str(tmp_path))
    df = pd.read_csv(paths[0])
    assert os.path.basename(paths[0]) == "p2p_load_4096.csv"
    assert df["normalized"].tolist() == [0.5] * 4


def test_pattern_timing_row():
    t = PatternTiming("bulk_sync", 1, 2, 3, 4, 0.5, 0.2, 0.3, True)
    assert list(t.row()) == PATTERN_COLUMNS


def test_bulk_sync_total_matches_analytic_model():
    delay = 5e-3
    timings = bench_patterns([(128, 128, 64)], [2], ["bulk_sync"], num_cu=4, arena_size=8 * MIB,
                             comm_delay=delay, compute_delay=0.02, repeats=3, block=(32, 32, 64))
    t = timings[0]
    tiles = len(t.tiles[t.tiles["rank"] == 0])
    assert tiles == 8
    assert t.total_s == pytest.approx(expected_bulk_total(t.compute_s, tiles, delay), rel=0.3)


def test_overlap_beats_bulk_sync_with_injected_delays():
    ratios = overlap_ratios()
    assert set(ratios) == set(OVERLAP_STUDY)
    for pattern, bound in OVERLAP_BOUNDS.items():
        assert ratios[pattern] <= bound, ratios


def test_payload_mismatch_is_agreed_by_all_ranks(make_world):
    contexts = make_world(2)
    results = spmd(contexts, lambda ctx: bench._agree_bad(ctx, [(0, 1)] if ctx.rank == 1 else [], "store"))
    assert results == [{(0, 1)}, {(0, 1)}]


def test_bench_p2p_mismatch_records_nan_cell(make_world, monkeypatch):
    real = bench._p2p_once

    def flaky(ctx, op, src, dst, bufs, n, it):
        elapsed, ok = real(ctx, op, src, dst, bufs, n, it)
        return elapsed, ok and (src, dst) != (0, 1)

    monkeypatch.setattr(bench, "_p2p_once", flaky)
    contexts = make_world(2)
    m = spmd(contexts, bench_p2p, "store", [4096], 3, reference=1.0)[0][4096]
    assert m.corrupted_cells() == [(0, 1)]
    assert np.isfinite(m.measured[0, 0]) and np.isfinite(m.measured[1, 0])
    assert math.isnan(m.to_frame().loc[1, "normalized"])
