# tests/test_kernels.py
# -*- coding: utf-8 -*-
import numpy as np
import pytest

from app.tools.errors import DeadlockError
from app.tools.kernels import (CANARY, PATTERNS, consumer_kernel, gemm_tile, matches_oracle, oracle_global,
                               pid_tiles, remote_order, run_pattern, setup_problem, tile_to_coords)
from app.tools.runtime import spmd
from app.tools.trace import TraceRecorder

MIB = 1 << 20


def _problems(contexts, M, N, K, **kw):
    return spmd(contexts, lambda ctx: setup_problem(ctx, M, N, K, **kw))


def _run(contexts, problems, name, **kw):
    spmd(contexts, lambda ctx: run_pattern(ctx, problems[ctx.rank], name, **kw))
    oracle = oracle_global(contexts[0], problems[0])
    return all(spmd(contexts, lambda ctx: matches_oracle(ctx, problems[ctx.rank], oracle)))


def test_gemm_tile_small_example(make_world):
    ctx = make_world(1)[0]
    problem = setup_problem(ctx, 2, 2, 2, block_m=2, block_n=2, block_k=2)
    problem.A.array(ctx.layout, 0)[...] = [[1, 2], [3, 4]]
    problem.B.array(ctx.layout, 0)[...] = [[5, 6], [7, 8]]
    assert gemm_tile(ctx, problem, 0, 0).tolist() == [[19.0, 22.0], [43.0, 50.0]]


def test_gemm_tile_identity_returns_b(make_world):
    ctx = make_world(1)[0]
    problem = setup_problem(ctx, 16, 16, 16, block_m=16, block_n=16, block_k=16)
    problem.A.array(ctx.layout, 0)[...] = np.eye(16)
    B = problem.B.array(ctx.layout, 0)
    assert np.array_equal(gemm_tile(ctx, problem, 0, 0), B)


def test_gemm_tile_masks_k_tail(make_world):
    ctx = make_world(1)[0]
    problem = setup_problem(ctx, 10, 12, 37, block_m=8, block_n=8, block_k=16)
    A = problem.A.array(ctx.layout, 0).astype(np.float64)
    B = problem.B.array(ctx.layout, 0).astype(np.float64)
    tile = gemm_tile(ctx, problem, 1, 1)
    expected = (A @ B)[8:10, 8:12]
    assert np.array_equal(tile[:2, :4], expected)
    assert np.all(tile[2:] == 0) and np.all(tile[:, 4:] == 0)


def test_swizzle_group_one_is_row_major():
    assert [tile_to_coords(t, 2, 3, 1) for t in range(6)] == [(0, 0), (0, 1), (0, 2), (1, 0), (1, 1), (1, 2)]


@pytest.mark.parametrize("pm, pn, g", [(5, 3, 2), (8, 8, 4), (3, 7, 16), (1, 1, 4)])
def test_swizzle_is_bijection(pm, pn, g):
    coords = {tile_to_coords(t, pm, pn, g) for t in range(pm * pn)}
    assert coords == {(m, n) for m in range(pm) for n in range(pn)}


def test_swizzle_rejects_out_of_range():
    with pytest.raises(ValueError):
        tile_to_coords(6, 2, 3, 1)


def test_pid_tiles_cover_once():
    for total in range(1, 20):
        for grid in range(1, 20):
            tiles = [t for pid in range(grid) for t in pid_tiles(pid, grid, total)]
            assert sorted(tiles) == list(range(total))


def test_setup_problem_guards_and_replication(make_world):
    contexts = make_world(2)
    problems = _problems(contexts, 32, 16, 32)
    layout = contexts[0].layout
    p = problems[0]
    assert np.array_equal(p.A.array(layout, 0), p.A.array(layout, 1))
    assert not np.array_equal(p.B.array(layout, 0), p.B.array(layout, 1))
    assert np.all(p.guard_lo.array(layout, 1) == CANARY)
    assert p.C_global.shape == (32, 32)


def test_world_one_global_equals_local_gemm(make_world):
    contexts = make_world(1)
    problems = _problems(contexts, 64, 64, 64)
    assert _run(contexts, problems, "bulk_sync")
    ctx, p = contexts[0], problems[0]
    A = p.A.array(ctx.layout, 0).astype(np.float64)
    B = p.B.array(ctx.layout, 0).astype(np.float64)
    assert np.array_equal(p.C_global.array(ctx.layout, 0), A @ B)


def test_bulk_sync_world_two(make_world):
    contexts = make_world(2, arena_size=8 * MIB)
    problems = _problems(contexts, 128, 128, 128)
    assert _run(contexts, problems, "bulk_sync")


def test_fused_sequential_world_four(make_world):
    contexts = make_world(4, arena_size=8 * MIB)
    problems = _problems(contexts, 256, 64, 512)
    assert _run(contexts, problems, "fused_sequential")


@pytest.mark.parametrize("slots", [(None, None), (1, 1), (3, 1)])
def test_producer_consumer_partitions(make_world, slots):
    contexts = make_world(2)
    problems = _problems(contexts, 96, 64, 64)
    assert _run(contexts, problems, "producer_consumer", gemm_slots=slots[0], comm_slots=slots[1])


def test_wg_specialized_and_lock_accounting(make_world):
    contexts = make_world(2)
    problems = _problems(contexts, 96, 64, 64, jitter=1e-4)
    assert _run(contexts, problems, "wg_specialized", gemm_slots=3, comm_slots=1)

    def accounting(ctx):
        locks = problems[ctx.rank].locks
        rel, acq = locks.counters(ctx)
        return bool(np.all(locks.states(ctx) == 0) and np.all(rel == 1) and np.all(acq == 1))

    assert all(spmd(contexts, accounting))


def test_all_patterns_on_tail_shape(make_world):
    contexts = make_world(2)
    problems = _problems(contexts, 50, 20, 37, block_m=16, block_n=16, block_k=16)
    for name in PATTERNS:
        assert _run(contexts, problems, name), name


def test_partition_over_budget_rejected(make_world):
    contexts = make_world(1)
    problems = _problems(contexts, 32, 32, 32)
    with pytest.raises(ValueError):
        run_pattern(contexts[0], problems[0], "producer_consumer", gemm_slots=4, comm_slots=1)


def test_unknown_pattern_rejected(make_world):
    contexts = make_world(1)
    problems = _problems(contexts, 32, 32, 32)
    with pytest.raises(ValueError):
        run_pattern(contexts[0], problems[0], "ring")


def test_consumer_without_producer_reports_lock_states(make_world):
    ctx = make_world(1, timeout_s=0.3)[0]
    problem = setup_problem(ctx, 32, 32, 32)
    with pytest.raises(DeadlockError) as exc:
        consumer_kernel(0, ctx, problem, 1)
    assert exc.value.lock_states == {0: 0}


def test_corrupted_output_fails_oracle(make_world):
    contexts = make_world(1)
    problems = _problems(contexts, 32, 32, 32)
    assert _run(contexts, problems, "fused_sequential")
    ctx = contexts[0]
    problems[0].C_global.array(ctx.layout, 0)[0, 0] += 1
    assert not matches_oracle(ctx, problems[0], oracle_global(ctx, problems[0]))


def _traced(make_world, compute_delay=0.0):
    recorder = TraceRecorder(enabled=True, compute_delay=compute_delay)
    contexts = make_world(2, arena_size=8 * MIB, recorder=recorder)
    # 8 x 8 = 64 тайли на ранг
    problems = _problems(contexts, 128, 256, 32, block_m=16, block_n=32, block_k=32)
    recorder.clear()
    return contexts, problems, recorder


def test_bulk_sync_trace_has_no_overlap(make_world):
    contexts, problems, recorder = _traced(make_world)
    assert _run(contexts, problems, "bulk_sync")
    df = recorder.to_frame()
    comm = df[df["phase"] == "comm"]
    compute = df[df["phase"] == "compute"]
    assert len(comm) == 2 * 64 and len(compute) == 2 * 64
    assert comm["start"].min() >= compute["end"].max()


@pytest.mark.parametrize("name, kw", [("fused_sequential", {"grid_size": 3}),
                                      ("wg_specialized", {"gemm_slots": 3, "comm_slots": 1}),
                                      ("producer_consumer", {"gemm_slots": 3, "comm_slots": 1})])
def test_overlapped_patterns_send_a_tile_before_last_compute(make_world, name, kw):
    contexts, problems, recorder = _traced(make_world, compute_delay=1e-3)
    assert _run(contexts, problems, name, **kw)
    tiles = recorder.tile_summary()
    for rank in range(2):
        own = tiles[tiles["rank"] == rank]
        assert len(own) == 64
        assert own["comm_end"].min() < own["compute_start"].max()


def test_remote_order_rotates_and_skips_self():
    assert remote_order(0, 4, 0) == [1, 2, 3]
    assert remote_order(0, 4, 1) == [2, 3, 1]
    assert remote_order(2, 4, 5) == [1, 3, 0]
    assert remote_order(0, 1, 7) == []
