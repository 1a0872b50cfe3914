# tests/test_rma.py
# -*- coding: utf-8 -*-
import numpy as np
import pytest

from app.tools.atomics import atomic_cas, remote_cell
from app.tools.rma import block_view, copy, full_view, get, load, put, store, tile_view
from app.tools.runtime import full, spin_wait, spmd, zeros


@pytest.fixture
def trio(make_world):
    contexts = make_world(3)
    bufs = spmd(contexts, lambda ctx: (zeros(ctx, 8, "f32"), zeros(ctx, 8, "f32")))
    return contexts, bufs[0]


def test_remote_load(trio):
    contexts, (a, _) = trio
    ctx = contexts[0]
    a.array(ctx.layout, 1)[:3] = [10, 20, 30]
    got = load(tile_view(a, range(0, 3)), 1, 0, ctx)
    assert got.tolist() == [10.0, 20.0, 30.0]


def test_fully_masked_load_is_zero(trio):
    contexts, (a, _) = trio
    ctx = contexts[0]
    a.array(ctx.layout, 1)[:] = 5
    got = load(tile_view(a, range(4), mask=np.zeros(4, dtype=bool)), 1, 0, ctx)
    assert np.all(got == 0)


def test_load_out_of_bounds_lanes_are_zero(trio):
    contexts, (a, _) = trio
    ctx = contexts[0]
    a.array(ctx.layout, 2)[:] = np.arange(8)
    got = load(tile_view(a, range(6, 10)), 2, 0, ctx)
    assert got.tolist() == [6.0, 7.0, 0.0, 0.0]


def test_store_echo_and_mask(trio):
    contexts, (a, _) = trio
    ctx = contexts[0]
    mask = np.array([True, False, True, False])
    store(tile_view(a, range(4), mask=mask), [1, 2, 3, 4], 1, 0, ctx)
    assert a.array(ctx.layout, 1)[:4].tolist() == [1.0, 0.0, 3.0, 0.0]
    assert np.all(a.array(ctx.layout, 0) == 0)


def test_put_get_duality(trio):
    contexts, (a, b) = trio
    ctx0, ctx1 = contexts[0], contexts[1]
    a.array(ctx0.layout, 0)[:] = np.arange(8) + 1
    put(full_view(a), full_view(b), 0, 1, ctx0)
    pushed = b.array(ctx0.layout, 1).copy()

    b.array(ctx0.layout, 1)[:] = 0
    get(full_view(a), full_view(b), 0, 1, ctx1)
    assert np.array_equal(b.array(ctx0.layout, 1), pushed)
    assert pushed.tolist() == list(np.arange(8) + 1.0)


def test_put_shape_mismatch(trio):
    contexts, (a, b) = trio
    with pytest.raises(ValueError):
        put(tile_view(a, range(4)), tile_view(b, range(3)), 0, 1, contexts[0])


def test_copy_chain_equals_direct(trio):
    contexts, (a, b) = trio
    ctx = contexts[0]
    a.array(ctx.layout, 0)[:] = np.arange(8) * 3
    copy(full_view(a), full_view(a), 0, 1, ctx)
    copy(full_view(a), full_view(b), 1, 2, ctx)
    copy(full_view(a), full_view(a), 0, 2, ctx)
    assert np.array_equal(b.array(ctx.layout, 2), a.array(ctx.layout, 2))


def test_block_view_masks_tails(make_world):
    contexts = make_world(1)
    ctx = contexts[0]
    C = zeros(ctx, (5, 6), "f32")
    view = block_view(C, 1, 1, 4, 4, m_limit=5, n_limit=6)
    store(view, np.ones((4, 4)), 0, 0, ctx)
    arr = C.array(ctx.layout, 0)
    assert arr[4:, 4:].sum() == 2
    assert arr[:4].sum() == 0


def test_block_view_col_offset(make_world):
    contexts = make_world(1)
    ctx = contexts[0]
    C = zeros(ctx, (2, 8), "f32")
    view = block_view(C, 0, 0, 2, 4, m_limit=2, n_limit=3, col_offset=4)
    store(view, np.full((2, 4), 2.0), 0, 0, ctx)
    arr = C.array(ctx.layout, 0)
    assert arr[:, 4:7].tolist() == [[2.0] * 3] * 2
    assert arr[:, 7].tolist() == [0.0, 0.0]
    assert arr[:, :4].sum() == 0


CANARY = 0xDEADBEEF


@pytest.fixture
def guarded(make_world):
    contexts = make_world(3)
    bufs = spmd(contexts, lambda ctx: (zeros(ctx, 16, "u32"), full(ctx, 16, CANARY, "u32"),
                                       full(ctx, 64, CANARY, "u32")))
    return contexts, bufs[0]


def _move(kind, src_view, dst_view, contexts):
    """Джерело на ранзі 0, приймач на ранзі 1; copy ініціює третій ранг."""
    if kind == "put":
        put(src_view, dst_view, 0, 1, contexts[0])
    elif kind == "get":
        get(src_view, dst_view, 0, 1, contexts[1])
    else:
        copy(src_view, dst_view, 0, 1, contexts[2])


@pytest.mark.parametrize("kind", ["put", "get", "copy"])
def test_masked_and_tail_moves_keep_canaries(guarded, kind):
    contexts, (src, dst, guard) = guarded
    layout = contexts[0].layout
    src.array(layout, 0)[:] = np.arange(16) + 1
    mask = np.array([True, False] * 4)
    _move(kind, tile_view(src, range(2, 10), mask=mask), tile_view(dst, range(2, 10), mask=mask), contexts)
    _move(kind, tile_view(src, range(12, 20)), tile_view(dst, range(12, 20)), contexts)

    expected = np.full(16, CANARY, dtype=np.uint32)
    expected[[2, 4, 6, 8]] = [3, 5, 7, 9]
    expected[12:] = [13, 14, 15, 16]
    assert dst.array(layout, 1).tolist() == expected.tolist()
    assert np.all(guard.array(layout, 1) == CANARY)
    assert np.all(dst.array(layout, 0) == CANARY) and np.all(dst.array(layout, 2) == CANARY)


def test_zero_length_get_is_noop(trio):
    contexts, (a, b) = trio
    ctx = contexts[1]
    a.array(ctx.layout, 0)[:] = 7
    get(tile_view(a, range(0)), tile_view(b, range(0)), 0, 1, ctx)
    assert np.all(b.array(ctx.layout, 1) == 0)


def test_store_then_release_flag_publishes_to_reader(make_world):
    contexts = make_world(2)
    bufs = spmd(contexts, lambda ctx: (zeros(ctx, 64, "f32"), zeros(ctx, 1, "u32")))
    data, flag = bufs[0]
    payload = np.arange(64, dtype=np.float32) + 1

    def writer(ctx):
        store(full_view(data), payload, 1, 0, ctx)
        atomic_cas(remote_cell(flag, 0, 1, 0, ctx), 0, 1, "release", "sys", ctx)

    def reader(ctx):
        addr = remote_cell(flag, 0, 1, 1, ctx)
        spin_wait(lambda: atomic_cas(addr, 1, 0, "acquire", "sys", ctx) == 1, 5.0,
                  lambda: TimeoutError("прапорець не опубліковано"))
        return load(full_view(data), 1, 1, ctx)

    got = spmd(contexts, lambda ctx: writer(ctx) if ctx.rank == 0 else reader(ctx))[1]
    assert np.array_equal(got, payload)
    assert int(flag.array(contexts[0].layout, 1)[0]) == 0
