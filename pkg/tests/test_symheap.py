# tests/test_symheap.py
# -*- coding: utf-8 -*-
import numpy as np
import pytest

from app.tools.errors import OutOfHeapError
from app.tools.symheap import ALIGNMENT, HeapAddress, alloc, init_heap, reset_heap, translate


def test_init_heap_base_table(layout):
    assert len(layout.base_table) == 2
    assert layout.cursor == 0
    assert layout.remaining() == layout.arena_size


def test_init_heap_distinct_bases():
    layout = init_heap(8, 1 << 16)
    assert len(set(layout.base_table)) == 8


@pytest.mark.parametrize("world, arena", [(0, 1024), (2, 100), (2, 0)])
def test_init_heap_rejects_bad_arguments(world, arena):
    with pytest.raises(ValueError):
        init_heap(world, arena)


def test_single_rank_translation_is_identity():
    layout = init_heap(1, ALIGNMENT)
    addr = HeapAddress(0, layout.base_table[0] + 16)
    assert translate(addr, 0, 0, layout) == addr


def test_first_alloc_at_zero(layout):
    buf = alloc(layout, 16, "f32")
    assert buf.offset == 0
    assert buf.len_bytes == 64


def test_alloc_aligns_up(layout):
    alloc(layout, 25, "f32")  # 100 B
    second = alloc(layout, 1, "u32")
    assert second.offset == 256


def test_alloc_symmetric_across_ranks(layout):
    sizes = [(3, "f32"), ((4, 5), "i32"), (7, "u64")]
    first = [alloc(layout, s, dt, rank=0) for s, dt in sizes]
    second = [alloc(layout, s, dt, rank=1) for s, dt in sizes]
    assert first == second
    assert layout.offsets(0) == layout.offsets(1)
    assert all(b.offset % ALIGNMENT == 0 for b in first)


def test_alloc_mismatched_sequence_rejected(layout):
    alloc(layout, 8, "f32", rank=0)
    with pytest.raises(ValueError):
        alloc(layout, 9, "f32", rank=1)


def test_alloc_out_of_heap_names_sizes():
    layout = init_heap(1, 1024)
    with pytest.raises(OutOfHeapError) as exc:
        alloc(layout, 512, "f32")
    assert exc.value.requested == 2048
    assert exc.value.remaining == 1024


def test_alloc_rejects_overlapping_strides(layout):
    with pytest.raises(ValueError):
        alloc(layout, (4, 4), "f32", strides=(1, 1))


def test_buffer_array_views_rank_arena(layout):
    buf = alloc(layout, (2, 3), "f32", rank=0)
    alloc(layout, (2, 3), "f32", rank=1)
    buf.array(layout, 1)[...] = 7
    assert np.all(buf.array(layout, 0) == 0)
    assert np.all(buf.array(layout, 1) == 7)


def test_translate_example():
    layout = init_heap(2, 16384)
    layout.base_table = [4096, 20480]
    out = translate(HeapAddress(0, 4112), 0, 1, layout)
    assert out == HeapAddress(1, 20496)


def test_translate_round_trip(layout):
    rng = np.random.default_rng(0)
    for _ in range(200):
        off = int(rng.integers(0, layout.arena_size))
        addr = HeapAddress(0, layout.base_table[0] + off)
        there = translate(addr, 0, 1, layout)
        assert there.linear - layout.base_table[1] == off
        assert translate(there, 1, 0, layout) == addr


def test_translate_rejects_outside_arena(layout):
    with pytest.raises(OutOfHeapError):
        translate(HeapAddress(0, layout.base_table[0] + layout.arena_size), 0, 1, layout)


def test_rank_of(layout):
    assert layout.rank_of(layout.base_table[1] + 5) == 1
    with pytest.raises(OutOfHeapError):
        layout.rank_of(layout.base_table[0] - 1)


def test_reset_heap_zeroes_and_rewinds(layout):
    buf = alloc(layout, 4, "u32")
    buf.array(layout, 0)[...] = 9
    reset_heap(layout)
    assert layout.cursor == 0
    again = alloc(layout, 4, "u32")
    assert again.offset == 0
    assert np.all(again.array(layout, 0) == 0)


def test_init_heap_mapping_failure(monkeypatch):
    from app.tools import symheap
    from app.tools.errors import HeapResourceError

    def refuse(*args, **kwargs):
        raise OSError("no memory")

    monkeypatch.setattr(symheap.mmap, "mmap", refuse)
    with pytest.raises(HeapResourceError):
        init_heap(2, 4096)
