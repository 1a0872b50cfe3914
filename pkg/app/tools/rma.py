# app/tools/rma.py
# -*- coding: utf-8 -*-
"""
Односторонні операції пам'яті над симетричною купою.
- value-based: load / store (тайл значень <-> пам'ять рангу)
- buffer-based: put (local -> remote), get (remote -> local), copy (будь-який -> будь-який)
Кожна операція спершу транслює вказівник (from_rank -> to_rank), потім копіює.
Маска: вимкнені лінії не читаються і не пишуться; load повертає для них 0.
Порядок пам'яті за замовчуванням relaxed: видимість дає лише пара release/acquire з atomics.
"""

from __future__ import annotations
from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional, Tuple, Union

import numpy as np

from .symheap import DTYPES, HeapAddress, SymmetricBuffer, translate

if TYPE_CHECKING:
    from .runtime import WorldContext

IndexVec = Union[range, np.ndarray]
Bound = Tuple[int, int]

FILL_VALUE = 0


def _as_index(vec) -> IndexVec:
    if isinstance(vec, range):
        return vec
    return np.asarray(vec, dtype=np.int64).reshape(-1)


def _valid_span(vec: range, bound: Bound) -> Tuple[int, int]:
    """Позиції [i0, i1) у range step=1, чиї індекси лежать у bound."""
    lo, hi = bound
    i0 = min(max(lo - vec.start, 0), len(vec))
    i1 = max(min(hi - vec.start, len(vec)), i0)
    return i0, i1


@dataclass
class TileView:
    """
    Тайл елементів буфера: індекси рядків (rm), стовпців (rn) і маска.

    row_bound / col_bound -- напіввідкриті межі [lo, hi) для індексів;
    за замовчуванням уся протяжність буфера. Лінії поза межами вимкнені завжди.
    """
    buffer: SymmetricBuffer
    rows: IndexVec
    cols: Optional[IndexVec] = None
    mask: Optional[np.ndarray] = None
    row_bound: Optional[Bound] = None
    col_bound: Optional[Bound] = None

    def __post_init__(self):
        ndim = len(self.buffer.shape)
        if ndim not in (1, 2):
            raise ValueError(f"TileView підтримує 1-D/2-D буфери, отримано shape={self.buffer.shape}")
        if (ndim == 2) != (self.cols is not None):
            raise ValueError(f"Для буфера shape={self.buffer.shape} cols {'потрібні' if ndim == 2 else 'зайві'}")
        self.rows = _as_index(self.rows)
        if self.cols is not None:
            self.cols = _as_index(self.cols)
        self.row_bound = self._clip(self.row_bound, 0)
        if ndim == 2:
            self.col_bound = self._clip(self.col_bound, 1)
        if self.mask is not None:
            self.mask = np.asarray(self.mask, dtype=bool)
            if self.mask.shape != self.shape:
                raise ValueError(f"Маска {self.mask.shape} не збігається з тайлом {self.shape}")

    def _clip(self, bound: Optional[Bound], dim: int) -> Bound:
        extent = self.buffer.shape[dim]
        if bound is None:
            return (0, extent)
        return (max(int(bound[0]), 0), min(int(bound[1]), extent))

    @property
    def shape(self) -> Tuple[int, ...]:
        if self.cols is None:
            return (len(self.rows),)
        return (len(self.rows), len(self.cols))

    @property
    def is_empty(self) -> bool:
        return self.buffer.size == 0 or any(s == 0 for s in self.shape)

    @property
    def contiguous(self) -> bool:
        """Швидкий шлях: послідовні індекси і прямокутна маска меж."""
        ok = isinstance(self.rows, range) and self.rows.step == 1
        if self.cols is not None:
            ok = ok and isinstance(self.cols, range) and self.cols.step == 1
        return ok and self.mask is None

    def lane_mask(self) -> np.ndarray:
        rows = np.asarray(self.rows)
        m = (rows >= self.row_bound[0]) & (rows < self.row_bound[1])
        if self.cols is not None:
            cols = np.asarray(self.cols)
            cm = (cols >= self.col_bound[0]) & (cols < self.col_bound[1])
            m = m[:, None] & cm[None, :]
        if self.mask is not None:
            m = m & self.mask
        return m

    def spans(self) -> Tuple[Tuple[int, int], ...]:
        out = [_valid_span(self.rows, self.row_bound)]
        if self.cols is not None:
            out.append(_valid_span(self.cols, self.col_bound))
        return tuple(out)


def tile_view(buffer: SymmetricBuffer, rows, cols=None, mask=None, *, row_bound=None, col_bound=None) -> TileView:
    return TileView(buffer, rows, cols, mask, row_bound, col_bound)


def full_view(buffer: SymmetricBuffer) -> TileView:
    if len(buffer.shape) == 1:
        return TileView(buffer, range(buffer.shape[0]))
    return TileView(buffer, range(buffer.shape[0]), range(buffer.shape[1]))


def block_view(buffer: SymmetricBuffer, pid_m: int, pid_n: int, block_m: int, block_n: int, *,
               m_limit: int, n_limit: int, col_offset: int = 0) -> TileView:
    """
    Тайл (pid_m, pid_n) розміром block_m x block_n:
    rm = pid_m*BM + arange(BM), rn = col_offset + pid_n*BN + arange(BN),
    mask = (rm < m_limit) & (rn - col_offset < n_limit).
    """
    rm0 = pid_m * block_m
    rn0 = col_offset + pid_n * block_n
    return TileView(
        buffer,
        range(rm0, rm0 + block_m),
        range(rn0, rn0 + block_n),
        row_bound=(0, m_limit),
        col_bound=(col_offset, col_offset + n_limit),
    )


# ---------- Трансляція + доступ до пам'яті ----------
def _target_array(buffer: SymmetricBuffer, to_rank: int, from_rank: int, ctx: "WorldContext") -> np.ndarray:
    layout = ctx.layout
    local = HeapAddress(from_rank, layout.base_table[from_rank] + buffer.offset)
    remote = translate(local, from_rank, to_rank, layout)
    offset = remote.linear - layout.base_table[to_rank]
    item = buffer.itemsize
    return np.ndarray(
        buffer.shape,
        dtype=DTYPES[buffer.dtype],
        buffer=layout.region,
        offset=to_rank * layout.arena_size + offset,
        strides=tuple(s * item for s in buffer.strides),
    )


def _index_grid(view: TileView):
    rows = np.asarray(view.rows)
    if view.cols is None:
        return (rows,)
    cols = np.asarray(view.cols)
    return np.broadcast_arrays(rows[:, None], cols[None, :])


def _gather(arr: np.ndarray, view: TileView, lanes: Optional[np.ndarray] = None) -> np.ndarray:
    out = np.full(view.shape, FILL_VALUE, dtype=arr.dtype)
    if view.is_empty:
        return out
    if lanes is None and view.contiguous:
        spans = view.spans()
        if any(i1 <= i0 for i0, i1 in spans):
            return out
        dst = tuple(slice(i0, i1) for i0, i1 in spans)
        src = tuple(slice(vec[i0], vec[i0] + (i1 - i0))
                    for vec, (i0, i1) in zip((view.rows, view.cols), spans))
        out[dst] = arr[src]
        return out
    m = view.lane_mask() if lanes is None else (lanes & view.lane_mask())
    if not m.any():
        return out
    grid = _index_grid(view)
    out[m] = arr[tuple(g[m] for g in grid)]
    return out


def _scatter(arr: np.ndarray, view: TileView, values: np.ndarray, lanes: Optional[np.ndarray] = None) -> None:
    if view.is_empty:
        return
    if lanes is None and view.contiguous:
        spans = view.spans()
        if any(i1 <= i0 for i0, i1 in spans):
            return
        src = tuple(slice(i0, i1) for i0, i1 in spans)
        dst = tuple(slice(vec[i0], vec[i0] + (i1 - i0))
                    for vec, (i0, i1) in zip((view.rows, view.cols), spans))
        arr[dst] = values[src]
        return
    m = view.lane_mask() if lanes is None else (lanes & view.lane_mask())
    if not m.any():
        return
    grid = _index_grid(view)
    arr[tuple(g[m] for g in grid)] = values[m]


def _joint_lanes(src: TileView, dst: TileView) -> Optional[np.ndarray]:
    """None якщо обидва тайли мають однакову прямокутну валідну область (швидкий шлях)."""
    if src.shape != dst.shape:
        raise ValueError(f"Форми тайлів не збігаються: {src.shape} проти {dst.shape}")
    if src.buffer.dtype != dst.buffer.dtype:
        raise ValueError(f"Типи буферів не збігаються: {src.buffer.dtype} проти {dst.buffer.dtype}")
    if src.contiguous and dst.contiguous and src.spans() == dst.spans():
        return None
    return src.lane_mask() & dst.lane_mask()


# ---------- value-based ----------
def load(view: TileView, to_rank: int, from_rank: int, ctx: "WorldContext") -> np.ndarray:
    """Читає тайл з арени to_rank (вказівник з арени from_rank); вимкнені лінії = 0."""
    if view.is_empty:
        return np.zeros(view.shape, dtype=DTYPES[view.buffer.dtype])
    arr = _target_array(view.buffer, to_rank, from_rank, ctx)
    return _gather(arr, view)


def store(view: TileView, values, to_rank: int, from_rank: int, ctx: "WorldContext") -> None:
    """Пише тайл значень в арену to_rank; вимкнені лінії не змінюються."""
    if view.is_empty:
        return
    vals = np.broadcast_to(np.asarray(values, dtype=DTYPES[view.buffer.dtype]), view.shape)
    arr = _target_array(view.buffer, to_rank, from_rank, ctx)
    with ctx.recorder.transfer(from_rank, to_rank):
        _scatter(arr, view, vals)


# ---------- buffer-based ----------
def put(src_view: TileView, dst_view: TileView, from_rank: int, to_rank: int, ctx: "WorldContext") -> None:
    """Копіює src (локальний, from_rank) у dst на to_rank."""
    lanes = _joint_lanes(src_view, dst_view)
    if src_view.is_empty:
        return
    src = _target_array(src_view.buffer, from_rank, from_rank, ctx)
    dst = _target_array(dst_view.buffer, to_rank, from_rank, ctx)
    data = _gather(src, src_view, lanes)
    with ctx.recorder.transfer(from_rank, to_rank):
        _scatter(dst, dst_view, data, lanes)


def get(src_view: TileView, dst_view: TileView, from_remote_rank: int, local_rank: int, ctx: "WorldContext") -> None:
    """Копіює src з арени from_remote_rank у локальний dst на local_rank."""
    lanes = _joint_lanes(src_view, dst_view)
    if src_view.is_empty:
        return
    src = _target_array(src_view.buffer, from_remote_rank, local_rank, ctx)
    dst = _target_array(dst_view.buffer, local_rank, local_rank, ctx)
    with ctx.recorder.transfer(from_remote_rank, local_rank):
        data = _gather(src, src_view, lanes)
    _scatter(dst, dst_view, data, lanes)


def copy(src_view: TileView, dst_view: TileView, src_rank: int, dst_rank: int, ctx: "WorldContext") -> None:
    """Копіює між будь-якими двома рангами; викликач -- ctx.rank, обидва кінці транслюються."""
    lanes = _joint_lanes(src_view, dst_view)
    if src_view.is_empty:
        return
    src = _target_array(src_view.buffer, src_rank, ctx.rank, ctx)
    dst = _target_array(dst_view.buffer, dst_rank, ctx.rank, ctx)
    data = _gather(src, src_view, lanes)
    with ctx.recorder.transfer(src_rank, dst_rank):
        _scatter(dst, dst_view, data, lanes)
