# app/tools/symheap.py
# -*- coding: utf-8 -*-
"""
Симетрична купа (symmetric heap)
- Одна змаплена область пам'яті, поділена на арени по одній на ранг
- Колективний bump-алокатор: однакова послідовність (offset, size) на всіх рангах
- Трансляція адрес між рангами: to_base + (linear - from_base)
"""

from __future__ import annotations
import mmap
import threading
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import HeapResourceError, OutOfHeapError

try:
    from logger import logger
except Exception:
    import logging
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(levelname)s: %(message)s")
    logger = logging.getLogger("symheap")

ALIGNMENT = 256
CELL_LOCK_STRIPES = 4096

DTYPES: Dict[str, np.dtype] = {
    "f32": np.dtype(np.float32),
    "i32": np.dtype(np.int32),
    "u32": np.dtype(np.uint32),
    "u64": np.dtype(np.uint64),
}
NP2NAME = {v: k for k, v in DTYPES.items()}

Shape = Union[int, Sequence[int]]


def align_up(value: int, alignment: int = ALIGNMENT) -> int:
    return (value + alignment - 1) // alignment * alignment


def dtype_name(dtype) -> str:
    """Нормалізує 'f32' / np.float32 / np.dtype до короткої назви з DTYPES."""
    if isinstance(dtype, str) and dtype in DTYPES:
        return dtype
    try:
        name = NP2NAME.get(np.dtype(dtype))
    except TypeError:
        name = None
    if name is None:
        raise ValueError(f"Непідтримуваний dtype {dtype!r}; дозволено: {sorted(DTYPES)}")
    return name


def _norm_shape(shape: Shape) -> Tuple[int, ...]:
    if isinstance(shape, (int, np.integer)):
        shape = (int(shape),)
    shape = tuple(int(s) for s in shape)
    if any(s < 0 for s in shape):
        raise ValueError(f"Від'ємний розмір у shape={shape}")
    return shape


def row_major_strides(shape: Tuple[int, ...]) -> Tuple[int, ...]:
    strides = []
    acc = 1
    for extent in reversed(shape):
        strides.append(acc)
        acc *= max(extent, 1)
    return tuple(reversed(strides))


def _check_non_overlapping(shape: Tuple[int, ...], strides: Tuple[int, ...]) -> None:
    if len(shape) != len(strides):
        raise ValueError(f"shape={shape} і strides={strides} мають різну розмірність")
    if any(s <= 0 for s in strides):
        raise ValueError(f"strides мають бути додатні: {strides}")
    dims = sorted((st, ex) for st, ex in zip(strides, shape) if ex > 1)
    reach = 1
    for st, ex in dims:
        if st < reach:
            raise ValueError(f"strides={strides} перекриваються для shape={shape}")
        reach = st * ex


def _span_elems(shape: Tuple[int, ...], strides: Tuple[int, ...]) -> int:
    if any(s == 0 for s in shape):
        return 0
    return sum((ex - 1) * st for ex, st in zip(shape, strides)) + 1


@dataclass(frozen=True)
class HeapAddress:
    rank: int
    linear: int


@dataclass(frozen=True)
class SymmetricBuffer:
    """Типізований вигляд у симетричну купу; той самий offset на кожному ранзі."""
    offset: int
    shape: Tuple[int, ...]
    strides: Tuple[int, ...]
    dtype: str
    len_bytes: int

    @property
    def itemsize(self) -> int:
        return DTYPES[self.dtype].itemsize

    @property
    def size(self) -> int:
        n = 1
        for s in self.shape:
            n *= s
        return n

    @property
    def is_contiguous(self) -> bool:
        return self.strides == row_major_strides(self.shape)

    def element_index(self, index: Union[int, Sequence[int]]) -> int:
        """Лінійний номер елемента (у елементах від початку буфера)."""
        if isinstance(index, (int, np.integer)):
            idx = (int(index),) if len(self.shape) == 1 else np.unravel_index(int(index), self.shape)
        else:
            idx = tuple(int(i) for i in index)
        if len(idx) != len(self.shape) or any(not 0 <= i < e for i, e in zip(idx, self.shape)):
            raise IndexError(f"Індекс {index} поза межами shape={self.shape}")
        return sum(int(i) * st for i, st in zip(idx, self.strides))

    def address(self, layout: "HeapLayout", rank: int, index: Union[int, Sequence[int]] = 0) -> HeapAddress:
        byte_off = self.offset + (self.element_index(index) * self.itemsize if self.size else 0)
        return HeapAddress(rank, layout.base_table[rank] + byte_off)

    def array(self, layout: "HeapLayout", rank: int) -> np.ndarray:
        """numpy-вигляд буфера в арені рангу rank (без копіювання)."""
        layout.check_rank(rank)
        item = self.itemsize
        return np.ndarray(
            self.shape,
            dtype=DTYPES[self.dtype],
            buffer=layout.region,
            offset=rank * layout.arena_size + self.offset,
            strides=tuple(s * item for s in self.strides),
        )


@dataclass(frozen=True)
class _AllocRecord:
    shape: Tuple[int, ...]
    strides: Tuple[int, ...]
    dtype: str
    buffer: SymmetricBuffer


class HeapLayout:
    """
    Арени всіх рангів + спільний курсор алокації.

    base_table[r] -- лінійна адреса початку арени рангу r.
    Курсор колективний: k-й виклик alloc() від будь-якого рангу повертає
    той самий SymmetricBuffer.
    """

    def __init__(self, world_size: int, arena_size: int, mapping: mmap.mmap):
        self.world_size = world_size
        self.arena_size = arena_size
        self._mmap = mapping
        self.region = np.frombuffer(mapping, dtype=np.uint8)
        region_base = int(self.region.ctypes.data)
        self.base_table: List[int] = [region_base + r * arena_size for r in range(world_size)]
        self._lock = threading.Lock()
        self._trace: List[_AllocRecord] = []
        self._calls: List[int] = [0] * world_size
        self.cell_locks = [threading.Lock() for _ in range(CELL_LOCK_STRIPES)]

    @property
    def cursor(self) -> int:
        with self._lock:
            if not self._trace:
                return 0
            last = self._trace[-1].buffer
            return last.offset + last.len_bytes

    def heap_bases_array(self) -> np.ndarray:
        return np.asarray(self.base_table, dtype=np.uint64)

    def check_rank(self, rank: int) -> None:
        if not 0 <= int(rank) < self.world_size:
            raise ValueError(f"rank={rank} поза межами світу розміром {self.world_size}")

    def arena(self, rank: int) -> np.ndarray:
        self.check_rank(rank)
        start = rank * self.arena_size
        return self.region[start:start + self.arena_size]

    def rank_of(self, linear: int) -> int:
        """Ранг, якому належить лінійна адреса; OutOfHeapError якщо жодному."""
        for rank, base in enumerate(self.base_table):
            if base <= linear < base + self.arena_size:
                return rank
        raise OutOfHeapError(f"Адреса {linear:#x} не належить жодній арені")

    def global_offset(self, addr: HeapAddress) -> int:
        """Зміщення в байтах від початку всієї області (для індексації region)."""
        self.check_rank(addr.rank)
        local = addr.linear - self.base_table[addr.rank]
        if not 0 <= local < self.arena_size:
            raise OutOfHeapError(
                f"Адреса {addr.linear:#x} поза ареною рангу {addr.rank} "
                f"[{self.base_table[addr.rank]:#x}, +{self.arena_size})"
            )
        return addr.rank * self.arena_size + local

    def remaining(self) -> int:
        return self.arena_size - self.cursor

    def offsets(self, rank: int) -> List[int]:
        """Послідовність offset-ів, яку вже отримав ранг rank."""
        with self._lock:
            return [rec.buffer.offset for rec in self._trace[: self._calls[rank]]]


def init_heap(world_size: int, arena_size: int) -> HeapLayout:
    """
    Мапить і обнуляє арени для всіх рангів.

    Args:
        world_size: кількість рангів (>= 1)
        arena_size: розмір арени одного рангу в байтах, кратний 256

    Returns:
        HeapLayout з заповненою base_table і курсором 0
    """
    if world_size < 1:
        raise ValueError(f"world_size має бути >= 1, отримано {world_size}")
    if arena_size <= 0 or arena_size % ALIGNMENT:
        raise ValueError(f"arena_size має бути > 0 і кратним {ALIGNMENT}, отримано {arena_size}")

    total = world_size * arena_size
    try:
        # анонімний мапінг уже заповнений нулями
        mapping = mmap.mmap(-1, total)
    except (OSError, ValueError, OverflowError, MemoryError) as e:
        raise HeapResourceError(f"Не вдалося змапити {total} байт для {world_size} арен: {e}") from e

    layout = HeapLayout(world_size, arena_size, mapping)
    logger.info(f"📦 Симетрична купа: world={world_size}, arena={arena_size} B, bases={[hex(b) for b in layout.base_table]}")
    return layout


def alloc(
    layout: HeapLayout,
    shape: Shape,
    dtype="f32",
    *,
    strides: Optional[Sequence[int]] = None,
    rank: int = 0,
) -> SymmetricBuffer:
    """
    Колективна алокація. Усі ранги викликають у тому самому порядку;
    k-й виклик кожного рангу отримує той самий буфер.
    """
    layout.check_rank(rank)
    shape = _norm_shape(shape)
    name = dtype_name(dtype)
    strides = tuple(int(s) for s in strides) if strides is not None else row_major_strides(shape)
    _check_non_overlapping(shape, strides)

    with layout._lock:
        k = layout._calls[rank]
        if k < len(layout._trace):
            rec = layout._trace[k]
            if (rec.shape, rec.strides, rec.dtype) != (shape, strides, name):
                raise ValueError(
                    f"Несиметрична колективна алокація #{k} на ранзі {rank}: "
                    f"{shape}/{name} проти {rec.shape}/{rec.dtype}"
                )
            layout._calls[rank] += 1
            return rec.buffer

        cursor = 0
        if layout._trace:
            last = layout._trace[-1].buffer
            cursor = last.offset + last.len_bytes
        offset = align_up(cursor)
        len_bytes = _span_elems(shape, strides) * DTYPES[name].itemsize
        if offset + len_bytes > layout.arena_size:
            remaining = layout.arena_size - cursor
            raise OutOfHeapError(
                f"Купа вичерпана: запитано {len_bytes} B (offset {offset}), залишилось {remaining} B",
                requested=len_bytes,
                remaining=remaining,
            )
        buf = SymmetricBuffer(offset=offset, shape=shape, strides=strides, dtype=name, len_bytes=len_bytes)
        layout._trace.append(_AllocRecord(shape, strides, name, buf))
        layout._calls[rank] += 1

    logger.debug(f"📦 alloc #{k}: shape={shape} {name} -> offset={offset}, {len_bytes} B")
    return buf


def reset_heap(layout: HeapLayout) -> None:
    """Обнуляє використану частину арен і забуває історію алокацій. Лише коли всі ранги в спокої."""
    with layout._lock:
        used = 0
        if layout._trace:
            last = layout._trace[-1].buffer
            used = last.offset + last.len_bytes
        for rank in range(layout.world_size):
            start = rank * layout.arena_size
            layout.region[start:start + used] = 0
        layout._trace.clear()
        layout._calls = [0] * layout.world_size
    logger.info("🧹 Симетричну купу скинуто")


def translate(addr: HeapAddress, from_rank: int, to_rank: int, layout: HeapLayout) -> HeapAddress:
    """
    Переносить адресу з арени from_rank у відповідну адресу арени to_rank:
    to_base + (linear - from_base). Адреса поза ареною -> OutOfHeapError.
    """
    layout.check_rank(from_rank)
    layout.check_rank(to_rank)
    from_base = layout.base_table[from_rank]
    offset = addr.linear - from_base
    if not 0 <= offset < layout.arena_size:
        raise OutOfHeapError(
            f"Адреса {addr.linear:#x} поза ареною рангу {from_rank} "
            f"[{from_base:#x}, +{layout.arena_size})"
        )
    return HeapAddress(to_rank, layout.base_table[to_rank] + offset)
