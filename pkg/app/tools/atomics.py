# app/tools/atomics.py
# -*- coding: utf-8 -*-
"""
Атомарні операції над комірками симетричної купи зі scope та порядком пам'яті.

Атомарність комірки емулюється смугастими локами (layout.cell_locks),
індексованими за 8-байтовим словом; захоплення/звільнення локу є бар'єром
пам'яті, тож усі порядки фактично зведені до найсильнішого.
Усі scope (block/gpu/sys) мапляться на видимість у межах процесу.
"""

from __future__ import annotations
import math
from enum import Enum, IntEnum
from typing import TYPE_CHECKING, Tuple, Union

import numpy as np

from .errors import AlignmentError, OutOfHeapError
from .symheap import DTYPES, HeapAddress, HeapLayout, SymmetricBuffer, translate

if TYPE_CHECKING:
    from .runtime import WorldContext

Scalar = Union[int, float]


class MemOrder(str, Enum):
    RELAXED = "relaxed"
    ACQUIRE = "acquire"
    RELEASE = "release"
    ACQ_REL = "acq_rel"
    SEQ_CST = "seq_cst"


class Scope(IntEnum):
    BLOCK = 0
    GPU = 1
    SYS = 2


class RmwKind(str, Enum):
    ADD = "add"
    AND = "and"
    OR = "or"
    XOR = "xor"
    MIN = "min"
    MAX = "max"
    XCHG = "xchg"


_BITWISE = (RmwKind.AND, RmwKind.OR, RmwKind.XOR)


def parse_order(order: Union[str, MemOrder], op: str = "rmw") -> MemOrder:
    """
    Валідує порядок для типу операції ('rmw' | 'load' | 'store').
    seq_cst приймається і зводиться до найсильнішого порядку для цієї операції.
    """
    try:
        order = MemOrder(order)
    except ValueError:
        raise ValueError(f"Невідомий порядок пам'яті {order!r}; дозволено: {[o.value for o in MemOrder]}")
    if op == "load" and order in (MemOrder.RELEASE, MemOrder.ACQ_REL):
        raise ValueError(f"Порядок {order.value} недопустимий для load")
    if op == "store" and order in (MemOrder.ACQUIRE, MemOrder.ACQ_REL):
        raise ValueError(f"Порядок {order.value} недопустимий для store")
    if order is MemOrder.SEQ_CST:
        return {"load": MemOrder.ACQUIRE, "store": MemOrder.RELEASE}.get(op, MemOrder.ACQ_REL)
    return order


def parse_scope(scope: Union[str, int, Scope]) -> Scope:
    if isinstance(scope, Scope):
        return scope
    if isinstance(scope, str):
        try:
            return Scope[scope.upper()]
        except KeyError:
            raise ValueError(f"Невідомий scope {scope!r}; дозволено: block, gpu, sys")
    return Scope(int(scope))


def _coerce(value: Scalar, dtype: str) -> np.generic:
    dt = DTYPES[dtype]
    if dtype == "f32":
        return np.float32(float(value))
    if isinstance(value, (float, np.floating)):
        if not float(value).is_integer():
            raise ValueError(f"Операнд {value} не відповідає цілому типу комірки {dtype}")
    iv = int(value)
    bits = dt.itemsize * 8
    if dt.kind == "u":
        iv &= (1 << bits) - 1
    else:
        half = 1 << (bits - 1)
        iv = (iv + half) % (1 << bits) - half
    return dt.type(iv)


def _same(a: np.generic, b: np.generic, dtype: str) -> bool:
    # f32 порівнюємо побітово: -0.0 != 0.0, NaN == NaN з тим самим payload
    if dtype == "f32":
        return np.float32(a).view(np.uint32) == np.float32(b).view(np.uint32)
    return a == b


def _cell(layout: HeapLayout, addr: HeapAddress, dtype: str) -> Tuple[np.ndarray, object]:
    if dtype not in DTYPES:
        raise ValueError(f"Непідтримуваний dtype {dtype!r}")
    item = DTYPES[dtype].itemsize
    g = layout.global_offset(addr)
    if g % item:
        raise AlignmentError(f"Комірка {addr.linear:#x} не вирівняна на {item} B для {dtype}")
    if g + item > (addr.rank + 1) * layout.arena_size:
        raise OutOfHeapError(f"Комірка {addr.linear:#x} виходить за межі арени рангу {addr.rank}")
    view = layout.region[g:g + item].view(DTYPES[dtype])
    lock = layout.cell_locks[(g >> 3) % len(layout.cell_locks)]
    return view, lock


def _apply(kind: RmwKind, old: np.generic, operand: np.generic, dtype: str) -> np.generic:
    if kind is RmwKind.XCHG:
        return operand
    if dtype == "f32":
        if kind in _BITWISE:
            raise ValueError(f"Бітова операція {kind.value} не визначена для f32")
        if kind is RmwKind.ADD:
            return np.float32(old + operand)
        return min(old, operand) if kind is RmwKind.MIN else max(old, operand)
    o, v = int(old), int(operand)
    result = {
        RmwKind.ADD: lambda: o + v,
        RmwKind.AND: lambda: o & v,
        RmwKind.OR: lambda: o | v,
        RmwKind.XOR: lambda: o ^ v,
        RmwKind.MIN: lambda: min(o, v),
        RmwKind.MAX: lambda: max(o, v),
    }[kind]()
    return _coerce(result, dtype)


def _trace(ctx, addr: HeapAddress, what: str, order: MemOrder, scope: Scope, dtype: str, start: float) -> None:
    rec = getattr(ctx, "recorder", None)
    if rec is not None and rec.enabled and rec.trace_atomics:
        rec.record(ctx.rank, "atomic", start, rec.now(), peer=addr.rank,
                   op=what, order=order.value, scope=scope.name.lower(), dtype=dtype)


def atomic_load(addr: HeapAddress, order="acquire", scope="gpu", ctx: "WorldContext" = None, *, dtype: str = "u32") -> Scalar:
    order = parse_order(order, "load")
    scope = parse_scope(scope)
    cell, lock = _cell(ctx.layout, addr, dtype)
    with lock:
        value = cell[0]
    return value.item()


def atomic_store(addr: HeapAddress, value: Scalar, order="release", scope="gpu", ctx: "WorldContext" = None, *, dtype: str = "u32") -> None:
    order = parse_order(order, "store")
    scope = parse_scope(scope)
    v = _coerce(value, dtype)
    cell, lock = _cell(ctx.layout, addr, dtype)
    with lock:
        cell[0] = v


def atomic_cas(addr: HeapAddress, expected: Scalar, desired: Scalar, order="acq_rel", scope="gpu",
               ctx: "WorldContext" = None, *, dtype: str = "u32") -> Scalar:
    """
    Compare-and-swap: якщо комірка == expected, записує desired.
    Завжди повертає значення, що було до операції.
    """
    order = parse_order(order, "rmw")
    scope = parse_scope(scope)
    exp = _coerce(expected, dtype)
    des = _coerce(desired, dtype)
    cell, lock = _cell(ctx.layout, addr, dtype)
    start = 0.0
    if ctx.recorder.enabled and ctx.recorder.trace_atomics:
        start = ctx.recorder.now()
    with lock:
        old = cell[0]
        if _same(old, exp, dtype):
            cell[0] = des
    _trace(ctx, addr, "cas", order, scope, dtype, start)
    return old.item()


def atomic_rmw(kind: Union[str, RmwKind], addr: HeapAddress, operand: Scalar, order="relaxed", scope="gpu",
               ctx: "WorldContext" = None, *, dtype: str = "u32") -> Scalar:
    """
    Атомарний read-modify-write. Повертає попереднє значення комірки.

    Args:
        kind: add | and | or | xor | min | max | xchg
        addr: адреса комірки (вже в арені цільового рангу)
        operand: скаляр того ж типу, що й комірка
        order, scope: семантика пам'яті (валідуються і записуються в trace)
        dtype: тип комірки (f32 | i32 | u32 | u64)
    """
    kind = RmwKind(kind)
    order = parse_order(order, "rmw")
    scope = parse_scope(scope)
    op = _coerce(operand, dtype)
    if kind in (RmwKind.MIN, RmwKind.MAX) and dtype == "f32":
        if math.isnan(float(op)):
            raise ValueError(f"NaN операнд недопустимий для atomic {kind.value}")
        return _f32_minmax(kind, addr, op, order, scope, ctx)
    if dtype == "f32" and kind in _BITWISE:
        raise ValueError(f"Бітова операція {kind.value} не визначена для f32")
    cell, lock = _cell(ctx.layout, addr, dtype)
    start = 0.0
    if ctx.recorder.enabled and ctx.recorder.trace_atomics:
        start = ctx.recorder.now()
    with lock:
        old = cell[0]
        cell[0] = _apply(kind, old, op, dtype)
    _trace(ctx, addr, kind.value, order, scope, dtype, start)
    return old.item()


def _f32_minmax(kind: RmwKind, addr: HeapAddress, op: np.float32, order: MemOrder, scope: Scope, ctx) -> float:
    # CAS-цикл: прогрес залежить лише від конкурентів, що змінюють комірку
    while True:
        cur = np.float32(atomic_load(addr, "relaxed", scope, ctx, dtype="f32"))
        new = _apply(kind, cur, op, "f32")
        if _same(new, cur, "f32"):
            return float(cur)
        prev = atomic_cas(addr, cur, new, order, scope, ctx, dtype="f32")
        if _same(np.float32(prev), cur, "f32"):
            return float(prev)


# ---------- Обгортки у стилі device API: (buffer, index) на from_rank -> to_rank ----------
def remote_cell(buffer: SymmetricBuffer, index, to_rank: int, from_rank: int, ctx: "WorldContext") -> HeapAddress:
    """Адреса елемента buffer[index] на from_rank, транслювана в арену to_rank."""
    local = buffer.address(ctx.layout, from_rank, index)
    return translate(local, from_rank, to_rank, ctx.layout)


def _rmw_on(kind: RmwKind):
    def op(buffer: SymmetricBuffer, index, value: Scalar, to_rank: int, from_rank: int,
           ctx: "WorldContext", order="relaxed", scope="gpu") -> Scalar:
        addr = remote_cell(buffer, index, to_rank, from_rank, ctx)
        return atomic_rmw(kind, addr, value, order, scope, ctx, dtype=buffer.dtype)
    op.__name__ = f"atomic_{kind.value}"
    op.__doc__ = f"Атомарний {kind.value} над buffer[index] рангу to_rank; повертає попереднє значення."
    return op


atomic_add = _rmw_on(RmwKind.ADD)
atomic_xchg = _rmw_on(RmwKind.XCHG)
atomic_and = _rmw_on(RmwKind.AND)
atomic_or = _rmw_on(RmwKind.OR)
atomic_xor = _rmw_on(RmwKind.XOR)
atomic_min = _rmw_on(RmwKind.MIN)
atomic_max = _rmw_on(RmwKind.MAX)
