# app/tools/errors.py
# -*- coding: utf-8 -*-
"""
Типи помилок рантайму симетричної пам'яті.
Помилки аргументів лишаються звичайними ValueError.
"""

from __future__ import annotations
from typing import Dict, List, Optional


class HeapResourceError(RuntimeError):
    """Не вдалося змапити арени симетричної купи."""


class OutOfHeapError(RuntimeError):
    """Купа вичерпана або адреса виходить за межі арени."""

    def __init__(self, message: str, requested: Optional[int] = None, remaining: Optional[int] = None):
        super().__init__(message)
        self.requested = requested
        self.remaining = remaining


class AlignmentError(ValueError):
    """Атомарна комірка не вирівняна за розміром свого типу."""


class BarrierTimeoutError(TimeoutError):
    def __init__(self, message: str, absent_ranks: List[int]):
        super().__init__(message)
        self.absent_ranks = list(absent_ranks)


class DeadlockError(TimeoutError):
    """Споживач не дочекався готовності тайлу. lock_states: tile_id -> значення прапорця."""

    def __init__(self, message: str, lock_states: Dict[int, int]):
        super().__init__(message)
        self.lock_states = dict(lock_states)


class DataCorruptionError(RuntimeError):
    """Перевірка payload після вимірювання не збіглася побітово."""
