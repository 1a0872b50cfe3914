# app/tools/trace.py
# -*- coding: utf-8 -*-
"""
Легкий запис подій (trace) для таймлайну ядер.
- Події: ранг, pid, тайл, фаза ('compute' | 'comm' | 'signal' | 'wait' | ...), час початку/кінця
- Хук штучної затримки комунікації: кожен напрямлений канал (src, dst)
  одночасно несе лише одну затриману передачу
- Зведення у pandas.DataFrame для розбивки GEMM / комунікація
"""

from __future__ import annotations
import threading
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, List, Optional, Tuple

import pandas as pd

try:
    from logger import logger
except Exception:
    import logging
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(levelname)s: %(message)s")
    logger = logging.getLogger("trace")

EVENT_COLUMNS = ["rank", "pid", "tile_id", "phase", "start", "end", "peer", "attrs"]


@dataclass
class TraceEvent:
    rank: int
    pid: int
    tile_id: int
    phase: str
    start: float
    end: float
    peer: Optional[int] = None
    attrs: Dict[str, Any] = field(default_factory=dict)


class TraceRecorder:
    """
    Записувач подій + точка ін'єкції затримок.

    comm_delay / compute_delay задаються в секундах. Затримки діють навіть
    коли enabled=False: вимкнено лише збереження подій.
    """

    def __init__(self, enabled: bool = False, comm_delay: float = 0.0, compute_delay: float = 0.0,
                 trace_atomics: bool = False):
        if comm_delay < 0 or compute_delay < 0:
            raise ValueError("Затримки не можуть бути від'ємними")
        self.enabled = enabled
        self.trace_atomics = trace_atomics
        self.comm_delay = float(comm_delay)
        self.compute_delay = float(compute_delay)
        self.events: List[TraceEvent] = []
        self._lock = threading.Lock()
        self._links: Dict[Tuple[int, int], threading.Lock] = {}

    @staticmethod
    def now() -> float:
        return time.perf_counter()

    def clear(self) -> None:
        with self._lock:
            self.events.clear()

    def record(self, rank: int, phase: str, start: float, end: float, *,
               pid: int = -1, tile_id: int = -1, peer: Optional[int] = None, **attrs: Any) -> None:
        if not self.enabled:
            return
        ev = TraceEvent(rank, pid, tile_id, phase, start, end, peer, attrs)
        with self._lock:
            self.events.append(ev)

    @contextmanager
    def span(self, rank: int, phase: str, *, pid: int = -1, tile_id: int = -1,
             peer: Optional[int] = None, **attrs: Any) -> Iterator[None]:
        start = self.now()
        try:
            yield
        finally:
            self.record(rank, phase, start, self.now(), pid=pid, tile_id=tile_id, peer=peer, **attrs)

    def _link(self, src: int, dst: int) -> threading.Lock:
        key = (src, dst)
        lock = self._links.get(key)
        if lock is None:
            with self._lock:
                lock = self._links.setdefault(key, threading.Lock())
        return lock

    @contextmanager
    def transfer(self, src: int, dst: int) -> Iterator[None]:
        """Обгортка над put/store: тримає канал src->dst протягом comm_delay."""
        if self.comm_delay <= 0 or src == dst:
            yield
            return
        with self._link(src, dst):
            time.sleep(self.comm_delay)
            yield

    def compute_pause(self) -> None:
        if self.compute_delay > 0:
            time.sleep(self.compute_delay)

    # ---------- Аналіз ----------
    def to_frame(self) -> pd.DataFrame:
        with self._lock:
            rows = [ev.__dict__.copy() for ev in self.events]
        return pd.DataFrame(rows, columns=EVENT_COLUMNS)

    def phase_window(self, phase: str, since: Optional[float] = None) -> Tuple[float, float]:
        """(min start, max end) подій фази; (nan, nan) якщо подій немає."""
        df = self.to_frame()
        df = df[df["phase"] == phase]
        if since is not None:
            df = df[df["start"] >= since]
        if df.empty:
            return float("nan"), float("nan")
        return float(df["start"].min()), float(df["end"].max())

    def phase_span(self, phase: str, since: Optional[float] = None) -> float:
        start, end = self.phase_window(phase, since)
        if start != start:
            return 0.0
        return end - start

    def tile_summary(self) -> pd.DataFrame:
        """
        По тайлу на (rank, tile_id): compute_end, comm_start, comm_end, кількість передач.
        """
        df = self.to_frame()
        df = df[df["tile_id"] >= 0]
        if df.empty:
            return pd.DataFrame(columns=["rank", "tile_id", "compute_start", "compute_end",
                                         "comm_start", "comm_end", "transfers"])
        comp = df[df["phase"] == "compute"].groupby(["rank", "tile_id"]).agg(
            compute_start=("start", "min"), compute_end=("end", "max"))
        comm = df[df["phase"] == "comm"].groupby(["rank", "tile_id"]).agg(
            comm_start=("start", "min"), comm_end=("end", "max"), transfers=("phase", "size"))
        out = comp.join(comm, how="outer").reset_index()
        out["transfers"] = out["transfers"].fillna(0).astype(int)
        return out
