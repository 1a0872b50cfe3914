# app/tools/runtime.py
# -*- coding: utf-8 -*-
"""
Рантайм світу рангів (host API)
- init(): купа + контексти рангів + обмін базами (аналог обміну IPC-хендлами)
- barrier / broadcast / all_gather: колективні операції з таймаутом
- тензорні конструктори у симетричній купі (zeros, ones, arange, rand, ...)
- launch / launch_concurrent: персистентна сітка pid-ів на num_cu слотах рангу;
  однаковий stream_tag серіалізує запуски, бюджети слотів -- жорстке резервування
"""

from __future__ import annotations
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import BarrierTimeoutError
from .symheap import (DTYPES, HeapLayout, Shape, SymmetricBuffer, alloc, init_heap)
from .trace import TraceRecorder

try:
    from logger import logger
except Exception:
    import logging
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(levelname)s: %(message)s")
    logger = logging.getLogger("runtime")

DEFAULT_TIMEOUT_S = 30.0


class World:
    """Спільний стан світу: купа, рандеву для колективів, trace."""

    def __init__(self, layout: HeapLayout, num_cu: int, timeout_s: float, recorder: TraceRecorder):
        self.layout = layout
        self.world_size = layout.world_size
        self.num_cu = num_cu
        self.timeout_s = timeout_s
        self.recorder = recorder
        self._cond = threading.Condition()
        self._arrived: set = set()
        self._generation = 0
        self._box: List[Any] = [None] * self.world_size

    def rendezvous(self, rank: int, timeout: Optional[float] = None) -> None:
        timeout = self.timeout_s if timeout is None else timeout
        with self._cond:
            gen = self._generation
            self._arrived.add(rank)
            if len(self._arrived) == self.world_size:
                self._arrived = set()
                self._generation += 1
                self._cond.notify_all()
                return
            deadline = time.monotonic() + timeout
            while self._generation == gen:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    absent = sorted(set(range(self.world_size)) - self._arrived)
                    self._arrived.discard(rank)
                    raise BarrierTimeoutError(
                        f"Бар'єр: ранг {rank} чекав {timeout:.1f}s, відсутні ранги {absent}", absent)
                self._cond.wait(remaining)

    def exchange(self, rank: int, value: Any, timeout: Optional[float] = None) -> List[Any]:
        """Кожен ранг кладе значення; всі отримують список значень усіх рангів."""
        self._box[rank] = value
        self.rendezvous(rank, timeout)
        values = list(self._box)
        self.rendezvous(rank, timeout)
        return values


@dataclass
class GridLaunch:
    """
    grid_size: кількість pid-ів; kernel(pid, *args) -- тіло workgroup-а;
    slots: бюджет слотів (за замовчуванням min(grid_size, num_cu)).
    """
    grid_size: int
    kernel: Callable[..., None]
    args: Tuple[Any, ...] = ()
    stream_tag: str = "default"
    slots: Optional[int] = None


class LaunchHandle:
    def __init__(self, owner_rank: int, grid: GridLaunch):
        self.owner_rank = owner_rank
        self.grid = grid
        self.start: Optional[float] = None
        self.end: Optional[float] = None
        self.error: Optional[BaseException] = None
        self._done = threading.Event()

    def done(self) -> bool:
        return self._done.is_set()

    def wait(self, timeout: Optional[float] = None, ctx: Optional["WorldContext"] = None) -> None:
        if ctx is not None and ctx.rank != self.owner_rank:
            raise ValueError(f"Запуск належить рангу {self.owner_rank}, чекає ранг {ctx.rank}")
        if not self._done.wait(timeout):
            raise TimeoutError(f"Запуск '{self.grid.stream_tag}' рангу {self.owner_rank} не завершився за {timeout}s")
        if self.error is not None:
            raise self.error


@dataclass
class WorldContext:
    rank: int
    world_size: int
    layout: HeapLayout
    num_cu: int
    world: World = field(repr=False)
    _pool: ThreadPoolExecutor = field(init=False, repr=False)
    _free_cond: threading.Condition = field(init=False, repr=False)
    _free: int = field(init=False, repr=False)
    _streams: Dict[str, LaunchHandle] = field(init=False, repr=False)
    _pending: List[LaunchHandle] = field(init=False, repr=False)

    def __post_init__(self):
        if not 0 <= self.rank < self.world_size:
            raise ValueError(f"rank={self.rank} поза [0, {self.world_size})")
        if self.num_cu < 1:
            raise ValueError(f"num_cu має бути >= 1, отримано {self.num_cu}")
        self._pool = ThreadPoolExecutor(max_workers=self.num_cu, thread_name_prefix=f"rank{self.rank}-cu")
        self._free_cond = threading.Condition()
        self._free = self.num_cu
        self._streams = {}
        self._pending = []

    @property
    def recorder(self) -> TraceRecorder:
        return self.world.recorder

    def get_rank(self) -> int:
        return self.rank

    def get_num_ranks(self) -> int:
        return self.world_size

    def get_heap_bases(self) -> np.ndarray:
        return self.layout.heap_bases_array()


# ---------- Життєвий цикл ----------
def init(world_size: int, arena_size: int, num_cu: int, *, timeout_s: float = DEFAULT_TIMEOUT_S,
         recorder: Optional[TraceRecorder] = None) -> List[WorldContext]:
    """
    Піднімає світ: мапить купу, створює контекст на кожен ранг і
    обмінюється базами арен через all_gather.
    """
    if num_cu < 1:
        raise ValueError(f"num_cu має бути >= 1, отримано {num_cu}")
    layout = init_heap(world_size, arena_size)
    world = World(layout, num_cu, timeout_s, recorder or TraceRecorder())
    contexts = [WorldContext(r, world_size, layout, num_cu, world) for r in range(world_size)]

    tables = spmd(contexts, _exchange_bases)
    if any(t != layout.base_table for t in tables):
        raise RuntimeError("Таблиці баз купи розійшлися між рангами")
    logger.info(f"🚀 Світ піднято: world={world_size}, num_cu={num_cu}, timeout={timeout_s}s")
    return contexts


def _exchange_bases(ctx: WorldContext) -> List[int]:
    own = ctx.layout.base_table[ctx.rank]
    return [int(b) for b in all_gather(ctx, own)]


def shutdown(contexts: Sequence[WorldContext]) -> None:
    for ctx in contexts:
        for h in list(ctx._pending):
            h._done.wait(ctx.world.timeout_s)
        ctx._pool.shutdown(wait=False)


def spmd(contexts: Sequence[WorldContext], fn: Callable[..., Any], *args: Any, **kwargs: Any) -> List[Any]:
    """
    Виконує fn(ctx, *args) на кожному ранзі у власному потоці.
    Повертає результати по рангах; першу помилку (за номером рангу) перекидає.
    """
    with ThreadPoolExecutor(max_workers=len(contexts), thread_name_prefix="rank") as pool:
        futures = [pool.submit(fn, ctx, *args, **kwargs) for ctx in contexts]
        errors = [f.exception() for f in futures]
    for err in errors:
        if err is not None:
            raise err
    return [f.result() for f in futures]


# ---------- Колективи ----------
def synchronize(ctx: WorldContext, stream_tag: Optional[str] = None) -> None:
    """Локальна синхронізація: дочекатися запусків рангу (усіх або лише stream_tag)."""
    pending = [h for h in ctx._pending if stream_tag is None or h.grid.stream_tag == stream_tag]
    for h in pending:
        h.wait(2 * ctx.world.timeout_s, ctx)
    ctx._pending = [h for h in ctx._pending if not h.done()]


def barrier(ctx: WorldContext, stream_tag: Optional[str] = None) -> None:
    synchronize(ctx, stream_tag)
    ctx.world.rendezvous(ctx.rank)


def all_gather(ctx: WorldContext, value: Any) -> List[Any]:
    return ctx.world.exchange(ctx.rank, value)


def broadcast(ctx: WorldContext, value: Any, root: int = 0) -> Any:
    """
    Розсилає значення root-рангу всім. SymmetricBuffer копіюється з арени root
    в ту саму адресу кожного рангу; ndarray і скаляри передаються як об'єкти.
    """
    if not 0 <= root < ctx.world_size:
        raise ValueError(f"root={root} поза межами світу розміром {ctx.world_size}")
    if ctx.world_size == 1:
        return value
    if isinstance(value, SymmetricBuffer):
        from .rma import full_view, get
        ctx.world.rendezvous(ctx.rank)
        if ctx.rank != root:
            view = full_view(value)
            get(view, view, root, ctx.rank, ctx)
        ctx.world.rendezvous(ctx.rank)
        return value
    values = ctx.world.exchange(ctx.rank, value if ctx.rank == root else None)
    out = values[root]
    if isinstance(out, np.ndarray) and ctx.rank != root:
        out = out.copy()
    return out


# ---------- Тензорні конструктори ----------
def _generator(seed: Union[int, Sequence[int]]) -> np.random.Generator:
    # Philox: лічильниковий генератор, ті самі потоки на всіх рангах при тому самому seed
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def _fill(ctx: WorldContext, shape: Shape, dtype: str, values) -> SymmetricBuffer:
    buf = alloc(ctx.layout, shape, dtype, rank=ctx.rank)
    if buf.size:
        buf.array(ctx.layout, ctx.rank)[...] = values
    return buf


def empty(ctx: WorldContext, shape: Shape, dtype: str = "f32") -> SymmetricBuffer:
    return alloc(ctx.layout, shape, dtype, rank=ctx.rank)


def zeros(ctx: WorldContext, shape: Shape, dtype: str = "f32") -> SymmetricBuffer:
    return _fill(ctx, shape, dtype, 0)


def ones(ctx: WorldContext, shape: Shape, dtype: str = "f32") -> SymmetricBuffer:
    return _fill(ctx, shape, dtype, 1)


def full(ctx: WorldContext, shape: Shape, fill_value, dtype: str = "f32") -> SymmetricBuffer:
    return _fill(ctx, shape, dtype, fill_value)


def zeros_like(ctx: WorldContext, other: SymmetricBuffer) -> SymmetricBuffer:
    return _fill(ctx, other.shape, other.dtype, 0)


def arange(ctx: WorldContext, start, stop=None, step=1, dtype: Optional[str] = None) -> SymmetricBuffer:
    """Як numpy.arange: [start, stop) з кроком step; dtype за замовчуванням i32 для цілих, інакше f32."""
    if stop is None:
        start, stop = 0, start
    if dtype is None:
        dtype = "i32" if all(float(x).is_integer() for x in (start, stop, step)) else "f32"
    values = np.arange(start, stop, step, dtype=np.float64 if dtype == "f32" else np.int64)
    return _fill(ctx, len(values), dtype, values.astype(DTYPES[dtype]))


def linspace(ctx: WorldContext, start: float, stop: float, steps: int, dtype: str = "f32") -> SymmetricBuffer:
    """steps точок від start до stop включно; крок (stop - start) / (steps - 1)."""
    if steps < 0:
        raise ValueError(f"steps має бути >= 0, отримано {steps}")
    values = np.linspace(start, stop, steps, dtype=np.float64)
    return _fill(ctx, steps, dtype, values.astype(DTYPES[dtype]))


def rand(ctx: WorldContext, shape: Shape, *, seed, dtype: str = "f32") -> SymmetricBuffer:
    buf = empty(ctx, shape, dtype)
    if buf.size:
        buf.array(ctx.layout, ctx.rank)[...] = _generator(seed).random(buf.shape, dtype=np.float64)
    return buf


def randn(ctx: WorldContext, shape: Shape, *, seed, dtype: str = "f32") -> SymmetricBuffer:
    buf = empty(ctx, shape, dtype)
    if buf.size:
        buf.array(ctx.layout, ctx.rank)[...] = _generator(seed).standard_normal(buf.shape)
    return buf


def randint(ctx: WorldContext, low: int, high: int, shape: Shape, *, seed, dtype: str = "i32") -> SymmetricBuffer:
    if high <= low:
        raise ValueError(f"randint: high ({high}) має бути > low ({low})")
    buf = empty(ctx, shape, dtype)
    if buf.size:
        buf.array(ctx.layout, ctx.rank)[...] = _generator(seed).integers(low, high, size=buf.shape)
    return buf


def uniform(ctx: WorldContext, shape: Shape, low: float = 0.0, high: float = 1.0, *, seed,
            dtype: str = "f32") -> SymmetricBuffer:
    buf = empty(ctx, shape, dtype)
    if buf.size:
        buf.array(ctx.layout, ctx.rank)[...] = _generator(seed).uniform(low, high, size=buf.shape)
    return buf


# ---------- Запуски сіток ----------
def _reserve(ctx: WorldContext, n: int) -> None:
    with ctx._free_cond:
        while ctx._free < n:
            ctx._free_cond.wait()
        ctx._free -= n


def _release(ctx: WorldContext, n: int) -> None:
    with ctx._free_cond:
        ctx._free += n
        ctx._free_cond.notify_all()


def _budget(ctx: WorldContext, grid: GridLaunch) -> int:
    if grid.grid_size < 1:
        raise ValueError(f"grid_size має бути >= 1, отримано {grid.grid_size}")
    budget = grid.slots if grid.slots is not None else min(grid.grid_size, ctx.num_cu)
    if not 1 <= budget <= ctx.num_cu:
        raise ValueError(f"Бюджет слотів {budget} поза [1, num_cu={ctx.num_cu}]")
    return min(budget, grid.grid_size)


def _drive(ctx: WorldContext, grid: GridLaunch, budget: int, handle: LaunchHandle,
           prev: Optional[LaunchHandle]) -> None:
    try:
        if prev is not None:
            prev._done.wait()
            if prev.error is not None:
                raise RuntimeError(f"Попередній запуск у '{grid.stream_tag}' завершився помилкою") from prev.error
        _reserve(ctx, budget)
        try:
            handle.start = time.perf_counter()
            next_pid = iter(range(grid.grid_size))
            pid_lock = threading.Lock()

            def worker() -> None:
                while True:
                    with pid_lock:
                        pid = next(next_pid, None)
                    if pid is None:
                        return
                    grid.kernel(pid, *grid.args)

            futures = [ctx._pool.submit(worker) for _ in range(budget)]
            errors = [f.exception() for f in futures]
            handle.end = time.perf_counter()
        finally:
            _release(ctx, budget)
        for err in errors:
            if err is not None:
                raise err
    except BaseException as e:
        handle.error = e
        logger.error(f"❌ Ранг {ctx.rank}: запуск '{grid.stream_tag}' впав: {e}")
    finally:
        handle._done.set()


def launch(ctx: WorldContext, grid: GridLaunch) -> LaunchHandle:
    """
    Асинхронний запуск сітки. Запуски з тим самим stream_tag виконуються
    строго послідовно (наступний стартує після завершення попереднього).
    """
    budget = _budget(ctx, grid)
    handle = LaunchHandle(ctx.rank, grid)
    prev = ctx._streams.get(grid.stream_tag)
    ctx._streams[grid.stream_tag] = handle
    ctx._pending.append(handle)
    threading.Thread(target=_drive, args=(ctx, grid, budget, handle, prev), daemon=True,
                     name=f"rank{ctx.rank}-{grid.stream_tag}").start()
    return handle


def launch_concurrent(ctx: WorldContext, *grids: GridLaunch) -> List[LaunchHandle]:
    """Конкурентні запуски на різних stream_tag; сума бюджетів <= num_cu."""
    tags = [g.stream_tag for g in grids]
    if len(set(tags)) != len(tags):
        raise ValueError(f"launch_concurrent потребує різних stream_tag, отримано {tags}")
    budgets = [_budget(ctx, g) for g in grids]
    if sum(budgets) > ctx.num_cu:
        raise ValueError(f"Сума бюджетів {budgets} = {sum(budgets)} перевищує num_cu={ctx.num_cu}")
    return [launch(ctx, g) for g in grids]


def spin_wait(predicate: Callable[[], bool], timeout: float, on_timeout: Callable[[], BaseException]) -> int:
    """
    Крутиться, поки predicate() не поверне True; періодично поступається
    планувальнику. Повертає кількість ітерацій.
    """
    deadline = time.monotonic() + timeout
    spins = 0
    while not predicate():
        spins += 1
        if spins < 64:
            time.sleep(0)
        else:
            time.sleep(min(1e-5 * (spins - 63), 2e-4))
        if spins % 32 == 0 and time.monotonic() > deadline:
            raise on_timeout()
    return spins
