# app/tools/kernels.py
# -*- coding: utf-8 -*-
"""
GEMM + All-Scatter ядра і патерни перекриття обчислень та комунікації.

Кожен ранг рахує свою смугу стовпців C = A @ B_r (N -- ширина шарду) і
розсилає її в C_global усіх рангів у блок стовпців [r*N, (r+1)*N).

Патерни:
- bulk_sync            два запуски на одному stream_tag, бар'єр між ними
- producer_consumer    два конкурентні запуски (gemm / comm) з жорсткими бюджетами слотів
- fused_sequential     одне ядро: тайл пораховано -> одразу store на всі ранги
- wg_specialized       одне ядро: pid < gemm_slots рахують, решта розсилають
- baseline_allgather   локальний GEMM у C_local + all-gather з боку хоста
"""

from __future__ import annotations
import time
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from .atomics import atomic_add, atomic_cas
from .errors import DeadlockError
from .rma import block_view, full_view, get, put, store, tile_view
from .runtime import (GridLaunch, WorldContext, barrier, full, launch, launch_concurrent,
                      randint, spin_wait, synchronize, zeros)
from .symheap import SymmetricBuffer

try:
    from logger import logger
except Exception:
    import logging
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(levelname)s: %(message)s")
    logger = logging.getLogger("kernels")

CANARY = 0xDEADBEEF
GUARD_WORDS = 64
# Цілі значення в A і B: f32-акумуляція точна, тож патерни і оракул збігаються побітово
VALUE_RANGE = (-2, 3)


# ---------- Прапорці тайлів ----------
@dataclass
class LockArray:
    """
    Прапорці u32 по одному на тайл: 0 -(release від продюсера)-> 1 -(acquire споживача)-> 0.
    releases / acquires -- лічильники протоколу для перевірок.
    """
    flags: SymmetricBuffer
    releases: SymmetricBuffer
    acquires: SymmetricBuffer

    @classmethod
    def create(cls, ctx: WorldContext, num_tiles: int) -> "LockArray":
        return cls(zeros(ctx, num_tiles, "u32"), zeros(ctx, num_tiles, "u32"), zeros(ctx, num_tiles, "u32"))

    def reset(self, ctx: WorldContext) -> None:
        for buf in (self.flags, self.releases, self.acquires):
            buf.array(ctx.layout, ctx.rank)[...] = 0

    def release(self, ctx: WorldContext, tile_id: int) -> None:
        old = atomic_cas(self.flags.address(ctx.layout, ctx.rank, tile_id), 0, 1, "release", "gpu", ctx)
        if old != 0:
            raise RuntimeError(f"Тайл {tile_id} рангу {ctx.rank} опубліковано двічі (прапорець {old})")
        atomic_add(self.releases, tile_id, 1, ctx.rank, ctx.rank, ctx)

    def try_acquire(self, ctx: WorldContext, tile_id: int) -> bool:
        old = atomic_cas(self.flags.address(ctx.layout, ctx.rank, tile_id), 1, 0, "acquire", "gpu", ctx)
        if old == 1:
            atomic_add(self.acquires, tile_id, 1, ctx.rank, ctx.rank, ctx)
            return True
        return False

    def states(self, ctx: WorldContext) -> np.ndarray:
        return self.flags.array(ctx.layout, ctx.rank).copy()

    def counters(self, ctx: WorldContext) -> Tuple[np.ndarray, np.ndarray]:
        return (self.releases.array(ctx.layout, ctx.rank).copy(),
                self.acquires.array(ctx.layout, ctx.rank).copy())


# ---------- Задача ----------
@dataclass
class GemmProblem:
    M: int
    N: int
    K: int
    world_size: int
    A: SymmetricBuffer
    B: SymmetricBuffer
    C_local: SymmetricBuffer
    C_global: SymmetricBuffer
    locks: LockArray
    BLOCK_SIZE_M: int = 32
    BLOCK_SIZE_N: int = 32
    BLOCK_SIZE_K: int = 32
    GROUP_SIZE_M: int = 4
    seed: int = 0
    jitter: float = 0.0
    guard_lo: Optional[SymmetricBuffer] = None
    guard_hi: Optional[SymmetricBuffer] = None

    @property
    def num_pid_m(self) -> int:
        return -(-self.M // self.BLOCK_SIZE_M)

    @property
    def num_pid_n(self) -> int:
        return -(-self.N // self.BLOCK_SIZE_N)

    @property
    def total_tiles(self) -> int:
        return self.num_pid_m * self.num_pid_n


def setup_problem(ctx: WorldContext, M: int, N: int, K: int, *, seed: int = 0,
                  block_m: int = 32, block_n: int = 32, block_k: int = 32, group_size_m: int = 4,
                  guard: bool = True, jitter: float = 0.0) -> GemmProblem:
    """
    Колективно алокує A (M x K, однакова на всіх рангах), B (K x N, свій шард на ранг),
    C_local (M x N), C_global (M x N*world) і прапорці тайлів. Завершується бар'єром.
    """
    if min(M, N, K) < 1:
        raise ValueError(f"M, N, K мають бути >= 1, отримано {(M, N, K)}")
    if min(block_m, block_n, block_k, group_size_m) < 1:
        raise ValueError("Розміри блоків і GROUP_SIZE_M мають бути >= 1")
    if jitter < 0:
        raise ValueError(f"jitter не може бути від'ємним: {jitter}")
    world = ctx.world_size
    lo, hi = VALUE_RANGE
    A = randint(ctx, lo, hi, (M, K), seed=seed, dtype="f32")
    B = randint(ctx, lo, hi, (K, N), seed=[seed, ctx.rank], dtype="f32")
    C_local = zeros(ctx, (M, N), "f32")
    guard_lo = full(ctx, GUARD_WORDS, CANARY, "u32") if guard else None
    C_global = zeros(ctx, (M, N * world), "f32")
    guard_hi = full(ctx, GUARD_WORDS, CANARY, "u32") if guard else None
    n_tiles = -(-M // block_m) * -(-N // block_n)
    locks = LockArray.create(ctx, n_tiles)
    problem = GemmProblem(M, N, K, world, A, B, C_local, C_global, locks,
                          block_m, block_n, block_k, group_size_m, seed, jitter, guard_lo, guard_hi)
    barrier(ctx)
    if ctx.rank == 0:
        logger.info(f"📐 Задача M={M} N={N} K={K} world={world}, блоки {block_m}x{block_n}x{block_k}, тайлів {n_tiles}")
    return problem


def reset_outputs(ctx: WorldContext, problem: GemmProblem) -> None:
    """Обнуляє C_local, C_global і прапорці свого рангу. Після виклику потрібен бар'єр."""
    problem.C_local.array(ctx.layout, ctx.rank)[...] = 0
    problem.C_global.array(ctx.layout, ctx.rank)[...] = 0
    problem.locks.reset(ctx)


def canaries_intact(ctx: WorldContext, problem: GemmProblem) -> bool:
    guards = [g for g in (problem.guard_lo, problem.guard_hi) if g is not None]
    return all(bool(np.all(g.array(ctx.layout, ctx.rank) == CANARY)) for g in guards)


# ---------- Тайли ----------
def tile_to_coords(tile_id: int, num_pid_m: int, num_pid_n: int, group_size_m: int = 1) -> Tuple[int, int]:
    """
    Swizzle тайлів групами по GROUP_SIZE_M рядків (L2-локальність).
    GROUP_SIZE_M=1 дає row-major порядок.
    """
    total = num_pid_m * num_pid_n
    if not 0 <= tile_id < total:
        raise ValueError(f"tile_id={tile_id} поза [0, {total})")
    group = max(1, min(group_size_m, num_pid_m))
    num_pid_in_group = group * num_pid_n
    group_id = tile_id // num_pid_in_group
    first_pid_m = group_id * group
    group_rows = min(num_pid_m - first_pid_m, group)
    local = tile_id % num_pid_in_group
    return first_pid_m + local % group_rows, local // group_rows


def pid_tiles(pid: int, grid_size: int, total_tiles: int) -> range:
    """Персистентний цикл: тайли pid, pid+grid, pid+2*grid, ..."""
    return range(pid, total_tiles, grid_size)


def gemm_tile(ctx: WorldContext, problem: GemmProblem, pid_m: int, pid_n: int) -> np.ndarray:
    """
    Акумулятор тайлу BLOCK_SIZE_M x BLOCK_SIZE_N (f32): сума по k-блоках A-тайл @ B-тайл.
    A і B лежать в арені власного рангу, тож тайли -- прямі зрізи без трансляції.
    Хвости по M, N, K замасковані (нулі).
    """
    BM, BN, BK = problem.BLOCK_SIZE_M, problem.BLOCK_SIZE_N, problem.BLOCK_SIZE_K
    m0, n0 = pid_m * BM, pid_n * BN
    m1, n1 = min(m0 + BM, problem.M), min(n0 + BN, problem.N)
    A = problem.A.array(ctx.layout, ctx.rank)
    B = problem.B.array(ctx.layout, ctx.rank)
    acc = np.zeros((BM, BN), dtype=np.float32)
    valid = acc[:max(m1 - m0, 0), :max(n1 - n0, 0)]
    for k0 in range(0, problem.K, BK):
        k1 = min(k0 + BK, problem.K)
        valid += A[m0:m1, k0:k1] @ B[k0:k1, n0:n1]
    return acc


def _own_block(ctx: WorldContext, problem: GemmProblem, buffer: SymmetricBuffer, pid_m: int, pid_n: int,
               col_offset: int):
    return block_view(buffer, pid_m, pid_n, problem.BLOCK_SIZE_M, problem.BLOCK_SIZE_N,
                      m_limit=problem.M, n_limit=problem.N, col_offset=col_offset)


def _coords(problem: GemmProblem, tile_id: int) -> Tuple[int, int]:
    return tile_to_coords(tile_id, problem.num_pid_m, problem.num_pid_n, problem.GROUP_SIZE_M)


def _jitter_source(problem: GemmProblem, rank: int, pid: int, role: int) -> Optional[np.random.Generator]:
    if problem.jitter <= 0:
        return None
    return np.random.default_rng([problem.seed, rank, pid, role])


def _maybe_jitter(rng: Optional[np.random.Generator], amount: float) -> None:
    if rng is not None:
        time.sleep(rng.uniform(0.0, amount))


def _compute(ctx: WorldContext, problem: GemmProblem, pid: int, tile_id: int) -> Tuple[Tuple[int, int], np.ndarray]:
    rec = ctx.recorder
    pid_m, pid_n = _coords(problem, tile_id)
    with rec.span(ctx.rank, "compute", pid=pid, tile_id=tile_id):
        acc = gemm_tile(ctx, problem, pid_m, pid_n)
        rec.compute_pause()
    return (pid_m, pid_n), acc


def remote_order(rank: int, world_size: int, tile_id: int) -> List[int]:
    """Віддалені ранги, починаючи зі зсуву tile_id: сусідні тайли стартують на різних каналах."""
    others = world_size - 1
    return [(rank + 1 + (tile_id + j) % others) % world_size for j in range(others)]


def _scatter_tile(ctx: WorldContext, problem: GemmProblem, pid: int, tile_id: int, coords: Tuple[int, int]) -> None:
    """put власного блоку C_global тайлу на всі віддалені ранги."""
    rank = ctx.rank
    view = _own_block(ctx, problem, problem.C_global, *coords, col_offset=rank * problem.N)
    for remote in remote_order(rank, problem.world_size, tile_id):
        with ctx.recorder.span(rank, "comm", pid=pid, tile_id=tile_id, peer=remote):
            put(view, view, rank, remote, ctx)


def _wait_tile(ctx: WorldContext, problem: GemmProblem, pid: int, tile_id: int) -> None:
    locks = problem.locks

    def on_timeout() -> DeadlockError:
        states = {i: int(v) for i, v in enumerate(locks.states(ctx))}
        return DeadlockError(
            f"Ранг {ctx.rank}, pid {pid}: тайл {tile_id} не опубліковано за {ctx.world.timeout_s}s", states)

    with ctx.recorder.span(ctx.rank, "wait", pid=pid, tile_id=tile_id):
        spin_wait(lambda: locks.try_acquire(ctx, tile_id), ctx.world.timeout_s, on_timeout)


# ---------- Тіла ядер (pid, ...) ----------
def gemm_kernel(pid: int, ctx: WorldContext, problem: GemmProblem, grid: int, target: str = "global") -> None:
    """GEMM-ядро: локальний store у власний блок C_global або в C_local."""
    rank = ctx.rank
    rng = _jitter_source(problem, rank, pid, 0)
    for tile_id in pid_tiles(pid, grid, problem.total_tiles):
        coords, acc = _compute(ctx, problem, pid, tile_id)
        if target == "local":
            view = _own_block(ctx, problem, problem.C_local, *coords, col_offset=0)
        else:
            view = _own_block(ctx, problem, problem.C_global, *coords, col_offset=rank * problem.N)
        store(view, acc, rank, rank, ctx)
        _maybe_jitter(rng, problem.jitter)


def all_scatter_kernel(pid: int, ctx: WorldContext, problem: GemmProblem, grid: int) -> None:
    for tile_id in pid_tiles(pid, grid, problem.total_tiles):
        _scatter_tile(ctx, problem, pid, tile_id, _coords(problem, tile_id))


def fused_sequential_kernel(pid: int, ctx: WorldContext, problem: GemmProblem, grid: int) -> None:
    """Тайл пораховано -> store у блок рангу в C_global на кожному ранзі, включно з собою."""
    rank = ctx.rank
    for tile_id in pid_tiles(pid, grid, problem.total_tiles):
        coords, acc = _compute(ctx, problem, pid, tile_id)
        view = _own_block(ctx, problem, problem.C_global, *coords, col_offset=rank * problem.N)
        for remote in [rank, *remote_order(rank, problem.world_size, tile_id)]:
            phase = "store" if remote == rank else "comm"
            with ctx.recorder.span(rank, phase, pid=pid, tile_id=tile_id, peer=remote):
                store(view, acc, remote, rank, ctx)


def producer_kernel(pid: int, ctx: WorldContext, problem: GemmProblem, gemm_slots: int) -> None:
    """Рахує тайл, пише у власний блок C_global і публікує прапорець (release)."""
    rank = ctx.rank
    rng = _jitter_source(problem, rank, pid, 1)
    for tile_id in pid_tiles(pid, gemm_slots, problem.total_tiles):
        coords, acc = _compute(ctx, problem, pid, tile_id)
        view = _own_block(ctx, problem, problem.C_global, *coords, col_offset=rank * problem.N)
        # .wt модифікатор кешу не має аналога: звичайний store перед release CAS
        with ctx.recorder.span(rank, "store", pid=pid, tile_id=tile_id, peer=rank, cache_modifier="wt"):
            store(view, acc, rank, rank, ctx)
        _maybe_jitter(rng, problem.jitter)
        with ctx.recorder.span(rank, "signal", pid=pid, tile_id=tile_id):
            problem.locks.release(ctx, tile_id)


def consumer_kernel(pid: int, ctx: WorldContext, problem: GemmProblem, comm_slots: int) -> None:
    """Чекає прапорець тайлу (acquire) і розсилає тайл на віддалені ранги."""
    rng = _jitter_source(problem, ctx.rank, pid, 2)
    for tile_id in pid_tiles(pid, comm_slots, problem.total_tiles):
        _wait_tile(ctx, problem, pid, tile_id)
        _maybe_jitter(rng, problem.jitter)
        _scatter_tile(ctx, problem, pid, tile_id, _coords(problem, tile_id))


def wg_specialized_kernel(pid: int, ctx: WorldContext, problem: GemmProblem, gemm_slots: int,
                          comm_slots: int) -> None:
    if pid < gemm_slots:
        producer_kernel(pid, ctx, problem, gemm_slots)
    else:
        consumer_kernel(pid - gemm_slots, ctx, problem, comm_slots)


# ---------- Патерни ----------
def _grid(ctx: WorldContext, grid_size: Optional[int]) -> int:
    grid = ctx.num_cu if grid_size is None else grid_size
    if grid < 1:
        raise ValueError(f"grid_size має бути >= 1, отримано {grid}")
    return grid


def _partition(ctx: WorldContext, gemm_slots: Optional[int], comm_slots: Optional[int]) -> Tuple[int, int]:
    if comm_slots is None:
        comm_slots = max(1, ctx.num_cu // 4)
    if gemm_slots is None:
        gemm_slots = ctx.num_cu - comm_slots
    if gemm_slots < 1 or comm_slots < 1:
        raise ValueError(f"Потрібно gemm_slots >= 1 і comm_slots >= 1, отримано ({gemm_slots}, {comm_slots})")
    if gemm_slots + comm_slots > ctx.num_cu:
        raise ValueError(f"gemm_slots + comm_slots = {gemm_slots + comm_slots} перевищує num_cu={ctx.num_cu}")
    return gemm_slots, comm_slots


def pattern_bulk_sync(ctx: WorldContext, problem: GemmProblem, grid_size: Optional[int] = None) -> None:
    grid = _grid(ctx, grid_size)
    launch(ctx, GridLaunch(grid, gemm_kernel, (ctx, problem, grid), stream_tag="bulk"))
    barrier(ctx)
    launch(ctx, GridLaunch(grid, all_scatter_kernel, (ctx, problem, grid), stream_tag="bulk"))
    barrier(ctx)


def pattern_fused_sequential(ctx: WorldContext, problem: GemmProblem, grid_size: Optional[int] = None) -> None:
    grid = _grid(ctx, grid_size)
    launch(ctx, GridLaunch(grid, fused_sequential_kernel, (ctx, problem, grid), stream_tag="fused"))
    barrier(ctx)


def pattern_fused_wg_specialized(ctx: WorldContext, problem: GemmProblem, gemm_slots: Optional[int] = None,
                                 comm_slots: Optional[int] = None) -> None:
    gemm_slots, comm_slots = _partition(ctx, gemm_slots, comm_slots)
    grid = gemm_slots + comm_slots
    # усі pid мають бути резидентні одночасно: бюджет = вся сітка
    launch(ctx, GridLaunch(grid, wg_specialized_kernel, (ctx, problem, gemm_slots, comm_slots),
                           stream_tag="fused", slots=grid))
    barrier(ctx)


def pattern_unfused_producer_consumer(ctx: WorldContext, problem: GemmProblem, gemm_slots: Optional[int] = None,
                                      comm_slots: Optional[int] = None) -> None:
    gemm_slots, comm_slots = _partition(ctx, gemm_slots, comm_slots)
    launch_concurrent(
        ctx,
        GridLaunch(gemm_slots, producer_kernel, (ctx, problem, gemm_slots), stream_tag="gemm", slots=gemm_slots),
        GridLaunch(comm_slots, consumer_kernel, (ctx, problem, comm_slots), stream_tag="comm", slots=comm_slots),
    )
    barrier(ctx)


def pattern_baseline_allgather(ctx: WorldContext, problem: GemmProblem, grid_size: Optional[int] = None) -> None:
    """Локальний GEMM у C_local, потім хостовий all-gather шардів у C_global."""
    grid = _grid(ctx, grid_size)
    launch(ctx, GridLaunch(grid, gemm_kernel, (ctx, problem, grid, "local"), stream_tag="baseline"))
    barrier(ctx)
    rank, N = ctx.rank, problem.N
    src = full_view(problem.C_local)
    for peer in range(problem.world_size):
        dst = tile_view(problem.C_global, range(problem.M), range(peer * N, (peer + 1) * N))
        with ctx.recorder.span(rank, "comm", peer=peer):
            get(src, dst, peer, rank, ctx)
    barrier(ctx)


PATTERNS: Dict[str, Callable[..., None]] = {
    "bulk_sync": pattern_bulk_sync,
    "producer_consumer": pattern_unfused_producer_consumer,
    "fused_sequential": pattern_fused_sequential,
    "wg_specialized": pattern_fused_wg_specialized,
    "baseline_allgather": pattern_baseline_allgather,
}
PARTITIONED = ("producer_consumer", "wg_specialized")


def run_pattern(ctx: WorldContext, problem: GemmProblem, name: str, *, gemm_slots: Optional[int] = None,
                comm_slots: Optional[int] = None, grid_size: Optional[int] = None) -> Tuple[float, float]:
    """
    Скидає виходи, виконує патерн між двома бар'єрами і повертає
    (start, end) за perf_counter на цьому ранзі (той самий годинник, що й у trace).
    """
    fn = PATTERNS.get(name)
    if fn is None:
        raise ValueError(f"Невідомий патерн {name!r}; дозволено: {sorted(PATTERNS)}")
    reset_outputs(ctx, problem)
    barrier(ctx)
    start = time.perf_counter()
    if name in PARTITIONED:
        fn(ctx, problem, gemm_slots, comm_slots)
    else:
        fn(ctx, problem, grid_size)
    end = time.perf_counter()
    synchronize(ctx)
    logger.debug(f"🔁 Ранг {ctx.rank}: {name} за {(end - start) * 1e3:.1f} мс")
    return start, end


# ---------- Оракул ----------
def oracle_global(ctx: WorldContext, problem: GemmProblem) -> np.ndarray:
    """float64: A @ B_r кожного рангу, складені по стовпцях у порядку рангів."""
    layout = ctx.layout
    A = problem.A.array(layout, ctx.rank).astype(np.float64)
    shards = [A @ problem.B.array(layout, r).astype(np.float64) for r in range(problem.world_size)]
    return np.concatenate(shards, axis=1)


def matches_oracle(ctx: WorldContext, problem: GemmProblem, oracle: np.ndarray, rtol: float = 1e-5) -> bool:
    C = problem.C_global.array(ctx.layout, ctx.rank)
    return bool(np.allclose(C, oracle, rtol=rtol, atol=0.0)) and canaries_intact(ctx, problem)
