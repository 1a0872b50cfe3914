# app/tools/bench.py
# -*- coding: utf-8 -*-
"""
Мікробенчмарки та порівняння патернів перекриття.
- reference_bandwidth: самокопіювання в купі як знаменник нормалізації
- bench_p2p: load / store / atomic_add / atomic_xchg для кожної пари (src, dst)
- bench_all: усі ранги передають усім одночасно
- bench_patterns: валідація проти оракула + таймінги і розбивка GEMM / комунікація
Результати -- pandas.DataFrame і CSV з фіксованими колонками.
"""

from __future__ import annotations
import os
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Set, Tuple, Union

import numpy as np
import pandas as pd

from .atomics import atomic_add, atomic_xchg
from .kernels import (PATTERNS, GemmProblem, matches_oracle, oracle_global, run_pattern,
                      setup_problem)
from .rma import full_view, load, store, tile_view
from .runtime import (GridLaunch, WorldContext, all_gather, barrier, init, launch, shutdown, spmd,
                      synchronize, full, zeros)
from .symheap import ALIGNMENT, reset_heap
from .trace import TraceRecorder

try:
    from logger import logger
except Exception:
    import logging
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(levelname)s: %(message)s")
    logger = logging.getLogger("bench")

GIB = float(1 << 30)
KIB = 1 << 10
MIB = 1 << 20

P2P_OPS = ("load", "store", "atomic_add", "atomic_xchg")
ALL_OPS = ("all_load", "all_store")
BANDWIDTH_COLUMNS = ["src_rank", "dst_rank", "gibps", "normalized"]
PATTERN_COLUMNS = ["pattern", "M", "N", "K", "world", "total_s", "compute_s", "comm_s", "validated"]
OVERLAP_COLUMNS = ["pattern", "M", "N", "K", "world", "overlap_eff"]

NORMALIZED_CAP = 1.05
DEFAULT_MAX_ATOMIC_BYTES = 64 * KIB
REFERENCE_BYTES = 256 * MIB
REFERENCE_MIN_BYTES = 1 * MIB
REFERENCE_SPREAD = 1.25
SELF_COPY_BAND = (0.8, NORMALIZED_CAP)

# Виміри еталону в межах прогону (процесу) за розміром копії
_reference_history: Dict[int, List[float]] = {}

# Повномасштабні форми (M, N, K); настільні -- у 16 разів менші по кожному виміру
FULL_SCALE_SHAPES: List[Tuple[int, int, int]] = [
    (4096, 2048, 8192),
    (8192, 4608, 36864),
    (8192, 3584, 14336),
]


def desk_shape(shape: Tuple[int, int, int], scale: int = 16) -> Tuple[int, int, int]:
    return tuple(max(1, s // scale) for s in shape)


DESK_SHAPES = [desk_shape(s) for s in FULL_SCALE_SHAPES]


# ---------- Типи результатів ----------
@dataclass
class BandwidthMatrix:
    """measured[src, dst] у GiB/s; normalized = measured / reference, обрізане до [0, 1.05]."""
    op: str
    size: int
    measured: np.ndarray
    reference: float

    @property
    def raw_ratio(self) -> np.ndarray:
        return self.measured / self.reference

    @property
    def corrupted(self) -> np.ndarray:
        """Клітинки, відкинуті через розбіжність payload (NaN у measured)."""
        return np.isnan(self.measured)

    def corrupted_cells(self) -> List[Tuple[int, int]]:
        return [tuple(int(x) for x in c) for c in np.argwhere(self.corrupted)]

    @property
    def flagged(self) -> np.ndarray:
        raw = self.raw_ratio
        with np.errstate(invalid="ignore"):
            out = (raw < 0) | (raw > NORMALIZED_CAP) | np.isinf(raw)
        return out & ~self.corrupted

    @property
    def normalized(self) -> np.ndarray:
        clipped = np.clip(np.nan_to_num(self.raw_ratio, nan=0.0, posinf=NORMALIZED_CAP), 0.0, NORMALIZED_CAP)
        return np.where(self.corrupted, np.nan, clipped)

    def to_frame(self) -> pd.DataFrame:
        world = self.measured.shape[0]
        src, dst = np.meshgrid(np.arange(world), np.arange(world), indexing="ij")
        return pd.DataFrame({
            "src_rank": src.ravel(),
            "dst_rank": dst.ravel(),
            "gibps": self.measured.ravel(),
            "normalized": self.normalized.ravel(),
        }, columns=BANDWIDTH_COLUMNS)

    def csv_name(self) -> str:
        prefix = "p2p_" if self.op in P2P_OPS else ""
        return f"{prefix}{self.op}_{self.size}.csv"


@dataclass
class PatternTiming:
    pattern: str
    M: int
    N: int
    K: int
    world: int
    total_s: float
    compute_s: float
    comm_s: float
    validated: bool
    tiles: pd.DataFrame = field(default_factory=pd.DataFrame, repr=False)
    overlap_eff: Optional[float] = None

    def row(self) -> Dict[str, object]:
        return {c: getattr(self, c) for c in PATTERN_COLUMNS}


# ---------- Еталонна пропускна здатність ----------
def reference_bandwidth(ctx: WorldContext, *, nbytes: int = REFERENCE_BYTES, repeats: int = 5) -> float:
    """
    Колективно: медіана repeats самокопіювань nbytes усередині арени рангу 0, GiB/s.
    Той самий шлях, що й клітинка src = dst, тож її нормалізоване значення ~1.0.
    nbytes обрізається до двох буферів, що вміщуються в арену. Купа скидається до і після.
    """
    if nbytes <= 0 or repeats < 1:
        raise ValueError(f"nbytes > 0 і repeats >= 1, отримано {nbytes}, {repeats}")
    nbytes = _reference_bytes(ctx, nbytes)
    n = nbytes // 4
    _fresh_heap(ctx)
    src = full(ctx, n, 1, "u32")
    dst = zeros(ctx, n, "u32")
    value = None
    if ctx.rank == 0:
        a, b = src.array(ctx.layout, 0), dst.array(ctx.layout, 0)
        np.copyto(b, a)
        samples = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            np.copyto(b, a)
            samples.append(time.perf_counter() - t0)
        value = float(np.median(nbytes / np.asarray(samples) / GIB))
        note_reference(nbytes, value)
        logger.info(f"📏 Еталон: {value:.2f} GiB/s ({nbytes} B x {repeats}, самокопіювання в купі)")
    bw = all_gather(ctx, value)[0]
    _fresh_heap(ctx)
    return bw


def _reference_bytes(ctx: WorldContext, nbytes: int) -> int:
    room = (ctx.layout.arena_size - 4 * ALIGNMENT) // 2
    fitted = min(nbytes, room) // ALIGNMENT * ALIGNMENT
    if fitted <= 0:
        raise ValueError(f"Арена {ctx.layout.arena_size} B замала для еталонного копіювання")
    return fitted


def reference_size(sizes: Sequence[int]) -> int:
    """Еталон міряється на найбільшому розмірі бенчмарку, але не менше REFERENCE_MIN_BYTES."""
    return max([REFERENCE_MIN_BYTES, *sizes])


def note_reference(nbytes: int, value: float) -> bool:
    """
    Додає вимір до історії прогону. False (з попередженням), якщо виміри
    одного розміру в межах прогону розходяться більш ніж у REFERENCE_SPREAD разів.
    """
    history = _reference_history.setdefault(nbytes, [])
    history.append(value)
    lo, hi = min(history), max(history)
    if hi > REFERENCE_SPREAD * lo:
        logger.warning(f"⚠️ Еталон {nbytes} B нестабільний між викликами: {lo:.2f}..{hi:.2f} GiB/s ({len(history)} вимірів)")
        return False
    return True


def clear_reference_history() -> None:
    _reference_history.clear()


# ---------- Допоміжне ----------
def _payload(n: int, rank: int, it: int) -> np.ndarray:
    vals = np.arange(n, dtype=np.uint64) * np.uint64(2654435761) + np.uint64(rank * 7919 + it + 1)
    return (vals & np.uint64(0xFFFFFFFF)).astype(np.uint32)


def _fresh_heap(ctx: WorldContext) -> None:
    barrier(ctx)
    if ctx.rank == 0:
        reset_heap(ctx.layout)
    barrier(ctx)


def _elements(size: int) -> int:
    if size < 4 or size % 4:
        raise ValueError(f"Розмір повідомлення має бути кратним 4 B і >= 4, отримано {size}")
    return size // 4


def _fits(ctx: WorldContext, nbytes_per_rank: int) -> bool:
    return nbytes_per_rank + 4 * ALIGNMENT <= ctx.layout.arena_size


def _agree_bad(ctx: WorldContext, bad: Sequence[Tuple[int, int]], what: str) -> Set[Tuple[int, int]]:
    """Об'єднує клітинки з провальною перевіркою payload з усіх рангів; ранг 0 пише діагностику."""
    union: Set[Tuple[int, int]] = set()
    for part in all_gather(ctx, list(bad)):
        union.update(part)
    if union and ctx.rank == 0:
        logger.error(f"❌ Перевірка payload не пройшла ({what}): клітинки {sorted(union)} відкинуто")
    return union


def _median_rate(size: int, samples: Sequence[float]) -> float:
    timed = list(samples[1:]) or list(samples)
    t = float(np.median(timed))
    return size / t / GIB if t > 0 else float("inf")


def _check_iters(iters: int) -> None:
    if iters < 3:
        raise ValueError(f"iters має бути >= 3 (перша ітерація -- прогрів), отримано {iters}")


def _gather_matrix(ctx: WorldContext, local: Dict[Tuple[int, int], float]) -> np.ndarray:
    world = ctx.world_size
    m = np.zeros((world, world), dtype=np.float64)
    for part in all_gather(ctx, local):
        for (src, dst), v in part.items():
            m[src, dst] = v
    return m


def _warn_non_monotone(results: Dict[int, BandwidthMatrix]) -> None:
    sizes = sorted(results)
    for a, b in zip(sizes, sizes[1:]):
        drop = results[b].measured < results[a].measured
        if drop.any():
            cells = [tuple(int(x) for x in c) for c in np.argwhere(drop)]
            logger.warning(f"⚠️ {results[b].op}: пропускна здатність впала між {a} і {b} B у клітинках {cells}")


# ---------- P2P ----------
def _p2p_once(ctx: WorldContext, op: str, src: int, dst: int, bufs, n: int, it: int) -> Tuple[Optional[float], bool]:
    """Одна виміряна передача src -> dst. Повертає (час на ініціаторі, перевірка цього рангу)."""
    local_buf, remote_buf = bufs
    rank, layout = ctx.rank, ctx.layout
    payload = _payload(n, src if op != "load" else dst, it)

    # підготовка: джерело даних заповнює local_buf, приймач обнуляє remote_buf
    if op == "load" and rank == dst:
        local_buf.array(layout, rank)[...] = payload
    if op != "load" and rank == src:
        local_buf.array(layout, rank)[...] = payload
    if rank == (src if op == "load" else dst):
        remote_buf.array(layout, rank)[...] = 0
    barrier(ctx)

    elapsed = None
    if rank == src:
        t0 = time.perf_counter()
        if op == "load":
            got = load(full_view(local_buf), dst, src, ctx)
        elif op == "store":
            store(full_view(remote_buf), local_buf.array(layout, rank), dst, src, ctx)
        else:
            rmw = atomic_add if op == "atomic_add" else atomic_xchg
            values = local_buf.array(layout, rank)
            for i in range(n):
                rmw(remote_buf, i, int(values[i]), dst, src, ctx)
        elapsed = time.perf_counter() - t0
        if op == "load":
            remote_buf.array(layout, rank)[...] = got
    barrier(ctx)

    ok = True
    if rank == (src if op == "load" else dst):
        ok = bool(np.array_equal(remote_buf.array(layout, rank), payload))
    return elapsed, ok


def bench_p2p(ctx: WorldContext, op: str, sizes: Sequence[int], iters: int = 5, *,
              reference: Optional[float] = None,
              max_atomic_bytes: int = DEFAULT_MAX_ATOMIC_BYTES) -> Dict[int, BandwidthMatrix]:
    """
    Колективно на всіх рангах. Для кожного розміру і кожної пари (src, dst):
    iters передач, обрамлених бар'єрами; перша -- прогрів; медіана решти.
    Купа скидається перед кожним розміром.
    """
    if op not in P2P_OPS:
        raise ValueError(f"Невідома операція {op!r}; дозволено: {P2P_OPS}")
    _check_iters(iters)
    if reference is None:
        reference = reference_bandwidth(ctx, nbytes=reference_size(sizes))
    results: Dict[int, BandwidthMatrix] = {}
    world = ctx.world_size

    for size in sizes:
        n = _elements(size)
        if op.startswith("atomic") and size > max_atomic_bytes:
            if ctx.rank == 0:
                logger.warning(f"⚠️ {op}: {size} B > max_atomic_bytes={max_atomic_bytes}, пропущено")
            continue
        if not _fits(ctx, 2 * size):
            if ctx.rank == 0:
                logger.warning(f"⚠️ {op}: {size} B не вміщується в арену {ctx.layout.arena_size} B, пропущено")
            continue
        _fresh_heap(ctx)
        bufs = (zeros(ctx, n, "u32"), zeros(ctx, n, "u32"))
        local: Dict[Tuple[int, int], float] = {}
        for src in range(world):
            for dst in range(world):
                samples = []
                for it in range(iters):
                    elapsed, ok = _p2p_once(ctx, op, src, dst, bufs, n, it)
                    if _agree_bad(ctx, [] if ok else [(src, dst)], f"{op}, {size} B, ітерація {it}"):
                        samples = []
                        break
                    if elapsed is not None:
                        samples.append(elapsed)
                if ctx.rank == src:
                    local[(src, dst)] = _median_rate(size, samples) if samples else float("nan")
        matrix = BandwidthMatrix(op, size, _gather_matrix(ctx, local), reference)
        _log_flags(ctx, matrix)
        results[size] = matrix
        if ctx.rank == 0:
            logger.info(f"✅ {op} {size} B: медіана {np.nanmedian(matrix.measured):.3f} GiB/s")
    _fresh_heap(ctx)
    if ctx.rank == 0:
        _warn_non_monotone(results)
    return results


def _log_flags(ctx: WorldContext, matrix: BandwidthMatrix) -> None:
    flagged = matrix.flagged
    if ctx.rank == 0 and flagged.any():
        cells = [tuple(int(x) for x in c) for c in np.argwhere(flagged)]
        logger.warning(f"⚠️ {matrix.op} {matrix.size} B: нормалізоване значення поза [0, {NORMALIZED_CAP}] у {cells}")


# ---------- All-load / all-store ----------
def _all_kernel(pid: int, ctx: WorldContext, op: str, src_buf, dst_buf, n: int, times: Dict[int, float]) -> None:
    rank = ctx.rank
    t0 = time.perf_counter()
    if op == "all_store":
        # свій payload -> рядок rank буфера dst_buf на ранзі pid
        row = tile_view(dst_buf, range(rank, rank + 1), range(n))
        store(row, src_buf.array(ctx.layout, rank)[None, :], pid, rank, ctx)
    else:
        got = load(full_view(src_buf), pid, rank, ctx)
        dst_buf.array(ctx.layout, rank)[pid, :] = got
    times[pid] = time.perf_counter() - t0


def bench_all(ctx: WorldContext, op: str, sizes: Sequence[int], iters: int = 5, *,
              reference: Optional[float] = None) -> Dict[int, BandwidthMatrix]:
    """
    Усі ранги одночасно: кожен запускає сітку з world pid-ів, pid p передає з/до рангу p.
    Час кожної пари -- таймер pid-а на ініціаторі.
    """
    if op not in ALL_OPS:
        raise ValueError(f"Невідома операція {op!r}; дозволено: {ALL_OPS}")
    _check_iters(iters)
    if reference is None:
        reference = reference_bandwidth(ctx, nbytes=reference_size(sizes))
    world, rank = ctx.world_size, ctx.rank
    results: Dict[int, BandwidthMatrix] = {}

    for size in sizes:
        n = _elements(size)
        if not _fits(ctx, (world + 1) * size):
            if rank == 0:
                logger.warning(f"⚠️ {op}: {size} B x {world + 1} не вміщується в арену, пропущено")
            continue
        _fresh_heap(ctx)
        src_buf = zeros(ctx, n, "u32")
        dst_buf = zeros(ctx, (world, n), "u32")
        samples: Dict[int, List[float]] = {p: [] for p in range(world)}
        corrupted: Set[Tuple[int, int]] = set()
        for it in range(iters):
            src_buf.array(ctx.layout, rank)[...] = _payload(n, rank, it)
            dst_buf.array(ctx.layout, rank)[...] = 0
            barrier(ctx)
            times: Dict[int, float] = {}
            launch(ctx, GridLaunch(world, _all_kernel, (ctx, op, src_buf, dst_buf, n, times),
                                   stream_tag=op, slots=min(world, ctx.num_cu)))
            synchronize(ctx)
            barrier(ctx)
            got = dst_buf.array(ctx.layout, rank)
            # all_store: рядок p прийшов від рангу p (клітинка (p, rank)); all_load: прочитано з p (клітинка (rank, p))
            bad = [(p, rank) if op == "all_store" else (rank, p)
                   for p in range(world) if not np.array_equal(got[p], _payload(n, p, it))]
            corrupted |= _agree_bad(ctx, bad, f"{op}, {size} B, ітерація {it}")
            for p, t in times.items():
                samples[p].append(t)
        local = {(rank, p): float("nan") if (rank, p) in corrupted else _median_rate(size, samples[p])
                 for p in range(world)}
        matrix = BandwidthMatrix(op, size, _gather_matrix(ctx, local), reference)
        _log_flags(ctx, matrix)
        results[size] = matrix
        if rank == 0:
            logger.info(f"✅ {op} {size} B: медіана {np.nanmedian(matrix.measured):.3f} GiB/s")
    _fresh_heap(ctx)
    if rank == 0:
        _warn_non_monotone(results)
        if len(results) >= 2:
            sizes_sorted = sorted(results)
            small, large = results[sizes_sorted[0]], results[sizes_sorted[-1]]
            ratio = float(np.nanmedian(large.measured) / max(np.nanmedian(small.measured), 1e-12))
            logger.info(f"📈 {op}: плато {sizes_sorted[-1]} B / {sizes_sorted[0]} B = {ratio:.2f}x")
    return results


# ---------- Патерни ----------
def _time_pattern(contexts: List[WorldContext], problems: List[GemmProblem], name: str,
                  slots: Tuple[Optional[int], Optional[int]]) -> Tuple[float, float, float]:
    recorder = contexts[0].recorder
    recorder.clear()
    windows = spmd(contexts, lambda ctx: run_pattern(ctx, problems[ctx.rank], name,
                                                     gemm_slots=slots[0], comm_slots=slots[1]))
    total = max(e for _, e in windows) - min(s for s, _ in windows)
    return total, recorder.phase_span("compute"), recorder.phase_span("comm")


def _validated(contexts: List[WorldContext], problems: List[GemmProblem], oracle: np.ndarray) -> bool:
    return all(spmd(contexts, lambda ctx: matches_oracle(ctx, problems[ctx.rank], oracle)))


def bench_patterns(shapes: Sequence[Tuple[int, int, int]], world_sizes: Sequence[int], patterns: Sequence[str], *,
                   num_cu: int = 8, arena_size: int = 256 * MIB, seed: int = 0,
                   comm_delay: Union[None, float, str] = None, compute_delay: float = 0.0,
                   repeats: int = 5, timeout_s: float = 30.0,
                   block: Tuple[int, int, int] = (32, 32, 32), group_size_m: int = 4,
                   gemm_slots: Optional[int] = None, comm_slots: Optional[int] = None,
                   fault: Optional[str] = None) -> List[PatternTiming]:
    """
    Для кожного world_size піднімає світ і для кожної форми (M, N_total, K) порівнює патерни.
    Кожен ранг рахує шард N_total / world. Спершу валідація проти оракула, потім медіана
    repeats таймінгів. comm_delay="auto" калібрує затримку на передачу так, щоб
    сумарний час каналу дорівнював обчислювальному проміжку bulk_sync.
    """
    unknown = [p for p in patterns if p not in PATTERNS]
    if unknown:
        raise ValueError(f"Невідомі патерни {unknown}; дозволено: {sorted(PATTERNS)}")
    if repeats < 1:
        raise ValueError(f"repeats має бути >= 1, отримано {repeats}")
    if isinstance(comm_delay, str) and comm_delay != "auto":
        raise ValueError(f"comm_delay: число секунд або 'auto', отримано {comm_delay!r}")

    timings: List[PatternTiming] = []
    for world in world_sizes:
        recorder = TraceRecorder(enabled=True, compute_delay=compute_delay)
        contexts = init(world, arena_size, num_cu, timeout_s=timeout_s, recorder=recorder)
        try:
            for M, N_total, K in shapes:
                if N_total % world:
                    logger.warning(f"⚠️ N={N_total} не ділиться на world={world}, форму пропущено")
                    continue
                reset_heap(contexts[0].layout)
                problems = spmd(contexts, lambda ctx: setup_problem(
                    ctx, M, N_total // world, K, seed=seed, block_m=block[0], block_n=block[1],
                    block_k=block[2], group_size_m=group_size_m))
                oracle = oracle_global(contexts[0], problems[0])
                timings.extend(_bench_shape(contexts, problems, oracle, (M, N_total, K), patterns,
                                            comm_delay, repeats, (gemm_slots, comm_slots), fault))
        finally:
            shutdown(contexts)
    return timings


def _bench_shape(contexts, problems, oracle, shape, patterns, comm_delay, repeats, slots, fault) -> List[PatternTiming]:
    from .validation import inject_fault

    M, N_total, K = shape
    world = len(contexts)
    recorder = contexts[0].recorder
    recorder.comm_delay = 0.0
    if comm_delay == "auto":
        _, compute_s, _ = _time_pattern(contexts, problems, "bulk_sync", slots)
        recorder.comm_delay = compute_s / problems[0].total_tiles
        logger.info(f"⏱️ Калібрування: compute={compute_s * 1e3:.1f} мс -> затримка {recorder.comm_delay * 1e6:.0f} мкс/передачу")
    elif comm_delay is not None:
        if comm_delay < 0:
            raise ValueError(f"comm_delay не може бути від'ємним: {comm_delay}")
        recorder.comm_delay = float(comm_delay)

    out: List[PatternTiming] = []
    for name in patterns:
        runs = []
        validated = True
        for _ in range(repeats):
            total, compute_s, comm_s = _time_pattern(contexts, problems, name, slots)
            tiles = recorder.tile_summary()
            if fault in (name, "*"):
                spmd(contexts, lambda ctx: inject_fault(ctx, problems[ctx.rank]))
            if not _validated(contexts, problems, oracle):
                validated = False
                break
            runs.append((total, compute_s, comm_s, tiles))
        if not validated:
            logger.error(f"❌ {name} {shape} world={world}: C_global не збігається з оракулом, таймінг відкинуто")
            out.append(PatternTiming(name, M, N_total, K, world, float("nan"), float("nan"), float("nan"), False))
            continue
        totals = [r[0] for r in runs]
        mid = runs[int(np.argsort(totals)[len(totals) // 2])]
        out.append(PatternTiming(name, M, N_total, K, world, mid[0], mid[1], mid[2], True, mid[3]))
        if name == "bulk_sync" and recorder.comm_delay > 0:
            model = expected_bulk_total(mid[1], problems[0].total_tiles, recorder.comm_delay)
            logger.info(f"📐 bulk_sync: виміряно {mid[0] * 1e3:.1f} мс, модель {model * 1e3:.1f} мс")
        logger.info(f"✅ {name} {shape} world={world}: {mid[0] * 1e3:.1f} мс "
                    f"(gemm {mid[1] * 1e3:.1f}, comm {mid[2] * 1e3:.1f})")

    if recorder.comm_delay > 0:
        _fill_overlap(contexts, problems, out, slots)
    return out


def expected_bulk_total(compute_s: float, tiles: int, delay: float) -> float:
    """Аналітична модель bulk_sync: кожен канал (src, dst) несе по передачі на тайл, канали паралельні."""
    return compute_s + tiles * delay


def _fill_overlap(contexts, problems, timings: List[PatternTiming], slots) -> None:
    """overlap_eff = 1 - (T_overlapped - T_compute) / T_comm; T_compute і T_comm з bulk_sync."""
    ref = next((t for t in timings if t.pattern == "bulk_sync" and t.validated), None)
    if ref is None:
        _, compute_s, comm_s = _time_pattern(contexts, problems, "bulk_sync", slots)
    else:
        compute_s, comm_s = ref.compute_s, ref.comm_s
    if comm_s <= 0:
        return
    for t in timings:
        if t.validated:
            t.overlap_eff = 1.0 - (t.total_s - compute_s) / comm_s


# ---------- Вивід ----------
def patterns_frame(timings: Sequence[PatternTiming]) -> pd.DataFrame:
    return pd.DataFrame([t.row() for t in timings], columns=PATTERN_COLUMNS)


def overlap_frame(timings: Sequence[PatternTiming]) -> pd.DataFrame:
    rows = [{c: getattr(t, c) for c in OVERLAP_COLUMNS} for t in timings if t.overlap_eff is not None]
    return pd.DataFrame(rows, columns=OVERLAP_COLUMNS)


def write_bandwidth_csv(matrices: Dict[int, BandwidthMatrix], out_dir: str) -> List[str]:
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for size in sorted(matrices):
        m = matrices[size]
        path = os.path.join(out_dir, m.csv_name())
        m.to_frame().to_csv(path, index=False)
        paths.append(path)
    logger.info(f"💾 Записано {len(paths)} CSV у {out_dir}")
    return paths


def write_patterns_csv(timings: Sequence[PatternTiming], out_dir: str) -> List[str]:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "patterns.csv")
    patterns_frame(timings).to_csv(path, index=False)
    paths = [path]
    ovl = overlap_frame(timings)
    if not ovl.empty:
        ovl_path = os.path.join(out_dir, "overlap.csv")
        ovl.to_csv(ovl_path, index=False)
        paths.append(ovl_path)
    logger.info(f"💾 Записано {', '.join(paths)}")
    return paths


def format_bandwidth(matrix: BandwidthMatrix) -> str:
    df = pd.DataFrame(matrix.normalized, index=[f"src {r}" for r in range(matrix.measured.shape[0])],
                      columns=[f"dst {r}" for r in range(matrix.measured.shape[1])])
    return f"{matrix.op} {matrix.size} B (нормалізовано до {matrix.reference:.2f} GiB/s)\n{df.round(3).to_string()}"


def format_patterns(timings: Sequence[PatternTiming]) -> str:
    df = patterns_frame(timings)
    if df.empty:
        return "(немає результатів)"
    for c in ("total_s", "compute_s", "comm_s"):
        df[c] = (df[c] * 1e3).round(2)
    df = df.rename(columns={"total_s": "total_ms", "compute_s": "compute_ms", "comm_s": "comm_ms"})
    return df.to_string(index=False)
