# app/tools/validation.py
# -*- coding: utf-8 -*-
"""
Набори властивостей для команди validate.
Кожен набір піднімає власний невеликий світ і повертає SuiteResult;
виняток усередині набору -- це провал набору, а не падіння всього прогону.
"""

from __future__ import annotations
import time
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .atomics import atomic_add, atomic_cas
from .bench import DESK_SHAPES, KIB, MIB, SELF_COPY_BAND, bench_p2p, bench_patterns
from .errors import OutOfHeapError
from .kernels import GemmProblem, pid_tiles, run_pattern, setup_problem, tile_to_coords
from .patterns_taxonomy import LABELS, OVERLAP_STUDY
from .rma import load, store, tile_view
from .runtime import init, shutdown, spin_wait, spmd, zeros
from .symheap import ALIGNMENT, HeapAddress, alloc, init_heap, translate

try:
    from logger import logger
except Exception:
    import logging
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(levelname)s: %(message)s")
    logger = logging.getLogger("validation")

SUITE_COLUMNS = ["suite", "passed", "seconds", "detail"]


@dataclass
class SuiteResult:
    suite: str
    passed: bool
    seconds: float
    detail: str


@dataclass
class SuiteOptions:
    seed: int = 0
    num_cu: int = 8
    timeout_s: float = 30.0
    quick: bool = False
    fault: Optional[str] = None


def inject_fault(ctx, problem: GemmProblem) -> None:
    """Тестовий хук: псує один елемент C_global на ранзі 0."""
    if ctx.rank == 0:
        problem.C_global.array(ctx.layout, 0)[0, 0] += 1.0


# ---------- Набори ----------
def suite_translation(opts: SuiteOptions) -> str:
    trials = 1_000 if opts.quick else 10_000
    layout = init_heap(4, 64 * 1024)
    rng = np.random.default_rng(opts.seed)
    for _ in range(trials):
        a, b = (int(x) for x in rng.integers(0, 4, size=2))
        off = int(rng.integers(0, layout.arena_size))
        addr = HeapAddress(a, layout.base_table[a] + off)
        there = translate(addr, a, b, layout)
        if translate(there, b, a, layout) != addr:
            raise AssertionError(f"round-trip {a}->{b}->{a} не повернув {addr}")
        if there.linear - layout.base_table[b] != off:
            raise AssertionError(f"зміщення не збережено: {a}->{b}, {off}")
        if a == b and there != addr:
            raise AssertionError("трансляція на себе не тотожна")
    for bad in (layout.base_table[0] - 1, layout.base_table[0] + layout.arena_size):
        try:
            translate(HeapAddress(0, bad), 0, 1, layout)
        except OutOfHeapError:
            continue
        raise AssertionError(f"адреса {bad:#x} поза ареною не відхилена")
    return f"{trials} випадкових трансляцій"


def suite_alloc_symmetry(opts: SuiteOptions) -> str:
    steps = 200 if opts.quick else 1_000
    world = 4
    layout = init_heap(world, 64 * MIB)
    rng = np.random.default_rng(opts.seed)
    trace = [(int(rng.integers(0, 2048)), str(rng.choice(["f32", "i32", "u32", "u64"]))) for _ in range(steps)]
    for rank in range(world):
        for n, dt in trace:
            buf = alloc(layout, n, dt, rank=rank)
            if buf.offset % ALIGNMENT:
                raise AssertionError(f"offset {buf.offset} не вирівняний на {ALIGNMENT}")
    seqs = [layout.offsets(r) for r in range(world)]
    if any(s != seqs[0] for s in seqs):
        raise AssertionError("послідовності offset-ів розійшлися між рангами")
    return f"{steps} алокацій x {world} рангів"


def suite_atomic_counting(opts: SuiteOptions) -> str:
    world, per_rank = 8, (1_000 if opts.quick else 10_000)
    contexts = init(world, 1 * MIB, 1, timeout_s=opts.timeout_s)
    try:
        counters = spmd(contexts, lambda ctx: zeros(ctx, 1, "u32"))
        counter = counters[0]

        def hammer(ctx):
            for _ in range(per_rank):
                atomic_add(counter, 0, 1, 0, ctx.rank, ctx)

        spmd(contexts, hammer)
        total = int(counter.array(contexts[0].layout, 0)[0])
    finally:
        shutdown(contexts)
    if total != world * per_rank:
        raise AssertionError(f"лічильник {total} != {world * per_rank}")
    return f"{world} x {per_rank} atomic_add = {total}"


def suite_publication(opts: SuiteOptions) -> str:
    """write -> cas-release -> cas-acquire -> read; нуль застарілих читань."""
    trials = 1_000 if opts.quick else 10_000
    contexts = init(2, 4 * MIB, 1, timeout_s=opts.timeout_s)
    try:
        bufs = spmd(contexts, lambda ctx: (zeros(ctx, trials, "u32"), zeros(ctx, trials, "u32")))
        data, flags = bufs[0]

        def writer(ctx):
            rng = np.random.default_rng([opts.seed, 1])
            for t in range(trials):
                if rng.random() < 0.1:
                    time.sleep(float(rng.uniform(0, 2e-5)))
                store(tile_view(data, range(t, t + 1)), [t + 1], 1, 0, ctx)
                atomic_cas(flags.address(ctx.layout, 1, t), 0, 1, "release", "sys", ctx)

        def reader(ctx):
            stale = 0
            for t in range(trials):
                addr = flags.address(ctx.layout, 1, t)
                spin_wait(lambda: atomic_cas(addr, 1, 0, "acquire", "sys", ctx) == 1, ctx.world.timeout_s,
                          lambda: TimeoutError(f"прапорець {t} не опубліковано"))
                if int(load(tile_view(data, range(t, t + 1)), 1, 1, ctx)[0]) != t + 1:
                    stale += 1
            return stale

        stale = spmd(contexts, lambda ctx: writer(ctx) if ctx.rank == 0 else reader(ctx))[1]
    finally:
        shutdown(contexts)
    if stale:
        raise AssertionError(f"{stale} застарілих читань з {trials}")
    return f"{trials} публікацій без застарілих читань"


def suite_grid_coverage(opts: SuiteOptions) -> str:
    limit = 64
    for total in range(1, limit + 1):
        for grid in range(1, limit + 1):
            seen = np.zeros(total, dtype=np.int64)
            for pid in range(grid):
                for t in pid_tiles(pid, grid, total):
                    seen[t] += 1
            if not np.all(seen == 1):
                raise AssertionError(f"total={total}, grid={grid}: покриття {seen.tolist()}")
    return f"(total, grid) у [1..{limit}]^2"


def suite_swizzle(opts: SuiteOptions) -> str:
    for pm in range(1, 17):
        for pn in range(1, 17):
            for g in (1, 2, 3, 4, 8, 16):
                coords = {tile_to_coords(t, pm, pn, g) for t in range(pm * pn)}
                if len(coords) != pm * pn:
                    raise AssertionError(f"swizzle не бієкція для {pm}x{pn}, group={g}")
    return "бієкція для сіток до 16x16"


def _protocol_run(opts: SuiteOptions, name: str, slots: Tuple[int, int], tiles_m: int, tiles_n: int) -> None:
    contexts = init(2, 16 * MIB, 4, timeout_s=opts.timeout_s)
    try:
        problems = spmd(contexts, lambda ctx: setup_problem(ctx, 8 * tiles_m, 8 * tiles_n, 8, seed=opts.seed,
                                                            block_m=8, block_n=8, block_k=8, jitter=2e-4))
        spmd(contexts, lambda ctx: run_pattern(ctx, problems[ctx.rank], name, gemm_slots=slots[0], comm_slots=slots[1]))

        def accounting(ctx):
            locks = problems[ctx.rank].locks
            rel, acq = locks.counters(ctx)
            return bool(np.all(locks.states(ctx) == 0) and np.all(rel == 1) and np.all(acq == 1))

        if not all(spmd(contexts, accounting)):
            raise AssertionError(f"{name} {slots}: прапорці не пройшли 0->1->0 рівно один раз")
    finally:
        shutdown(contexts)


def suite_lock_protocol(opts: SuiteOptions) -> str:
    tiles_m, tiles_n = (10, 10) if opts.quick else (25, 40)
    for name in ("wg_specialized", "producer_consumer"):
        _protocol_run(opts, name, (3, 1), tiles_m, tiles_n)
        _protocol_run(opts, name, (1, 1), 4, 4)
    return f"{tiles_m * tiles_n} тайлів з джитером, поділи (3,1) і (1,1)"


def suite_oracle(opts: SuiteOptions) -> str:
    worlds = (1, 2) if opts.quick else (1, 2, 4)
    shapes = DESK_SHAPES[:1] if opts.quick else DESK_SHAPES
    timings = bench_patterns(shapes, worlds, LABELS, num_cu=max(opts.num_cu, 2), arena_size=64 * MIB,
                             seed=opts.seed, repeats=1, timeout_s=opts.timeout_s, block=(32, 32, 64),
                             fault=opts.fault)
    failed = [(t.pattern, (t.M, t.N, t.K), t.world) for t in timings if not t.validated]
    if failed:
        raise AssertionError(f"розбіжність з оракулом: {failed}")
    return f"{len(timings)} конфігурацій збігаються з оракулом"


# Перекриття: 16 x 4 тайли по 32 x 18 -- чотири раунди і на всій сітці (20), і на 16 GEMM-слотах.
# Затримка тайлу на порядок більша за реальну роботу тайлу під GIL.
OVERLAP_SHAPE = (512, 288, 2304)
OVERLAP_WORLD = 4
OVERLAP_NUM_CU = 20
OVERLAP_BLOCK = (32, 18, 256)
OVERLAP_SLOTS = (16, 4)
OVERLAP_COMPUTE_DELAY = 0.1
OVERLAP_REPEATS = 5
OVERLAP_BOUNDS = {"producer_consumer": 0.75, "wg_specialized": 0.75, "fused_sequential": 1.0}


def overlap_ratios(seed: int = 0, timeout_s: float = 30.0, repeats: int = OVERLAP_REPEATS) -> Dict[str, float]:
    """Час кожного патерну з OVERLAP_STUDY відносно bulk_sync при comm_delay='auto'."""
    timings = bench_patterns([OVERLAP_SHAPE], [OVERLAP_WORLD], OVERLAP_STUDY, num_cu=OVERLAP_NUM_CU,
                             arena_size=64 * MIB, seed=seed, comm_delay="auto",
                             compute_delay=OVERLAP_COMPUTE_DELAY, repeats=repeats, timeout_s=timeout_s,
                             block=OVERLAP_BLOCK, gemm_slots=OVERLAP_SLOTS[0], comm_slots=OVERLAP_SLOTS[1])
    failed = [t.pattern for t in timings if not t.validated]
    if failed:
        raise AssertionError(f"розбіжність з оракулом: {failed}")
    total = {t.pattern: t.total_s for t in timings}
    return {p: total[p] / total["bulk_sync"] for p in OVERLAP_STUDY}


def suite_overlap(opts: SuiteOptions) -> str:
    """Штучні затримки: producer-consumer і wg <= 0.75 x bulk_sync, fused <= bulk_sync."""
    ratios = overlap_ratios(opts.seed, opts.timeout_s)
    detail = ", ".join(f"{p}={r:.2f}" for p, r in ratios.items())
    if any(ratios[p] > bound for p, bound in OVERLAP_BOUNDS.items()):
        raise AssertionError(f"перекриття недостатнє: {detail}")
    return detail


def suite_microbench(opts: SuiteOptions) -> str:
    """P2P store на 2 рангах: усі клітинки перевірені, самокопіювання на найбільшому розмірі в [0.8, 1.05]."""
    largest = 16 * MIB if opts.quick else 64 * MIB
    sizes = [4 * KIB, largest]
    contexts = init(2, 2 * largest + 32 * MIB, 2, timeout_s=opts.timeout_s)
    try:
        matrices = spmd(contexts, bench_p2p, "store", sizes, 5)[0]
    finally:
        shutdown(contexts)
    missing = [s for s in sizes if s not in matrices]
    if missing:
        raise AssertionError(f"немає матриць для розмірів {missing}")
    corrupted = {s: m.corrupted_cells() for s, m in matrices.items() if m.corrupted.any()}
    if corrupted:
        raise AssertionError(f"payload не збігся: {corrupted}")
    lo, hi = SELF_COPY_BAND
    self_cells = np.diag(matrices[largest].raw_ratio)
    if not np.all((self_cells >= lo) & (self_cells <= hi)):
        raise AssertionError(f"самокопіювання {largest} B поза [{lo}, {hi}]: {np.round(self_cells, 3).tolist()}")
    return f"самокопіювання {largest} B: {np.round(self_cells, 3).tolist()}"


SUITES: Dict[str, Callable[[SuiteOptions], str]] = {
    "translation": suite_translation,
    "alloc_symmetry": suite_alloc_symmetry,
    "atomic_counting": suite_atomic_counting,
    "publication": suite_publication,
    "grid_coverage": suite_grid_coverage,
    "swizzle": suite_swizzle,
    "lock_protocol": suite_lock_protocol,
    "oracle": suite_oracle,
    "microbench": suite_microbench,
    "overlap": suite_overlap,
}
QUICK_SKIP = ("overlap",)


def run_suites(opts: SuiteOptions, names: Optional[Sequence[str]] = None) -> pd.DataFrame:
    names = list(names or SUITES)
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        raise ValueError(f"Невідомі набори {unknown}; дозволено: {list(SUITES)}")
    results: List[SuiteResult] = []
    for name in names:
        if opts.quick and name in QUICK_SKIP:
            continue
        logger.info(f"🧪 Набір {name}...")
        t0 = time.perf_counter()
        try:
            detail = SUITES[name](opts)
            passed = True
            logger.info(f"✅ {name}: {detail}")
        except Exception as e:
            detail = f"{type(e).__name__}: {e}"
            passed = False
            logger.error(f"❌ {name}: {detail}")
        results.append(SuiteResult(name, passed, time.perf_counter() - t0, detail))
    return pd.DataFrame([r.__dict__ for r in results], columns=SUITE_COLUMNS)
