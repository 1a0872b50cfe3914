# app/cli.py
# -*- coding: utf-8 -*-
from __future__ import annotations
import argparse
import dataclasses
import os
import sys
from typing import List, Optional, Sequence

import pandas as pd

from app.tools.bench import (bench_all, bench_p2p, bench_patterns, clear_reference_history, format_bandwidth,
                             format_patterns, write_bandwidth_csv, write_patterns_csv)
from app.tools.config import (ConfigError, RunConfig, apply_values, env_values, format_shape,
                              load_config_file)
from app.tools.errors import DataCorruptionError
from app.tools.patterns_taxonomy import ID2DESC, ID2NAME, TAXONOMY
from app.tools.results_db import finish_run, save_bandwidth, save_pattern_timings, start_run
from app.tools.runtime import init, shutdown, spmd
from app.tools.validation import SuiteOptions, run_suites

try:
    from logger import logger
except Exception:
    import logging
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(levelname)s: %(message)s")
    logger = logging.getLogger("cli")

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2
DEMO_SHAPE = (256, 128, 512)


def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    common = argparse.ArgumentParser(add_help=False, argument_default=S)
    common.add_argument("--config", help="JSON-файл з ключами як у прапорців")
    common.add_argument("--world", type=int, help="Кількість рангів (4)")
    common.add_argument("--cus", type=int, help="Емульовані обчислювальні блоки на ранг (8)")
    common.add_argument("--arena-mib", type=int, help="Розмір арени рангу, MiB (256)")
    common.add_argument("--seed", type=int, help="Зерно всіх випадкових даних (0)")
    common.add_argument("--sizes", help="Розміри повідомлень: 4KiB,64KiB,1MiB")
    common.add_argument("--shapes", help="Глобальні форми MxNxK через кому: 512x288x2304")
    common.add_argument("--patterns", help="Патерни через кому")
    common.add_argument("--ops", help="Операції бенчмарку через кому")
    common.add_argument("--worlds", help="Розміри світу для bench-patterns: 1,2,4")
    common.add_argument("--comm-delay-us", help="Штучна затримка на передачу, мкс, або 'auto'")
    common.add_argument("--compute-delay-us", type=float, help="Штучна затримка на тайл GEMM, мкс")
    common.add_argument("--out", help="Каталог для CSV (./results)")
    common.add_argument("--timeout-s", type=float, help="Таймаут бар'єрів і очікувань, с (30)")
    common.add_argument("--iters", type=int, help="Ітерацій на клітинку, перша -- прогрів (5)")
    common.add_argument("--repeats", type=int, help="Повторів на патерн (5)")
    common.add_argument("--sqlite", help="Зберігати результати в SQLite")
    common.add_argument("--inject-fault", nargs="?", const="*", help="Тестовий хук: зіпсувати C_global (патерн або *)")
    common.add_argument("--quick", action="store_true", help="Скорочений прогін")

    parser = argparse.ArgumentParser(
        prog="run_bench.py",
        description="Симетрична купа, RMA та патерни перекриття GEMM + All-Scatter",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Приклади використання:
  # Перевірка всіх властивостей
  python run_bench.py validate --world 2

  # P2P мікробенчмарки
  python run_bench.py bench-p2p --sizes 4KiB,64KiB,1MiB --out ./results

  # Порівняння патернів із штучною затримкою комунікації
  python run_bench.py bench-patterns --shapes 512x288x2304 --worlds 1,2,4 --comm-delay-us auto

  # Демонстрація таксономії
  python run_bench.py demo
        """,
    )
    sub = parser.add_subparsers(dest="command", help="Доступні команди")
    sub.add_parser("bench-p2p", parents=[common], help="P2P load/store/atomics між усіма парами рангів")
    sub.add_parser("bench-all", parents=[common], help="All-load / all-store: усі ранги одночасно")
    sub.add_parser("bench-patterns", parents=[common], help="Порівняння патернів GEMM + All-Scatter")
    sub.add_parser("validate", parents=[common], help="Набори властивостей (коректність)")
    sub.add_parser("demo", parents=[common], help="Маленький світ, усі патерни, таблиця таксономії")
    return parser


def parse(argv: Sequence[str], environ: Optional[dict] = None) -> RunConfig:
    """
    Прапорці -> RunConfig. Пріоритет: за замовчуванням < середовище < --config < прапорці.
    Невідомий прапорець -> SystemExit(2) від argparse; невідомий ключ -> ConfigError.
    """
    parser = build_parser()
    args = vars(parser.parse_args(list(argv)))
    command = args.pop("command", None)
    if command is None:
        parser.print_help(sys.stderr)
        raise ConfigError("Не вказано команду")
    cfg = RunConfig(command=command)
    apply_values(cfg, env_values(environ), "середовищі")
    config_path = args.pop("config", None)
    if config_path:
        apply_values(cfg, load_config_file(config_path), config_path)
    apply_values(cfg, args, "прапорцях")
    return cfg.validate()


# ---------- Команди ----------
def _run_bandwidth(cfg: RunConfig, run_id: Optional[int]) -> int:
    fn = bench_all if cfg.command == "bench-all" else bench_p2p
    ops = cfg.resolved_ops()
    contexts = init(cfg.world, cfg.arena_size, cfg.cus, timeout_s=cfg.timeout_s)
    corrupted = {}
    try:
        for op in ops:
            logger.info(f"📊 {op}: розміри {cfg.sizes}, world={cfg.world}")
            matrices = spmd(contexts, fn, op, cfg.sizes, cfg.iters)[0]
            write_bandwidth_csv(matrices, cfg.out)
            if matrices:
                print(format_bandwidth(matrices[max(matrices)]))
            if cfg.sqlite and run_id is not None:
                save_bandwidth(cfg.sqlite, run_id, matrices.values())
            corrupted.update({(op, size): m.corrupted_cells() for size, m in matrices.items() if m.corrupted.any()})
    finally:
        shutdown(contexts)
    if corrupted:
        raise DataCorruptionError(f"клітинки з розбіжністю payload (записані як NaN): {corrupted}")
    return EXIT_OK


def _run_patterns(cfg: RunConfig, run_id: Optional[int], shapes=None, repeats=None) -> int:
    timings = bench_patterns(
        shapes or cfg.shapes, cfg.worlds or [cfg.world], cfg.patterns,
        num_cu=cfg.cus, arena_size=cfg.arena_size, seed=cfg.seed,
        comm_delay=cfg.comm_delay, compute_delay=cfg.compute_delay_us * 1e-6,
        repeats=repeats or cfg.repeats, timeout_s=cfg.timeout_s, fault=cfg.inject_fault,
    )
    write_patterns_csv(timings, cfg.out)
    print(format_patterns(timings))
    if cfg.sqlite and run_id is not None:
        save_pattern_timings(cfg.sqlite, run_id, timings)
    failed = [t for t in timings if not t.validated]
    for t in failed:
        print(f"❌ {t.pattern} {format_shape((t.M, t.N, t.K))} world={t.world}: розбіжність з оракулом", file=sys.stderr)
    return EXIT_FAILED if failed else EXIT_OK


def _run_validate(cfg: RunConfig) -> int:
    opts = SuiteOptions(seed=cfg.seed, num_cu=cfg.cus, timeout_s=cfg.timeout_s, quick=cfg.quick,
                        fault=cfg.inject_fault)
    df = run_suites(opts)
    os.makedirs(cfg.out, exist_ok=True)
    df.to_csv(os.path.join(cfg.out, "validate.csv"), index=False)
    print(df.assign(status=df["passed"].map({True: "✅", False: "❌"}))[["status", "suite", "seconds", "detail"]]
          .round({"seconds": 2}).to_string(index=False))
    return EXIT_OK if bool(df["passed"].all()) else EXIT_FAILED


def _run_demo(cfg: RunConfig, run_id: Optional[int]) -> int:
    taxonomy = pd.DataFrame(TAXONOMY)[["id", "name", "fused", "overlap", "implemented"]]
    print("Таксономія патернів:")
    print(taxonomy.to_string(index=False))
    print()
    print("Запущені патерни:")
    for pattern in cfg.patterns:
        print(f"  {ID2NAME[pattern]} -- {ID2DESC[pattern]}")
    print()
    return _run_patterns(cfg, run_id, shapes=[DEMO_SHAPE], repeats=1)


def run(cfg: RunConfig) -> int:
    """Виконує команду; повертає код виходу (0 успіх, 1 провал перевірок, 2 використання)."""
    cfg.validate()
    clear_reference_history()
    run_id = start_run(cfg.sqlite, cfg.command, dataclasses.asdict(cfg)) if cfg.sqlite else None
    code = EXIT_FAILED
    try:
        if cfg.command in ("bench-p2p", "bench-all"):
            code = _run_bandwidth(cfg, run_id)
        elif cfg.command == "bench-patterns":
            code = _run_patterns(cfg, run_id)
        elif cfg.command == "validate":
            code = _run_validate(cfg)
        elif cfg.command == "demo":
            code = _run_demo(cfg, run_id)
    except DataCorruptionError as e:
        print(f"❌ Пошкодження даних: {e}", file=sys.stderr)
        code = EXIT_FAILED
    finally:
        if run_id is not None:
            finish_run(cfg.sqlite, run_id, code)
    return code


def main(argv: Optional[List[str]] = None) -> int:
    """CLI точка входу."""
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg = parse(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else EXIT_OK
    except ConfigError as e:
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_USAGE

    try:
        return run(cfg)
    except KeyboardInterrupt:
        print("\n⏹️  Зупинено користувачем", file=sys.stderr)
        return EXIT_FAILED
    except ConfigError as e:
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as e:
        print(f"\n❌ Помилка: {e}", file=sys.stderr)
        logger.exception("❌ Прогін впав")
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
