# app/tools/results_db.py
# -*- coding: utf-8 -*-
"""
Збереження результатів бенчмарків у SQLite (необов'язково, --sqlite PATH).
Таблиці: runs (прогони), bandwidth_cells (клітинки матриць), pattern_timings (таймінги патернів).
"""

import json
import sqlite3
from typing import Any, Dict, Iterable, Optional

import pandas as pd

try:
    from logger import logger
except Exception:
    import logging
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(levelname)s: %(message)s")
    logger = logging.getLogger("results_db")


def _ensure_database_schema(conn: sqlite3.Connection) -> None:
    """Створює таблиці результатів при необхідності."""

    conn.execute("""
        CREATE TABLE IF NOT EXISTS runs (
            run_id INTEGER PRIMARY KEY AUTOINCREMENT,
            command TEXT NOT NULL,
            created_at TEXT NOT NULL,
            world INTEGER NOT NULL,
            cus INTEGER NOT NULL,
            seed INTEGER NOT NULL,
            config_json TEXT NOT NULL,  -- повний RunConfig
            exit_code INTEGER
        )
    """)

    conn.execute("""
        CREATE TABLE IF NOT EXISTS bandwidth_cells (
            run_id INTEGER NOT NULL,
            op TEXT NOT NULL,
            size INTEGER NOT NULL,
            src_rank INTEGER NOT NULL,
            dst_rank INTEGER NOT NULL,
            gibps REAL,                 -- NULL якщо перевірка payload не пройшла
            normalized REAL,
            PRIMARY KEY (run_id, op, size, src_rank, dst_rank),
            FOREIGN KEY (run_id) REFERENCES runs (run_id)
        )
    """)

    conn.execute("""
        CREATE TABLE IF NOT EXISTS pattern_timings (
            run_id INTEGER NOT NULL,
            pattern TEXT NOT NULL,
            M INTEGER NOT NULL,
            N INTEGER NOT NULL,
            K INTEGER NOT NULL,
            world INTEGER NOT NULL,
            total_s REAL,               -- NULL якщо валідація не пройшла
            compute_s REAL,
            comm_s REAL,
            validated INTEGER NOT NULL,
            overlap_eff REAL,
            PRIMARY KEY (run_id, pattern, M, N, K, world),
            FOREIGN KEY (run_id) REFERENCES runs (run_id)
        )
    """)
    conn.commit()


def start_run(sqlite_path: str, command: str, config: Dict[str, Any]) -> Optional[int]:
    """Реєструє прогін і повертає run_id (None при помилці)."""
    try:
        with sqlite3.connect(sqlite_path) as conn:
            _ensure_database_schema(conn)
            cur = conn.execute(
                "INSERT INTO runs (command, created_at, world, cus, seed, config_json) VALUES (?, ?, ?, ?, ?, ?)",
                [command, pd.Timestamp.now(tz="UTC").isoformat(), int(config.get("world", 0)),
                 int(config.get("cus", 0)), int(config.get("seed", 0)), json.dumps(config, default=str)],
            )
            conn.commit()
            logger.info(f"💾 Прогін #{cur.lastrowid} ({command}) зареєстровано в {sqlite_path}")
            return cur.lastrowid
    except Exception as e:
        logger.error(f"❌ Помилка реєстрації прогону: {e}")
        return None


def finish_run(sqlite_path: str, run_id: int, exit_code: int) -> bool:
    try:
        with sqlite3.connect(sqlite_path) as conn:
            conn.execute("UPDATE runs SET exit_code = ? WHERE run_id = ?", [exit_code, run_id])
            conn.commit()
            return True
    except Exception as e:
        logger.error(f"❌ Помилка завершення прогону: {e}")
        return False


def save_bandwidth(sqlite_path: str, run_id: int, matrices: Iterable) -> bool:
    """Upsert клітинок BandwidthMatrix (op, size, src, dst)."""
    rows = []
    for m in matrices:
        for _, r in m.to_frame().iterrows():
            rows.append({
                "run_id": run_id, "op": m.op, "size": int(m.size),
                "src_rank": int(r["src_rank"]), "dst_rank": int(r["dst_rank"]),
                "gibps": float(r["gibps"]), "normalized": float(r["normalized"]),
            })
    if not rows:
        logger.warning("Немає клітинок пропускної здатності для збереження")
        return False
    try:
        with sqlite3.connect(sqlite_path) as conn:
            _ensure_database_schema(conn)
            conn.executemany("""
                INSERT INTO bandwidth_cells (run_id, op, size, src_rank, dst_rank, gibps, normalized)
                VALUES (:run_id, :op, :size, :src_rank, :dst_rank, :gibps, :normalized)
                ON CONFLICT(run_id, op, size, src_rank, dst_rank) DO UPDATE SET
                    gibps=excluded.gibps,
                    normalized=excluded.normalized
            """, rows)
            conn.commit()
            logger.info(f"💾 Збережено {len(rows)} клітинок пропускної здатності в {sqlite_path}")
            return True
    except Exception as e:
        logger.error(f"❌ Помилка збереження пропускної здатності: {e}")
        return False


def _nullable(value) -> Optional[float]:
    if value is None or value != value:
        return None
    return float(value)


def save_pattern_timings(sqlite_path: str, run_id: int, timings: Iterable) -> bool:
    rows = [{
        "run_id": run_id, "pattern": t.pattern, "M": t.M, "N": t.N, "K": t.K, "world": t.world,
        "total_s": _nullable(t.total_s), "compute_s": _nullable(t.compute_s), "comm_s": _nullable(t.comm_s),
        "validated": int(bool(t.validated)), "overlap_eff": _nullable(t.overlap_eff),
    } for t in timings]
    if not rows:
        logger.warning("Немає таймінгів патернів для збереження")
        return False
    try:
        with sqlite3.connect(sqlite_path) as conn:
            _ensure_database_schema(conn)
            conn.executemany("""
                INSERT OR REPLACE INTO pattern_timings
                (run_id, pattern, M, N, K, world, total_s, compute_s, comm_s, validated, overlap_eff)
                VALUES
                (:run_id, :pattern, :M, :N, :K, :world, :total_s, :compute_s, :comm_s, :validated, :overlap_eff)
            """, rows)
            conn.commit()
            logger.info(f"💾 Збережено {len(rows)} таймінгів патернів в {sqlite_path}")
            return True
    except Exception as e:
        logger.error(f"❌ Помилка збереження таймінгів: {e}")
        return False


def load_pattern_timings(sqlite_path: str, run_id: Optional[int] = None) -> pd.DataFrame:
    """Таймінги патернів (усі прогони або один run_id)."""
    try:
        with sqlite3.connect(sqlite_path) as conn:
            _ensure_database_schema(conn)
            query = "SELECT * FROM pattern_timings"
            params = []
            if run_id is not None:
                query += " WHERE run_id = ?"
                params.append(run_id)
            query += " ORDER BY run_id, world, M, N, K, pattern"
            return pd.read_sql_query(query, conn, params=params)
    except Exception as e:
        logger.error(f"❌ Помилка завантаження таймінгів: {e}")
        return pd.DataFrame()


def load_bandwidth(sqlite_path: str, op: Optional[str] = None) -> pd.DataFrame:
    try:
        with sqlite3.connect(sqlite_path) as conn:
            _ensure_database_schema(conn)
            query = "SELECT * FROM bandwidth_cells"
            params = []
            if op:
                query += " WHERE op = ?"
                params.append(op)
            query += " ORDER BY run_id, op, size, src_rank, dst_rank"
            return pd.read_sql_query(query, conn, params=params)
    except Exception as e:
        logger.error(f"❌ Помилка завантаження пропускної здатності: {e}")
        return pd.DataFrame()


def list_runs(sqlite_path: str, limit: int = 20) -> pd.DataFrame:
    """Останні прогони з кількістю збережених рядків."""
    try:
        with sqlite3.connect(sqlite_path) as conn:
            _ensure_database_schema(conn)
            query = """
                SELECT
                    r.run_id, r.command, r.created_at, r.world, r.cus, r.seed, r.exit_code,
                    (SELECT COUNT(*) FROM bandwidth_cells b WHERE b.run_id = r.run_id) AS bandwidth_cells,
                    (SELECT COUNT(*) FROM pattern_timings p WHERE p.run_id = r.run_id) AS pattern_rows
                FROM runs r
                ORDER BY r.run_id DESC
                LIMIT ?
            """
            df = pd.read_sql_query(query, conn, params=[limit])
            logger.info(f"📋 Знайдено {len(df)} прогонів у {sqlite_path}")
            return df
    except Exception as e:
        logger.error(f"❌ Помилка отримання списку прогонів: {e}")
        return pd.DataFrame()
