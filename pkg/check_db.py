import os
import sqlite3

path = os.getenv("SYMHEAP_SQLITE", "results.db")
conn = sqlite3.connect(path)

# Перевіряємо таблиці
tables = [row[0] for row in conn.execute("SELECT name FROM sqlite_master WHERE type='table'").fetchall()]
print("Tables:", tables)

# Прогони
if 'runs' in tables:
    count = conn.execute("SELECT COUNT(*) FROM runs").fetchone()[0]
    print(f"Runs: {count}")

    if count > 0:
        sample = conn.execute("SELECT run_id, command, created_at, exit_code FROM runs ORDER BY run_id DESC LIMIT 3").fetchall()
        for row in sample:
            print(f"  #{row[0]} {row[1]} @ {row[2]} -> exit {row[3]}")

# Пропускна здатність
if 'bandwidth_cells' in tables:
    count = conn.execute("SELECT COUNT(*) FROM bandwidth_cells").fetchone()[0]
    print(f"Bandwidth cells: {count}")
else:
    print("bandwidth_cells table not found")

# Патерни
if 'pattern_timings' in tables:
    rows = conn.execute("SELECT pattern, world, COUNT(*), SUM(validated) FROM pattern_timings GROUP BY pattern, world").fetchall()
    for pattern, world, n, ok in rows:
        print(f"  {pattern} world={world}: {n} rows, {ok} validated")
else:
    print("pattern_timings table not found")

conn.close()
