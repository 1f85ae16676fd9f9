import aiosqlite
import json
import math
import time
from typing import Optional


class RunLedger:
    """SQLite record of every CLI run and its check rows."""

    def __init__(self, db_path: str):
        self.db_path = db_path
        self.db: Optional[aiosqlite.Connection] = None

    async def init(self):
        self.db = await aiosqlite.connect(self.db_path)
        self.db.row_factory = aiosqlite.Row
        await self._create_tables()

    async def close(self):
        if self.db:
            await self.db.close()

    async def _create_tables(self):
        await self.db.executescript("""
            CREATE TABLE IF NOT EXISTS runs (
                id INTEGER PRIMARY KEY AUTOINCREMENT,
                command TEXT NOT NULL,
                config TEXT NOT NULL,
                seed INTEGER NOT NULL,
                status TEXT NOT NULL,
                exit_code INTEGER NOT NULL,
                wall_time REAL,
                created_at REAL NOT NULL
            );

            CREATE TABLE IF NOT EXISTS results (
                id INTEGER PRIMARY KEY AUTOINCREMENT,
                run_id INTEGER NOT NULL REFERENCES runs(id),
                quantity TEXT NOT NULL,
                value REAL,
                bound REAL,
                passed INTEGER NOT NULL
            );

            CREATE INDEX IF NOT EXISTS idx_results_run ON results(run_id);
        """)
        await self.db.commit()

    # ---- Run operations ----

    async def record_run(self, command: str, config: dict, seed: int, status: str,
                         exit_code: int, wall_time: float) -> int:
        cursor = await self.db.execute(
            """INSERT INTO runs (command, config, seed, status, exit_code, wall_time, created_at)
               VALUES (?, ?, ?, ?, ?, ?, ?)""",
            (command, json.dumps(config, sort_keys=True), seed, status, exit_code,
             wall_time, time.time()),
        )
        await self.db.commit()
        return cursor.lastrowid

    async def add_results(self, run_id: int, rows: list[dict]):
        await self.db.executemany(
            """INSERT INTO results (run_id, quantity, value, bound, passed)
               VALUES (?, ?, ?, ?, ?)""",
            [(run_id, r["quantity"], _number(r["value"]), _number(r["bound"]),
              1 if r["pass"] else 0) for r in rows],
        )
        await self.db.commit()

    async def get_run(self, run_id: int) -> Optional[dict]:
        cursor = await self.db.execute("SELECT * FROM runs WHERE id = ?", (run_id,))
        row = await cursor.fetchone()
        if not row:
            return None
        run = dict(row)
        run["config"] = json.loads(run["config"])
        return run

    async def get_recent_runs(self, limit: int = 20, command: Optional[str] = None) -> list[dict]:
        if command:
            cursor = await self.db.execute(
                "SELECT * FROM runs WHERE command = ? ORDER BY id DESC LIMIT ?", (command, limit)
            )
        else:
            cursor = await self.db.execute("SELECT * FROM runs ORDER BY id DESC LIMIT ?", (limit,))
        rows = await cursor.fetchall()
        return [dict(r) for r in rows]

    async def get_results(self, run_id: int) -> list[dict]:
        cursor = await self.db.execute(
            "SELECT * FROM results WHERE run_id = ? ORDER BY id", (run_id,)
        )
        rows = await cursor.fetchall()
        return [dict(r) for r in rows]

    async def get_failed_results(self, run_id: int) -> list[dict]:
        cursor = await self.db.execute(
            "SELECT * FROM results WHERE run_id = ? AND passed = 0 ORDER BY id", (run_id,)
        )
        rows = await cursor.fetchall()
        return [dict(r) for r in rows]

    async def get_run_count(self) -> int:
        cursor = await self.db.execute("SELECT COUNT(*) as cnt FROM runs")
        row = await cursor.fetchone()
        return row["cnt"] if row else 0


def _number(x) -> Optional[float]:
    """Report values arrive as floats, None or 'nan'/'inf' strings."""
    if x is None:
        return None
    x = float(x)
    return None if math.isnan(x) else x
