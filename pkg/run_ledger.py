"""
Experiment Run Ledger
SQLite record of experiments, their runs and per-epoch training history
"""

import json
import logging
import sqlite3
from pathlib import Path
from typing import Dict, List, Optional, Union

from errors import ReportError
from experiment_harness import ExperimentReport, MarginSearchResult

logger = logging.getLogger(__name__)


class ExperimentLedger:
    """Append-only store keyed by experiment id; one connection per call"""

    def __init__(self, db_path: Union[str, Path] = "runs/ledger.db"):
        self.db_path = str(db_path)
        self.ensure_database_exists()
        self.setup_schema()

    def ensure_database_exists(self):
        """Ensure database file and directory exist"""
        Path(self.db_path).parent.mkdir(parents=True, exist_ok=True)

    def get_connection(self) -> sqlite3.Connection:
        conn = sqlite3.connect(self.db_path)
        conn.row_factory = sqlite3.Row
        conn.execute("PRAGMA foreign_keys = ON")
        return conn

    def setup_schema(self):
        conn = self.get_connection()
        try:
            conn.execute("""
                CREATE TABLE IF NOT EXISTS experiments (
                    id INTEGER PRIMARY KEY AUTOINCREMENT,
                    kind TEXT NOT NULL, -- experiment, margin_search
                    dataset TEXT NOT NULL,
                    variant TEXT NOT NULL,
                    master_seed INTEGER NOT NULL,
                    config_hash TEXT NOT NULL,
                    mean_accuracy REAL,
                    std_accuracy REAL,
                    notes TEXT, -- JSON array
                    payload TEXT, -- full JSON report
                    created_date TIMESTAMP DEFAULT CURRENT_TIMESTAMP
                )
            """)
            conn.execute("""
                CREATE TABLE IF NOT EXISTS runs (
                    id INTEGER PRIMARY KEY AUTOINCREMENT,
                    experiment_id INTEGER NOT NULL,
                    run_index INTEGER NOT NULL,
                    seeds TEXT NOT NULL, -- JSON object
                    accuracy REAL NOT NULL,
                    train_size INTEGER,
                    test_size INTEGER,
                    final_loss REAL,
                    margin REAL,
                    FOREIGN KEY (experiment_id) REFERENCES experiments (id) ON DELETE CASCADE
                )
            """)
            conn.execute("""
                CREATE TABLE IF NOT EXISTS epoch_history (
                    id INTEGER PRIMARY KEY AUTOINCREMENT,
                    run_id INTEGER NOT NULL,
                    epoch INTEGER NOT NULL,
                    mean_loss REAL NOT NULL,
                    mean_d1 REAL NOT NULL,
                    mean_d2 REAL NOT NULL,
                    wallclock_ms REAL,
                    FOREIGN KEY (run_id) REFERENCES runs (id) ON DELETE CASCADE
                )
            """)
            for index_sql in (
                "CREATE INDEX IF NOT EXISTS idx_experiments_hash ON experiments(config_hash)",
                "CREATE INDEX IF NOT EXISTS idx_runs_experiment ON runs(experiment_id)",
                "CREATE INDEX IF NOT EXISTS idx_history_run ON epoch_history(run_id)",
            ):
                conn.execute(index_sql)
            conn.commit()
        except Exception as e:
            conn.rollback()
            logger.error(f"Ledger schema setup failed: {e}")
            raise ReportError(f"cannot initialise ledger {self.db_path}: {e}") from e
        finally:
            conn.close()

    def record_experiment(self, report: ExperimentReport) -> int:
        """Store the report, each run and each run's epoch history"""
        conn = self.get_connection()
        try:
            cursor = conn.execute("""
                INSERT INTO experiments (kind, dataset, variant, master_seed, config_hash,
                                         mean_accuracy, std_accuracy, notes, payload)
                VALUES ('experiment', ?, ?, ?, ?, ?, ?, ?, ?)
            """, (
                report.dataset_name, report.variant, report.master_seed, report.config_hash,
                report.mean, report.std, json.dumps(report.notes), json.dumps(report.to_dict()),
            ))
            experiment_id = cursor.lastrowid
            for run in report.runs:
                run_cursor = conn.execute("""
                    INSERT INTO runs (experiment_id, run_index, seeds, accuracy, train_size, test_size, final_loss)
                    VALUES (?, ?, ?, ?, ?, ?, ?)
                """, (experiment_id, run.index, json.dumps(run.seeds), run.accuracy,
                      run.train_size, run.test_size, run.final_loss))
                conn.executemany("""
                    INSERT INTO epoch_history (run_id, epoch, mean_loss, mean_d1, mean_d2, wallclock_ms)
                    VALUES (?, ?, ?, ?, ?, ?)
                """, [(run_cursor.lastrowid, h['epoch'], h['mean_loss'], h['mean_d1'], h['mean_d2'],
                       h.get('wallclock_ms', 0.0)) for h in run.history])
            conn.commit()
            logger.info(f"Ledger: experiment {experiment_id} recorded ({len(report.runs)} runs)")
            return experiment_id
        except Exception as e:
            conn.rollback()
            logger.error(f"Failed to record experiment: {e}")
            raise
        finally:
            conn.close()

    def record_margin_search(self, result: MarginSearchResult) -> int:
        conn = self.get_connection()
        try:
            best = result.means.index(max(result.means))
            cursor = conn.execute("""
                INSERT INTO experiments (kind, dataset, variant, master_seed, config_hash,
                                         mean_accuracy, std_accuracy, notes, payload)
                VALUES ('margin_search', ?, ?, ?, ?, ?, ?, ?, ?)
            """, (
                result.dataset_name, result.variant, result.master_seed, result.config_hash,
                result.means[best], result.stds[best],
                json.dumps([f"best margin {result.best_margin:.1f}"]), json.dumps(result.to_dict()),
            ))
            experiment_id = cursor.lastrowid
            conn.executemany("""
                INSERT INTO runs (experiment_id, run_index, seeds, accuracy, margin)
                VALUES (?, ?, '{}', ?, ?)
            """, [(experiment_id, r, accuracy, margin)
                  for margin, cell in zip(result.margins, result.accuracies)
                  for r, accuracy in enumerate(cell)])
            conn.commit()
            return experiment_id
        except Exception as e:
            conn.rollback()
            logger.error(f"Failed to record margin search: {e}")
            raise
        finally:
            conn.close()

    def get_experiments(self, config_hash: Optional[str] = None) -> List[Dict]:
        conn = self.get_connection()
        try:
            query = "SELECT id, kind, dataset, variant, master_seed, config_hash, mean_accuracy, std_accuracy, notes FROM experiments"
            params: tuple = ()
            if config_hash:
                query += " WHERE config_hash = ?"
                params = (config_hash,)
            experiments = []
            for row in conn.execute(query + " ORDER BY id", params).fetchall():
                experiment = dict(row)
                experiment['notes'] = json.loads(experiment['notes']) if experiment['notes'] else []
                experiments.append(experiment)
            return experiments
        finally:
            conn.close()

    def get_runs(self, experiment_id: int) -> List[Dict]:
        conn = self.get_connection()
        try:
            runs = []
            for row in conn.execute(
                "SELECT * FROM runs WHERE experiment_id = ? ORDER BY id", (experiment_id,)
            ).fetchall():
                run = dict(row)
                run['seeds'] = json.loads(run['seeds'])
                runs.append(run)
            return runs
        finally:
            conn.close()

    def get_history(self, run_id: int) -> List[Dict]:
        conn = self.get_connection()
        try:
            return [dict(row) for row in conn.execute(
                "SELECT epoch, mean_loss, mean_d1, mean_d2, wallclock_ms FROM epoch_history WHERE run_id = ? ORDER BY epoch",
                (run_id,),
            ).fetchall()]
        finally:
            conn.close()

    def load_report(self, experiment_id: int) -> ExperimentReport:
        conn = self.get_connection()
        try:
            row = conn.execute("SELECT payload FROM experiments WHERE id = ? AND kind = 'experiment'",
                               (experiment_id,)).fetchone()
        finally:
            conn.close()
        if row is None:
            raise ReportError(f"no experiment {experiment_id} in ledger {self.db_path}")
        return ExperimentReport.from_dict(json.loads(row['payload']))
