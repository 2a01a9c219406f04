"""
Run Registry - SQLite index of training and analysis runs
Records every CLI run with its configuration, epoch metrics and artifacts
"""

import json
import sqlite3
import threading
from datetime import datetime


class RunRegistry:
    """
    Manages the SQLite registry of runs, per-epoch metrics and emitted
    artifacts. One connection per call; thread-safe.
    """

    METRIC_COLUMNS = (
        'recon', 'commit', 'som', 'dir', 'total', 'tau',
        'uninit_cells', 'excluded_dir_samples'
    )

    def __init__(self, db_path="lsor_runs.db"):
        """Initialize database connection and create tables."""
        self.db_path = str(db_path)
        self.lock = threading.Lock()
        self.init_database()

    def _connect(self):
        conn = sqlite3.connect(self.db_path)
        conn.row_factory = sqlite3.Row
        return conn

    def init_database(self):
        """Create database tables if they don't exist."""
        with self.lock:
            conn = self._connect()
            cursor = conn.cursor()

            cursor.execute('''
                CREATE TABLE IF NOT EXISTS runs (
                    id INTEGER PRIMARY KEY AUTOINCREMENT,
                    command TEXT NOT NULL,
                    seed INTEGER,
                    run_dir TEXT NOT NULL,
                    start_time TEXT NOT NULL,
                    end_time TEXT,
                    config TEXT,
                    summary TEXT,
                    status TEXT DEFAULT 'running'
                )
            ''')

            # Column names carry a _loss suffix: COMMIT is an SQL keyword
            cursor.execute('''
                CREATE TABLE IF NOT EXISTS epoch_metrics (
                    id INTEGER PRIMARY KEY AUTOINCREMENT,
                    run_id INTEGER NOT NULL,
                    phase TEXT NOT NULL,
                    epoch INTEGER NOT NULL,
                    recon_loss REAL,
                    commit_loss REAL,
                    som_loss REAL,
                    dir_loss REAL,
                    total_loss REAL,
                    tau REAL,
                    uninit_cells INTEGER,
                    excluded_dir_samples INTEGER,
                    FOREIGN KEY (run_id) REFERENCES runs(id)
                )
            ''')

            cursor.execute('''
                CREATE TABLE IF NOT EXISTS artifacts (
                    id INTEGER PRIMARY KEY AUTOINCREMENT,
                    run_id INTEGER NOT NULL,
                    name TEXT NOT NULL,
                    path TEXT NOT NULL,
                    FOREIGN KEY (run_id) REFERENCES runs(id)
                )
            ''')

            conn.commit()
            conn.close()

    def create_run(self, command, seed, run_dir, config=None):
        """
        Create a new run record.
        Returns run ID.
        """
        with self.lock:
            conn = self._connect()
            cursor = conn.cursor()

            cursor.execute('''
                INSERT INTO runs (command, seed, run_dir, start_time, config)
                VALUES (?, ?, ?, ?, ?)
            ''', (command, seed, str(run_dir), datetime.now().isoformat(),
                  json.dumps(config) if config else None))

            run_id = cursor.lastrowid
            conn.commit()
            conn.close()

            return run_id

    def _finish(self, run_id, status, summary):
        with self.lock:
            conn = self._connect()
            conn.execute('''
                UPDATE runs
                SET end_time = ?, summary = ?, status = ?
                WHERE id = ?
            ''', (datetime.now().isoformat(), json.dumps(summary), status, run_id))
            conn.commit()
            conn.close()

    def complete_run(self, run_id, summary=None):
        """Mark run completed with a summary dictionary."""
        self._finish(run_id, 'completed', summary or {})

    def fail_run(self, run_id, message):
        """Mark run failed, keeping the error message."""
        self._finish(run_id, 'failed', {'error': message})

    def store_epoch_metrics(self, run_id, phase, metrics):
        """Store one epoch row; metrics is a mapping with 'epoch' and METRIC_COLUMNS keys."""
        values = [metrics.get(column) for column in self.METRIC_COLUMNS]
        with self.lock:
            conn = self._connect()
            conn.execute('''
                INSERT INTO epoch_metrics
                (run_id, phase, epoch, recon_loss, commit_loss, som_loss, dir_loss,
                 total_loss, tau, uninit_cells, excluded_dir_samples)
                VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?)
            ''', (run_id, phase, metrics['epoch'], *values))
            conn.commit()
            conn.close()

    def store_artifact(self, run_id, name, path):
        """Store an emitted artifact path."""
        with self.lock:
            conn = self._connect()
            conn.execute('''
                INSERT INTO artifacts (run_id, name, path) VALUES (?, ?, ?)
            ''', (run_id, name, str(path)))
            conn.commit()
            conn.close()

    def get_recent_runs(self, limit=10):
        """Get most recent runs as dicts."""
        with self.lock:
            conn = self._connect()
            rows = conn.execute('''
                SELECT id, command, seed, run_dir, start_time, end_time, status
                FROM runs
                ORDER BY id DESC
                LIMIT ?
            ''', (limit,)).fetchall()
            conn.close()
            return [dict(row) for row in rows]

    def get_run_by_id(self, run_id):
        """Get a single run row by id as a dict, or None if not found."""
        with self.lock:
            conn = self._connect()
            row = conn.execute('SELECT * FROM runs WHERE id = ?', (run_id,)).fetchone()
            conn.close()
            return dict(row) if row else None

    def get_run_metrics(self, run_id, phase=None):
        """Get epoch metrics of a run in epoch order."""
        query = 'SELECT * FROM epoch_metrics WHERE run_id = ?'
        params = [run_id]
        if phase:
            query += ' AND phase = ?'
            params.append(phase)
        query += ' ORDER BY id'

        with self.lock:
            conn = self._connect()
            rows = conn.execute(query, params).fetchall()
            conn.close()
            return [dict(row) for row in rows]

    def get_run_artifacts(self, run_id):
        """Get {name: path} of a run's artifacts."""
        with self.lock:
            conn = self._connect()
            rows = conn.execute(
                'SELECT name, path FROM artifacts WHERE run_id = ? ORDER BY id',
                (run_id,)).fetchall()
            conn.close()
            return {row['name']: row['path'] for row in rows}

    def search_runs(self, command=None, status=None):
        """
        Search runs with optional filters.
        Returns list of matching runs.
        """
        query = 'SELECT * FROM runs WHERE 1=1'
        params = []

        if command:
            query += ' AND command = ?'
            params.append(command)
        if status:
            query += ' AND status = ?'
            params.append(status)

        query += ' ORDER BY id DESC'

        with self.lock:
            conn = self._connect()
            rows = conn.execute(query, params).fetchall()
            conn.close()
            return [dict(row) for row in rows]

    def export_to_json(self, output_file):
        """
        Dump runs, epoch metrics and artifacts to one JSON file, config and
        summary columns decoded. Returns the number of runs written.
        """
        with self.lock:
            conn = self._connect()
            export_data = {table: [dict(row) for row in conn.execute(f'SELECT * FROM {table}')]
                           for table in ('runs', 'epoch_metrics', 'artifacts')}
            conn.close()

        for run in export_data['runs']:
            for column in ('config', 'summary'):
                if run[column]:
                    run[column] = json.loads(run[column])

        with open(output_file, 'w') as f:
            json.dump(export_data, f, indent=2)
        return len(export_data['runs'])

    def get_statistics_summary(self):
        """
        Get registry statistics.
        Returns dictionary with run counts by command and status.
        """
        with self.lock:
            conn = self._connect()
            cursor = conn.cursor()

            stats = {}
            cursor.execute('SELECT COUNT(*), MIN(start_time), MAX(start_time) FROM runs')
            total, first, last = cursor.fetchone()
            stats['total_runs'] = total
            stats['first_run'] = first
            stats['last_run'] = last

            cursor.execute('SELECT command, COUNT(*) FROM runs GROUP BY command')
            stats['runs_by_command'] = {row[0]: row[1] for row in cursor.fetchall()}

            cursor.execute('SELECT status, COUNT(*) FROM runs GROUP BY status')
            stats['runs_by_status'] = {row[0]: row[1] for row in cursor.fetchall()}

            conn.close()
            return stats
