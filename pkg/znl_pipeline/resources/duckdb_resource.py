"""
DuckDB Resource - Provenance Ledger

This resource records what every pipeline stage produced:
- Connection management with context managers
- Query execution (execute, fetch_all, fetch_df) with lock-conflict retries
- Schema initialization (ledger)
- Metadata tables (artifact_metadata, stage_runs) used for skip-if-unchanged checks
"""

import os
import time
from contextlib import contextmanager
from functools import wraps
from pathlib import Path
from typing import Generator

import duckdb
from dagster import ConfigurableResource, get_dagster_logger


logger = get_dagster_logger()


def retry_on_lock(max_retries=5, delay=1.0):
    """
    Decorator to retry database operations on lock conflicts.

    Backs off exponentially while another process holds the ledger file.

    Args:
        max_retries: Maximum number of attempts (default: 5)
        delay: Initial delay in seconds, doubled on each retry (default: 1.0)
    """
    def decorator(func):
        @wraps(func)
        def wrapper(*args, **kwargs):
            for attempt in range(max_retries):
                try:
                    return func(*args, **kwargs)
                except duckdb.IOException as e:
                    if "Could not set lock" in str(e) and attempt < max_retries - 1:
                        wait_time = delay * (2 ** attempt)
                        logger.warning(
                            f"Ledger lock conflict (attempt {attempt + 1}/{max_retries}), "
                            f"retrying in {wait_time}s"
                        )
                        time.sleep(wait_time)
                        continue
                    raise
            return func(*args, **kwargs)
        return wrapper
    return decorator


class DuckDBResource(ConfigurableResource):
    """
    Ledger database holding artifact hashes, stage fingerprints and run history.

    Outputs themselves never carry timestamps; the ledger is the only place they live.
    """

    database_path: str = os.environ.get("ZNL_LEDGER_DATABASE", "data/znl_ledger.duckdb")

    @contextmanager
    def get_connection(
        self, read_only: bool = False
    ) -> Generator[duckdb.DuckDBPyConnection, None, None]:
        """
        Get a DuckDB connection context manager.

        Args:
            read_only: Open read-only so concurrent readers do not contend for the write lock.
        """
        if not read_only:
            Path(self.database_path).parent.mkdir(parents=True, exist_ok=True)
        conn = duckdb.connect(self.database_path, read_only=read_only)
        try:
            yield conn
        finally:
            conn.close()

    @retry_on_lock(max_retries=5, delay=1.0)
    def execute(self, query: str, params: tuple = None) -> None:
        """Run a statement that returns nothing (INSERT, CREATE, ...)."""
        with self.get_connection(read_only=False) as conn:
            if params:
                conn.execute(query, params)
            else:
                conn.execute(query)

    @retry_on_lock(max_retries=5, delay=1.0)
    def fetch_all(self, query: str, params: tuple = None) -> list:
        """Run a query and return all rows."""
        with self.get_connection(read_only=True) as conn:
            if params:
                return conn.execute(query, params).fetchall()
            return conn.execute(query).fetchall()

    def fetch_df(self, query: str, params: tuple = None):
        """Run a query and return a DataFrame."""
        with self.get_connection(read_only=True) as conn:
            if params:
                return conn.execute(query, params).fetchdf()
            return conn.execute(query).fetchdf()

    def initialize(self) -> None:
        self.initialize_schemas()
        self.initialize_metadata_tables()

    def initialize_schemas(self) -> None:
        with self.get_connection() as conn:
            conn.execute("CREATE SCHEMA IF NOT EXISTS ledger")

    def initialize_metadata_tables(self) -> None:
        """
        Create the provenance tables.

        - artifact_metadata: one row per (fingerprint, artifact) with its hash and status
        - stage_runs: every stage execution, including skips and failures
        """
        with self.get_connection() as conn:
            conn.execute("""
                CREATE TABLE IF NOT EXISTS ledger.artifact_metadata (
                    artifact_id VARCHAR PRIMARY KEY,
                    stage VARCHAR NOT NULL,
                    artifact_path VARCHAR NOT NULL,
                    sha256 VARCHAR,
                    fingerprint VARCHAR NOT NULL,
                    recorded_at TIMESTAMP DEFAULT CURRENT_TIMESTAMP,
                    status VARCHAR DEFAULT 'pending',
                    error_message VARCHAR,
                    UNIQUE(fingerprint, artifact_path)
                )
            """)

            conn.execute("""
                CREATE TABLE IF NOT EXISTS ledger.stage_runs (
                    run_id VARCHAR PRIMARY KEY,
                    stage VARCHAR NOT NULL,
                    fingerprint VARCHAR NOT NULL,
                    run_timestamp TIMESTAMP DEFAULT CURRENT_TIMESTAMP,
                    status VARCHAR,
                    duration_seconds FLOAT,
                    error_message VARCHAR
                )
            """)
