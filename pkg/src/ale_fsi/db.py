"""SQLite cache of background flows and the remesh event log."""

import io
import sqlite3
from datetime import datetime
from pathlib import Path
from typing import Optional

import numpy as np

from ale_fsi import config
from ale_fsi.models import BackgroundFlow, QuadraticMesh, RemeshEvent

SCHEMA = """
CREATE TABLE IF NOT EXISTS background_flows (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    config_key TEXT NOT NULL UNIQUE,
    format_version INTEGER NOT NULL,
    n_nodes INTEGER NOT NULL,
    steady_residual REAL,
    payload BLOB NOT NULL,
    last_updated TEXT NOT NULL
);

CREATE TABLE IF NOT EXISTS remesh_events (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    run_id TEXT NOT NULL,
    step INTEGER NOT NULL,
    time REAL NOT NULL,
    x REAL NOT NULL,
    y REAL NOT NULL,
    reason TEXT NOT NULL CHECK (reason IN ('displacement', 'quality')),
    UNIQUE(run_id, step)
);

CREATE INDEX IF NOT EXISTS idx_remesh_events_run ON remesh_events(run_id);
"""


def init_db(db_path: Path) -> sqlite3.Connection:
    """Initialize database with schema and return connection."""
    db_path.parent.mkdir(parents=True, exist_ok=True)
    conn = sqlite3.connect(db_path)
    conn.executescript(SCHEMA)
    conn.commit()
    return conn


def _encode(bg: BackgroundFlow) -> bytes:
    mesh = bg.mesh
    buffer = io.BytesIO()
    np.savez_compressed(
        buffer,
        points=mesh.points,
        n_vertices=np.array(mesh.n_vertices),
        elements=mesh.elements,
        edges=mesh.edges,
        element_edges=mesh.element_edges,
        subdomain=mesh.subdomain,
        boundary_edges=mesh.boundary_edges,
        boundary_tags=np.array(mesh.boundary_tags, dtype=str),
        interface_edges=mesh.interface_edges,
        u=bg.u,
        p=bg.p,
        history=np.array(bg.residual_history, dtype=float),
    )
    return buffer.getvalue()


def _decode(payload: bytes) -> BackgroundFlow:
    with np.load(io.BytesIO(payload), allow_pickle=False) as data:
        mesh = QuadraticMesh(
            points=data["points"],
            n_vertices=int(data["n_vertices"]),
            elements=data["elements"],
            edges=data["edges"],
            element_edges=data["element_edges"],
            subdomain=data["subdomain"],
            boundary_edges=data["boundary_edges"],
            boundary_tags=tuple(str(t) for t in data["boundary_tags"]),
            interface_edges=data["interface_edges"],
        )
        return BackgroundFlow(
            mesh=mesh,
            u=data["u"],
            p=data["p"],
            residual_history=tuple(float(v) for v in data["history"]),
        )


def save_background(conn: sqlite3.Connection, config_key: str, bg: BackgroundFlow) -> None:
    """Save a background flow under its config key, replacing any existing entry."""
    conn.execute("DELETE FROM background_flows WHERE config_key = ?", (config_key,))
    conn.execute(
        """
        INSERT INTO background_flows (
            config_key, format_version, n_nodes, steady_residual, payload, last_updated
        )
        VALUES (?, ?, ?, ?, ?, ?)
        """,
        (
            config_key,
            config.CACHE_FORMAT_VERSION,
            bg.mesh.n_nodes,
            bg.steady_residual,
            _encode(bg),
            datetime.now().isoformat(timespec="seconds"),
        ),
    )
    conn.commit()


def get_cached_background(conn: sqlite3.Connection, config_key: str) -> Optional[BackgroundFlow]:
    """Get the cached background flow for a key, or None if missing or stale."""
    cursor = conn.execute(
        "SELECT format_version, payload FROM background_flows WHERE config_key = ?",
        (config_key,),
    )
    row = cursor.fetchone()
    if row is None or row[0] != config.CACHE_FORMAT_VERSION:
        return None
    return _decode(row[1])


def delete_background(conn: sqlite3.Connection, config_key: str) -> int:
    """Delete a cached background flow. Returns number of rows deleted."""
    cursor = conn.execute("DELETE FROM background_flows WHERE config_key = ?", (config_key,))
    conn.commit()
    return cursor.rowcount


def insert_remesh_events(conn: sqlite3.Connection, run_id: str, events: list[RemeshEvent]) -> None:
    """Insert remesh events of one run, ignoring duplicates."""
    conn.executemany(
        """
        INSERT OR IGNORE INTO remesh_events (run_id, step, time, x, y, reason)
        VALUES (?, ?, ?, ?, ?, ?)
        """,
        [(run_id, e.step, e.time, e.x, e.y, e.reason) for e in events],
    )
    conn.commit()


def get_remesh_events(conn: sqlite3.Connection, run_id: str) -> list[RemeshEvent]:
    cursor = conn.execute(
        """
        SELECT step, time, x, y, reason
        FROM remesh_events
        WHERE run_id = ?
        ORDER BY step
        """,
        (run_id,),
    )
    return [RemeshEvent(*row) for row in cursor.fetchall()]
