"""Tests for database operations."""

import sqlite3
from pathlib import Path

import numpy as np
import pytest

from ale_fsi import config
from ale_fsi.db import (
    delete_background,
    get_cached_background,
    get_remesh_events,
    init_db,
    insert_remesh_events,
    save_background,
)
from ale_fsi.models import BackgroundFlow, QuadraticMesh, RemeshEvent


@pytest.fixture
def background(channel_mesh: QuadraticMesh) -> BackgroundFlow:
    rng = np.random.default_rng(0)
    return BackgroundFlow(
        mesh=channel_mesh,
        u=rng.normal(size=(channel_mesh.n_nodes, 2)),
        p=rng.normal(size=channel_mesh.n_vertices),
        residual_history=(1e-2, 1e-5, 1e-9),
    )


class TestInitDb:
    def test_creates_tables(self, temp_db: Path) -> None:
        conn = init_db(temp_db)
        cursor = conn.execute("SELECT name FROM sqlite_master WHERE type='table' ORDER BY name")
        tables = [row[0] for row in cursor.fetchall()]
        conn.close()
        assert "background_flows" in tables
        assert "remesh_events" in tables

    def test_idempotent(self, temp_db: Path) -> None:
        conn1 = init_db(temp_db)
        conn1.close()
        conn2 = init_db(temp_db)  # Should not raise
        conn2.close()


class TestBackgroundCache:
    def test_save_and_get(
        self, db_connection: sqlite3.Connection, background: BackgroundFlow
    ) -> None:
        save_background(db_connection, "abc", background)
        cached = get_cached_background(db_connection, "abc")
        assert cached is not None
        np.testing.assert_array_equal(cached.u, background.u)
        np.testing.assert_array_equal(cached.p, background.p)
        np.testing.assert_array_equal(cached.mesh.points, background.mesh.points)
        np.testing.assert_array_equal(cached.mesh.elements, background.mesh.elements)
        assert cached.mesh.boundary_tags == background.mesh.boundary_tags
        assert cached.residual_history == background.residual_history
        assert cached.steady_residual == 1e-9

    def test_not_found(self, db_connection: sqlite3.Connection) -> None:
        assert get_cached_background(db_connection, "missing") is None

    def test_save_replaces_old_entry(
        self, db_connection: sqlite3.Connection, background: BackgroundFlow
    ) -> None:
        save_background(db_connection, "abc", background)
        doubled = BackgroundFlow(background.mesh, 2.0 * background.u, background.p)
        save_background(db_connection, "abc", doubled)
        count = db_connection.execute("SELECT COUNT(*) FROM background_flows").fetchone()[0]
        assert count == 1
        cached = get_cached_background(db_connection, "abc")
        assert cached is not None
        np.testing.assert_array_equal(cached.u, doubled.u)

    def test_stale_format_version(
        self,
        db_connection: sqlite3.Connection,
        background: BackgroundFlow,
        monkeypatch: pytest.MonkeyPatch,
    ) -> None:
        save_background(db_connection, "abc", background)
        monkeypatch.setattr(config, "CACHE_FORMAT_VERSION", config.CACHE_FORMAT_VERSION + 1)
        assert get_cached_background(db_connection, "abc") is None

    def test_delete(self, db_connection: sqlite3.Connection, background: BackgroundFlow) -> None:
        save_background(db_connection, "abc", background)
        assert delete_background(db_connection, "abc") == 1
        assert delete_background(db_connection, "abc") == 0
        assert get_cached_background(db_connection, "abc") is None


class TestRemeshEvents:
    def test_insert_and_query(self, db_connection: sqlite3.Connection) -> None:
        events = [
            RemeshEvent(12, 0.045, 0.62, 0.75, "displacement"),
            RemeshEvent(40, 0.15, 0.70, 0.71, "quality"),
        ]
        insert_remesh_events(db_connection, "run-1", events)
        assert get_remesh_events(db_connection, "run-1") == events
        assert get_remesh_events(db_connection, "run-2") == []

    def test_insert_duplicate_ignored(self, db_connection: sqlite3.Connection) -> None:
        event = RemeshEvent(12, 0.045, 0.62, 0.75, "displacement")
        insert_remesh_events(db_connection, "run-1", [event])
        insert_remesh_events(db_connection, "run-1", [event])  # Should not raise
        assert len(get_remesh_events(db_connection, "run-1")) == 1

    def test_ordered_by_step(self, db_connection: sqlite3.Connection) -> None:
        insert_remesh_events(
            db_connection,
            "run-1",
            [RemeshEvent(30, 0.3, 0.0, 0.0, "quality"), RemeshEvent(10, 0.1, 0.0, 0.0, "quality")],
        )
        assert [e.step for e in get_remesh_events(db_connection, "run-1")] == [10, 30]

    def test_unknown_reason_is_not_stored(self, db_connection: sqlite3.Connection) -> None:
        insert_remesh_events(db_connection, "run-1", [RemeshEvent(1, 0.1, 0.0, 0.0, "boredom")])
        assert get_remesh_events(db_connection, "run-1") == []
