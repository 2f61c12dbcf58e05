import os

from database import RunDatabase


def record(db, dataset="abc123", log_likelihood=-10.0):
    return db.record_fit(
        dataset=dataset,
        variant="semi",
        n_classes=2,
        n_communities=3,
        seed=0,
        restarts=10,
        best_restart=4,
        log_likelihood=log_likelihood,
        iterations=57,
        wall_time=1.5,
        checkpoint_path="/tmp/checkpoint.json",
    )


def test_new_database_creation(temp_db_path):
    """Test that a new database is created with the correct schema"""
    # Database shouldn't exist yet
    assert not os.path.exists(temp_db_path)

    db = RunDatabase(str(temp_db_path))
    assert os.path.exists(temp_db_path)

    assert record(db)
    fits = db.list_fits()
    assert len(fits) == 1
    assert fits[0]["best_restart"] == 4
    assert fits[0]["checkpoint_path"] == "/tmp/checkpoint.json"

    # Clean up
    db.remove_database()
    assert not os.path.exists(temp_db_path)


def test_database_in_missing_directory(temp_dir):
    db_path = temp_dir / "nested" / "runs.db"
    db = RunDatabase(db_path)
    assert os.path.exists(db_path)
    db.remove_database()


def test_reopen_keeps_fits(temp_db_path):
    """Test that migrations on an existing file keep the stored rows"""
    db = RunDatabase(str(temp_db_path))
    record(db)
    db.cleanup()

    again = RunDatabase(str(temp_db_path))
    assert len(again.list_fits()) == 1
    again.remove_database()


def test_list_fits_by_dataset(db):
    record(db, dataset="first", log_likelihood=-3.0)
    record(db, dataset="second", log_likelihood=-2.0)
    record(db, dataset="first", log_likelihood=-1.0)
    fits = db.list_fits("first")
    assert [fit["log_likelihood"] for fit in fits] == [-3.0, -1.0]
    assert len(db.list_fits()) == 3


def test_grid_cell_upsert(db):
    """Test that saving a cell twice updates it in place"""
    assert db.get_grid_cell("abc", 0, "key", 2, 3) is None
    assert db.save_grid_cell(
        "abc", 0, "key", variant="omni", n_classes=2, n_communities=3, status="failed"
    )
    cell = db.get_grid_cell("abc", 0, "key", 2, 3)
    assert cell["status"] == "failed"
    assert cell["heldout"] is None

    assert db.save_grid_cell(
        "abc",
        0,
        "key",
        variant="omni",
        n_classes=2,
        n_communities=3,
        status="done",
        heldout=-12.5,
        heldout_uniform=-3.0,
        auc=0.75,
        log_likelihood=-100.0,
    )
    cell = db.get_grid_cell("abc", 0, "key", 2, 3)
    assert cell["status"] == "done"
    assert cell["heldout_uniform"] == -3.0
    assert len(db.list_grid_cells("abc", 0)) == 1


def test_grid_cells_are_keyed(db):
    db.save_grid_cell("abc", 0, "key", variant="semi", n_classes=2, n_communities=2, status="done")
    db.save_grid_cell("abc", 1, "key", variant="semi", n_classes=2, n_communities=2, status="done")
    db.save_grid_cell("abc", 0, "other", variant="semi", n_classes=2, n_communities=2, status="done")
    db.save_grid_cell("abc", 0, "key", variant="semi", n_classes=2, n_communities=3, status="done")
    cells = db.list_grid_cells("abc", 0)
    assert [(c["n_classes"], c["n_communities"]) for c in cells] == [(2, 2), (2, 2), (2, 3)]
    assert db.get_grid_cell("abc", 1, "other", 2, 2) is None


def test_grid_cell_unknown_field(db, caplog):
    assert not db.save_grid_cell("abc", 0, "key", n_classes=2, n_communities=2, colour="red")
    assert "Unknown grid cell fields" in caplog.text


def test_log_signal(db):
    messages = []
    db.log_signal.connect(lambda level, message: messages.append(message))
    record(db)
    assert any("Recorded semi fit" in message for message in messages)
