import pytest
from PySide6.QtCore import QSettings

from settings import create_default_settings, get_default_data_path, int_value, validate_settings


@pytest.fixture
def settings(temp_dir):
    """Create test settings"""
    return create_default_settings(temp_dir / "test.ini")


def test_defaults(settings):
    """Test that missing values get defaults"""
    assert settings.value("output_directory") == get_default_data_path() + "/runs"
    assert settings.value("database_path") == get_default_data_path() + "/runs.db"
    assert int_value(settings, "jobs", 0) == 1
    assert int_value(settings, "log_space_threshold", 0) == 8
    valid, errors = validate_settings(settings)
    assert valid
    assert errors == []


def test_defaults_keep_existing_values(temp_dir):
    path = temp_dir / "custom.ini"
    settings = QSettings(str(path), QSettings.Format.IniFormat)
    settings.setValue("jobs", 4)
    settings.sync()
    assert int_value(create_default_settings(path), "jobs", 1) == 4


def test_int_value_fallback(settings):
    settings.setValue("jobs", "many")
    assert int_value(settings, "jobs", 3) == 3
    assert int_value(settings, "missing", 7) == 7


def test_validate_missing_values(temp_dir):
    settings = QSettings(str(temp_dir / "empty.ini"), QSettings.Format.IniFormat)
    valid, errors = validate_settings(settings)
    assert not valid
    assert "Output directory is not set!" in errors
    assert "Database path is not set!" in errors
    assert "Number of jobs is not set!" in errors
    assert "Log space threshold is not set!" in errors


def test_validate_bad_values(settings, temp_dir):
    not_a_directory = temp_dir / "file.txt"
    not_a_directory.write_text("x")
    settings.setValue("output_directory", str(not_a_directory))
    settings.setValue("database_path", str(temp_dir))
    settings.setValue("jobs", "0")
    settings.setValue("log_space_threshold", "1")
    valid, errors = validate_settings(settings)
    assert not valid
    assert f"Invalid output directory: {not_a_directory}" in errors
    assert f"Invalid database path: {temp_dir} is a directory" in errors
    assert "Invalid number of jobs: 0" in errors
    assert "Invalid log space threshold: 1" in errors
