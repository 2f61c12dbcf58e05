import os
from pathlib import Path
from typing import Any, List, Optional, Tuple

from PySide6.QtCore import QSettings

from compute import LOG_SPACE_THRESHOLD

ORGANIZATION = "hypermeso"
APPLICATION = "hypermeso"


def get_default_data_path() -> str:
    """
    Directory holding outputs and the run database by default
    """
    return str(Path(os.path.expanduser("~")) / "hypermeso")


def create_default_settings(path: Optional[str | Path] = None) -> QSettings:
    """
    Open the persistent settings and fill in missing defaults

    Args:
        path: optional ini file, the platform store is used otherwise
    """
    if path is not None:
        settings = QSettings(str(path), QSettings.Format.IniFormat)
    else:
        settings = QSettings(ORGANIZATION, APPLICATION)

    # Set default values if they don't exist
    if not settings.value("output_directory"):
        settings.setValue("output_directory", get_default_data_path() + "/runs")
    if not settings.value("database_path"):
        settings.setValue("database_path", get_default_data_path() + "/runs.db")
    if not settings.value("jobs"):
        settings.setValue("jobs", 1)
    if not settings.value("log_space_threshold"):
        settings.setValue("log_space_threshold", LOG_SPACE_THRESHOLD)
    return settings


def int_value(settings: QSettings, key: str, default: int) -> int:
    """Integer setting; ini backends hand values back as strings"""
    value: Any = settings.value(key, default)
    try:
        return int(value)
    except (TypeError, ValueError):
        return default


def validate_settings(settings: QSettings) -> Tuple[bool, List[str]]:
    """
    Validate settings

    Args:
        settings (QSettings): Settings to validate

    Returns:
        Tuple[bool, List[str]]: Tuple containing validation result and list of error messages
    """
    errors = []
    output_dir = settings.value("output_directory")
    database_path = settings.value("database_path")
    jobs = settings.value("jobs")
    threshold = settings.value("log_space_threshold")

    if not output_dir:
        errors.append("Output directory is not set!")
    elif os.path.exists(output_dir) and not os.path.isdir(output_dir):
        errors.append(f"Invalid output directory: {output_dir}")

    if not database_path:
        errors.append("Database path is not set!")
    elif os.path.isdir(database_path):
        errors.append(f"Invalid database path: {database_path} is a directory")

    if jobs is None or str(jobs) == "":
        errors.append("Number of jobs is not set!")
    elif not str(jobs).isdigit() or int(jobs) < 1:
        errors.append(f"Invalid number of jobs: {jobs}")

    if threshold is None or str(threshold) == "":
        errors.append("Log space threshold is not set!")
    elif not str(threshold).isdigit() or int(threshold) < 2:
        errors.append(f"Invalid log space threshold: {threshold}")

    return len(errors) == 0, errors
