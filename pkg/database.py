"""Database module for storing fits and grid results"""

import logging
import os
import pathlib
from typing import Any, Dict, List, Optional

from PySide6.QtCore import QObject, Signal
from sqlalchemy import create_engine, select, text
from sqlalchemy.orm import sessionmaker

from models.grid_cell import GridCell
from models.run import Base, FitRun

ALEMBIC_INI = pathlib.Path(__file__).resolve().parent / "alembic.ini"

GRID_CELL_FIELDS = (
    "variant",
    "n_classes",
    "n_communities",
    "status",
    "heldout",
    "heldout_uniform",
    "auc",
    "log_likelihood",
)


class RunDatabase(QObject):
    """Database of fitted models and grid cells"""

    log_signal = Signal(int, str)  # level and message

    def __init__(self, db_path: pathlib.Path | str) -> None:
        """
        Initialize the database connection and schema

        Args:
            db_path: Path to SQLite database file, created if missing
        """
        super().__init__()
        try:
            self.log_message(logging.DEBUG, f"Using database path: {db_path}")

            self.db_path = str(db_path)

            db_dir = os.path.dirname(self.db_path)
            if db_dir and not os.path.exists(db_dir):
                self.log_message(logging.DEBUG, f"Creating database directory: {db_dir}")
                try:
                    os.makedirs(db_dir)
                except Exception as e:
                    self.log_message(
                        logging.ERROR, f"Failed to create database directory: {db_dir}"
                    )
                    raise RuntimeError(f"Could not create database directory: {db_dir}") from e

            self.engine = create_engine(f"sqlite:///{self.db_path}")

            # Run migrations
            from alembic import command
            from alembic.config import Config

            alembic_cfg = Config(str(ALEMBIC_INI))
            alembic_cfg.attributes["configure_logger"] = False
            alembic_cfg.set_main_option("sqlalchemy.url", f"sqlite:///{self.db_path}")
            command.upgrade(alembic_cfg, "head")

            self.Session = sessionmaker(bind=self.engine)

            # Create tables if they don't exist
            Base.metadata.create_all(self.engine)

            with self.Session() as session:
                session.execute(text("SELECT 1"))

        except Exception as e:
            self.log_message(logging.ERROR, f"Failed to initialize database: {str(e)}")
            raise RuntimeError("Could not initialize database") from e

    def log_message(self, level: int, message: str):
        """Emit the message for listeners and to the system logger"""
        self.log_signal.emit(level, message)
        logging.log(level, message)

    def record_fit(
        self,
        dataset: str,
        variant: str,
        n_classes: int,
        n_communities: int,
        seed: int,
        restarts: int,
        best_restart: int,
        log_likelihood: float,
        iterations: int,
        wall_time: Optional[float] = None,
        checkpoint_path: Optional[str] = None,
    ) -> bool:
        """Save one finished fit"""
        session = self.Session()
        try:
            run = FitRun(
                dataset=dataset,
                variant=variant,
                n_classes=n_classes,
                n_communities=n_communities,
                seed=seed,
                restarts=restarts,
                best_restart=best_restart,
                log_likelihood=log_likelihood,
                iterations=iterations,
                wall_time=wall_time,
                checkpoint_path=checkpoint_path,
            )
            session.add(run)
            session.commit()
            self.log_message(
                logging.INFO,
                f"Recorded {variant} fit C={n_classes} K={n_communities} on {dataset[:12]}",
            )
            return True
        except Exception as e:
            self.log_message(logging.ERROR, f"Error saving fit: {str(e)}")
            session.rollback()
            return False
        finally:
            session.close()

    def list_fits(self, dataset: Optional[str] = None) -> List[Dict[str, Any]]:
        """
        Get recorded fits, oldest first

        Args:
            dataset: restrict to one dataset fingerprint
        """
        with self.Session() as session:
            query = select(FitRun).order_by(FitRun.id)
            if dataset is not None:
                query = query.where(FitRun.dataset == dataset)
            return [
                {
                    "dataset": run.dataset,
                    "variant": run.variant,
                    "n_classes": run.n_classes,
                    "n_communities": run.n_communities,
                    "seed": run.seed,
                    "restarts": run.restarts,
                    "best_restart": run.best_restart,
                    "log_likelihood": run.log_likelihood,
                    "iterations": run.iterations,
                    "wall_time": run.wall_time,
                    "checkpoint_path": run.checkpoint_path,
                }
                for run in session.execute(query).scalars().all()
            ]

    def save_grid_cell(
        self,
        dataset: str,
        mask_seed: int,
        config_key: str,
        **values: Any,
    ) -> bool:
        """Insert or update a grid cell keyed by (dataset, mask, options, C, K)"""
        unknown = set(values) - set(GRID_CELL_FIELDS)
        if unknown:
            self.log_message(logging.ERROR, f"Unknown grid cell fields: {sorted(unknown)}")
            return False
        session = self.Session()
        try:
            cell = (
                session.query(GridCell)
                .filter_by(
                    dataset=dataset,
                    mask_seed=mask_seed,
                    config_key=config_key,
                    n_classes=values.get("n_classes"),
                    n_communities=values.get("n_communities"),
                )
                .first()
            )
            if not cell:
                cell = GridCell(dataset=dataset, mask_seed=mask_seed, config_key=config_key)
                session.add(cell)
            for name, value in values.items():
                setattr(cell, name, value)
            session.commit()
            return True
        except Exception as e:
            self.log_message(logging.ERROR, f"Error saving grid cell: {str(e)}")
            session.rollback()
            return False
        finally:
            session.close()

    def get_grid_cell(
        self,
        dataset: str,
        mask_seed: int,
        config_key: str,
        n_classes: int,
        n_communities: int,
    ) -> Optional[Dict[str, Any]]:
        """Get a stored grid cell, None if it was never run"""
        session = self.Session()
        try:
            cell = (
                session.query(GridCell)
                .filter_by(
                    dataset=dataset,
                    mask_seed=mask_seed,
                    config_key=config_key,
                    n_classes=n_classes,
                    n_communities=n_communities,
                )
                .first()
            )
            if cell:
                return {name: getattr(cell, name) for name in GRID_CELL_FIELDS}
            return None
        except Exception as e:
            self.log_message(logging.ERROR, f"Error getting grid cell: {str(e)}")
            return None
        finally:
            session.close()

    def list_grid_cells(self, dataset: str, mask_seed: int) -> List[Dict[str, Any]]:
        with self.Session() as session:
            cells = (
                session.execute(
                    select(GridCell)
                    .where(GridCell.dataset == dataset, GridCell.mask_seed == mask_seed)
                    .order_by(GridCell.n_classes, GridCell.n_communities)
                )
                .scalars()
                .all()
            )
            return [{name: getattr(cell, name) for name in GRID_CELL_FIELDS} for cell in cells]

    def cleanup(self):
        """Clean up database resources"""
        try:
            from sqlalchemy.orm import close_all_sessions

            close_all_sessions()

            if hasattr(self, "engine"):
                self.engine.dispose()
        except Exception as e:
            self.log_message(logging.ERROR, f"Error during database cleanup: {str(e)}")

    def remove_database(self):
        """Remove the database file"""
        try:
            self.cleanup()
            if hasattr(self, "db_path") and os.path.exists(self.db_path):
                os.remove(self.db_path)
        except Exception as e:
            self.log_message(logging.ERROR, f"Error removing database file: {str(e)}")

    def __del__(self):
        """Cleanup engine on object destruction"""
        try:
            self.cleanup()
        except Exception:
            # Suppress errors during deletion
            pass
