from datetime import datetime, timezone
from typing import Optional

from sqlalchemy import DateTime, Float, Integer, String
from sqlalchemy.orm import DeclarativeBase, Mapped, mapped_column


class Base(DeclarativeBase):
    pass


def _now() -> datetime:
    return datetime.now(timezone.utc)


class FitRun(Base):
    __tablename__ = "fit_runs"

    id: Mapped[int] = mapped_column(Integer, primary_key=True)
    dataset: Mapped[str] = mapped_column(String, nullable=False, index=True)
    variant: Mapped[str] = mapped_column(String, nullable=False)
    n_classes: Mapped[int] = mapped_column(Integer, nullable=False)
    n_communities: Mapped[int] = mapped_column(Integer, nullable=False)
    seed: Mapped[int] = mapped_column(Integer, nullable=False)
    restarts: Mapped[int] = mapped_column(Integer, nullable=False)
    best_restart: Mapped[int] = mapped_column(Integer, nullable=False)
    log_likelihood: Mapped[float] = mapped_column(Float, nullable=False)
    iterations: Mapped[int] = mapped_column(Integer, nullable=False)
    wall_time: Mapped[Optional[float]] = mapped_column(Float, nullable=True)  # in s
    checkpoint_path: Mapped[Optional[str]] = mapped_column(String, nullable=True)
    created_at: Mapped[datetime] = mapped_column(DateTime, default=_now)

    def __repr__(self):
        return (
            f"<FitRun(dataset='{self.dataset[:8]}', variant='{self.variant}', "
            f"C={self.n_classes}, K={self.n_communities})>"
        )
