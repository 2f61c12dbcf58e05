from typing import Optional

from sqlalchemy import Float, Integer, String, UniqueConstraint
from sqlalchemy.orm import Mapped, mapped_column

from models.run import Base


class GridCell(Base):
    """One (C, K) cell of a model-selection grid on a fixed mask"""

    __tablename__ = "grid_cells"
    __table_args__ = (
        UniqueConstraint(
            "dataset",
            "mask_seed",
            "config_key",
            "n_classes",
            "n_communities",
            name="uq_grid_cell",
        ),
    )

    id: Mapped[int] = mapped_column(Integer, primary_key=True)
    dataset: Mapped[str] = mapped_column(String, nullable=False)
    mask_seed: Mapped[int] = mapped_column(Integer, nullable=False)
    # fingerprint of the fit options shared by the whole grid
    config_key: Mapped[str] = mapped_column(String, nullable=False)
    variant: Mapped[str] = mapped_column(String, nullable=False)
    n_classes: Mapped[int] = mapped_column(Integer, nullable=False)
    n_communities: Mapped[int] = mapped_column(Integer, nullable=False)
    status: Mapped[str] = mapped_column(String, nullable=False, default="done")
    heldout: Mapped[Optional[float]] = mapped_column(Float, nullable=True)
    heldout_uniform: Mapped[Optional[float]] = mapped_column(Float, nullable=True)
    auc: Mapped[Optional[float]] = mapped_column(Float, nullable=True)
    log_likelihood: Mapped[Optional[float]] = mapped_column(Float, nullable=True)

    def __repr__(self):
        return f"<GridCell(C={self.n_classes}, K={self.n_communities}, status='{self.status}')>"
