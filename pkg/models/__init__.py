from .grid_cell import GridCell  # noqa: F401
from .run import Base, FitRun  # noqa: F401
