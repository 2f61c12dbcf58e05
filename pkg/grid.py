"""Model selection over a (C, K) grid on one shared held-out mask"""

import hashlib
import json
import logging
import threading
from concurrent.futures import Future, ThreadPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, Iterable, List, Optional, Tuple

from PySide6.QtCore import QObject, Signal

from errors import HypermesoError, NumericError, ValidationError
from hypergraph import Hypergraph, MaskedSplit, fingerprint, mask_split
from inference import FitConfig, fit, heldout_score
from metrics import heldout_auc
from params import Variant


@dataclass
class GridResult:
    n_classes: int
    n_communities: int
    status: str = "done"
    heldout: Optional[float] = None
    heldout_uniform: Optional[float] = None
    auc: Optional[float] = None
    log_likelihood: Optional[float] = None
    reused: bool = False

    @property
    def cell(self) -> Tuple[int, int]:
        return self.n_classes, self.n_communities


@dataclass
class GridOutcome:
    results: List[GridResult] = field(default_factory=list)
    winner: Optional[GridResult] = None

    def rows(self) -> List[Dict]:
        return [asdict(result) for result in self.results]


def grid_cells(
    grid_c: Iterable[int], grid_k: Iterable[int], variant: Variant
) -> List[Tuple[int, int]]:
    """Sorted (C, K) pairs with C <= K; the strict variant only keeps C == K."""
    cells = sorted(
        {
            (int(c), int(k))
            for c in grid_c
            for k in grid_k
            if c <= k and (variant != Variant.STRICT or c == k)
        }
    )
    if not cells:
        raise ValidationError("the grid has no cell with C <= K")
    return cells


def config_key(config: FitConfig) -> str:
    """Fingerprint of the fit options other than C and K."""
    payload = config.to_dict()
    payload.pop("n_classes")
    payload.pop("n_communities")
    encoded = json.dumps(payload, sort_keys=True, default=str).encode()
    return hashlib.sha256(encoded).hexdigest()[:16]


def select_winner(results: Iterable[GridResult]) -> Optional[GridResult]:
    """Highest uniform held-out likelihood, ties to the smaller (C, K)."""
    winner = None
    for result in sorted(results, key=lambda r: r.cell):
        if result.status != "done" or result.heldout_uniform is None:
            continue
        if winner is None or result.heldout_uniform > winner.heldout_uniform:
            winner = result
    return winner


class GridManager(QObject):
    log_signal = Signal(int, str)  # level and message
    progress_signal = Signal(int)
    grid_complete_signal = Signal(bool)

    def __init__(
        self,
        hypergraph: Hypergraph,
        config: FitConfig,
        grid_c: Iterable[int],
        grid_k: Iterable[int],
        mask_seed: int,
        jobs: int = 1,
        run_db=None,
    ):
        super().__init__()
        if jobs < 1:
            raise ValidationError(f"jobs must be >= 1, got {jobs}")
        self.config = config
        self.cells = grid_cells(grid_c, grid_k, config.variant)
        self.mask_seed = mask_seed
        self.jobs = jobs
        self.run_db = run_db
        self.dataset = fingerprint(hypergraph)
        self.config_key = config_key(config)
        self.split: MaskedSplit = mask_split(hypergraph, mask_seed)
        self.stop_process = False
        self._stop_lock = threading.Lock()

    def log_message(self, level, message):
        """Helper method to emit log messages with level"""
        self.log_signal.emit(level, message)

    def cleanup(self):
        """Clean up resources"""
        if hasattr(self, "run_db"):
            self.run_db = None

    def stop_processing(self):
        with self._stop_lock:
            self.stop_process = True

    def _stopped(self) -> bool:
        with self._stop_lock:
            return self.stop_process

    def fit_cell(self, n_classes: int, n_communities: int) -> GridResult:
        """Fit one cell on the training part of the mask and score it."""
        if self._stopped():
            return GridResult(n_classes, n_communities, status="cancelled")
        config = replace(self.config, n_classes=n_classes, n_communities=n_communities)
        result = fit(self.split.train, config)
        score = heldout_score(self.split, result.params, config.log_space_threshold)
        try:
            cell_auc = heldout_auc(score, self.mask_seed)
        except ValidationError:
            cell_auc = None
        return GridResult(
            n_classes,
            n_communities,
            heldout=score.total,
            heldout_uniform=score.uniform,
            auc=cell_auc,
            log_likelihood=result.log_likelihood,
        )

    def _stored(self, cell: Tuple[int, int]) -> Optional[GridResult]:
        if self.run_db is None:
            return None
        stored = self.run_db.get_grid_cell(self.dataset, self.mask_seed, self.config_key, *cell)
        if not stored or stored["status"] != "done":
            return None
        return GridResult(
            stored["n_classes"],
            stored["n_communities"],
            heldout=stored["heldout"],
            heldout_uniform=stored["heldout_uniform"],
            auc=stored["auc"],
            log_likelihood=stored["log_likelihood"],
            reused=True,
        )

    def _store(self, result: GridResult) -> None:
        if self.run_db is None or result.status == "cancelled":
            return
        self.run_db.save_grid_cell(
            self.dataset,
            self.mask_seed,
            self.config_key,
            variant=self.config.variant.value,
            n_classes=result.n_classes,
            n_communities=result.n_communities,
            status=result.status,
            heldout=result.heldout,
            heldout_uniform=result.heldout_uniform,
            auc=result.auc,
            log_likelihood=result.log_likelihood,
        )

    def run(self) -> GridOutcome:
        """
        Fit every cell, up to `jobs` at a time. Signals are only emitted from
        the calling thread.
        """
        results: Dict[Tuple[int, int], GridResult] = {}
        pending = []
        for cell in self.cells:
            stored = self._stored(cell)
            if stored is not None:
                self.log_message(logging.INFO, f"Reusing stored cell C={cell[0]} K={cell[1]}")
                results[cell] = stored
            else:
                pending.append(cell)

        total = len(self.cells)
        self.log_message(
            logging.INFO,
            f"Fitting {len(pending)} of {total} grid cells with {self.jobs} jobs",
        )
        self.progress_signal.emit(int(100 * len(results) / total))

        with ThreadPoolExecutor(max_workers=self.jobs) as pool:
            futures: Dict[Future, Tuple[int, int]] = {
                pool.submit(self.fit_cell, *cell): cell for cell in pending
            }
            for future in as_completed(futures):
                cell = futures[future]
                try:
                    result = future.result()
                except HypermesoError as e:
                    self.log_message(
                        logging.ERROR, f"Cell C={cell[0]} K={cell[1]} failed: {str(e)}"
                    )
                    result = GridResult(*cell, status="failed")
                results[cell] = result
                self._store(result)
                if result.status == "done":
                    self.log_message(
                        logging.INFO,
                        f"Cell C={cell[0]} K={cell[1]}: L={result.heldout:.4f} "
                        f"L_uniform={result.heldout_uniform:.4f}",
                    )
                self.progress_signal.emit(int(100 * len(results) / total))

        outcome = GridOutcome(results=[results[cell] for cell in self.cells])
        outcome.winner = select_winner(outcome.results)
        self.grid_complete_signal.emit(outcome.winner is not None)
        if outcome.winner is None and not self._stopped():
            raise NumericError("every grid cell failed")
        return outcome
