"""Sparse multi-order hypergraph counts: ingestion, statistics and masking"""

import hashlib
import itertools
import logging
import re
from dataclasses import asdict, dataclass, field
from typing import Dict, Iterable, List, Optional, TextIO, Tuple

import numpy as np

from errors import ParseError, ValidationError
from logger import log_message
from streams import MASK, rng_stream

# masking protocol
MASK_FRACTION = 0.10
MASK_CAP = 1000
# rejection attempts allowed per sampled zero
ZERO_RETRY_CAP = 1000

_SPLIT_ANY = re.compile(r"[,\s]+")

Edge = Tuple[int, ...]


@dataclass
class SummaryStats:
    """Dataset summary statistics"""

    n_nodes: int
    n_nonzero: int
    total_count: int
    max_order: int
    mean_order: float  # count weighted
    pct_pairwise: float  # percent of occurrences with d = 2

    def to_dict(self) -> dict:
        return asdict(self)


class Hypergraph:
    """Per-order map from sorted node tuples to positive counts.

    Zeros are implicit. Node IDs are dense in [0, n_nodes); original tokens,
    when the hypergraph was parsed from text, are kept in `labels`.
    """

    def __init__(
        self,
        n_nodes: int,
        max_order: Optional[int] = None,
        labels: Optional[List[str]] = None,
    ) -> None:
        if n_nodes < 0:
            raise ValidationError(f"n_nodes must be >= 0, got {n_nodes}")
        if max_order is not None and max_order < 2:
            raise ValidationError(f"max_order must be >= 2, got {max_order}")
        self.n_nodes = int(n_nodes)
        self._declared_order = max_order
        self.labels = labels
        self.edges: Dict[int, Dict[Edge, int]] = {}
        self._arrays: Dict[int, Tuple[np.ndarray, np.ndarray]] = {}

    @property
    def max_order(self) -> int:
        """Declared maximum order, or the largest observed one."""
        if self._declared_order is not None:
            return self._declared_order
        observed = self.orders()
        return observed[-1] if observed else 2

    def add(self, nodes: Iterable[int], count: int = 1) -> None:
        edge = tuple(sorted(int(n) for n in nodes))
        d = len(edge)
        if d < 2:
            raise ValidationError(f"hyperedge needs at least 2 nodes: {edge}")
        if len(set(edge)) != d:
            raise ValidationError(f"hyperedge has repeated nodes: {edge}")
        if edge[0] < 0 or edge[-1] >= self.n_nodes:
            raise ValidationError(f"node out of range [0, {self.n_nodes}): {edge}")
        if self._declared_order is not None and d > self._declared_order:
            raise ValidationError(
                f"hyperedge of order {d} exceeds max order {self._declared_order}"
            )
        count = int(count)
        if count < 1:
            raise ValidationError(f"counts must be positive, got {count}")
        per_order = self.edges.setdefault(d, {})
        per_order[edge] = per_order.get(edge, 0) + count
        self._arrays.pop(d, None)

    def remove(self, edge: Edge) -> int:
        """Drop an edge entirely and return its count."""
        d = len(edge)
        count = self.edges[d].pop(tuple(edge))
        if not self.edges[d]:
            del self.edges[d]
        self._arrays.pop(d, None)
        return count

    def count(self, nodes: Iterable[int]) -> int:
        edge = tuple(sorted(int(n) for n in nodes))
        return self.edges.get(len(edge), {}).get(edge, 0)

    def orders(self) -> List[int]:
        return sorted(d for d, per_order in self.edges.items() if per_order)

    def n_nonzero(self, d: Optional[int] = None) -> int:
        if d is not None:
            return len(self.edges.get(d, {}))
        return sum(len(per_order) for per_order in self.edges.values())

    def total_count(self, d: Optional[int] = None) -> int:
        if d is not None:
            return int(sum(self.edges.get(d, {}).values()))
        return int(sum(sum(per_order.values()) for per_order in self.edges.values()))

    def arrays(self, d: int) -> Tuple[np.ndarray, np.ndarray]:
        """Edges of order d as a lexicographically sorted (n, d) int64 array
        plus the matching int64 counts."""
        if d not in self._arrays:
            per_order = self.edges.get(d, {})
            if per_order:
                keys = sorted(per_order)
                edges = np.asarray(keys, dtype=np.int64).reshape(len(keys), d)
                counts = np.fromiter(
                    (per_order[k] for k in keys), dtype=np.int64, count=len(keys)
                )
            else:
                edges = np.zeros((0, d), dtype=np.int64)
                counts = np.zeros(0, dtype=np.int64)
            self._arrays[d] = (edges, counts)
        return self._arrays[d]

    def copy(self, max_order: Optional[int] = None) -> "Hypergraph":
        order = self._declared_order if max_order is None else max_order
        other = Hypergraph(self.n_nodes, order, self.labels)
        other.edges = {d: dict(per_order) for d, per_order in self.edges.items()}
        return other

    def as_dict(self) -> Dict[Edge, int]:
        return {
            edge: count
            for per_order in self.edges.values()
            for edge, count in per_order.items()
        }

    def __len__(self) -> int:
        return self.n_nonzero()

    def __repr__(self) -> str:
        return (
            f"<Hypergraph(N={self.n_nodes}, D={self.max_order}, "
            f"nnz={self.n_nonzero()}, total={self.total_count()})>"
        )


@dataclass
class MaskedSplit:
    """Training hypergraph plus balanced held-out entries per order"""

    train: Hypergraph
    test: Dict[int, List[Tuple[Edge, int]]] = field(default_factory=dict)
    seed: int = 0

    def test_arrays(self, d: int) -> Tuple[np.ndarray, np.ndarray]:
        entries = self.test.get(d, [])
        edges = np.asarray([e for e, _ in entries], dtype=np.int64).reshape(
            len(entries), d
        )
        counts = np.asarray([c for _, c in entries], dtype=np.int64)
        return edges, counts

    def n_test(self, d: int) -> int:
        return len(self.test.get(d, []))


def _split_tokens(line: str, delimiter: Optional[str]) -> List[str]:
    if delimiter is None:
        return [t for t in _SPLIT_ANY.split(line.strip()) if t]
    return [t.strip() for t in line.strip().split(delimiter)]


def parse_hyperedges(
    stream: TextIO,
    delimiter: Optional[str] = None,
    max_order: Optional[int] = None,
    drop_repeats: bool = True,
    weighted: bool = False,
) -> Hypergraph:
    """
    Read one hyperedge occurrence per line.

    Args:
        stream: text stream
        delimiter: token separator, None accepts whitespace and commas
        max_order: lines with more nodes are dropped with a warning
        drop_repeats: drop lines with a repeated node (else reject them)
        weighted: the last token of each line is a positive count

    Returns:
        Hypergraph with node tokens remapped to dense IDs in first-seen order
    """
    ids: Dict[str, int] = {}
    parsed: List[Tuple[Edge, int]] = []
    n_lines = 0
    for line_number, raw in enumerate(stream, 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        n_lines += 1
        tokens = _split_tokens(line, delimiter)
        if any(not t for t in tokens):
            raise ParseError("empty token", line_number)
        count = 1
        if weighted:
            if len(tokens) < 3:
                raise ParseError("expected nodes followed by a count", line_number)
            try:
                count = int(tokens[-1])
            except ValueError as e:
                raise ParseError(f"malformed count {tokens[-1]!r}", line_number) from e
            if count < 1:
                raise ParseError(f"count must be positive: {count}", line_number)
            tokens = tokens[:-1]
        if len(tokens) < 2:
            raise ParseError("a hyperedge needs at least 2 nodes", line_number)
        if len(set(tokens)) != len(tokens):
            if not drop_repeats:
                raise ParseError(f"repeated node in {line!r}", line_number)
            log_message(
                logging.WARNING,
                f"Dropping line {line_number}: repeated node in {line!r}",
            )
            continue
        if max_order is not None and len(tokens) > max_order:
            log_message(
                logging.WARNING,
                f"Dropping line {line_number}: order {len(tokens)} > {max_order}",
            )
            continue
        edge = []
        for token in tokens:
            if token not in ids:
                ids[token] = len(ids)
            edge.append(ids[token])
        parsed.append((tuple(sorted(edge)), count))

    if n_lines == 0:
        raise ParseError("empty input")

    labels = [""] * len(ids)
    for token, index in ids.items():
        labels[index] = token
    hypergraph = Hypergraph(len(ids), max_order, labels)
    for edge, count in parsed:
        hypergraph.add(edge, count)
    log_message(logging.DEBUG, f"Parsed {hypergraph!r}")
    return hypergraph


def write_hyperedges(
    hypergraph: Hypergraph,
    stream: TextIO,
    aggregate: bool = False,
    use_labels: bool = False,
) -> int:
    """Write hyperedges in the text format read by parse_hyperedges.

    Returns the number of lines written.
    """
    labels = hypergraph.labels if use_labels and hypergraph.labels else None
    lines = 0
    for d in hypergraph.orders():
        edges, counts = hypergraph.arrays(d)
        for edge, count in zip(edges.tolist(), counts.tolist()):
            tokens = " ".join(labels[n] if labels else str(n) for n in edge)
            if aggregate:
                stream.write(f"{tokens} {count}\n")
                lines += 1
            else:
                for _ in range(count):
                    stream.write(f"{tokens}\n")
                lines += count
    return lines


def summarize(hypergraph: Hypergraph) -> SummaryStats:
    total = hypergraph.total_count()
    if total == 0:
        raise ValidationError("cannot summarize an empty hypergraph")
    per_order = {d: hypergraph.total_count(d) for d in hypergraph.orders()}
    mean_order = sum(d * a for d, a in per_order.items()) / total
    return SummaryStats(
        n_nodes=hypergraph.n_nodes,
        n_nonzero=hypergraph.n_nonzero(),
        total_count=total,
        max_order=max(per_order),
        mean_order=mean_order,
        pct_pairwise=100.0 * per_order.get(2, 0) / total,
    )


def mask_size(n_nonzero: int) -> int:
    """Number of nonzeros held out for an order with n_nonzero entries."""
    return max(1, min(MASK_CAP, int(np.floor(MASK_FRACTION * n_nonzero))))


def _sample_zeros(
    hypergraph: Hypergraph, d: int, n_zeros: int, rng: np.random.Generator
) -> List[Edge]:
    nonzeros = hypergraph.edges.get(d, {})
    zeros: List[Edge] = []
    seen = set()
    for _ in range(n_zeros):
        for _attempt in range(ZERO_RETRY_CAP):
            candidate = tuple(
                sorted(rng.choice(hypergraph.n_nodes, size=d, replace=False).tolist())
            )
            if candidate not in nonzeros and candidate not in seen:
                seen.add(candidate)
                zeros.append(candidate)
                break
        else:
            raise ValidationError(
                f"could not sample a zero of order {d} after {ZERO_RETRY_CAP} attempts"
            )
    return zeros


def mask_split(hypergraph: Hypergraph, seed: int) -> MaskedSplit:
    """
    Hold out min(1000, 10%) of the nonzeros of each order (at least one) and
    the same number of zero entries sampled uniformly from the rest of the
    order's index space.
    """
    rng = rng_stream(seed, MASK)
    # keep the order range even if a whole order ends up masked
    train = hypergraph.copy(max_order=hypergraph.max_order)
    test: Dict[int, List[Tuple[Edge, int]]] = {}
    for d in hypergraph.orders():
        n_nonzero = hypergraph.n_nonzero(d)
        if n_nonzero == 0 or d > hypergraph.n_nodes:
            continue
        n_mask = mask_size(n_nonzero)
        edges, counts = hypergraph.arrays(d)
        picked = np.sort(rng.choice(n_nonzero, size=n_mask, replace=False))
        held_out = [(tuple(edges[j].tolist()), int(counts[j])) for j in picked]
        for edge, _ in held_out:
            train.remove(edge)
        zeros = _sample_zeros(hypergraph, d, n_mask, rng)
        test[d] = held_out + [(edge, 0) for edge in zeros]
        log_message(
            logging.DEBUG, f"Order {d}: masked {n_mask} nonzeros and {n_mask} zeros"
        )
    return MaskedSplit(train=train, test=test, seed=seed)


def project_adjacency(hypergraph: Hypergraph) -> np.ndarray:
    """Symmetric N x N matrix of co-occurrence counts, zero diagonal."""
    n = hypergraph.n_nodes
    adjacency = np.zeros((n, n), dtype=np.int64)
    for d in hypergraph.orders():
        edges, counts = hypergraph.arrays(d)
        for a, b in itertools.combinations(range(d), 2):
            np.add.at(adjacency, (edges[:, a], edges[:, b]), counts)
    # edges are sorted so only the upper triangle was filled
    return adjacency + adjacency.T


def degree_distribution(hypergraph: Hypergraph) -> np.ndarray:
    """Count-weighted degree of every node."""
    degrees = np.zeros(hypergraph.n_nodes, dtype=np.int64)
    for d in hypergraph.orders():
        edges, counts = hypergraph.arrays(d)
        np.add.at(degrees, edges.ravel(), np.repeat(counts, d))
    return degrees


def order_distribution(hypergraph: Hypergraph) -> Dict[int, int]:
    return {d: hypergraph.total_count(d) for d in hypergraph.orders()}


def inclusion_occurrences(
    hypergraph: Hypergraph,
    d: int,
    sample_size: int = 10_000,
    repeats: int = 10,
    seed: int = 0,
) -> float:
    """
    Mean number of sampled order-d edges that are a subset of some sampled
    order-(d+1) edge.
    """
    if d >= hypergraph.max_order:
        raise ValidationError(f"order {d} must be below the max order")
    small, _ = hypergraph.arrays(d)
    large, _ = hypergraph.arrays(d + 1)
    if len(small) == 0 or len(large) == 0:
        return 0.0
    totals = []
    for r in range(repeats):
        rng = rng_stream(seed, "inclusion", d, r)
        small_rows = rng.choice(len(small), size=min(sample_size, len(small)), replace=False)
        large_rows = rng.choice(len(large), size=min(sample_size, len(large)), replace=False)
        subsets = set()
        for edge in large[large_rows].tolist():
            subsets.update(itertools.combinations(edge, d))
        totals.append(sum(1 for edge in small[small_rows].tolist() if tuple(edge) in subsets))
    return float(np.mean(totals))


def fingerprint(hypergraph: Hypergraph) -> str:
    """Content hash of the node count and every (edge, count) entry."""
    digest = hashlib.sha256(f"N={hypergraph.n_nodes}".encode())
    for d in hypergraph.orders():
        edges, counts = hypergraph.arrays(d)
        digest.update(f"d={d}".encode())
        digest.update(np.ascontiguousarray(edges, dtype="<i8").tobytes())
        digest.update(np.ascontiguousarray(counts, dtype="<i8").tobytes())
    return digest.hexdigest()
