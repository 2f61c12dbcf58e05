"""
Numerical kernels: the phi / barphi dynamic program, its incremental
maintenance during a node sweep, edge rates and the log-likelihood.

phi[d, k] is the sum over all d-subsets of nodes of the product of their
m_ik; barphi[d, i, k] is the same sum over subsets that exclude node i.
"""

import logging
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.special import gammaln

from errors import NumericError, ValidationError
from hypergraph import Hypergraph
from logger import log_message
from params import ModelParams, Variant

# products of more than this many memberships are taken in log space
LOG_SPACE_THRESHOLD = 8

LIKELIHOOD_MODES = ("proportional", "full")


class PhiTables:
    """
    DP tables for one membership matrix M.

    Rows of barphi are refreshed lazily: every node update bumps a version
    counter and a row is recomputed from the current phi when it is read
    with a stale stamp.
    """

    def __init__(self, m: np.ndarray, max_order: int) -> None:
        self.m = np.array(m, dtype=np.float64)
        self.max_order = int(max_order)
        n, k = self.m.shape
        self.phi = np.zeros((self.max_order + 1, k))
        self._barphi = np.zeros((self.max_order + 1, n, k))
        self._version = 0
        self._stamps = np.zeros(n, dtype=np.int64)
        self.rebuild()

    @property
    def n_nodes(self) -> int:
        return self.m.shape[0]

    def rebuild(self) -> None:
        """Run both recurrences from scratch, O(NDK)."""
        m = self.m
        if not np.all(np.isfinite(m)):
            raise NumericError("memberships have non-finite entries")
        self.phi[0] = 1.0
        self._barphi[0] = 1.0
        for d in range(1, self.max_order + 1):
            weighted = m * self._barphi[d - 1]
            self.phi[d] = weighted.sum(axis=0) / d
            np.maximum(self.phi[d] - weighted, 0.0, out=self._barphi[d])
        self._version = 0
        self._stamps[:] = 0

    def _recompute_row(self, i: int) -> None:
        row = self._barphi[:, i, :]
        m_i = self.m[i]
        for d in range(1, self.max_order + 1):
            np.maximum(self.phi[d] - m_i * row[d - 1], 0.0, out=row[d])
        self._stamps[i] = self._version

    def barphi_row(self, i: int) -> np.ndarray:
        """(D+1, K) view of barphi for node i, refreshed if stale."""
        if self._stamps[i] != self._version:
            self._recompute_row(i)
        return self._barphi[:, i, :]

    @property
    def barphi(self) -> np.ndarray:
        """(D+1, N, K) barphi with every row current."""
        stale = np.flatnonzero(self._stamps != self._version)
        if len(stale):
            rows = self._barphi[:, stale, :]
            m = self.m[stale]
            for d in range(1, self.max_order + 1):
                rows[d] = np.maximum(self.phi[d] - m * rows[d - 1], 0.0)
            self._barphi[:, stale, :] = rows
            self._stamps[stale] = self._version
        return self._barphi

    def update_node(self, i: int, new_row: np.ndarray) -> None:
        """Replace m_i and patch phi in O(DK)."""
        new_row = np.asarray(new_row, dtype=np.float64)
        own = self.barphi_row(i)
        delta = new_row - self.m[i]
        if not np.any(delta):
            return
        # own[d - 1] excludes node i so it does not move with m_i
        self.phi[1:] += delta * own[:-1]
        np.maximum(self.phi, 0.0, out=self.phi)
        self.m[i] = new_row
        self._version += 1
        self._recompute_row(i)

    def check_consistency(self, rtol: float = 1e-9) -> None:
        """Compare against a full rebuild, raising NumericError on drift."""
        fresh = PhiTables(self.m, self.max_order)
        scale = np.maximum(np.abs(fresh.phi), 1e-300)
        drift = float(np.max(np.abs(self.phi - fresh.phi) / scale))
        if drift > rtol:
            raise NumericError(f"phi tables drifted by {drift:.3e} from a rebuild")

    def copy(self) -> "PhiTables":
        other = PhiTables.__new__(PhiTables)
        other.m = self.m.copy()
        other.max_order = self.max_order
        other.phi = self.phi.copy()
        other._barphi = self._barphi.copy()
        other._version = self._version
        other._stamps = self._stamps.copy()
        return other


def build_phi(params: ModelParams, max_order: Optional[int] = None) -> PhiTables:
    order = params.max_order if max_order is None else max_order
    for name, values in (("theta", params.theta), ("w", params.w)):
        if not np.all(np.isfinite(values)):
            raise NumericError(f"{name} has non-finite entries")
    return PhiTables(params.memberships(), order)


def refresh_phi_for_node(tables: PhiTables, i: int, new_row: np.ndarray) -> PhiTables:
    tables.update_node(i, new_row)
    return tables


def edge_products(
    m: np.ndarray, edges: np.ndarray, log_space_threshold: int = LOG_SPACE_THRESHOLD
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Products of the rows of m over each edge.

    Returns (scaled, shift) with prod = scaled * exp(shift) per edge. The
    shift is zero unless the order exceeds log_space_threshold.
    """
    n_edges, d = edges.shape
    if d <= log_space_threshold:
        return np.prod(m[edges], axis=1), np.zeros(n_edges)
    with np.errstate(divide="ignore"):
        log_m = np.log(m)
    log_prod = log_m[edges].sum(axis=1)
    shift = np.max(log_prod, axis=1)
    shift = np.where(np.isfinite(shift), shift, 0.0)
    return np.exp(log_prod - shift[:, None]), shift


def community_terms(
    params: ModelParams,
    products: np.ndarray,
    d: int,
) -> np.ndarray:
    """
    Per-community rate terms for edges of order d, from scaled products.

    Omni communities beyond the pure ones drop their all-same-class mass.
    The result is clamped at zero.
    """
    gamma = params.gamma_at(d)
    terms = products * gamma
    if params.variant == Variant.OMNI and params.n_communities > params.n_classes:
        c = params.n_classes
        diagonal = products[:, :c] @ (params.w[:, c:] ** d)
        terms[:, c:] -= diagonal * gamma[c:]
        np.maximum(terms, 0.0, out=terms)
    return terms


def log_edge_rates(
    params: ModelParams,
    edges: np.ndarray,
    m: Optional[np.ndarray] = None,
    log_space_threshold: int = LOG_SPACE_THRESHOLD,
) -> np.ndarray:
    """log mu for a batch of same-order edges; -inf where the rate is zero."""
    edges = np.asarray(edges, dtype=np.int64)
    if edges.ndim != 2:
        raise ValidationError("edges must be a 2-D array of node indices")
    d = edges.shape[1]
    if not 2 <= d <= params.max_order:
        raise ValidationError(f"order {d} outside [2, {params.max_order}]")
    if m is None:
        m = params.memberships()
    scaled, shift = edge_products(m, edges, log_space_threshold)
    total = community_terms(params, scaled, d).sum(axis=1)
    with np.errstate(divide="ignore"):
        return np.log(total) + shift


def edge_rates(
    params: ModelParams,
    edges: np.ndarray,
    m: Optional[np.ndarray] = None,
    log_space_threshold: int = LOG_SPACE_THRESHOLD,
) -> np.ndarray:
    return np.exp(log_edge_rates(params, edges, m, log_space_threshold))


def edge_rate(
    params: ModelParams,
    edge,
    log_space_threshold: int = LOG_SPACE_THRESHOLD,
) -> float:
    """Rate mu of a single hyperedge."""
    batch = np.asarray([sorted(edge)], dtype=np.int64)
    return float(edge_rates(params, batch, log_space_threshold=log_space_threshold)[0])


def order_community_rates(params: ModelParams, tables: PhiTables) -> np.ndarray:
    """
    (D-1, K) expected mass per order and community. Summed, this is the
    total rate over every possible hyperedge.
    """
    orders = params.orders
    phi = tables.phi[orders]
    rates = params.gamma * phi
    if params.variant == Variant.OMNI and params.n_communities > params.n_classes:
        c = params.n_classes
        powers = params.w[None, :, c:] ** orders[:, None, None]
        excluded = np.einsum("dck,dc->dk", powers, phi[:, :c])
        remaining = phi[:, c:] - excluded
        if np.any(remaining < 0):
            log_message(
                logging.DEBUG,
                f"Clamping {int(np.sum(remaining < 0))} negative community masses",
            )
        rates[:, c:] = params.gamma[:, c:] * np.maximum(remaining, 0.0)
    return rates


def check_dimensions(hypergraph: Hypergraph, params: ModelParams) -> None:
    if hypergraph.n_nodes != params.n_nodes:
        raise ValidationError(
            f"hypergraph has {hypergraph.n_nodes} nodes, params have {params.n_nodes}"
        )


def log_likelihood(
    hypergraph: Hypergraph,
    params: ModelParams,
    tables: Optional[PhiTables] = None,
    mode: str = "proportional",
    log_space_threshold: int = LOG_SPACE_THRESHOLD,
) -> float:
    """
    Poisson log-likelihood of the observed counts.

    "proportional" drops the log A! constants, "full" keeps them. Returns
    -inf when a nonzero count sits on a zero rate.
    """
    if mode not in LIKELIHOOD_MODES:
        raise ValidationError(f"mode must be one of {LIKELIHOOD_MODES}, got {mode!r}")
    check_dimensions(hypergraph, params)
    if tables is None:
        tables = build_phi(params)
    value = -float(order_community_rates(params, tables).sum())
    for d in hypergraph.orders():
        if d > params.max_order:
            raise ValidationError(f"hyperedge order {d} exceeds model order {params.max_order}")
        edges, counts = hypergraph.arrays(d)
        log_mu = log_edge_rates(params, edges, tables.m, log_space_threshold)
        if np.any(np.isneginf(log_mu)):
            return float("-inf")
        value += float(counts @ log_mu)
        if mode == "full":
            value -= float(gammaln(counts + 1.0).sum())
    return value


def per_order_log_likelihood(
    hypergraph: Hypergraph,
    params: ModelParams,
    tables: Optional[PhiTables] = None,
) -> Dict[int, float]:
    """Proportional log-likelihood split by order."""
    check_dimensions(hypergraph, params)
    if tables is None:
        tables = build_phi(params)
    totals = order_community_rates(params, tables).sum(axis=1)
    result = {}
    for d in params.orders.tolist():
        edges, counts = hypergraph.arrays(d)
        value = -float(totals[d - 2])
        if len(counts):
            value += float(counts @ log_edge_rates(params, edges, tables.m))
        result[d] = value
    return result
