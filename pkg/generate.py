"""Synthetic hypergraphs from model parameters"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.special import logsumexp

from compute import PhiTables, build_phi, order_community_rates
from errors import NumericError, ValidationError
from hypergraph import Hypergraph
from logger import log_message
from params import ModelParams, Variant
from streams import GENERATION, rng_stream

# rejection rounds before the remaining events fall back to exponential keys
MAX_REJECTION_ROUNDS = 100


@dataclass
class GenSpec:
    params: ModelParams
    seed: int = 0
    max_events: Optional[int] = None

    def __post_init__(self) -> None:
        if self.max_events is not None and self.max_events < 0:
            raise ValidationError(f"max_events must be >= 0, got {self.max_events}")


def total_rate(
    params: ModelParams, tables: Optional[PhiTables] = None
) -> Tuple[float, np.ndarray]:
    """Total expected number of hyperedge occurrences and its (D-1, K) breakdown."""
    if tables is None:
        tables = build_phi(params)
    rates = order_community_rates(params, tables)
    return float(rates.sum()), rates


def weighted_sample_without_replacement(
    weights: np.ndarray, size: int, rng: np.random.Generator
) -> np.ndarray:
    """
    Pick `size` distinct indices with probability proportional to weights,
    as successive renormalized draws, using exponential keys.
    """
    weights = np.asarray(weights, dtype=np.float64)
    positive = np.flatnonzero(weights > 0)
    if size > len(positive):
        raise ValidationError(
            f"cannot draw {size} distinct items from {len(positive)} positive weights"
        )
    if size == 0:
        return np.zeros(0, dtype=np.int64)
    keys = rng.exponential(size=len(positive)) / weights[positive]
    picked = np.argpartition(keys, size - 1)[:size] if size < len(positive) else np.arange(size)
    return np.sort(positive[picked])


def _sample_events(
    weights: np.ndarray, d: int, n_events: int, rng: np.random.Generator
) -> np.ndarray:
    """
    (n_events, d) sorted node sets, each drawn without replacement.

    Nodes are drawn with replacement and duplicates inside an event are
    redrawn, which is the sequential renormalized scheme.
    """
    cumulative = np.cumsum(weights)
    total = cumulative[-1]
    events = np.full((n_events, d), -1, dtype=np.int64)
    for slot in range(d):
        pending = np.arange(n_events)
        for _ in range(MAX_REJECTION_ROUNDS):
            draws = np.searchsorted(cumulative, rng.random(len(pending)) * total, side="right")
            draws = np.minimum(draws, len(weights) - 1)
            clash = np.any(events[pending, :slot] == draws[:, None], axis=1)
            accepted = pending[~clash]
            events[accepted, slot] = draws[~clash]
            pending = pending[clash]
            if len(pending) == 0:
                break
        for event in pending.tolist():
            taken = events[event, :slot]
            remaining = weights.copy()
            remaining[taken] = 0.0
            events[event, slot] = weighted_sample_without_replacement(remaining, 1, rng)[0]
    return np.sort(events, axis=1)


def _pure_share(params: ModelParams, m: np.ndarray, events: np.ndarray, k: int) -> np.ndarray:
    """Share of each event's product rate m_i1k ... m_idk carried by single-class assignments."""
    with np.errstate(divide="ignore", invalid="ignore"):
        log_pure = np.log(params.theta * params.w[:, k])
        log_m = np.log(m[:, k])
        per_class = log_pure[events].sum(axis=1)
        share = np.exp(logsumexp(per_class, axis=1) - log_m[events].sum(axis=1))
    return np.clip(np.nan_to_num(share), 0.0, 1.0)


def _sample_mixed_events(
    params: ModelParams,
    m: np.ndarray,
    d: int,
    k: int,
    n_events: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """
    Events of a free community of the omniassortative model.

    Events are placed as in any other community and kept with probability
    1 - pure share, the chance that latent classes drawn with weights
    theta_ic w_ck are not all equal. Rejected events are drawn again.
    """
    kept = []
    missing = n_events
    for _ in range(MAX_REJECTION_ROUNDS):
        if missing == 0:
            break
        events = _sample_events(m[:, k], d, missing, rng)
        accepted = rng.random(missing) >= _pure_share(params, m, events, k)
        kept.append(events[accepted])
        missing -= int(accepted.sum())
    if missing:
        log_message(
            logging.WARNING,
            f"Skipping {missing} events of order {d} in community {k}: "
            "draws kept falling inside a single class",
        )
    if not kept:
        return np.zeros((0, d), dtype=np.int64)
    return np.concatenate(kept)


def sample_hypergraph(spec: GenSpec) -> Hypergraph:
    """
    Draw the total count from Poisson(mu), thin it over (order, community)
    cells and place every event on d distinct nodes weighted by m_ik.
    Free communities of the omniassortative model only keep events whose
    latent classes are mixed.
    """
    params = spec.params
    tables = build_phi(params)
    mu, rates = total_rate(params, tables)
    if not np.isfinite(mu):
        raise NumericError(f"total rate is not finite: {mu}")
    hypergraph = Hypergraph(params.n_nodes, params.max_order)
    if mu <= 0:
        return hypergraph

    rng = rng_stream(spec.seed, GENERATION)
    n_events = int(rng.poisson(mu))
    if spec.max_events is not None and n_events > spec.max_events:
        log_message(logging.WARNING, f"Capping {n_events} events to {spec.max_events}")
        n_events = spec.max_events
    cells = rng.multinomial(n_events, rates.ravel() / mu).reshape(rates.shape)
    log_message(logging.DEBUG, f"Generating {n_events} events (mu={mu:.3f})")

    m = tables.m
    for d_index, k in zip(*np.nonzero(cells)):
        d = int(d_index) + 2
        count = int(cells[d_index, k])
        weights = m[:, k]
        if d > int(np.sum(weights > 0)):
            log_message(
                logging.WARNING,
                f"Skipping {count} events of order {d} in community {k}: "
                "not enough nodes with positive weight",
            )
            continue
        cell_rng = rng_stream(spec.seed, GENERATION, d, int(k))
        if params.variant == Variant.OMNI and k >= params.n_classes:
            events = _sample_mixed_events(params, m, d, int(k), count, cell_rng)
        else:
            events = _sample_events(weights, d, count, cell_rng)
        if len(events) == 0:
            continue
        unique, multiplicity = np.unique(events, axis=0, return_counts=True)
        for edge, times in zip(unique.tolist(), multiplicity.tolist()):
            hypergraph.add(edge, times)
    return hypergraph
