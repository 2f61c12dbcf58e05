"""Evaluation and interpretation metrics for fitted models"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from scipy.special import entr, rel_entr

from compute import LOG_SPACE_THRESHOLD, edge_products
from errors import ValidationError
from hypergraph import Hypergraph
from inference import HeldoutScore, SufficientStats
from logger import log_message
from params import ModelParams, Variant, effective_gamma
from streams import PAIRING, rng_stream


def auc(pairs: Sequence[Sequence[float]]) -> float:
    """Share of (positive, zero) rate pairs ranked correctly, ties count half."""
    values = np.asarray(pairs, dtype=np.float64)
    if values.size == 0:
        raise ValidationError("auc needs at least one pair")
    values = values.reshape(-1, 2)
    wins = np.sum(values[:, 0] > values[:, 1])
    ties = np.sum(values[:, 0] == values[:, 1])
    return float((wins + 0.5 * ties) / len(values))


def pair_for_auc(
    mu_positive: np.ndarray, mu_zero: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Randomly pair positive and zero rates without replacement."""
    n = min(len(mu_positive), len(mu_zero))
    positive = np.asarray(mu_positive)[rng.permutation(len(mu_positive))[:n]]
    zero = np.asarray(mu_zero)[rng.permutation(len(mu_zero))[:n]]
    return np.column_stack([positive, zero])


def heldout_auc(score: HeldoutScore, seed: int) -> float:
    """AUC over every order of a held-out split, pairing within each order."""
    pairs = []
    for d in sorted(score.rates):
        mu, counts = score.rates[d], score.counts[d]
        rng = rng_stream(seed, PAIRING, d)
        pairs.append(pair_for_auc(mu[counts > 0], mu[counts == 0], rng))
    return auc(np.concatenate(pairs) if pairs else [])


def membership_entropy(theta: np.ndarray) -> float:
    """Median entropy of the row-normalized class memberships (natural log)."""
    theta = np.asarray(theta, dtype=np.float64)
    totals = theta.sum(axis=1)
    empty = totals <= 0
    if np.any(empty):
        log_message(logging.WARNING, f"{int(np.sum(empty))} nodes have no membership mass")
    rows = np.divide(theta, totals[:, None], out=np.zeros_like(theta), where=~empty[:, None])
    return float(np.median(entr(rows).sum(axis=1)))


def js_divergence(theta: np.ndarray, w_k: np.ndarray, c: int) -> float:
    """Jensen-Shannon divergence between class c and the community mixture Theta w_k."""
    p = theta[:, c]
    q = theta @ w_k
    mixture = 0.5 * (p + q)
    return float(0.5 * rel_entr(p, mixture).sum() + 0.5 * rel_entr(q, mixture).sum())


def js_matrix(params: ModelParams) -> np.ndarray:
    """(C, K) divergences between every class and every community."""
    return np.array(
        [
            [js_divergence(params.theta, params.w[:, k], c) for k in range(params.n_communities)]
            for c in range(params.n_classes)
        ]
    )


def allocation(stats: SufficientStats, k: Optional[int] = None):
    """Expected hyperedge mass per community, or for community k."""
    totals = stats.varphi_dk.sum(axis=0)
    return totals if k is None else float(totals[k])


def latent_class_allocation(stats: SufficientStats) -> np.ndarray:
    return stats.varphi_ick.sum(axis=(0, 2))


def disassortativity_proportion(
    hypergraph: Hypergraph,
    params: ModelParams,
    stats: SufficientStats,
    d: int,
    log_space_threshold: int = LOG_SPACE_THRESHOLD,
) -> float:
    """
    Expected share of order-d occurrences whose latent class assignment is
    not all one class. NaN when the order has no hyperedges.
    """
    edges, counts = hypergraph.arrays(d)
    if len(counts) == 0 or d not in stats.varphi_edge:
        return float("nan")
    c = params.n_classes
    products, _ = edge_products(params.memberships(), edges, log_space_threshold)
    pure = products[:, :c] @ (params.w**d)
    with np.errstate(divide="ignore", invalid="ignore"):
        share = np.where(products > 0, pure / products, 1.0)
    rho = np.clip(1.0 - share, 0.0, 1.0)
    if params.variant == Variant.OMNI:
        # only pure communities can produce all-one-class assignments
        rho[:, c:] = 1.0
    rho[:, :c] = 0.0
    return float(np.sum(stats.varphi_edge[d] * rho) / counts.sum())


def class_affinity(params: ModelParams) -> np.ndarray:
    """C x C matrix sum_d sum_k g_k w_k w_k^T with the CP-form rates."""
    weights = effective_gamma(params).sum(axis=0)
    return (params.w * weights) @ params.w.T


def relative_gain(value: float, baseline: float) -> float:
    if baseline == 0:
        raise ValidationError("baseline log-likelihood must be nonzero")
    return float((value - baseline) / abs(baseline))


def normalized_gamma(params: ModelParams) -> np.ndarray:
    """Gamma rows rescaled to sum to one per order; all-zero rows stay zero."""
    totals = params.gamma.sum(axis=1, keepdims=True)
    return np.divide(
        params.gamma, totals, out=np.zeros_like(params.gamma), where=totals > 0
    )


@dataclass
class MetricReport:
    entropy: float
    js: np.ndarray  # (C, K)
    allocations: np.ndarray  # (K,)
    class_allocations: np.ndarray  # (C,)
    disassortativity: Dict[int, float]
    affinity: np.ndarray  # (C, C)
    gamma: np.ndarray  # (D-1, K)
    gamma_normalized: np.ndarray
    auc: Optional[float] = None
    heldout: Optional[Dict[str, Any]] = None
    relative_gains: Dict[str, float] = field(default_factory=dict)

    @property
    def js_min(self) -> np.ndarray:
        return self.js.min(axis=0)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "auc": self.auc,
            "entropy_median": self.entropy,
            "js": self.js.tolist(),
            "js_min": self.js_min.tolist(),
            "allocation": self.allocations.tolist(),
            "class_allocation": self.class_allocations.tolist(),
            "disassortativity": {
                str(d): (None if np.isnan(v) else v) for d, v in sorted(self.disassortativity.items())
            },
            "class_affinity": self.affinity.tolist(),
            "gamma_raw": self.gamma.tolist(),
            "gamma_normalized": self.gamma_normalized.tolist(),
            "heldout": self.heldout,
            "relative_gain": self.relative_gains,
        }

    def to_rows(self) -> List[Dict[str, Any]]:
        """Flat (metric, order, class, community, value) rows for CSV output."""
        rows: List[Dict[str, Any]] = []

        def add(metric, value, order=None, c=None, k=None):
            rows.append(
                {"metric": metric, "order": order, "class": c, "community": k, "value": value}
            )

        if self.auc is not None:
            add("auc", self.auc)
        add("entropy_median", self.entropy)
        for (c, k), value in np.ndenumerate(self.js):
            add("js", float(value), c=c, k=k)
        for k, value in enumerate(self.js_min.tolist()):
            add("js_min", value, k=k)
        for k, value in enumerate(self.allocations.tolist()):
            add("allocation", value, k=k)
        for c, value in enumerate(self.class_allocations.tolist()):
            add("class_allocation", value, c=c)
        for d, value in sorted(self.disassortativity.items()):
            add("disassortativity", value, order=d)
        for (a, b), value in np.ndenumerate(self.affinity):
            add("class_affinity", float(value), c=a, k=b)
        for (row, k), value in np.ndenumerate(self.gamma):
            add("gamma_raw", float(value), order=row + 2, k=k)
            add("gamma_normalized", float(self.gamma_normalized[row, k]), order=row + 2, k=k)
        for name, value in sorted(self.relative_gains.items()):
            if name.isdigit():
                add("relative_gain", value, order=int(name))
            else:
                add(f"relative_gain_{name}", value)
        return rows


def build_report(
    hypergraph: Hypergraph,
    params: ModelParams,
    stats: SufficientStats,
    heldout: Optional[HeldoutScore] = None,
    baseline: Optional[HeldoutScore] = None,
    seed: int = 0,
) -> MetricReport:
    """Gather every metric for fitted params on the data they were fitted on."""
    report = MetricReport(
        entropy=membership_entropy(params.theta),
        js=js_matrix(params),
        allocations=allocation(stats),
        class_allocations=latent_class_allocation(stats),
        disassortativity={
            d: disassortativity_proportion(hypergraph, params, stats, d)
            for d in hypergraph.orders()
        },
        affinity=class_affinity(params),
        gamma=params.gamma.copy(),
        gamma_normalized=normalized_gamma(params),
    )
    if heldout is not None:
        report.heldout = heldout.to_dict()
        report.auc = heldout_auc(heldout, seed)
        if baseline is not None:
            gains = {
                str(d): relative_gain(value, baseline.per_order[d])
                for d, value in heldout.per_order.items()
                if baseline.per_order.get(d)
            }
            gains["L"] = relative_gain(heldout.total, baseline.total)
            gains["L_uniform"] = relative_gain(heldout.uniform, baseline.uniform)
            report.relative_gains = gains
    return report
