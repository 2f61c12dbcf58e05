"""Generalized EM for the strict, semi and omni variants"""

import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Dict, List, Optional

import numpy as np
from scipy.special import xlogy
from scipy.stats import poisson

from compute import (
    LOG_SPACE_THRESHOLD,
    PhiTables,
    build_phi,
    check_dimensions,
    community_terms,
    edge_products,
    edge_rates,
    log_likelihood,
    order_community_rates,
)
from errors import NumericError, ValidationError
from hypergraph import Hypergraph, MaskedSplit
from logger import log_message
from params import (
    EPS,
    ModelParams,
    PriorSpec,
    Variant,
    init_params,
    normalize_params,
)

# upper bound on the temporaries of the omni class split, in float64 entries
CHUNK_ELEMENTS = 1 << 22

MAX_STEP_HALVINGS = 20

# full rebuild cadence of the phi tables when FitConfig.debug is set
DEBUG_CHECK_INTERVAL = 50

ProgressCallback = Callable[[int, int, float, float, float], None]


@dataclass
class SufficientStats:
    """Expected latent subcounts of one E-step"""

    varphi_edge: Dict[int, np.ndarray]  # order -> (n_d, K), aligned with Hypergraph.arrays(d)
    varphi_ik: np.ndarray  # (N, K)
    varphi_ick: np.ndarray  # (N, C, K)
    varphi_dk: np.ndarray  # (D-1, K)

    @property
    def varphi_ck(self) -> np.ndarray:
        return self.varphi_ick.sum(axis=0)

    def total(self) -> float:
        return float(self.varphi_dk.sum())


@dataclass
class FitConfig:
    variant: Variant = Variant.SEMI
    n_classes: int = 2
    n_communities: int = 2
    max_iters: int = 1000
    window: int = 10
    threshold: float = 1.0
    step: float = 1e-6
    restarts: int = 10
    seed: int = 0
    prior: Optional[PriorSpec] = None
    gamma_assortative_init: bool = False
    log_space_threshold: int = LOG_SPACE_THRESHOLD
    debug: bool = False

    def __post_init__(self) -> None:
        self.variant = Variant.parse(self.variant)
        if isinstance(self.prior, dict):
            self.prior = PriorSpec(**self.prior)

    def validate(self) -> None:
        if not self.step > 0:
            raise ValidationError(f"step size must be > 0, got {self.step}")
        if self.restarts < 1:
            raise ValidationError(f"restarts must be >= 1, got {self.restarts}")
        if self.max_iters < 1:
            raise ValidationError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.window < 1:
            raise ValidationError(f"convergence window must be >= 1, got {self.window}")
        if not 1 <= self.n_classes <= self.n_communities:
            raise ValidationError(
                f"need 1 <= C <= K, got C={self.n_classes} K={self.n_communities}"
            )
        if self.variant == Variant.STRICT and self.n_classes != self.n_communities:
            raise ValidationError("strict variant requires K == C")

    def to_dict(self) -> Dict[str, Any]:
        payload = asdict(self)
        payload["variant"] = self.variant.value
        return payload

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> "FitConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(payload) - known
        if unknown:
            raise ValidationError(f"unknown fit options: {sorted(unknown)}")
        return cls(**payload)


@dataclass
class FitResult:
    params: ModelParams
    traces: List[List[float]] = field(default_factory=list)
    best_restart: int = 0
    iterations: List[int] = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def log_likelihood(self) -> float:
        return self.traces[self.best_restart][-1]

    def final_log_likelihoods(self) -> List[float]:
        return [trace[-1] if trace else float("-inf") for trace in self.traces]

    def summary(self) -> Dict[str, Any]:
        return {
            "best_restart": self.best_restart,
            "log_likelihood": self.log_likelihood,
            "final_log_likelihoods": self.final_log_likelihoods(),
            "iterations": self.iterations,
        }


def map_adjust(numerator, denominator, prior: Optional[PriorSpec] = None):
    """MAP closed form max((y + alpha - 1) / (c + beta), 0); y / c without a prior."""
    y = np.asarray(numerator, dtype=np.float64)
    c = np.asarray(denominator, dtype=np.float64)
    alpha, beta = (1.0, 0.0) if prior is None else (prior.alpha, prior.beta)
    scale = c + beta
    with np.errstate(divide="ignore", invalid="ignore"):
        value = np.where(scale > 0, np.maximum((y + alpha - 1.0) / scale, 0.0), 0.0)
    return float(value) if value.ndim == 0 else value


def _allocate(terms: np.ndarray, counts: np.ndarray) -> np.ndarray:
    totals = terms.sum(axis=1)
    fractions = np.empty_like(terms)
    good = totals > 0
    fractions[good] = terms[good] / totals[good, None]
    if not np.all(good):
        # every numerator underflowed
        fractions[~good] = 1.0 / terms.shape[1]
        log_message(logging.DEBUG, f"Uniform allocation for {int(np.sum(~good))} edges")
    return fractions * counts[:, None]


def _omni_class_split(
    params: ModelParams,
    m: np.ndarray,
    edges: np.ndarray,
    products: np.ndarray,
    allocated: np.ndarray,
    out: np.ndarray,
) -> None:
    """Spread the non-pure community subcounts of each edge node over classes."""
    c = params.n_classes
    d = edges.shape[1]
    free_w = params.w[:, c:]
    n_free = free_w.shape[1]
    diagonal_w = free_w**d
    chunk = max(1, CHUNK_ELEMENTS // (d * c * n_free))
    for start in range(0, len(edges), chunk):
        block = slice(start, start + chunk)
        nodes = edges[block]
        scaled = products[block]
        theta_e = params.theta[nodes]  # (b, d, C)
        m_e = m[nodes][:, :, c:]  # (b, d, K-C)
        others = np.divide(
            scaled[:, None, c:], m_e, out=np.zeros_like(m_e), where=m_e > 0
        )
        terms = (
            theta_e[:, :, :, None] * free_w * others[:, :, None, :]
            - diagonal_w * scaled[:, None, :c, None]
        )
        np.maximum(terms, 0.0, out=terms)
        totals = terms.sum(axis=2, keepdims=True)
        prior_split = theta_e[:, :, :, None] * free_w
        prior_split /= np.maximum(prior_split.sum(axis=2, keepdims=True), EPS)
        with np.errstate(divide="ignore", invalid="ignore"):
            fractions = np.where(totals > 0, terms / totals, prior_split)
        share = fractions * allocated[block, None, None, c:]
        np.add.at(out, nodes.ravel(), share.reshape(-1, c, n_free))


def e_step(
    hypergraph: Hypergraph,
    params: ModelParams,
    tables: Optional[PhiTables] = None,
    log_space_threshold: int = LOG_SPACE_THRESHOLD,
) -> SufficientStats:
    """
    Split each observed count over communities and, per node, over classes.
    """
    check_dimensions(hypergraph, params)
    n, c, k = params.n_nodes, params.n_classes, params.n_communities
    m = tables.m if tables is not None else params.memberships()
    omni_free = params.variant == Variant.OMNI and k > c

    varphi_edge: Dict[int, np.ndarray] = {}
    varphi_ik = np.zeros((n, k))
    varphi_dk = np.zeros((params.max_order - 1, k))
    free_ick = np.zeros((n, c, k - c)) if omni_free else None

    for d in hypergraph.orders():
        if d > params.max_order:
            raise ValidationError(f"hyperedge order {d} exceeds model order {params.max_order}")
        edges, counts = hypergraph.arrays(d)
        products, _ = edge_products(m, edges, log_space_threshold)
        allocated = _allocate(community_terms(params, products, d), counts)
        varphi_edge[d] = allocated
        varphi_dk[d - 2] = allocated.sum(axis=0)
        for q in range(d):
            np.add.at(varphi_ik, edges[:, q], allocated)
        if free_ick is not None:
            _omni_class_split(params, m, edges, products, allocated, free_ick)

    if params.variant == Variant.OMNI:
        varphi_ick = np.zeros((n, c, k))
        pure = np.arange(c)
        varphi_ick[:, pure, pure] = varphi_ik[:, :c]
        if free_ick is not None:
            varphi_ick[:, :, c:] = free_ick
    else:
        # the class split of a node does not depend on the edge
        joint = params.theta[:, :, None] * params.w[None, :, :]
        split = np.divide(
            joint, m[:, None, :], out=np.zeros_like(joint), where=m[:, None, :] > 0
        )
        varphi_ick = split * varphi_ik[:, None, :]
    return SufficientStats(varphi_edge, varphi_ik, varphi_ick, varphi_dk)


def _omni_excluded_mass(params: ModelParams, phi: np.ndarray) -> np.ndarray:
    """sum_c w_ck^d phi_c^(d) for the free communities, shape (D-1, K-C)."""
    c = params.n_classes
    powers = params.w[None, :, c:] ** params.orders[:, None, None]
    return np.einsum("dck,dc->dk", powers, phi[:, :c])


def m_step_gamma(
    stats: SufficientStats,
    tables: PhiTables,
    params: ModelParams,
    prior: Optional[PriorSpec] = None,
) -> np.ndarray:
    """Closed-form community-order rates."""
    phi = tables.phi[params.orders]
    denominators = phi.copy()
    c = params.n_classes
    if params.variant == Variant.OMNI and params.n_communities > c:
        remaining = phi[:, c:] - _omni_excluded_mass(params, phi)
        if np.any(remaining < 0):
            log_message(
                logging.WARNING,
                f"Clamped {int(np.sum(remaining < 0))} negative rate denominators to {EPS}",
            )
        denominators[:, c:] = np.maximum(remaining, EPS)
    gamma_prior = prior if prior is not None and prior.on_gamma else None
    gamma = map_adjust(stats.varphi_dk, denominators, gamma_prior)
    gamma = np.where(denominators > 0, gamma, EPS)
    return np.maximum(gamma, EPS)


def m_step_theta(
    hypergraph: Hypergraph,
    params: ModelParams,
    stats: SufficientStats,
    tables: PhiTables,
    prior: Optional[PriorSpec] = None,
) -> np.ndarray:
    """
    Sequential sweep over nodes in index order. Each row is the exact
    maximizer given the others; tables are patched in place after every node
    so they match the returned Theta.
    """
    if tables.n_nodes != hypergraph.n_nodes:
        raise ValidationError("phi tables do not match the hypergraph")
    theta = params.theta.copy()
    w, gamma = params.w, params.gamma
    c, top = params.n_classes, params.max_order
    numerators = stats.varphi_ick.sum(axis=2)
    diagonal = None
    if params.variant == Variant.OMNI and params.n_communities > c:
        powers = w[None, :, c:] ** params.orders[:, None, None]
        diagonal = np.einsum("dck,dk->dc", powers, gamma[:, c:])
    theta_prior = prior if prior is not None and prior.on_theta else None

    for i in range(params.n_nodes):
        barphi = tables.barphi_row(i)[1:top]
        denominator = w @ (gamma * barphi).sum(axis=0)
        if diagonal is not None:
            denominator = np.maximum(
                denominator - (diagonal * barphi[:, :c]).sum(axis=0), 0.0
            )
        row = map_adjust(numerators[i], denominator, theta_prior)
        row = np.maximum(np.where(denominator > 0, row, EPS), EPS)
        theta[i] = row
        tables.update_node(i, row @ w)
    return theta


def w_objective(
    params: ModelParams,
    stats: SufficientStats,
    w: Optional[np.ndarray] = None,
    pure_phi: Optional[np.ndarray] = None,
) -> float:
    """Terms of the expected complete log-likelihood that depend on the free W columns."""
    w = params.w if w is None else w
    free = params.free_columns()
    free_w = w[:, free]
    orders = params.orders
    mass = PhiTables(params.theta @ free_w, params.max_order).phi[orders]
    if params.variant == Variant.OMNI:
        if pure_phi is None:
            pure_phi = PhiTables(params.theta, params.max_order).phi[orders]
        powers = free_w[None, :, :] ** orders[:, None, None]
        mass = mass - np.einsum("dck,dc->dk", powers, pure_phi)
    varphi_ck = stats.varphi_ick[:, :, free].sum(axis=0)
    return float(np.sum(xlogy(varphi_ck, free_w)) - np.sum(params.gamma[:, free] * mass))


def w_gradient(params: ModelParams, stats: SufficientStats, tables: PhiTables) -> np.ndarray:
    """Analytic gradient of w_objective with respect to the free W columns."""
    free = params.free_columns()
    free_w = params.w[:, free]
    orders = params.orders
    barphi = tables.barphi[1 : params.max_order][:, :, free]
    gamma = params.gamma[:, free]
    varphi_ck = stats.varphi_ick[:, :, free].sum(axis=0)
    gradient = varphi_ck / free_w - np.einsum("ic,dik,dk->ck", params.theta, barphi, gamma)
    if params.variant == Variant.OMNI:
        c = params.n_classes
        pure_phi = tables.phi[orders, :c]
        powers = free_w[None, :, :] ** (orders - 1)[:, None, None]
        gradient += np.einsum("d,dk,dck,dc->ck", orders.astype(float), gamma, powers, pure_phi)
    return gradient


def m_step_w(
    params: ModelParams,
    stats: SufficientStats,
    tables: PhiTables,
    step: float,
) -> np.ndarray:
    """
    One softplus-reparameterized ascent step on the free W columns, halved
    until w_objective does not decrease.
    """
    w = params.w.copy()
    free = params.free_columns()
    if params.variant == Variant.STRICT or params.n_communities == params.n_classes or step == 0:
        return w
    free_w = w[:, free]
    with np.errstate(over="ignore", invalid="ignore"):
        gradient = w_gradient(params, stats, tables) * -np.expm1(-free_w)
    if not np.all(np.isfinite(gradient)):
        log_message(logging.WARNING, "Skipping W step: non-finite gradient")
        return w

    nu = free_w + np.log(-np.expm1(-free_w))
    pure_phi = tables.phi[params.orders, : params.n_classes]
    base = w_objective(params, stats, pure_phi=pure_phi)
    delta = step
    for _ in range(MAX_STEP_HALVINGS + 1):
        trial = w.copy()
        trial[:, free] = np.maximum(np.logaddexp(0.0, nu + delta * gradient), EPS)
        value = w_objective(params, stats, trial, pure_phi)
        if np.isfinite(value) and value >= base:
            return trial
        delta /= 2.0
    log_message(logging.DEBUG, "Skipping W step: no ascent after halving")
    return w


def expected_q(
    params: ModelParams, stats: SufficientStats, tables: Optional[PhiTables] = None
) -> float:
    """Expected complete-data log-likelihood, up to terms free of the parameters."""
    if tables is None:
        tables = build_phi(params)
    value = float(np.sum(xlogy(stats.varphi_dk, params.gamma)))
    value += float(np.sum(xlogy(stats.varphi_ick, params.theta[:, :, None] * params.w[None])))
    return value - float(order_community_rates(params, tables).sum())


def _fit_restart(
    hypergraph: Hypergraph,
    config: FitConfig,
    restart: int,
    progress: Optional[ProgressCallback],
) -> tuple:
    params = init_params(
        hypergraph.n_nodes,
        config.n_classes,
        config.n_communities,
        hypergraph.max_order,
        config.variant,
        config.seed,
        config.gamma_assortative_init,
        restart=restart,
    )
    threshold = config.log_space_threshold
    tables = build_phi(params)
    trace = [log_likelihood(hypergraph, params, tables, log_space_threshold=threshold)]
    free = config.n_communities > config.n_classes and config.variant != Variant.STRICT

    iteration = 0
    for iteration in range(1, config.max_iters + 1):
        start = time.perf_counter()
        stats = e_step(hypergraph, params, tables, threshold)
        params.gamma = m_step_gamma(stats, tables, params, config.prior)
        params.theta = m_step_theta(hypergraph, params, stats, tables, config.prior)
        if config.debug and iteration % DEBUG_CHECK_INTERVAL == 0:
            tables.check_consistency()
        if free:
            params.w = m_step_w(params, stats, tables, config.step)
        params = normalize_params(params)
        tables = build_phi(params)

        value = log_likelihood(hypergraph, params, tables, log_space_threshold=threshold)
        if not np.isfinite(value):
            raise NumericError(f"log-likelihood became {value} at iteration {iteration}")
        delta = value - trace[-1]
        trace.append(value)
        wall_ms = 1000.0 * (time.perf_counter() - start)
        log_message(
            logging.DEBUG,
            f"restart {restart} iteration {iteration} loglik {value:.6f} "
            f"delta {delta:.6f} wall_ms {wall_ms:.1f}",
        )
        if progress is not None:
            progress(restart, iteration, value, delta, wall_ms)
        if iteration >= config.window and abs(value - trace[-1 - config.window]) < config.threshold:
            break
    return params, trace, iteration


def fit(
    hypergraph: Hypergraph,
    config: FitConfig,
    progress: Optional[ProgressCallback] = None,
) -> FitResult:
    """
    Run config.restarts independent EM fits and keep the one with the
    highest final log-likelihood; the lowest restart index wins ties.
    """
    config.validate()
    if hypergraph.total_count() == 0:
        raise ValidationError("cannot fit an empty hypergraph")
    started = time.perf_counter()
    result = FitResult(params=None)  # type: ignore[arg-type]
    best_value = float("-inf")

    for restart in range(config.restarts):
        try:
            params, trace, iterations = _fit_restart(hypergraph, config, restart, progress)
        except NumericError as e:
            log_message(logging.WARNING, f"Restart {restart} diverged: {e}")
            result.traces.append([float("-inf")])
            result.iterations.append(0)
            continue
        result.traces.append(trace)
        result.iterations.append(iterations)
        log_message(
            logging.INFO,
            f"Restart {restart}: loglik {trace[-1]:.4f} after {iterations} iterations",
        )
        if trace[-1] > best_value:
            best_value = trace[-1]
            result.params = params
            result.best_restart = restart

    if result.params is None:
        raise NumericError("all restarts diverged")
    result.wall_time = time.perf_counter() - started
    return result


@dataclass
class HeldoutScore:
    per_order: Dict[int, float]
    rates: Dict[int, np.ndarray]
    counts: Dict[int, np.ndarray]

    @property
    def total(self) -> float:
        return float(sum(self.per_order.values()))

    @property
    def uniform(self) -> float:
        """Each order weighted by the inverse of its test-set size."""
        return float(
            sum(value / len(self.counts[d]) for d, value in self.per_order.items())
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "per_order": {str(d): value for d, value in sorted(self.per_order.items())},
            "L": self.total,
            "L_uniform": self.uniform,
        }


def heldout_score(
    split: MaskedSplit,
    params: ModelParams,
    log_space_threshold: int = LOG_SPACE_THRESHOLD,
) -> HeldoutScore:
    """Full Poisson log-likelihood of the held-out entries, per order."""
    check_dimensions(split.train, params)
    m = params.memberships()
    per_order: Dict[int, float] = {}
    rates: Dict[int, np.ndarray] = {}
    counts: Dict[int, np.ndarray] = {}
    for d in sorted(split.test):
        if split.n_test(d) == 0:
            continue
        if d > params.max_order:
            raise ValidationError(f"test order {d} exceeds model order {params.max_order}")
        edges, observed = split.test_arrays(d)
        mu = edge_rates(params, edges, m, log_space_threshold)
        per_order[d] = float(poisson.logpmf(observed, mu).sum())
        rates[d] = mu
        counts[d] = observed
    return HeldoutScore(per_order, rates, counts)
