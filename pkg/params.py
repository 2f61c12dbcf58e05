"""Model parameters: containers, initialization, normalization and checkpoints"""

import json
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Optional, TextIO

import numpy as np

from errors import CheckpointError, NumericError, ValidationError
from logger import log_message
from streams import INIT, rng_stream

# floor applied to free parameters after every update
EPS = 1e-12

# largest dense affinity tensor we agree to build
LAMBDA_SIZE_GUARD = 10**7

# Dirichlet concentrations used at initialization
THETA_CONCENTRATION = 1e3
W_CONCENTRATION = 1.0
ASSORTATIVE_GAMMA_INIT = 0.01

CHECKPOINT_FORMAT = "hypermeso-checkpoint"
CHECKPOINT_VERSION = 1


class Variant(str, Enum):
    STRICT = "strict"
    SEMI = "semi"
    OMNI = "omni"

    @classmethod
    def parse(cls, value: "str | Variant") -> "Variant":
        try:
            return cls(str(value.value if isinstance(value, Variant) else value).lower())
        except ValueError as e:
            choices = ", ".join(v.value for v in cls)
            raise ValidationError(f"unknown variant {value!r}, expected one of {choices}") from e


@dataclass
class PriorSpec:
    """Gamma(alpha, beta) prior on Theta and/or Gamma entries.

    alpha=1, beta=0 is maximum likelihood.
    """

    alpha: float = 1.0
    beta: float = 0.0
    on_theta: bool = True
    on_gamma: bool = True

    def __post_init__(self) -> None:
        if not self.alpha > 0:
            raise ValidationError(f"prior alpha must be > 0, got {self.alpha}")
        if self.beta < 0:
            raise ValidationError(f"prior beta must be >= 0, got {self.beta}")

    def is_flat(self) -> bool:
        return self.alpha == 1.0 and self.beta == 0.0


@dataclass
class ModelParams:
    """
    Theta (N x C), W (C x K) with an identity block in its first C columns,
    and Gamma ((D-1) x K), row d-2 holding the order-d community rates.
    """

    variant: Variant
    theta: np.ndarray
    w: np.ndarray
    gamma: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.theta.shape[0]

    @property
    def n_classes(self) -> int:
        return self.theta.shape[1]

    @property
    def n_communities(self) -> int:
        return self.w.shape[1]

    @property
    def max_order(self) -> int:
        return self.gamma.shape[0] + 1

    @property
    def orders(self) -> np.ndarray:
        return np.arange(2, self.max_order + 1)

    def gamma_at(self, d: int) -> np.ndarray:
        return self.gamma[d - 2]

    def memberships(self) -> np.ndarray:
        """M = Theta W, the node-community scores m_ik."""
        return self.theta @ self.w

    def free_columns(self) -> slice:
        return slice(self.n_classes, self.n_communities)

    def copy(self) -> "ModelParams":
        return ModelParams(
            self.variant, self.theta.copy(), self.w.copy(), self.gamma.copy()
        )

    def validate(self) -> None:
        """Check shapes and the constraints of the model class."""
        n, c = self.theta.shape
        if self.w.ndim != 2 or self.w.shape[0] != c:
            raise ValidationError(f"w must have {c} rows, got shape {self.w.shape}")
        k = self.w.shape[1]
        if self.gamma.ndim != 2 or self.gamma.shape[1] != k or self.gamma.shape[0] < 1:
            raise ValidationError(
                f"gamma must have shape (D-1, {k}), got {self.gamma.shape}"
            )
        if c > k:
            raise ValidationError(f"C={c} must not exceed K={k}")
        if self.variant == Variant.STRICT and c != k:
            raise ValidationError(f"strict variant requires K == C, got C={c} K={k}")
        for name, values in (("theta", self.theta), ("w", self.w), ("gamma", self.gamma)):
            if not np.all(np.isfinite(values)):
                raise NumericError(f"{name} has non-finite entries")
            if np.any(values < 0):
                raise ValidationError(f"{name} has negative entries")
        if not np.array_equal(self.w[:, :c], np.eye(c)):
            raise ValidationError("the first C columns of w must be the identity")


def _identity_w(c: int, k: int) -> np.ndarray:
    w = np.zeros((c, k))
    w[:, :c] = np.eye(c)
    return w


def init_params(
    n_nodes: int,
    n_classes: int,
    n_communities: int,
    max_order: int,
    variant: Variant | str,
    seed: int,
    gamma_assortative_init: bool = False,
    restart: int = 0,
) -> ModelParams:
    """
    Draw starting parameters for one restart.

    Theta rows are symmetric Dirichlet(1e3), free W columns symmetric
    Dirichlet(1), gamma is 1 everywhere (0.01 on pure communities when
    gamma_assortative_init is set).
    """
    variant = Variant.parse(variant)
    if not 2 <= n_classes <= n_communities <= n_nodes:
        raise ValidationError(
            f"need 2 <= C <= K <= N, got C={n_classes} K={n_communities} N={n_nodes}"
        )
    if max_order < 2:
        raise ValidationError(f"max order must be >= 2, got {max_order}")
    if variant == Variant.STRICT and n_classes != n_communities:
        raise ValidationError("strict variant requires K == C")

    rng = rng_stream(seed, INIT, restart)
    theta = rng.dirichlet(np.full(n_classes, THETA_CONCENTRATION), size=n_nodes)
    w = _identity_w(n_classes, n_communities)
    n_free = n_communities - n_classes
    if n_free:
        w[:, n_classes:] = rng.dirichlet(np.full(n_classes, W_CONCENTRATION), size=n_free).T
    gamma = np.ones((max_order - 1, n_communities))
    if gamma_assortative_init:
        gamma[:, :n_classes] = ASSORTATIVE_GAMMA_INIT

    params = ModelParams(variant, np.maximum(theta, EPS), w, gamma)
    if n_free:
        params.w[:, n_classes:] = np.maximum(params.w[:, n_classes:], EPS)
    return params


def apply_floor(params: ModelParams) -> ModelParams:
    """Floor Theta, the free W columns and Gamma at EPS, in place."""
    np.maximum(params.theta, EPS, out=params.theta)
    np.maximum(params.gamma, EPS, out=params.gamma)
    free = params.free_columns()
    params.w[:, free] = np.maximum(params.w[:, free], EPS)
    return params


def normalize_params(params: ModelParams) -> ModelParams:
    """
    Map params to the identifiable class (unit Theta and W column sums)
    without changing any edge rate.
    """
    psi_c = params.theta.sum(axis=0)
    if np.any(psi_c <= 0) or not np.all(np.isfinite(psi_c)):
        raise NumericError(f"theta column sums must be positive, got {psi_c}")
    psi_k = psi_c @ params.w
    if np.any(psi_k <= 0):
        raise NumericError(f"community masses must be positive, got {psi_k}")

    theta = params.theta / psi_c
    w = params.w * psi_c[:, None] / psi_k[None, :]
    c = params.n_classes
    w[:, :c] = np.eye(c)
    gamma = params.gamma * psi_k[None, :] ** params.orders[:, None]
    if not np.all(np.isfinite(gamma)):
        raise NumericError("gamma overflowed during normalization")
    return ModelParams(params.variant, theta, w, gamma)


def effective_gamma(params: ModelParams) -> np.ndarray:
    """
    Rates of the equivalent CP form. For the omni variant the pure
    communities absorb the excluded diagonal:
    g_c = gamma_c - sum_{k>C} gamma_k w_ck^d. Other variants are unchanged.
    """
    gamma = params.gamma.copy()
    if params.variant != Variant.OMNI:
        return gamma
    c = params.n_classes
    free_w = params.w[:, c:]
    powers = free_w[None, :, :] ** params.orders[:, None, None]
    gamma[:, :c] -= np.einsum("dck,dk->dc", powers, params.gamma[:, c:])
    return gamma


def lambda_tensor(params: ModelParams, d: int) -> np.ndarray:
    """Dense C^d affinity tensor of order d."""
    c = params.n_classes
    if not 2 <= d <= params.max_order:
        raise ValidationError(f"order {d} outside [2, {params.max_order}]")
    if c**d > LAMBDA_SIZE_GUARD:
        raise ValidationError(
            f"affinity tensor with {c}^{d} entries exceeds {LAMBDA_SIZE_GUARD}"
        )
    outer = params.w
    for _ in range(d - 1):
        outer = np.expand_dims(outer, -2) * params.w
    affinity = outer @ params.gamma_at(d)
    if params.variant == Variant.OMNI and params.n_communities > c:
        diagonal = (np.arange(c),) * d
        free = params.free_columns()
        affinity[diagonal] -= params.w[:, free] ** d @ params.gamma_at(d)[free]
    return affinity


def _check_array(payload: Dict[str, Any], name: str, shape: tuple) -> np.ndarray:
    try:
        values = np.asarray(payload[name], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointError(f"checkpoint field {name!r} is missing or malformed") from e
    if values.size != int(np.prod(shape)):
        raise CheckpointError(
            f"checkpoint field {name!r} has {values.size} values, expected shape {shape}"
        )
    return values.reshape(shape)


def checkpoint_dict(
    params: ModelParams, metadata: Optional[Dict[str, Any]] = None
) -> Dict[str, Any]:
    payload: Dict[str, Any] = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "variant": params.variant.value,
        "N": params.n_nodes,
        "C": params.n_classes,
        "K": params.n_communities,
        "D": params.max_order,
        # floats serialize with repr, which round-trips exactly
        "theta": params.theta.ravel().tolist(),
        "w": params.w.ravel().tolist(),
        "gamma": params.gamma.ravel().tolist(),
    }
    if metadata:
        payload["metadata"] = metadata
    return payload


def save_checkpoint(
    params: ModelParams, stream: TextIO, metadata: Optional[Dict[str, Any]] = None
) -> None:
    json.dump(checkpoint_dict(params, metadata), stream, indent=1)
    stream.write("\n")


def params_from_dict(payload: Dict[str, Any]) -> ModelParams:
    if not isinstance(payload, dict):
        raise CheckpointError("checkpoint must be a JSON object")
    if payload.get("format", CHECKPOINT_FORMAT) != CHECKPOINT_FORMAT:
        raise CheckpointError(f"unexpected checkpoint format {payload.get('format')!r}")
    try:
        variant = Variant.parse(payload["variant"])
        n, c, k, d = (int(payload[key]) for key in ("N", "C", "K", "D"))
    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointError(f"checkpoint header is incomplete: {e}") from e
    if min(n, c, k) < 1 or d < 2:
        raise CheckpointError(f"invalid checkpoint dimensions N={n} C={c} K={k} D={d}")
    params = ModelParams(
        variant,
        _check_array(payload, "theta", (n, c)),
        _check_array(payload, "w", (c, k)),
        _check_array(payload, "gamma", (d - 1, k)),
    )
    try:
        params.validate()
    except (ValidationError, NumericError) as e:
        raise CheckpointError(f"checkpoint is not a valid model: {e}") from e
    return params


def load_checkpoint(stream: TextIO) -> ModelParams:
    try:
        payload = json.load(stream)
    except json.JSONDecodeError as e:
        raise CheckpointError(f"checkpoint is not valid JSON: {e}") from e
    params = params_from_dict(payload)
    log_message(
        logging.DEBUG,
        f"Loaded {params.variant.value} checkpoint N={params.n_nodes} "
        f"C={params.n_classes} K={params.n_communities} D={params.max_order}",
    )
    return params
