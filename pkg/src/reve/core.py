"""REVE regularizer: stochastic encoding, projection onto the decoder's row
space, the mean-field bimodal Gaussian model q(z), the softmax model r(c|z),
and the Monte Carlo objective

    Omega = -1/(N S) sum_n sum_s [ log r(c_n | z_ns) + log q(z_ns) ].

The projection matrix and the fitted q parameters enter the tape as
constants; gradients reach the encoder only through z.
"""
from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from . import tensor as T
from .linalg import DEFAULT_RANK_TOLERANCE, ProjectionMatrix
from .nn import DecoderHead, EncoderNetwork, cross_entropy, one_hot
from .tensor import Tensor, _sigmoid

BIMODAL = "bimodal"
SINGLE_GAUSSIAN = "single_gaussian"
LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class ReveConfig:
    sigma2: float = 1e-2
    beta: float = 1e-4
    S: int = 12
    variance_floor: float = 1e-4
    alpha_floor: float = 1e-3
    rank_tolerance: float = DEFAULT_RANK_TOLERANCE
    svd_refresh_period: int = 1
    q_model: str = BIMODAL
    gmm_ema: float = 0.0  # 0 disables cross-batch smoothing

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be > 0")
        if not self.beta >= 0:
            raise ValueError("beta must be >= 0")
        if int(self.S) != self.S or self.S < 1:
            raise ValueError("S must be a positive integer")
        if not self.variance_floor > 0:
            raise ValueError("variance_floor must be > 0")
        if not 0 < self.alpha_floor < 0.5:
            raise ValueError("alpha_floor must lie in (0, 0.5)")
        if self.svd_refresh_period < 1:
            raise ValueError("svd_refresh_period must be >= 1")
        if self.q_model not in (BIMODAL, SINGLE_GAUSSIAN):
            raise ValueError(f"q_model must be {BIMODAL!r} or {SINGLE_GAUSSIAN!r}")
        if not 0 <= self.gmm_ema < 1:
            raise ValueError("gmm_ema must lie in [0, 1)")


@dataclass(frozen=True)
class GmmParams:
    """Per-coordinate two-component mixture; mode 1 is the 'positive' mode."""

    alpha: np.ndarray
    mu1: np.ndarray
    var1: np.ndarray
    mu0: np.ndarray
    var0: np.ndarray

    @property
    def dim(self) -> int:
        return self.alpha.shape[0]


def sample_encoding(h, sigma2: float, S: int, rng: np.random.Generator) -> Tensor:
    """y[n, s] = h[n] + eps[n, s] with eps ~ N(0, sigma2 I); eps is a constant on the tape."""
    h = T.as_tensor(h)
    n, d = h.shape
    eps = rng.normal(0.0, np.sqrt(sigma2), size=(n, S, d))
    return T.reshape(h, (n, 1, d)) + Tensor(eps)


def project_to_z(y, projection: ProjectionMatrix) -> Tensor:
    y = T.as_tensor(y)
    if y.shape[-1] != projection.dim:
        raise T.ShapeError("project_to_z", y.shape, projection.P.shape)
    if y.ndim == 1:
        return T.reshape(T.reshape(y, (1, -1)) @ Tensor(projection.P), (-1,))
    return y @ Tensor(projection.P)


def responsibilities(z) -> np.ndarray:
    """Sigmoid stand-in for the E-step: p(mode 1 | z_i)."""
    z = np.asarray(z, dtype=np.float64)
    return _sigmoid(np.atleast_1d(z)).reshape(z.shape)


def _flat(z, d=None) -> np.ndarray:
    z = np.asarray(z.data if isinstance(z, Tensor) else z, dtype=np.float64)
    return z.reshape(-1, z.shape[-1] if d is None else d)


def m_step(z, pi, variance_floor: float = 1e-4, alpha_floor: float = 1e-3) -> GmmParams:
    """Weighted-moment M-step over all samples, per coordinate (last axis)."""
    z = _flat(z)
    pi = _flat(pi, z.shape[1])
    if z.shape[0] < 2:
        raise ValueError("m_step needs at least 2 samples")

    def moments(w):
        wsum = w.sum(axis=0)
        safe = np.where(wsum > 0, wsum, 1.0)
        mu = np.where(wsum > 0, (w * z).sum(axis=0) / safe, z.mean(axis=0))
        var = np.where(wsum > 0, (w * (z - mu) ** 2).sum(axis=0) / safe, 0.0)
        return mu, np.maximum(var, variance_floor)

    mu1, var1 = moments(pi)
    mu0, var0 = moments(1.0 - pi)
    alpha = np.clip(pi.mean(axis=0), alpha_floor, 1.0 - alpha_floor)
    return GmmParams(alpha, mu1, var1, mu0, var0)


def fit_single_gaussian(z, variance_floor: float = 1e-4) -> GmmParams:
    """Batch mean/variance per coordinate, stored as a mixture of two identical modes."""
    z = _flat(z)
    mu = z.mean(axis=0)
    var = np.maximum(z.var(axis=0), variance_floor)
    return GmmParams(np.ones_like(mu), mu, var, mu.copy(), var.copy())


def fit_q(z, config: ReveConfig) -> GmmParams:
    if config.q_model == SINGLE_GAUSSIAN:
        return fit_single_gaussian(z, config.variance_floor)
    zf = _flat(z)
    return m_step(zf, responsibilities(zf), config.variance_floor, config.alpha_floor)


def smooth(prev: GmmParams | None, new: GmmParams, decay: float) -> GmmParams:
    """Exponential moving average of two parameter sets (decay weights the old one)."""
    if prev is None or decay == 0:
        return new
    return GmmParams(*(decay * getattr(prev, f.name) + (1 - decay) * getattr(new, f.name)
                       for f in fields(GmmParams)))


def _gaussian_log_terms(z: Tensor, mu, var, log_weight):
    const = log_weight - 0.5 * (LOG_2PI + np.log(var))
    return T.square(z - Tensor(mu)) * Tensor(-0.5 / var) + Tensor(const)


def log_q(z, params: GmmParams, q_model: str = BIMODAL) -> Tensor:
    """Mean-field log-density summed over the last axis of z."""
    z = T.as_tensor(z)
    if z.shape[-1] != params.dim:
        raise T.ShapeError("log_q", z.shape, (params.dim,))
    if q_model == SINGLE_GAUSSIAN:
        return T.sum(_gaussian_log_terms(z, params.mu1, params.var1, 0.0), axis=-1)
    with np.errstate(divide="ignore"):
        la1, la0 = np.log(params.alpha), np.log1p(-params.alpha)
    t1 = _gaussian_log_terms(z, params.mu1, params.var1, la1)
    t0 = _gaussian_log_terms(z, params.mu0, params.var0, la0)
    shape = z.shape + (1,)
    both = T.concat([T.reshape(t1, shape), T.reshape(t0, shape)], axis=-1)
    return T.sum(T.logsumexp(both, axis=-1), axis=-1)


def log_r(z, labels, head: DecoderHead) -> Tensor:
    """log softmax(W z + b)[c]; labels index the leading axes of z."""
    logits = head.logits(z)
    labels = np.asarray(labels)
    mask = one_hot(labels, head.n_classes)
    mask = mask.reshape(labels.shape + (1,) * (logits.ndim - 1 - labels.ndim) + (head.n_classes,))
    picked = T.sum(logits * Tensor(mask), axis=-1)
    return picked - T.logsumexp(logits, axis=-1)


@dataclass
class ReveTerms:
    omega: Tensor
    neg_log_q: float  # -mean log q over the N*S samples
    neg_log_r: float
    params: GmmParams
    z: Tensor


def reve_terms(h, labels, head: DecoderHead, config: ReveConfig, rng: np.random.Generator,
               gmm: GmmParams | None = None, prev_gmm: GmmParams | None = None) -> ReveTerms:
    """Omega for an already-computed encoding batch h (N x dim_y).

    ``gmm`` freezes the q parameters instead of fitting them on this batch.
    """
    if head.projection is None:
        head.refresh(config.rank_tolerance)
    y = sample_encoding(h, config.sigma2, config.S, rng)
    z = project_to_z(y, head.projection)
    if gmm is None:
        gmm = smooth(prev_gmm, fit_q(z.data, config), config.gmm_ema)
    lq = log_q(z, gmm, config.q_model)
    lr = log_r(z, labels, head)
    omega = -T.mean(lq + lr)
    return ReveTerms(omega, -float(lq.data.mean()), -float(lr.data.mean()), gmm, z)


def reve_loss(x, labels, net: EncoderNetwork, head: DecoderHead, config: ReveConfig,
              rng: np.random.Generator, gmm: GmmParams | None = None) -> Tensor:
    return reve_terms(net(x), labels, head, config, rng, gmm).omega


@dataclass
class Objective:
    total: Tensor
    ce: Tensor
    terms: ReveTerms
    logits: Tensor


def total_objective(x, labels, net: EncoderNetwork, head: DecoderHead, config: ReveConfig,
                    rng: np.random.Generator, gmm: GmmParams | None = None,
                    prev_gmm: GmmParams | None = None, training: bool = False,
                    dropout_rng: np.random.Generator | None = None) -> Objective:
    """cross_entropy(W h + b) + beta * Omega, with h the noise-free encoding.

    With beta = 0 the regularizer is still evaluated for logging but kept off the tape.
    """
    h = net(x, training=training, rng=dropout_rng)
    logits = head.logits(h)
    ce = cross_entropy(logits, labels)
    if config.beta == 0:
        with T.no_tape():
            terms = reve_terms(T.stop_gradient(h), labels, head, config, rng, gmm, prev_gmm)
        return Objective(ce, ce, terms, logits)
    terms = reve_terms(h, labels, head, config, rng, gmm, prev_gmm)
    return Objective(ce + T.scale(terms.omega, config.beta), ce, terms, logits)
