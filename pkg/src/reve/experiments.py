"""Desk-scale paired experiments: baseline (beta = 0) against REVE on nuisance blobs."""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np

from .config import RunConfig
from .core import BIMODAL, SINGLE_GAUSSIAN, fit_single_gaussian, log_q, m_step, project_to_z, responsibilities, sample_encoding
from .data import apply_normalization, synth_nuisance_blobs
from .oracle import binned_conditional_entropy
from .runner import TrainResult, deterministic_encoding, error_rate, train

log = logging.getLogger(__name__)

ENTROPY_BIN_WIDTH = 0.1
MEASUREMENT_SIGMA2 = 1e-2  # same encoding noise for every arm when estimating H(Z|C)
VALIDATION_SEED_OFFSET = 1_000_003

# (beta, sigma2) candidates; first entry is the default pair
SELECTION_GRID = tuple(itertools.product((1e-4, 3e-4), (1e-2, 1e-3, 1e-1)))


def z_conditional_entropy(res: TrainResult, width: float = ENTROPY_BIN_WIDTH,
                          sigma2: float = MEASUREMENT_SIGMA2, seed: int = 12345) -> float:
    """Plug-in H(Z|C) of one noisy draw Z = P(h + eps) per training input, binned in the
    coordinates of the decoder's row space."""
    h = deterministic_encoding(res.net, res.train.inputs)
    res.head.refresh(res.config.reve.rank_tolerance)
    rng = np.random.default_rng(seed)
    y = h + rng.normal(0.0, np.sqrt(sigma2), size=h.shape)
    return binned_conditional_entropy(y @ res.head.svd.V, res.train.labels, width)


def validation_error(res: TrainResult) -> float:
    spec = res.config.data
    seed = res.config.seed if spec.seed is None else spec.seed
    val = synth_nuisance_blobs(spec.n_classes, spec.informative, spec.nuisance, spec.noise,
                               spec.n_test, VALIDATION_SEED_OFFSET + seed, "val", spec.separation)
    val = apply_normalization(val, res.train.mean, res.train.std)
    return error_rate(res.net, res.head, val)


@dataclass
class ArmSummary:
    beta: float
    sigma2: float
    test_errors: list = field(default_factory=list)
    val_errors: list = field(default_factory=list)
    z_entropies: list = field(default_factory=list)

    @property
    def mean_test_error(self) -> float:
        return float(np.mean(self.test_errors))

    @property
    def mean_val_error(self) -> float:
        return float(np.mean(self.val_errors))

    @property
    def mean_z_entropy(self) -> float:
        return float(np.mean(self.z_entropies))


@dataclass
class DirectionalReport:
    baseline: ArmSummary
    reve: ArmSummary  # the validation-selected arm
    candidates: list

    @property
    def error_ok(self) -> bool:
        return self.reve.mean_test_error <= self.baseline.mean_test_error

    @property
    def entropy_ok(self) -> bool:
        return self.reve.mean_z_entropy < self.baseline.mean_z_entropy


def run_arm(base: RunConfig, seeds, beta: float, sigma2: float) -> ArmSummary:
    arm = ArmSummary(beta, sigma2)
    for seed in seeds:
        cfg = base.with_overrides(seed=seed, **{"reve.beta": beta, "reve.sigma2": sigma2})
        res = train(cfg, write=False)
        arm.test_errors.append(res.final_test_error)
        arm.val_errors.append(validation_error(res))
        arm.z_entropies.append(z_conditional_entropy(res))
        log.info("beta=%g sigma2=%g seed=%d test=%.2f val=%.2f H(Z|C)=%.3f", beta, sigma2, seed,
                 arm.test_errors[-1], arm.val_errors[-1], arm.z_entropies[-1])
    return arm


def directional_experiment(base: RunConfig | None = None, seeds=range(5), grid=SELECTION_GRID) -> DirectionalReport:
    """Baseline vs REVE with (beta, sigma2) picked by validation error, never by test error."""
    base = base or RunConfig()
    seeds = list(seeds)
    baseline = run_arm(base, seeds, 0.0, base.reve.sigma2)
    candidates = [run_arm(base, seeds, b, s) for b, s in grid]
    best = min(candidates, key=lambda a: a.mean_val_error)  # min keeps the first on ties
    return DirectionalReport(baseline, best, candidates)


def q_model_gap(res: TrainResult, S: int = 12, seed: int = 0) -> tuple[float, float]:
    """(-mean log q single Gaussian, -mean log q bimodal), both fitted on one frozen Z batch
    drawn from the trained model over the whole training split."""
    cfg = res.config.reve
    h = deterministic_encoding(res.net, res.train.inputs)
    res.head.refresh(cfg.rank_tolerance)
    z = project_to_z(sample_encoding(h, cfg.sigma2, S, np.random.default_rng(seed)), res.head.projection).data
    single = fit_single_gaussian(z, cfg.variance_floor)
    bimodal = m_step(z, responsibilities(z), cfg.variance_floor, cfg.alpha_floor)
    return (-float(log_q(z, single, SINGLE_GAUSSIAN).data.mean()),
            -float(log_q(z, bimodal, BIMODAL).data.mean()))
