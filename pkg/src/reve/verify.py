"""Randomized verification suites shared by ``reve verify`` and the acceptance tests.

Each suite returns a :class:`CheckResult`; nothing here raises on failure.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import oracle
from . import tensor as T
from .core import ReveConfig, fit_q, m_step, project_to_z, reve_terms, sample_encoding, total_objective
from .linalg import compact_svd, kernel_complement_projection
from .nn import DecoderHead, EncoderNetwork


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0
    values: dict = field(default_factory=dict)

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail} ({self.seconds:.2f}s)"


def _timed(fn):
    def wrapper(*args, **kw):
        t0 = time.perf_counter()
        res = fn(*args, **kw)
        res.seconds = time.perf_counter() - t0
        return res
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


@_timed
def variational_bound_suite(trials: int = 1000, seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst_gap, worst_equal = np.inf, 0.0
    for _ in range(trials):
        n = int(rng.integers(1, 17))
        p = oracle.random_distribution(rng, n, sparsity=0.2)
        q = oracle.random_distribution(rng, n)
        worst_gap = min(worst_gap, oracle.cross_entropy_bound_check(p, q).gap)
        worst_equal = max(worst_equal, abs(oracle.cross_entropy_bound_check(p, p).gap))
    ok = worst_gap >= -1e-12 and worst_equal <= 1e-12
    return CheckResult("variational bound", ok,
                       f"{trials} pairs, min gap {worst_gap:.3e}, max |gap| at q=p {worst_equal:.1e}",
                       values={"min_gap": worst_gap, "max_equal_gap": worst_equal})


@_timed
def decomposition_suite(trials: int = 500, seed: int = 1) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        nz, nc = int(rng.integers(1, 9)), int(rng.integers(1, 5))
        joint = oracle.random_distribution(rng, nz * nc, sparsity=0.2).reshape(nz, nc)
        worst = max(worst, oracle.decomposition_check(joint))
    return CheckResult("entropy decomposition", worst <= 1e-10,
                       f"{trials} joints, max residual {worst:.2e}", values={"max_residual": worst})


@_timed
def markov_bound_suite(trials: int = 500, seed: int = 2) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = np.inf
    for _ in range(trials):
        nx, nz, nc = int(rng.integers(1, 9)), int(rng.integers(1, 9)), int(rng.integers(1, 5))
        px = oracle.random_distribution(rng, nx)
        check = oracle.markov_factorization_check(px, oracle.random_conditional(rng, nx, nc),
                                                  oracle.random_conditional(rng, nx, nz),
                                                  oracle.random_conditional(rng, nz, nc))
        worst = min(worst, check.residual)
    return CheckResult("Markov-chain bound", worst >= -1e-12,
                       f"{trials} systems, min residual {worst:.3e}", values={"min_residual": worst})


def _softmax(a):
    a = a - a.max(axis=-1, keepdims=True)
    e = np.exp(a)
    return e / e.sum(axis=-1, keepdims=True)


@_timed
def projection_suite(trials: int = 100, seed: int = 3) -> CheckResult:
    rng = np.random.default_rng(seed)
    shapes = [(k, d) for k in (2, 10) for d in (4, 64)]
    worst = dict(idem=0.0, sym=0.0, annihilate=0.0, predict=0.0)
    for t in range(trials):
        k, d = shapes[t % len(shapes)]
        W = rng.normal(size=(k, d))
        b = rng.normal(size=k)
        P = kernel_complement_projection(compact_svd(W)).P
        y = rng.normal(size=(16, d)) * 3.0
        scale = max(1.0, np.abs(W).max())
        worst["idem"] = max(worst["idem"], np.abs(P @ P - P).max())
        worst["sym"] = max(worst["sym"], np.abs(P - P.T).max())
        worst["annihilate"] = max(worst["annihilate"], np.abs(W @ (np.eye(d) - P)).max() / scale)
        worst["predict"] = max(worst["predict"], np.abs(_softmax(y @ W.T + b) - _softmax(y @ P @ W.T + b)).max())
    ok = worst["idem"] <= 1e-10 and worst["sym"] <= 1e-10 and worst["annihilate"] <= 1e-8 and worst["predict"] <= 1e-8
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    return CheckResult("projection", ok, f"{trials} matrices, {detail}", values=worst)


def gradient_fixture(seed: int = 7, beta: float = 0.5):
    """Tiny smooth model: 4 -> 6 (tanh) -> 4 (tanh), 3 classes, S = 3, batch of 5."""
    rng = np.random.default_rng(seed)
    net = EncoderNetwork.from_spec((4,), [{"type": "dense", "units": 6, "activation": "tanh"},
                                          {"type": "dense", "units": 4, "activation": "tanh"}], rng)
    head = DecoderHead(4, 3, rng)
    head.b.data = rng.normal(size=3) * 0.1
    x = rng.normal(size=(5, 4))
    labels = np.array([0, 1, 2, 1, 0])
    config = ReveConfig(sigma2=0.05, beta=beta, S=3)
    head.refresh(config.rank_tolerance)
    noise_seed = seed + 1
    with T.no_tape():
        h = net(x)
        gmm = reve_terms(h, labels, head, config, np.random.default_rng(noise_seed)).params
    return net, head, x, labels, config, gmm, noise_seed


def max_relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """Elementwise |a - b| / max(|a|, |b|), ignoring entries where both are below 1e-10."""
    denom = np.maximum(np.abs(a), np.abs(b))
    mask = denom > 1e-10
    if not mask.any():
        return float(np.abs(a - b).max(initial=0.0))
    return float((np.abs(a - b)[mask] / denom[mask]).max())


@_timed
def gradient_check(seed: int = 7, step: float = 1e-5, beta: float = 0.5) -> CheckResult:
    """Backward vs central differences for total_objective with eps, P and q parameters frozen."""
    net, head, x, labels, config, gmm, noise_seed = gradient_fixture(seed, beta)
    params = {**net.params(), **head.params()}

    def objective() -> T.Tensor:
        return total_objective(x, labels, net, head, config, np.random.default_rng(noise_seed), gmm=gmm).total

    with T.Tape() as tape:
        loss = objective()
        tape.backward(loss)
    analytic = {name: p.grad.copy() for name, p in params.items()}
    for p in params.values():
        p.grad = None

    worst, per_param = 0.0, {}
    for name, p in params.items():
        def f(theta, p=p):
            saved = p.data
            p.data = theta
            try:
                with T.no_tape():
                    return objective().item()
            finally:
                p.data = saved
        numeric = oracle.finite_difference_gradient(f, p.data.copy(), step)
        err = max_relative_error(analytic[name], numeric)
        per_param[name] = err
        worst = max(worst, err)
    detail = f"{len(params)} parameter tensors, max relative error {worst:.2e}"
    return CheckResult("gradient check", worst <= 1e-4, detail, values=per_param)


def mixture_sample(rng, n: int = 10_000, alpha: float = 0.6, mu=(3.0, -3.0), var: float = 0.25):
    comp = rng.random(n) < alpha
    z = np.where(comp, rng.normal(mu[0], np.sqrt(var), n), rng.normal(mu[1], np.sqrt(var), n))
    return z[:, None]


def exact_posterior(z, alpha=0.6, mu=(3.0, -3.0), var=0.25):
    """Bayes-rule p(mode 1 | z) under the generating mixture."""
    l1 = np.log(alpha) - (z - mu[0]) ** 2 / (2 * var)
    l0 = np.log(1 - alpha) - (z - mu[1]) ** 2 / (2 * var)
    return 1.0 / (1.0 + np.exp(l0 - l1))


@_timed
def m_step_recovery(seed: int = 4) -> CheckResult:
    rng = np.random.default_rng(seed)
    z = mixture_sample(rng)
    p = m_step(z, exact_posterior(z))
    errs = {
        "alpha": abs(p.alpha[0] - 0.6),
        "mu1": abs(p.mu1[0] - 3.0),
        "mu0": abs(p.mu0[0] + 3.0),
        "var1_rel": abs(p.var1[0] / 0.25 - 1),
        "var0_rel": abs(p.var0[0] / 0.25 - 1),
    }
    ok = errs["alpha"] <= 0.05 and errs["mu1"] <= 0.1 and errs["mu0"] <= 0.1 \
        and errs["var1_rel"] <= 0.2 and errs["var0_rel"] <= 0.2
    sig = fit_q(z, ReveConfig())
    detail = (f"alpha {p.alpha[0]:.3f}, mu1 {p.mu1[0]:.3f}, mu0 {p.mu0[0]:.3f}, "
              f"var1 {p.var1[0]:.3f}, var0 {p.var0[0]:.3f}; sigmoid responsibilities give "
              f"alpha {sig.alpha[0]:.3f}, mu1 {sig.mu1[0]:.3f}, mu0 {sig.mu0[0]:.3f}, "
              f"var1 {sig.var1[0]:.3f}, var0 {sig.var0[0]:.3f}")
    return CheckResult("M-step recovery", ok, detail, values=errs)


def monte_carlo_fixture(seed: int = 5):
    rng = np.random.default_rng(seed)
    net = EncoderNetwork.from_spec((8,), [{"type": "dense", "units": 16, "activation": "tanh"},
                                          {"type": "dense", "units": 8, "activation": "tanh"}], rng)
    head = DecoderHead(8, 3, rng)
    x = rng.normal(size=(64, 8))
    labels = rng.integers(0, 3, size=64)
    head.refresh()
    with T.no_tape():
        h = net(x).data
    return h, labels, head


@_timed
def monte_carlo_suite(repeats: int = 200, sample_counts=(1, 4, 16, 64), seed: int = 5) -> CheckResult:
    h, labels, head = monte_carlo_fixture(seed)
    rng = np.random.default_rng(seed + 100)
    stats = {}
    with T.no_tape():
        for S in sample_counts:
            cfg = ReveConfig(S=S)
            vals = np.array([reve_terms(h, labels, head, cfg, rng).omega.item() for _ in range(repeats)])
            stats[S] = (vals.mean(), vals.std(ddof=1))
    stds = [stats[S][1] for S in sample_counts]
    decreasing = all(a > b for a, b in zip(stds, stds[1:]))
    lo, hi = sample_counts[0], sample_counts[-1]
    se = stats[lo][1] / np.sqrt(repeats)
    shift = abs(stats[hi][0] - stats[lo][0])
    ok = decreasing and shift <= 3 * se
    detail = ("std " + " > ".join(f"{s:.4f}" for s in stds)
              + f"; |mean(S={hi}) - mean(S={lo})| = {shift:.4f} vs 3 SE = {3 * se:.4f}")
    return CheckResult("Monte Carlo", ok, detail, values={"stats": stats, "shift": shift, "se": se})


def encoding_moments(sigma2: float = 0.04, S: int = 10_000, seed: int = 6):
    """Sample mean and variance of y - h over S draws for a fixed h."""
    rng = np.random.default_rng(seed)
    h = np.array([[0.5, -1.0, 2.0]])
    y = sample_encoding(h, sigma2, S, rng).data[0]
    return h[0], y.mean(axis=0), y.var(axis=0, ddof=1)


def all_suites(trials: int | None = None):
    """Fast suites; ``trials`` overrides the randomized trial counts."""
    kw = {} if trials is None else {"trials": trials}
    return [
        variational_bound_suite(**kw),
        decomposition_suite(**kw),
        markov_bound_suite(**kw),
        projection_suite(**kw),
        gradient_check(),
        m_step_recovery(),
        monte_carlo_suite(),
    ]


def z_in_range_check(y, projection) -> float:
    """max |z - P z| over the projected samples."""
    z = project_to_z(y, projection).data
    return float(np.abs(z - projection(z)).max())
