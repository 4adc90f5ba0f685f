"""Brute-force information quantities on finite supports (nats), plus a
central-difference gradient checker.

These are deliberately naive: plain sums over the support, no shortcuts
shared with the training code.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

PROB_TOL = 1e-12


def _as_distribution(p) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if np.any(p < 0) or abs(p.sum() - 1.0) > PROB_TOL * max(1, p.size):
        raise ValueError("not a probability vector")
    return p


def _xlogy(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """x * log(y) with 0 * log(anything) = 0."""
    out = np.zeros(np.broadcast(x, y).shape)
    nz = np.broadcast_to(x, out.shape) != 0
    xb, yb = np.broadcast_to(x, out.shape), np.broadcast_to(y, out.shape)
    with np.errstate(divide="ignore"):
        out[nz] = xb[nz] * np.log(yb[nz])
    return out


def entropy(p) -> float:
    p = _as_distribution(p)
    return float(-_xlogy(p, p).sum())


@dataclass(frozen=True)
class BoundCheck:
    entropy: float
    cross_entropy: float
    gap: float  # KL(p || q); +inf when q misses part of p's support


def cross_entropy_bound_check(p, q) -> BoundCheck:
    """H(p), the variational bound -sum p log q, and their difference."""
    p = _as_distribution(p)
    q = np.asarray(q, dtype=np.float64)
    h = entropy(p)
    if np.any((q <= 0) & (p > 0)):
        return BoundCheck(h, np.inf, np.inf)
    ce = float(-_xlogy(p, q).sum())
    kl = float(_xlogy(p, p).sum() - _xlogy(p, q).sum())
    return BoundCheck(h, ce, kl)


def kl_divergence(p, q) -> float:
    return cross_entropy_bound_check(p, q).gap


def _as_joint(joint) -> np.ndarray:
    j = np.asarray(joint, dtype=np.float64)
    if j.ndim != 2 or np.any(j < 0) or abs(j.sum() - 1.0) > PROB_TOL * max(1, j.size):
        raise ValueError("not a joint distribution")
    return j


def conditional_entropy(joint, given: str = "z") -> float:
    """Rows index z, columns index c.  ``given="z"`` gives H(C|Z); ``"c"`` gives H(Z|C)."""
    j = _as_joint(joint)
    if given == "c":
        j = j.T
    elif given != "z":
        raise ValueError("given must be 'z' or 'c'")
    total = 0.0
    for row in j:
        m = row.sum()
        if m == 0:
            continue
        for v in row:
            if v > 0:
                total -= v * np.log(v / m)
    return float(total)


def marginals(joint):
    j = _as_joint(joint)
    return j.sum(axis=1), j.sum(axis=0)


def mutual_information(joint) -> float:
    j = _as_joint(joint)
    pz, pc = j.sum(axis=1), j.sum(axis=0)
    outer = np.outer(pz, pc)
    mask = j > 0
    return float(np.sum(j[mask] * np.log(j[mask] / outer[mask])))


def decomposition_check(joint) -> float:
    """|H(Z|C) - H(Z) + H(C) - H(C|Z)|."""
    pz, pc = marginals(joint)
    return abs(conditional_entropy(joint, "c") - entropy(pz) + entropy(pc)
               - conditional_entropy(joint, "z"))


@dataclass(frozen=True)
class MarkovCheck:
    conditional_entropy: float  # H(C|Z) under p(z,c) = sum_x p(x) p(c|x) p(z|x)
    bound: float  # -sum p(z,c) log r(c|z)
    residual: float  # bound - H(C|Z), never negative beyond round-off
    joint: np.ndarray


def markov_joint(px, pc_x, pz_x) -> np.ndarray:
    """p(z, c) built through x under C <-> X <-> Z.  pc_x is |X| x |C|, pz_x is |X| x |Z|."""
    px = _as_distribution(px)
    pc_x = np.asarray(pc_x, dtype=np.float64)
    pz_x = np.asarray(pz_x, dtype=np.float64)
    nz, nc = pz_x.shape[1], pc_x.shape[1]
    joint = np.zeros((nz, nc))
    for x in range(px.size):
        for z in range(nz):
            for c in range(nc):
                joint[z, c] += px[x] * pc_x[x, c] * pz_x[x, z]
    return joint


def markov_factorization_check(px, pc_x, pz_x, r_c_z=None) -> MarkovCheck:
    """Check -sum p(z,c) log r(c|z) >= H(C|Z); ``r_c_z`` is |Z| x |C| (rows sum to 1).

    With ``r_c_z=None`` the true conditional p(c|z) is used, making the bound tight.
    """
    joint = markov_joint(px, pc_x, pz_x)
    joint = joint / joint.sum()
    h = conditional_entropy(joint, "z")
    if r_c_z is None:
        pz = joint.sum(axis=1, keepdims=True)
        r_c_z = np.divide(joint, pz, out=np.full_like(joint, 1.0 / joint.shape[1]), where=pz > 0)
    r_c_z = np.asarray(r_c_z, dtype=np.float64)
    if np.any((r_c_z <= 0) & (joint > 0)):
        bound = np.inf
    else:
        bound = float(-_xlogy(joint, r_c_z).sum())
    return MarkovCheck(h, bound, bound - h, joint)


def finite_difference_gradient(f: Callable[[np.ndarray], float], theta, step: float = 1e-5) -> np.ndarray:
    """Central differences (f(t + h e_i) - f(t - h e_i)) / 2h for every coordinate."""
    theta = np.array(theta, dtype=np.float64)
    grad = np.zeros_like(theta)
    flat = theta.reshape(-1)
    g = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        fp = float(f(theta))
        flat[i] = orig - step
        fm = float(f(theta))
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise ValueError(f"non-finite function value at coordinate {i}")
        g[i] = (fp - fm) / (2.0 * step)
    return grad


@dataclass(frozen=True)
class BinnedEntropy:
    discrete: float  # plug-in entropy of the bin histogram
    width: float
    dim: int
    differential: float  # discrete + dim * log(width)
    n_occupied: int


def binned_entropy(samples, width: float, origin: float = 0.0) -> BinnedEntropy:
    """Plug-in entropy of samples (n x dim) quantized onto a uniform grid of cell ``width``."""
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    cells = np.floor((x - origin) / width).astype(np.int64)
    _, counts = np.unique(cells, axis=0, return_counts=True)
    p = counts / counts.sum()
    h = float(-np.sum(p * np.log(p)))
    return BinnedEntropy(h, width, x.shape[1], h + x.shape[1] * np.log(width), counts.size)


def binned_conditional_entropy(samples, labels, width: float, origin: float = 0.0) -> float:
    """Plug-in H(Z|C) on the grid: class-weighted average of per-class binned entropies."""
    labels = np.asarray(labels)
    total = 0.0
    for c in np.unique(labels):
        mask = labels == c
        total += mask.mean() * binned_entropy(np.asarray(samples)[mask], width, origin).discrete
    return total


# random fixtures for property runs

def random_distribution(rng: np.random.Generator, n: int, sparsity: float = 0.0) -> np.ndarray:
    p = rng.exponential(size=n)
    if sparsity > 0:
        p[rng.random(n) < sparsity] = 0.0
        if p.sum() == 0:
            p[rng.integers(n)] = 1.0
    return p / p.sum()


def random_conditional(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    m = rng.exponential(size=(rows, cols))
    return m / m.sum(axis=1, keepdims=True)
