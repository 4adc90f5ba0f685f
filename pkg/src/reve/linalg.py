"""Compact SVD of a short, wide decoder matrix and the projection onto its row space.

The decoder has few rows (one per class) and many columns, so the SVD is
obtained from the small Gram matrix ``W W^T`` with cyclic Jacobi rotations;
the right factor follows as ``V = W^T U diag(1/s)`` and is re-orthonormalized
with modified Gram-Schmidt.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_RANK_TOLERANCE = 1e-7


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class CompactSvd:
    U: np.ndarray  # k x r
    singular_values: np.ndarray  # r, descending
    V: np.ndarray  # d x r
    rank: int
    rank_tolerance: float

    def reconstruct(self) -> np.ndarray:
        return (self.U * self.singular_values) @ self.V.T


@dataclass(frozen=True)
class ProjectionMatrix:
    P: np.ndarray  # d x d, symmetric idempotent

    @property
    def dim(self) -> int:
        return self.P.shape[0]

    @property
    def rank(self) -> int:
        return int(round(np.trace(self.P)))

    def __call__(self, y: np.ndarray) -> np.ndarray:
        """Apply to the trailing axis of ``y``."""
        return y @ self.P


def jacobi_eigh(A: np.ndarray, rel_tol: float = 1e-12, max_sweeps: int = 100):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Stops when the largest off-diagonal magnitude is at most ``rel_tol * |trace|``.
    Returns (eigenvalues, eigenvectors) unsorted; columns are eigenvectors.
    """
    A = np.array(A, dtype=np.float64)
    n = A.shape[0]
    Q = np.eye(n)
    scale = abs(np.trace(A))
    if n == 1 or scale == 0.0:
        return np.diag(A).copy(), Q
    thresh = rel_tol * scale
    off = ~np.eye(n, dtype=bool)
    for _ in range(max_sweeps):
        if np.max(np.abs(A[off])) <= thresh:
            return np.diag(A).copy(), Q
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                tau = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = np.copysign(1.0, tau) / (abs(tau) + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                # A <- J^T A J with J the (p, q) rotation
                ap, aq = A[:, p].copy(), A[:, q].copy()
                A[:, p] = c * ap - s * aq
                A[:, q] = s * ap + c * aq
                ap, aq = A[p, :].copy(), A[q, :].copy()
                A[p, :] = c * ap - s * aq
                A[q, :] = s * ap + c * aq
                qp, qq = Q[:, p].copy(), Q[:, q].copy()
                Q[:, p] = c * qp - s * qq
                Q[:, q] = s * qp + c * qq
    if np.max(np.abs(A[off])) <= thresh:
        return np.diag(A).copy(), Q
    raise ConvergenceError(f"Jacobi did not converge in {max_sweeps} sweeps")


def modified_gram_schmidt(X: np.ndarray) -> np.ndarray:
    Q = np.array(X, dtype=np.float64)
    for j in range(Q.shape[1]):
        for i in range(j):
            Q[:, j] -= (Q[:, i] @ Q[:, j]) * Q[:, i]
        Q[:, j] /= np.linalg.norm(Q[:, j])
    return Q


def compact_svd(W: np.ndarray, rank_tolerance: float = DEFAULT_RANK_TOLERANCE) -> CompactSvd:
    """Compact SVD ``W = U diag(s) V^T`` keeping singular values above ``rank_tolerance * s_max``.

    Columns of U are signed so that each one's largest-magnitude entry is
    non-negative.
    """
    W = np.asarray(W, dtype=np.float64)
    if W.ndim != 2:
        raise ValueError(f"compact_svd expects a matrix, got shape {W.shape}")
    if not np.all(np.isfinite(W)):
        raise ValueError("compact_svd: matrix has non-finite entries")
    k, d = W.shape
    wide = k <= d
    G = W @ W.T if wide else W.T @ W
    G = 0.5 * (G + G.T)
    evals, evecs = jacobi_eigh(G)
    order = np.argsort(-evals, kind="stable")
    evals = np.clip(evals[order], 0.0, None)
    evecs = evecs[:, order]
    s = np.sqrt(evals)
    keep = s > rank_tolerance * s[0] if s.size and s[0] > 0 else np.zeros(s.size, bool)
    r = int(keep.sum())
    if r == 0:
        return CompactSvd(np.zeros((k, 0)), np.zeros(0), np.zeros((d, 0)), 0, rank_tolerance)
    s = s[:r]
    small = evecs[:, :r]
    if wide:
        U = small
        V = modified_gram_schmidt((W.T @ U) / s)
    else:
        V = small
        U = modified_gram_schmidt((W @ V) / s)
    signs = np.sign(U[np.argmax(np.abs(U), axis=0), np.arange(r)])
    signs[signs == 0] = 1.0
    return CompactSvd(U * signs, s, V * signs, r, rank_tolerance)


def kernel_complement_projection(svd: CompactSvd) -> ProjectionMatrix:
    """Orthogonal projector ``V V^T`` onto the orthogonal complement of ker(W)."""
    P = svd.V @ svd.V.T
    return ProjectionMatrix(0.5 * (P + P.T))
