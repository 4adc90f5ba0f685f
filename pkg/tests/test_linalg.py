import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from reve.linalg import compact_svd, jacobi_eigh, kernel_complement_projection, modified_gram_schmidt


def test_diagonal_matrix_example():
    svd = compact_svd(np.array([[3.0, 0, 0], [0, 1.0, 0]]))
    np.testing.assert_allclose(svd.singular_values, [3, 1], atol=1e-14)
    assert svd.rank == 2
    P = kernel_complement_projection(svd).P
    np.testing.assert_allclose(P, np.diag([1.0, 1.0, 0.0]), atol=1e-14)


def test_duplicated_rows_are_rank_one():
    row = np.array([1.0, 2.0, -1.0, 0.5])
    svd = compact_svd(np.stack([row, row]))
    assert svd.rank == 1
    u = row / np.linalg.norm(row)
    np.testing.assert_allclose(kernel_complement_projection(svd).P, np.outer(u, u), atol=1e-12)


def test_zero_matrix_has_empty_factors():
    svd = compact_svd(np.zeros((3, 5)))
    assert svd.rank == 0
    np.testing.assert_array_equal(kernel_complement_projection(svd).P, np.zeros((5, 5)))


def test_non_finite_rejected():
    with pytest.raises(ValueError, match="non-finite"):
        compact_svd(np.array([[1.0, np.nan]]))


def test_sign_convention():
    svd = compact_svd(-np.array([[2.0, 0.0], [0.0, 1.0]]))
    col_max = svd.U[np.argmax(np.abs(svd.U), axis=0), np.arange(svd.rank)]
    assert np.all(col_max >= 0)


def test_jacobi_against_known_spectrum():
    rng = np.random.default_rng(3)
    Q, _ = np.linalg.qr(rng.normal(size=(5, 5)))
    lam = np.array([5.0, 3.0, 2.0, 1.0, 0.1])
    vals, vecs = jacobi_eigh(Q @ np.diag(lam) @ Q.T)
    np.testing.assert_allclose(np.sort(vals)[::-1], lam, atol=1e-10)
    np.testing.assert_allclose(vecs.T @ vecs, np.eye(5), atol=1e-12)


def test_gram_schmidt_orthonormal():
    Q = modified_gram_schmidt(np.random.default_rng(0).normal(size=(8, 3)))
    np.testing.assert_allclose(Q.T @ Q, np.eye(3), atol=1e-13)


matrices = st.tuples(st.integers(1, 10), st.integers(1, 16)).flatmap(
    lambda s: arrays(np.float64, s, elements=st.floats(-5, 5, allow_subnormal=False)))


@settings(max_examples=60, deadline=None)
@given(matrices)
def test_projection_properties(W):
    svd = compact_svd(W)
    P = kernel_complement_projection(svd).P
    scale = max(1.0, np.abs(W).max())
    np.testing.assert_allclose(P @ P, P, atol=1e-10)
    np.testing.assert_allclose(P, P.T, atol=1e-10)
    np.testing.assert_allclose(W - W @ P, 0.0, atol=1e-8 * scale)
    np.testing.assert_allclose(svd.V.T @ svd.V, np.eye(svd.rank), atol=1e-10)
    np.testing.assert_allclose(svd.reconstruct(), W, atol=1e-7 * scale * W.size)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 6), st.integers(6, 40), st.integers(0, 2**31))
def test_rank_matches_reference(k, d, seed):
    rng = np.random.default_rng(seed)
    r = rng.integers(1, k + 1)
    W = rng.normal(size=(k, r)) @ rng.normal(size=(r, d))
    svd = compact_svd(W)
    assert svd.rank == np.linalg.matrix_rank(W) == r
    np.testing.assert_allclose(svd.singular_values, np.linalg.svd(W, compute_uv=False)[:r], rtol=1e-9)
