from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sketchridge.errors import InvalidInput, SingularSystem
from sketchridge.linalg import SpectralShrinker, regularized_inverse_apply, thin_svd


def test_thin_svd_reconstructs_and_is_orthonormal():
    rng = np.random.default_rng(0)
    m = rng.standard_normal((30, 6))
    svd = thin_svd(m)
    np.testing.assert_allclose(svd.reconstruct(), m, atol=1e-12)
    np.testing.assert_allclose(svd.left.T @ svd.left, np.eye(6), atol=1e-12)
    np.testing.assert_allclose(svd.right.T @ svd.right, np.eye(6), atol=1e-12)
    assert np.all(np.diff(svd.singvals) <= 0)


def test_sign_convention_is_stable_under_column_flip():
    rng = np.random.default_rng(1)
    m = rng.standard_normal((12, 4))
    a, b = thin_svd(m), thin_svd(-m)
    np.testing.assert_allclose(a.right, b.right, atol=1e-12)
    np.testing.assert_allclose(a.left, -b.left, atol=1e-12)
    idx = np.argmax(np.abs(a.right), axis=0)
    assert np.all(a.right[idx, np.arange(4)] > 0)


def test_wide_matrix_shapes_and_rank():
    rng = np.random.default_rng(2)
    m = rng.standard_normal((3, 7))
    svd = thin_svd(m)
    assert svd.left.shape == (3, 3) and svd.right.shape == (7, 3)
    assert svd.rank() == 3
    assert svd.shape == (3, 7)


def test_rejects_nan_and_empty():
    with pytest.raises(InvalidInput):
        thin_svd(np.array([[1.0, np.nan]]))
    with pytest.raises(InvalidInput):
        thin_svd(np.zeros((0, 3)))


def test_rank_deficient_detected():
    rng = np.random.default_rng(3)
    a = rng.standard_normal((20, 2))
    m = np.column_stack([a, a[:, 0] + a[:, 1]])
    assert thin_svd(m).rank() == 2
    assert thin_svd(np.zeros((4, 2))).rank() == 0


def test_shrinker_pseudo_inverse_at_zero():
    f = SpectralShrinker(np.array([2.0, 1.0, 0.0]), 0.0).factors()
    np.testing.assert_allclose(f, [0.5, 1.0, 0.0])
    np.testing.assert_allclose(SpectralShrinker(np.array([2.0]), 1.0).factors(), [0.4])


@settings(max_examples=40, deadline=None)
@given(
    n=st.integers(1, 15),
    p=st.integers(1, 8),
    lam=st.floats(1e-6, 1e4),
    seed=st.integers(0, 2**31),
)
def test_regularized_inverse_matches_dense_solve(n, p, lam, seed):
    rng = np.random.default_rng(seed)
    m = rng.standard_normal((n, p))
    v = rng.standard_normal(p)
    got = regularized_inverse_apply(thin_svd(m), lam, v)
    want = np.linalg.solve(m.T @ m + lam * np.eye(p), v)
    np.testing.assert_allclose(got, want, rtol=1e-8, atol=1e-10 * max(1.0, np.abs(want).max()))


def test_regularized_inverse_matrix_rhs():
    rng = np.random.default_rng(4)
    m = rng.standard_normal((3, 5))
    v = rng.standard_normal((5, 2))
    got = regularized_inverse_apply(thin_svd(m), 0.7, v)
    np.testing.assert_allclose(got, np.linalg.solve(m.T @ m + 0.7 * np.eye(5), v), rtol=1e-10)


def test_zero_lambda_rules():
    rng = np.random.default_rng(5)
    m = rng.standard_normal((10, 3))
    v = rng.standard_normal(3)
    np.testing.assert_allclose(
        regularized_inverse_apply(thin_svd(m), 0.0, v), np.linalg.solve(m.T @ m, v), rtol=1e-10
    )
    with pytest.raises(SingularSystem):
        regularized_inverse_apply(thin_svd(m[:2]), 0.0, v)
    with pytest.raises(InvalidInput):
        regularized_inverse_apply(thin_svd(m), -1.0, v)
    with pytest.raises(InvalidInput):
        regularized_inverse_apply(thin_svd(m), 1.0, np.ones(4))
