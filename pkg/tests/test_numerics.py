import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oomcraft.errors import DimensionError, InputError
from oomcraft.numerics import matrix_power_limit, pseudoinverse, truncated_svd, vector_pseudoinverse

from oracles import jacobi_svd, stationary_distribution

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)
matrices = st.tuples(st.integers(1, 6), st.integers(1, 6)).flatmap(
    lambda s: arrays(float, s, elements=finite)
)


def test_truncated_svd_diagonal():
    svd = truncated_svd(np.diag([3.0, 2.0, 1.0]), 2)
    np.testing.assert_allclose(svd.sigma, [3.0, 2.0])
    np.testing.assert_allclose(svd.reconstruct(), np.diag([3.0, 2.0, 0.0]), atol=1e-14)


def test_truncated_svd_identity():
    svd = truncated_svd(np.eye(4), 4)
    np.testing.assert_allclose(svd.sigma, np.ones(4))
    np.testing.assert_allclose(svd.u @ svd.v.T, np.eye(4), atol=1e-14)


def test_truncated_svd_tail_energy_matches_jacobi(rng):
    a = rng.normal(size=(6, 5))
    _, s_ref, _ = jacobi_svd(a)
    svd = truncated_svd(a, 3)
    err = np.linalg.norm(a - svd.reconstruct())
    assert abs(err - np.sqrt(s_ref[3] ** 2 + s_ref[4] ** 2)) < 1e-8
    np.testing.assert_allclose(svd.sigma, s_ref[:3], atol=1e-10)


def test_truncated_svd_orthonormal_factors(rng):
    svd = truncated_svd(rng.normal(size=(9, 7)), 5)
    np.testing.assert_allclose(svd.u.T @ svd.u, np.eye(5), atol=1e-10)
    np.testing.assert_allclose(svd.v.T @ svd.v, np.eye(5), atol=1e-10)


@pytest.mark.parametrize("m", [0, 4])
def test_truncated_svd_rank_out_of_range(m):
    with pytest.raises(DimensionError):
        truncated_svd(np.ones((3, 3)), m)


def test_truncated_svd_rejects_nonfinite():
    with pytest.raises(InputError):
        truncated_svd(np.array([[1.0, np.nan], [0.0, 1.0]]), 1)


def test_pseudoinverse_examples():
    np.testing.assert_array_equal(pseudoinverse(np.eye(3)), np.eye(3))
    np.testing.assert_array_equal(pseudoinverse(np.zeros((2, 3))), np.zeros((3, 2)))
    np.testing.assert_allclose(pseudoinverse(np.diag([2.0, 0.0])), np.diag([0.5, 0.0]))


def test_pseudoinverse_rejects_nonfinite():
    with pytest.raises(InputError):
        pseudoinverse(np.array([[np.inf]]))


def test_vector_pseudoinverse():
    np.testing.assert_allclose(vector_pseudoinverse(np.array([1.0, 1.0])), [0.5, 0.5])


def test_matrix_power_limit_examples():
    np.testing.assert_allclose(matrix_power_limit(np.array([[1.0, 0.0], [0.0, 0.5]])),
                               [[1.0, 0.0], [0.0, 0.0]], atol=1e-11)
    np.testing.assert_array_equal(matrix_power_limit(np.eye(3)), np.eye(3))
    p = np.array([[0.9, 0.1], [0.2, 0.8]])
    pi = stationary_distribution(p)
    np.testing.assert_allclose(matrix_power_limit(p), np.vstack([pi, pi]), atol=1e-10)


def test_matrix_power_limit_divergence_and_shape():
    assert matrix_power_limit(np.array([[0.0, 1.0], [1.0, 0.0]]), max_iters=50) is None
    with pytest.raises(DimensionError):
        matrix_power_limit(np.ones((2, 3)))


@settings(max_examples=200, deadline=None)
@given(matrices)
def test_pseudoinverse_is_an_involution(a):
    # near the rank cutoff the round trip loses about eps * cond digits, so
    # only matrices with a clear gap between kept and dropped spectrum qualify
    s = np.linalg.svd(a, compute_uv=False)
    smax = s[0] if s.size else 0.0
    assume(np.all((s >= 1e-6 * smax) | (s <= 1e-14 * smax)))
    np.testing.assert_allclose(pseudoinverse(pseudoinverse(a)), a, atol=1e-7)


@settings(max_examples=200, deadline=None)
@given(matrices)
def test_full_rank_svd_reconstructs(a):
    svd = truncated_svd(a, min(a.shape))
    assert np.linalg.norm(svd.reconstruct() - a) <= 1e-8 * max(1.0, np.linalg.norm(a))
    assert np.all(np.diff(svd.sigma) <= 0)
    assert np.all(svd.sigma >= 0)
