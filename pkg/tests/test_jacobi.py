import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from ristopo.jacobi import jacobi_eigh, off_norm


def sym(n, seed):
    a = np.random.default_rng(seed).standard_normal((n, n))
    return (a + a.T) / 2


@pytest.mark.parametrize("n", [1, 2, 3, 8, 20])
def test_matches_lapack(n):
    a = sym(n, n)
    np.testing.assert_allclose(jacobi_eigh(a), np.linalg.eigvalsh(a), atol=1e-10)


def test_vectors_diagonalise():
    a = sym(7, 3)
    w, v = jacobi_eigh(a, vectors=True)
    np.testing.assert_allclose(v.T @ v, np.eye(7), atol=1e-10)
    np.testing.assert_allclose(v.T @ a @ v, np.diag(w), atol=1e-10)


def test_batch_equals_single():
    stack = np.stack([sym(5, s) for s in range(6)])
    batch = jacobi_eigh(stack)
    for k in range(6):
        np.testing.assert_allclose(batch[k], jacobi_eigh(stack[k]), atol=1e-12)


def test_diagonal_input_untouched():
    np.testing.assert_array_equal(jacobi_eigh(np.diag([3.0, -1.0, 2.0])), [-1.0, 2.0, 3.0])


def test_off_norm():
    assert off_norm(np.array([[1.0, 3.0], [4.0, 2.0]])) == pytest.approx(5.0)


def test_deterministic():
    a = sym(10, 9)
    assert np.array_equal(jacobi_eigh(a), jacobi_eigh(a.copy()))


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (5, 5), elements=st.floats(-10, 10)))
def test_trace_and_order(m):
    a = (m + m.T) / 2
    w = jacobi_eigh(a)
    assert np.all(np.diff(w) >= -1e-12)
    assert np.sum(w) == pytest.approx(np.trace(a), abs=1e-8)
    np.testing.assert_allclose(w, np.linalg.eigvalsh(a), atol=1e-8)
