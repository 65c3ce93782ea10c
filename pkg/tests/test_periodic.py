import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from schiffer_lab.periodic import solve_cyclic_tridiagonal, spectral_derivative


def test_spectral_derivative_of_trig_polynomial():
    t = np.linspace(0, 2 * np.pi, 64, endpoint=False)
    f = np.sin(3 * t) + 0.5 * np.cos(7 * t)
    np.testing.assert_allclose(spectral_derivative(f), 3 * np.cos(3 * t) - 3.5 * np.sin(7 * t), atol=1e-12)
    np.testing.assert_allclose(spectral_derivative(f, 2), -9 * np.sin(3 * t) - 24.5 * np.cos(7 * t), atol=1e-11)


def test_spectral_derivative_is_skew():
    n = 32
    D = np.column_stack([spectral_derivative(e) for e in np.eye(n)])
    np.testing.assert_allclose(D, -D.T, atol=1e-13)


@settings(max_examples=50, deadline=None)
@given(st.integers(3, 40), st.integers(0, 2**31 - 1))
def test_cyclic_solver_matches_dense(n, seed):
    rng = np.random.default_rng(seed)
    lower, upper = rng.uniform(-1, 1, n), rng.uniform(-1, 1, n)
    diag = 3 + rng.uniform(0, 1, n)
    A = np.diag(diag)
    for i in range(n):
        A[i, (i - 1) % n] += lower[i]
        A[i, (i + 1) % n] += upper[i]
    b = rng.standard_normal((n, 2))
    x = solve_cyclic_tridiagonal(lower, diag, upper, b)
    np.testing.assert_allclose(A @ x, b, atol=1e-10)
    np.testing.assert_allclose(solve_cyclic_tridiagonal(lower, diag, upper, b[:, 0]), x[:, 0], atol=1e-12)


def test_cyclic_solver_needs_three_unknowns():
    with pytest.raises(ValueError):
        solve_cyclic_tridiagonal([1, 1], [3, 3], [1, 1], [1, 1])
