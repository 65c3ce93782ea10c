"""Periodic grid utilities: spectral differentiation and cyclic tridiagonal solves."""

import numpy as np
from scipy.linalg import solve_banded


def spectral_derivative(f: np.ndarray, order: int = 1) -> np.ndarray:
    """Derivative in theta of samples on the uniform periodic grid over [0, 2 pi)."""
    n = f.shape[0]
    k = np.fft.rfftfreq(n, d=1.0 / n)
    fh = np.fft.rfft(f, axis=0)
    mult = (1j * k) ** order
    if order % 2 == 1 and n % 2 == 0:
        mult[-1] = 0.0  # Nyquist mode has no odd derivative
    shape = (-1,) + (1,) * (f.ndim - 1)
    return np.fft.irfft(fh * mult.reshape(shape), n=n, axis=0)


def solve_cyclic_tridiagonal(lower, diag, upper, rhs):
    """Solve the periodic tridiagonal system.

    Row ``i`` reads ``lower[i] x[i-1] + diag[i] x[i] + upper[i] x[i+1] = rhs[i]``
    with indices taken modulo ``n``.  Uses the Sherman-Morrison correction on
    top of a banded solve.
    """
    lower = np.asarray(lower, dtype=float)
    diag = np.asarray(diag, dtype=float)
    upper = np.asarray(upper, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    n = diag.size
    if n < 3:
        raise ValueError("cyclic system needs at least 3 unknowns")
    alpha = upper[-1]  # A[n-1, 0]
    beta = lower[0]    # A[0, n-1]
    gamma = -diag[0]
    d = diag.copy()
    d[0] -= gamma
    d[-1] -= alpha * beta / gamma
    ab = np.zeros((3, n))
    ab[0, 1:] = upper[:-1]
    ab[1] = d
    ab[2, :-1] = lower[1:]
    u = np.zeros(n)
    u[0] = gamma
    u[-1] = alpha
    sol = solve_banded((1, 1), ab, np.column_stack([rhs.reshape(n, -1), u]))
    x, z = sol[:, :-1], sol[:, -1]
    v_x = x[0] + beta / gamma * x[-1]
    v_z = z[0] + beta / gamma * z[-1]
    out = x - np.outer(z, v_x / (1.0 + v_z))
    return out.reshape(rhs.shape)
