"""Bessel functions of the first kind, their zeros, and exact disk spectra.

Everything here is self-contained (no special-function library) so that it
can serve as an independent oracle for the finite element solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np

from .errors import ConvergenceFailure

SERIES_CUTOFF = 12.0


def _series(n: int, x: float) -> float:
    half = 0.5 * x
    term = half**n / math.factorial(n)
    terms = [term]
    q = -half * half
    k = 0
    while True:
        k += 1
        term *= q / (k * (k + n))
        terms.append(term)
        if abs(term) < 1e-18 * max(1.0, abs(terms[0])) and k > half:
            break
    return math.fsum(terms)


def _miller(n: int, x: float) -> float:
    # backward recurrence normalized with J_0 + 2 sum J_2k = 1
    start = 2 * ((max(n, int(x)) + int(2 * math.sqrt(40 * max(n, x))) + 20) // 2)
    jp1, j = 0.0, 1e-300
    norm = 0.0
    result = 0.0
    for k in range(start, 0, -1):
        jm1 = 2.0 * k / x * j - jp1
        jp1, j = j, jm1
        if abs(j) > 1e250:
            j *= 1e-250
            jp1 *= 1e-250
            norm *= 1e-250
            result *= 1e-250
        if (k - 1) % 2 == 0 and k - 1 > 0:
            norm += 2.0 * j
        if k - 1 == n:
            result = j
    norm += j  # J_0 term
    return result / norm


def bessel_j(n: int, x: float) -> float:
    """``J_n(x)`` for integer ``n >= 0`` and ``x >= 0``.

    Ascending series for ``x <= 12``; normalized Miller backward recurrence beyond.
    """
    if n < 0:
        raise ValueError("order must be non-negative")
    if x < 0:
        raise ValueError("argument must be non-negative")
    if x == 0.0:
        return 1.0 if n == 0 else 0.0
    if x <= SERIES_CUTOFF:
        return _series(n, x)
    return _miller(n, x)


def bessel_jp(n: int, x: float) -> float:
    """Derivative ``J_n'(x)``."""
    if n == 0:
        return -bessel_j(1, x)
    return 0.5 * (bessel_j(n - 1, x) - bessel_j(n + 1, x))


class RootKind(str, Enum):
    FUNCTION = "function"
    DERIVATIVE = "derivative"


def _bisect(f, a: float, b: float, max_iter: int = 200, xtol: float = 1e-14) -> float:
    fa = f(a)
    for _ in range(max_iter):
        mid = 0.5 * (a + b)
        fm = f(mid)
        if fm == 0.0 or (b - a) < xtol * max(1.0, abs(mid)):
            return mid
        if (fa < 0) == (fm < 0):
            a, fa = mid, fm
        else:
            b = mid
    raise ConvergenceFailure("bisection did not converge")


@lru_cache(maxsize=None)
def _roots(n: int, kind: RootKind, count: int) -> tuple:
    if kind == RootKind.FUNCTION:
        f, fp = (lambda x: bessel_j(n, x)), (lambda x: bessel_jp(n, x))
        start = max(float(n), 1e-3)
    else:
        f = lambda x: bessel_jp(n, x)  # noqa: E731
        # J_n'' from Bessel's equation
        fp = lambda x: -bessel_jp(n, x) / x - (1.0 - n * n / (x * x)) * bessel_j(n, x)  # noqa: E731
        start = max(float(n) - 1.0, 1e-3) if n > 0 else 1e-3
    # consecutive zeros are more than ~2.5 apart, so a 0.25 scan never straddles two
    step = 0.25
    roots = []
    a, fa = start, f(start)
    while len(roots) < count:
        b = a + step
        fb = f(b)
        if fa == 0.0:
            roots.append(a)
        elif (fa < 0) != (fb < 0):
            r = _bisect(f, a, b)
            for _ in range(3):
                d = fp(r)
                if d == 0.0:
                    break
                r_new = r - f(r) / d
                if not a <= r_new <= b:
                    break
                r = r_new
            roots.append(r)
        a, fa = b, fb
        if a > 1e4:
            raise ConvergenceFailure("root scan escaped")
    return tuple(roots)


def bessel_root(n: int, m: int, kind: RootKind | str = RootKind.FUNCTION) -> float:
    """``m``-th positive zero of ``J_n`` (kind ``function``) or of ``J_n'``.

    The trivial zero of ``J_0'`` at the origin is excluded.
    """
    if m < 1:
        raise ValueError("root index starts at 1")
    return _roots(int(n), RootKind(kind), int(m))[m - 1]


def root_table(n: int, m_max: int, kind: RootKind | str = RootKind.FUNCTION) -> np.ndarray:
    return np.array(_roots(int(n), RootKind(kind), int(m_max)))


class BC(str, Enum):
    DIRICHLET = "dirichlet"
    NEUMANN = "neumann"


@dataclass(frozen=True)
class DiskEigen:
    """One eigenmode of ``-Lap u = lam u`` on the disk of radius ``radius``.

    ``trace`` and ``flux`` are the boundary amplitudes of ``u`` and
    ``du/dnu`` for the L2-normalized mode (multiplying ``cos n theta`` or
    ``sin n theta`` when ``n >= 1``).
    """

    radius: float
    bc: BC
    eigenvalue: float
    n: int
    m: int
    trace: float
    flux: float
    root: float


def _disk_mode(radius: float, bc: BC, n: int, m: int) -> DiskEigen:
    if bc == BC.NEUMANN and n == 0 and m == 0:
        c = 1.0 / (math.sqrt(math.pi) * radius)
        return DiskEigen(radius, bc, 0.0, 0, 0, c, 0.0, 0.0)
    kind = RootKind.FUNCTION if bc == BC.DIRICHLET else RootKind.DERIVATIVE
    k = bessel_root(n, m, kind)
    jn, jnp = bessel_j(n, k), bessel_jp(n, k)
    # int_0^R J_n(k r / R)^2 r dr
    radial = 0.5 * radius**2 * (jnp**2 + (1.0 - n * n / (k * k)) * jn**2)
    angular = 2.0 * math.pi if n == 0 else math.pi
    amp = 1.0 / math.sqrt(radial * angular)
    trace = 0.0 if bc == BC.DIRICHLET else amp * jn
    flux = amp * k / radius * jnp if bc == BC.DIRICHLET else 0.0
    return DiskEigen(radius, bc, (k / radius) ** 2, n, m, trace, flux, k)


def disk_spectrum(radius: float, bc: BC | str, count: int, n_max: int = 9, m_max: int = 9) -> list:
    """The ``count`` smallest disk eigenvalues with multiplicity (two modes per ``n >= 1``)."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    bc = BC(bc)
    modes = []
    if bc == BC.NEUMANN:
        modes.append(_disk_mode(radius, bc, 0, 0))
    for n in range(n_max + 1):
        for m in range(1, m_max + 1):
            mode = _disk_mode(radius, bc, n, m)
            modes.extend([mode] * (1 if n == 0 else 2))
    modes.sort(key=lambda d: (d.eigenvalue, d.n, d.m))
    if count > len(modes):
        raise ValueError(f"at most {len(modes)} modes tabulated")
    return modes[:count]


def max_principle_holds(k: float, radius: float) -> bool:
    """Whether ``Lap + k^2`` satisfies the maximum principle on ``B_R``.

    Equivalent to positivity of the first eigenvalue of ``-Lap - k^2``,
    i.e. ``|k| < j_{0,1} / R``.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    return abs(k) < bessel_root(0, 1) / radius


def lambda_disk(radius: float) -> float:
    """Constant boundary flux magnitude of the normalized first Dirichlet mode on ``B_R``."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    return bessel_root(0, 1) / (math.sqrt(math.pi) * radius**2)
