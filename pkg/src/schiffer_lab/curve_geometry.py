"""Closed planar curves in truncated Fourier form and their geometry.

A curve is ``c(theta) = sum_m a_m cos(m theta) + b_m sin(m theta)`` with
2-vector coefficients ``a_m``, ``b_m`` for ``m = 0..M``.  All boundary
quantities live on the uniform grid ``theta_i = 2 pi i / N_q``; integrals
over the curve use the trapezoid rule with the speed factor ``|c_theta|``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import shapely
from scipy.optimize import least_squares
from scipy.spatial.distance import directed_hausdorff

from .errors import (
    DegenerateDirection,
    ImmersionViolation,
    NonPositiveTarget,
    SelfIntersection,
)

DEFAULT_NQ = 256


def theta_grid(n_q: int) -> np.ndarray:
    return 2.0 * np.pi * np.arange(n_q) / n_q


@dataclass(frozen=True)
class FourierCurve:
    """Truncated Fourier parametrization of a closed curve.

    Parameters
    ----------
    cos : ndarray of shape (M + 1, 2)
        Cosine coefficients ``a_0 .. a_M``.
    sin : ndarray of shape (M + 1, 2)
        Sine coefficients ``b_0 .. b_M``; ``b_0`` must be zero.
    """

    cos: np.ndarray
    sin: np.ndarray

    def __post_init__(self):
        c = np.array(self.cos, dtype=float).reshape(-1, 2)
        s = np.array(self.sin, dtype=float).reshape(-1, 2)
        if c.shape != s.shape:
            raise ValueError("cos and sin coefficient arrays must have equal shape")
        if np.any(s[0] != 0.0):
            raise ValueError("sin coefficient 0 must be [0, 0]")
        c.setflags(write=False)
        s.setflags(write=False)
        object.__setattr__(self, "cos", c)
        object.__setattr__(self, "sin", s)

    @property
    def harmonics_max(self) -> int:
        return self.cos.shape[0] - 1

    # ------------------------------------------------------------------
    # constructors
    @classmethod
    def circle(cls, radius: float = 1.0, center: Sequence[float] = (0.0, 0.0)) -> "FourierCurve":
        return cls.ellipse(radius, radius, center)

    @classmethod
    def ellipse(cls, a: float, b: float, center: Sequence[float] = (0.0, 0.0)) -> "FourierCurve":
        cos = np.array([center, [a, 0.0]], dtype=float)
        sin = np.array([[0.0, 0.0], [0.0, b]])
        return cls(cos, sin)

    @classmethod
    def kidney(cls) -> "FourierCurve":
        """Non-convex test curve ``((1 + .65 cos 2t) cos t + .8 cos^2 t, (1 + .65 cos 2t) sin t)``."""
        def f(t):
            r = 1.0 + 0.65 * np.cos(2 * t)
            return np.column_stack([r * np.cos(t) + 0.8 * np.cos(t) ** 2, r * np.sin(t)])

        return cls.from_function(f, 5)

    @classmethod
    def from_samples(cls, points: np.ndarray, harmonics: int) -> "FourierCurve":
        """Least-squares projection of uniformly sampled points onto ``harmonics`` modes."""
        points = np.asarray(points, dtype=float)
        n = points.shape[0]
        if harmonics >= n // 2:
            raise ValueError("need more samples than 2 * harmonics")
        spec = np.fft.rfft(points, axis=0) / n
        cos = np.zeros((harmonics + 1, 2))
        sin = np.zeros((harmonics + 1, 2))
        cos[0] = spec[0].real
        cos[1:] = 2.0 * spec[1:harmonics + 1].real
        sin[1:] = -2.0 * spec[1:harmonics + 1].imag
        return cls(cos, sin)

    @classmethod
    def from_function(cls, func, harmonics: int, n_samples: int = 4096) -> "FourierCurve":
        """Project ``func(theta) -> (N, 2)`` onto ``harmonics`` Fourier modes."""
        th = theta_grid(n_samples)
        return cls.from_samples(np.asarray(func(th)), harmonics)

    @classmethod
    def from_dict(cls, data: dict) -> "FourierCurve":
        m = int(data["harmonics_max"])
        cos = np.asarray(data["cos"], dtype=float)
        sin = np.asarray(data["sin"], dtype=float)
        if cos.shape != (m + 1, 2) or sin.shape != (m + 1, 2):
            raise ValueError("coefficient arrays must have shape (harmonics_max + 1, 2)")
        return cls(cos, sin)

    def to_dict(self) -> dict:
        return {
            "harmonics_max": self.harmonics_max,
            "cos": self.cos.tolist(),
            "sin": self.sin.tolist(),
        }

    # ------------------------------------------------------------------
    def evaluate(self, theta, derivative: int = 0) -> np.ndarray:
        """Points (or ``derivative``-th theta derivatives) at ``theta``, shape (N, 2)."""
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        m = np.arange(self.harmonics_max + 1)
        arg = np.outer(theta, m)
        cm, sm = np.cos(arg), np.sin(arg)
        fac = m.astype(float) ** derivative
        # d^k/dtheta^k cycles cos -> -sin -> -cos -> sin
        k = derivative % 4
        if k == 0:
            basis_c, basis_s = cm, sm
        elif k == 1:
            basis_c, basis_s = -sm, cm
        elif k == 2:
            basis_c, basis_s = -cm, -sm
        else:
            basis_c, basis_s = sm, -cm
        return (basis_c * fac) @ self.cos + (basis_s * fac) @ self.sin

    def samples(self, n_q: int = DEFAULT_NQ) -> np.ndarray:
        return self.evaluate(theta_grid(n_q))

    def with_harmonics(self, harmonics: int) -> "FourierCurve":
        """Zero-pad or truncate to ``harmonics`` modes."""
        cos = np.zeros((harmonics + 1, 2))
        sin = np.zeros((harmonics + 1, 2))
        k = min(harmonics, self.harmonics_max) + 1
        cos[:k] = self.cos[:k]
        sin[:k] = self.sin[:k]
        return FourierCurve(cos, sin)

    def translated(self, shift: Sequence[float]) -> "FourierCurve":
        cos = self.cos.copy()
        cos[0] += np.asarray(shift, dtype=float)
        return FourierCurve(cos, self.sin.copy())

    def rotated(self, angle: float) -> "FourierCurve":
        """Rotate about the origin."""
        r = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])
        return FourierCurve(self.cos @ r.T, self.sin @ r.T)

    def scaled(self, factor: float, about: Optional[Sequence[float]] = None) -> "FourierCurve":
        about = np.zeros(2) if about is None else np.asarray(about, dtype=float)
        cos = self.cos * factor
        cos[0] = about + factor * (self.cos[0] - about)
        return FourierCurve(cos, self.sin * factor)

    def mapped(self, field: "AmbientField", t: float, harmonics: Optional[int] = None,
               n_q: int = DEFAULT_NQ) -> "FourierCurve":
        """Curve moved by ``x -> x + t W(x)``, projected back onto Fourier modes."""
        harmonics = _default_projection_harmonics(self, n_q) if harmonics is None else harmonics
        p = self.samples(n_q)
        return FourierCurve.from_samples(p + t * field(p), harmonics)


def _default_projection_harmonics(curve: FourierCurve, n_q: int) -> int:
    return max(curve.harmonics_max, n_q // 4 - 1)


# ----------------------------------------------------------------------
# frame and quadrature

@dataclass(frozen=True)
class Frame:
    """Per-node differential geometry of a curve on the uniform theta grid."""

    theta: np.ndarray
    position: np.ndarray
    tangent: np.ndarray
    speed: np.ndarray
    normal: np.ndarray
    curvature: np.ndarray

    @property
    def n_q(self) -> int:
        return self.theta.size

    @property
    def weights(self) -> np.ndarray:
        """Arc-length quadrature weights ``|c_theta| dtheta``."""
        return self.speed * (2.0 * np.pi / self.n_q)

    def integrate(self, f) -> float:
        """Trapezoid rule for the line integral of ``f`` over the curve."""
        return float(np.dot(np.broadcast_to(f, self.speed.shape), self.weights))

    @property
    def length(self) -> float:
        return float(self.weights.sum())


def check_embedded(points: np.ndarray) -> bool:
    return bool(shapely.LinearRing(points).is_simple)


def frame(curve: FourierCurve, n_q: int = DEFAULT_NQ, check: bool = True) -> Frame:
    """Position, tangent, speed, outward normal and curvature at the grid nodes.

    Raises
    ------
    ImmersionViolation
        If the speed drops below 1e-10 at any node.
    SelfIntersection
        If the sampled polyline is not simple (only when ``check``).
    """
    if n_q < 4 * (curve.harmonics_max + 1):
        raise ValueError(f"n_q={n_q} too small for {curve.harmonics_max} harmonics")
    th = theta_grid(n_q)
    p = curve.evaluate(th)
    d1 = curve.evaluate(th, 1)
    d2 = curve.evaluate(th, 2)
    speed = np.hypot(d1[:, 0], d1[:, 1])
    if np.min(speed) < 1e-10:
        raise ImmersionViolation(f"min |c_theta| = {np.min(speed):.3e}")
    if check and not check_embedded(p):
        raise SelfIntersection("sampled polyline self-intersects")
    normal = np.column_stack([d1[:, 1], -d1[:, 0]]) / speed[:, None]
    curvature = (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]) / speed**3
    return Frame(th, p, d1, speed, normal, curvature)


def _exact_grid(curve: FourierCurve, degree: int = 2) -> int:
    # trapezoid is exact for trig polynomials of degree < n
    n = 64
    while n <= degree * curve.harmonics_max + 1:
        n *= 2
    return n


def enclosed_area(curve: FourierCurve) -> float:
    """Signed area ``1/2 \\oint (x dy - y dx)``; positive for counterclockwise curves."""
    th = theta_grid(_exact_grid(curve))
    p = curve.evaluate(th)
    d = curve.evaluate(th, 1)
    return float(0.5 * np.mean(p[:, 0] * d[:, 1] - p[:, 1] * d[:, 0]) * 2.0 * np.pi)


def area_centroid(curve: FourierCurve) -> np.ndarray:
    th = theta_grid(_exact_grid(curve, 3))
    p = curve.evaluate(th)
    d = curve.evaluate(th, 1)
    area = enclosed_area(curve)
    cx = np.mean(0.5 * p[:, 0] ** 2 * d[:, 1]) * 2.0 * np.pi / area
    cy = -np.mean(0.5 * p[:, 1] ** 2 * d[:, 0]) * 2.0 * np.pi / area
    return np.array([cx, cy])


def rescale_to_area(curve: FourierCurve, target: float) -> FourierCurve:
    """Scale ``curve`` about its area centroid so that it encloses ``target``."""
    if not target > 0:
        raise NonPositiveTarget(f"target area must be positive, got {target}")
    area = enclosed_area(curve)
    factor = np.sqrt(target / area)
    if factor == 1.0:
        return curve
    return curve.scaled(factor, about=area_centroid(curve))


def diameter(points: np.ndarray) -> float:
    from scipy.spatial import ConvexHull
    from scipy.spatial.distance import pdist

    return float(pdist(points[ConvexHull(points).vertices]).max())


def is_convex(curve: FourierCurve, n_q: int = DEFAULT_NQ, tol: float = 1e-12) -> bool:
    """True when the curvature never changes sign (monitoring only)."""
    return bool(np.all(frame(curve, n_q, check=False).curvature >= -tol))


def displaced(curve: FourierCurve, displacement: np.ndarray, harmonics: Optional[int] = None) -> FourierCurve:
    """Move the grid samples by ``displacement`` (N_q, 2) and re-project to Fourier modes."""
    n_q = displacement.shape[0]
    harmonics = _default_projection_harmonics(curve, n_q) if harmonics is None else harmonics
    return FourierCurve.from_samples(curve.samples(n_q) + displacement, harmonics)


def normal_perturbation(curve: FourierCurve, alpha: np.ndarray, t: float,
                        harmonics: Optional[int] = None) -> FourierCurve:
    """The curve ``c + t alpha nu`` with ``alpha`` sampled on the theta grid."""
    alpha = np.asarray(alpha, dtype=float)
    fr = frame(curve, alpha.size, check=False)
    return displaced(curve, t * alpha[:, None] * fr.normal, harmonics)


# ----------------------------------------------------------------------
# reflection predicates

@dataclass(frozen=True)
class HalfspaceCap:
    """Hyperplane ``x . e = level`` with its reflection map."""

    direction: np.ndarray
    level: float

    def __post_init__(self):
        e = np.asarray(self.direction, dtype=float)
        if e.shape != (2,) or abs(np.linalg.norm(e) - 1.0) > 1e-12:
            raise DegenerateDirection(f"direction must be a unit 2-vector, got {e}")
        object.__setattr__(self, "direction", e)

    def reflect(self, points: np.ndarray) -> np.ndarray:
        s = points @ self.direction
        return points + 2.0 * (self.level - s)[:, None] * self.direction


def _unit(direction) -> np.ndarray:
    e = np.asarray(direction, dtype=float)
    if e.shape != (2,) or abs(np.linalg.norm(e) - 1.0) > 1e-12:
        raise DegenerateDirection(f"direction must be a unit 2-vector, got {e}")
    return e


def p0_predicate(curve: FourierCurve, direction, n_levels: int = 64,
                 n_dense: int = 4096, rtol: float = 1e-9):
    """Moving-plane reflection test in direction ``direction``.

    The plane ``x . e = lambda`` sweeps from the extremal level ``a = min x . e``
    (measured from the area centroid) up to 0.  At each level the cap between
    the extremal point and the plane is reflected across it; the predicate
    holds when every reflected cap lies in the domain.

    Returns
    -------
    ok : bool
    first_violation : float or None
        The first level (from ``a`` upward) where containment fails.
    """
    e = _unit(direction)
    pts = curve.samples(n_dense)
    centre = area_centroid(curve)
    s = (pts - centre) @ e
    a = s.min()
    tol = rtol * diameter(pts)
    region = shapely.Polygon(pts).buffer(tol)
    shapely.prepare(region)
    for lam in np.linspace(a, 0.0, n_levels):
        cap = pts[s <= lam]
        if cap.size == 0:
            continue
        mirrored = cap + 2.0 * (lam - s[s <= lam])[:, None] * e
        if not np.all(shapely.intersects_xy(region, mirrored[:, 0], mirrored[:, 1])):
            return False, float(lam)
    return True, None


def symmetry_defect(curve: FourierCurve, direction, n_dense: int = 4096) -> float:
    """Hausdorff distance between the curve and its mirror image, over the diameter.

    The mirror is the hyperplane normal to ``direction`` through the area centroid.
    """
    e = _unit(direction)
    pts = curve.samples(n_dense)
    cap = HalfspaceCap(e, float(area_centroid(curve) @ e))
    mirrored = cap.reflect(pts)
    d = max(directed_hausdorff(pts, mirrored)[0], directed_hausdorff(mirrored, pts)[0])
    return d / diameter(pts)


def disk_defect(curve: FourierCurve, n_dense: int = 1024):
    """Best-fit circle and its normalized max radial residual.

    Returns
    -------
    center : ndarray (2,)
    radius : float
    defect : float
        ``max | |c - x0| - R | / R`` over the dense samples.
    """
    pts = curve.samples(n_dense)
    # algebraic (Kasa) fit as the starting point for the geometric fit
    A = np.column_stack([2 * pts, np.ones(len(pts))])
    rhs = (pts**2).sum(1)
    sol = np.linalg.lstsq(A, rhs, rcond=None)[0]
    x0 = sol[:2]
    r0 = np.sqrt(sol[2] + x0 @ x0)

    def resid(p):
        return np.hypot(pts[:, 0] - p[0], pts[:, 1] - p[1]) - p[2]

    fit = least_squares(resid, np.r_[x0, r0], xtol=1e-15, ftol=1e-15, gtol=1e-15)
    center, radius = fit.x[:2], float(fit.x[2])
    return center, radius, float(np.max(np.abs(resid(fit.x))) / radius)


# ----------------------------------------------------------------------
# ambient polynomial vector fields

@dataclass(frozen=True)
class AmbientField:
    """Polynomial vector field ``W(x, y) = sum c[i, j] x^i y^j`` per component.

    ``coeffs`` has shape (2, d + 1, d + 1); entry ``[k, i, j]`` multiplies
    ``x^i y^j`` in component ``k``.
    """

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        if c.ndim != 3 or c.shape[0] != 2 or c.shape[1] != c.shape[2]:
            raise ValueError("coeffs must have shape (2, d + 1, d + 1)")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def degree(self) -> int:
        return self.coeffs.shape[1] - 1

    @classmethod
    def constant(cls, v) -> "AmbientField":
        c = np.zeros((2, 1, 1))
        c[:, 0, 0] = v
        return cls(c)

    @classmethod
    def linear(cls, matrix, offset=(0.0, 0.0)) -> "AmbientField":
        """``W(x) = matrix @ x + offset``."""
        m = np.asarray(matrix, dtype=float)
        c = np.zeros((2, 2, 2))
        c[:, 0, 0] = offset
        c[:, 1, 0] = m[:, 0]
        c[:, 0, 1] = m[:, 1]
        return cls(c)

    @classmethod
    def random(cls, rng: np.random.Generator, degree: int = 2, scale: float = 1.0) -> "AmbientField":
        c = rng.standard_normal((2, degree + 1, degree + 1)) * scale
        i, j = np.indices((degree + 1, degree + 1))
        c[:, i + j > degree] = 0.0
        return cls(c)

    def __call__(self, points: np.ndarray) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        x, y = p[:, 0], p[:, 1]
        return np.column_stack([
            np.polynomial.polynomial.polyval2d(x, y, self.coeffs[0]),
            np.polynomial.polynomial.polyval2d(x, y, self.coeffs[1]),
        ])

    def jacobian(self, points: np.ndarray) -> np.ndarray:
        """``DW`` at each point, shape (N, 2, 2) with ``[n, k, l] = dW_k / dx_l``."""
        p = np.asarray(points, dtype=float)
        x, y = p[:, 0], p[:, 1]
        P = np.polynomial.polynomial
        jac = np.empty((p.shape[0], 2, 2))
        for k in range(2):
            jac[:, k, 0] = P.polyval2d(x, y, P.polyder(self.coeffs[k], axis=0))
            jac[:, k, 1] = P.polyval2d(x, y, P.polyder(self.coeffs[k], axis=1))
        return jac

    def directional_derivative(self, direction: "AmbientField", points: np.ndarray) -> np.ndarray:
        """``D_V W = (DW) V`` with ``V = direction``."""
        return np.einsum("nkl,nl->nk", self.jacobian(points), direction(points))
