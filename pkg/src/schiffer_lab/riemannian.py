"""Riemannian structure on the space of embedded curves.

Tangent vectors at a curve are normal fields ``alpha nu`` sampled on the
uniform theta grid.  Three metrics are provided: plain L2 (``G0``), the
curvature-weighted ``GA`` and the first Sobolev metric with
``L1 = I - A D_s^2``.  Ambient vector fields enter through
``AmbientField`` so that directional derivatives are exact.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .bessel import BC
from .curve_geometry import AmbientField, Frame, FourierCurve, frame, theta_grid
from .errors import GridMismatch, SingularOperator, WrongBC
from .fem import EigenPair, Mesh, solve_eigs
from .periodic import solve_cyclic_tridiagonal, spectral_derivative
from .shape_calculus import (
    boundary_frame,
    functional_J2,
    functional_J3,
    j2_density,
    j3_density,
    relative_gap,
    track_mode,
)


class MetricKind(str, Enum):
    G0 = "G0"
    GA = "GA"
    SOBOLEV = "SobolevH1"


@dataclass(frozen=True)
class MetricSpec:
    kind: MetricKind = MetricKind.GA
    A: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", MetricKind(self.kind))
        if self.A < 0:
            raise ValueError("A must be non-negative")


def _field(values, n_q: int, name: str) -> np.ndarray:
    a = np.asarray(values, dtype=float)
    if a.ndim == 0:
        return np.full(n_q, float(a))
    if a.shape != (n_q,):
        raise GridMismatch(f"{name} has shape {a.shape}, expected ({n_q},)")
    return a


def _frame(curve: FourierCurve, n_q: int) -> Frame:
    return frame(curve, n_q, check=False)


def arclength_derivative(fr: Frame, f: np.ndarray) -> np.ndarray:
    """``D_s f = f_theta / |c_theta|`` with a spectral theta derivative."""
    return spectral_derivative(f) / fr.speed


def metric(spec: MetricSpec, curve: FourierCurve, alpha, beta, n_q: Optional[int] = None) -> float:
    """Inner product of the normal fields ``alpha nu`` and ``beta nu``.

    The grid size is taken from the first array argument (default 256).
    """
    if n_q is None:
        n_q = next((np.size(x) for x in (alpha, beta) if np.ndim(x) == 1), 256)
    a, b = _field(alpha, n_q, "alpha"), _field(beta, n_q, "beta")
    fr = _frame(curve, n_q)
    if spec.kind == MetricKind.G0:
        return fr.integrate(a * b)
    if spec.kind == MetricKind.GA:
        return fr.integrate((1.0 + spec.A * fr.curvature**2) * a * b)
    dds = arclength_derivative(fr, arclength_derivative(fr, a))
    return fr.integrate((a - spec.A * dds) * b)


# ----------------------------------------------------------------------
# L1 = I - A D_s^2 on a conservative periodic stencil

def _l1_stencil(curve: FourierCurve, A: float, n_q: int):
    th = theta_grid(n_q)
    dth = 2.0 * np.pi / n_q
    d = curve.evaluate(th, 1)
    g = np.hypot(d[:, 0], d[:, 1])
    dh = curve.evaluate(th + 0.5 * dth, 1)
    g_half = np.hypot(dh[:, 0], dh[:, 1])  # speed at theta_{i+1/2}
    c_plus = 1.0 / (g * g_half * dth**2)
    c_minus = 1.0 / (g * np.roll(g_half, 1) * dth**2)
    lower = -A * c_minus
    upper = -A * c_plus
    diag = 1.0 + A * (c_plus + c_minus)
    return lower, diag, upper


def apply_L1(curve: FourierCurve, A: float, f) -> np.ndarray:
    """``(I - A D_s^2) f`` with the same second difference that ``invert_L1`` inverts."""
    f = np.asarray(f, dtype=float)
    lower, diag, upper = _l1_stencil(curve, A, f.size)
    return lower * np.roll(f, 1) + diag * f + upper * np.roll(f, -1)


def invert_L1(curve: FourierCurve, A: float, f) -> np.ndarray:
    """Solve ``(I - A D_s^2) phi = f`` on the theta grid.

    ``D_s^2`` is the flux-form periodic second difference in arc length,
    so constants are reproduced exactly and arc-length means are preserved.
    """
    f = np.asarray(f, dtype=float)
    if A <= 0:
        raise SingularOperator("L1 needs A > 0")
    lower, diag, upper = _l1_stencil(curve, A, f.size)
    phi = solve_cyclic_tridiagonal(lower, diag, upper, f)
    scale = max(np.max(np.abs(f)), 1e-300)
    resid = np.max(np.abs(lower * np.roll(phi, 1) + diag * phi + upper * np.roll(phi, -1) - f))
    if not np.isfinite(resid) or resid > 1e-8 * scale:
        raise SingularOperator(f"L1 solve residual {resid:.2e}")
    return phi


# ----------------------------------------------------------------------
# gradients

def riemannian_gradient(spec: MetricSpec, curve: FourierCurve, density,
                        area_constrained: bool = False) -> np.ndarray:
    """Normal component of the gradient of ``dJ = \\oint G alpha ds``.

    ``GA``: ``G / (1 + A K^2)``.  ``SobolevH1``: ``L1^{-1} G``.  ``G0``: ``G``.
    With ``area_constrained`` the multiple of the area gradient that makes
    ``\\oint grad ds = 0`` is removed first, which gives the gradient on the
    fixed-area submanifold.
    """
    g = np.asarray(density, dtype=float)
    fr = _frame(curve, g.size)
    if spec.kind == MetricKind.GA:
        w = 1.0 / (1.0 + spec.A * fr.curvature**2)
    else:
        w = np.ones_like(g)
    if area_constrained:
        g = g - fr.integrate(g * w) / fr.integrate(w)
    if spec.kind == MetricKind.SOBOLEV:
        return invert_L1(curve, spec.A, g) if spec.A > 0 else g
    return g * w


# ----------------------------------------------------------------------
# connection

def _normal_components(curve: FourierCurve, n_q: int, V: AmbientField, W: AmbientField):
    fr = _frame(curve, n_q)
    p = fr.position
    v_n = np.einsum("nk,nk->n", V(p), fr.normal)
    w_n = np.einsum("nk,nk->n", W(p), fr.normal)
    dvw_n = np.einsum("nk,nk->n", W.directional_derivative(V, p), fr.normal)
    return fr, v_n, w_n, dvw_n


def connection_coefficient(fr: Frame, A: float) -> np.ndarray:
    K = fr.curvature
    return (3.0 * A * K**3 + K) / (1.0 + A * K**2)


def covariant_derivative(curve: FourierCurve, A: float, V: AmbientField, W: AmbientField,
                         n_q: int = 256) -> np.ndarray:
    """``<D_V W, nu> + (3 A K^3 + K) / (1 + A K^2) <V, nu> <W, nu>`` at each node."""
    fr, v_n, w_n, dvw_n = _normal_components(curve, n_q, V, W)
    return dvw_n + connection_coefficient(fr, A) * v_n * w_n


def torsion(curve: FourierCurve, A: float, V: AmbientField, W: AmbientField,
            n_q: int = 256) -> np.ndarray:
    """``<nabla_V W - nabla_W V - [V, W], nu>`` with the exact polynomial bracket."""
    fr = _frame(curve, n_q)
    p = fr.position
    bracket = W.directional_derivative(V, p) - V.directional_derivative(W, p)
    bracket_n = np.einsum("nk,nk->n", bracket, fr.normal)
    return (covariant_derivative(curve, A, V, W, n_q)
            - covariant_derivative(curve, A, W, V, n_q) - bracket_n)


# ----------------------------------------------------------------------
# Hessian

class Functional(str, Enum):
    J2 = "J2"
    J3 = "J3"


@dataclass(frozen=True)
class HessianForm:
    """Boundary density ``d psi / d nu + K psi`` of the Hessian quadratic form."""

    density: np.ndarray
    functional: Functional
    s: int
    curve: FourierCurve

    def evaluate(self, alpha, beta) -> float:
        n_q = self.density.size
        fr = _frame(self.curve, n_q)
        return fr.integrate(self.density * _field(alpha, n_q, "alpha") * _field(beta, n_q, "beta"))


def evaluate(form: HessianForm, alpha, beta) -> float:
    return form.evaluate(alpha, beta)


def _check_s(s: int) -> int:
    if s not in (1, -1):
        raise ValueError("curvature convention s must be +1 or -1")
    return int(s)


def hessian_form(eig: EigenPair, functional: Functional | str, gamma: float, s: int = 1) -> HessianForm:
    """Hessian density for ``J2`` (Neumann) or ``J3`` (Dirichlet).

    ``J2``: ``psi = K u^2 + gamma`` and ``d psi / d nu = s K^2 u^2 + 2 K u du/dnu``,
    the last term vanishing for Neumann data.
    ``J3``: ``psi = -1/2 (du/dnu)^2 + gamma`` and ``d psi / d nu = K (du/dnu)^2``,
    using ``u_nu_nu = -K u_nu`` on a Dirichlet boundary of an eigenfunction.
    """
    functional = Functional(functional)
    s = _check_s(s)
    fr = boundary_frame(eig)
    K = fr.curvature
    if functional == Functional.J2:
        if eig.bc != BC.NEUMANN:
            raise WrongBC("J2 needs a Neumann eigenpair")
        psi = j2_density(eig, gamma, fr)
        dpsi = s * K**2 * eig.trace**2
    else:
        if eig.bc != BC.DIRICHLET:
            raise WrongBC("J3 needs a Dirichlet eigenpair")
        psi = j3_density(eig, gamma, "half")
        dpsi = K * eig.flux**2
    return HessianForm(dpsi + K * psi, functional, s, eig.mesh.curve)


# ----------------------------------------------------------------------
# connection identity

@dataclass(frozen=True)
class ConnectionCheck:
    lhs: float
    rhs: float
    gap: float
    s: int
    hessian_term: float
    first_order_term: float


def _functional_value(functional: Functional, eig: EigenPair, gamma: float) -> float:
    return functional_J2(eig, gamma) if functional == Functional.J2 else functional_J3(eig, gamma)


def _functional_density(functional: Functional, eig: EigenPair, gamma: float) -> np.ndarray:
    if functional == Functional.J2:
        return j2_density(eig, gamma)
    return j3_density(eig, gamma, "half")


def connection_identity_check(mesh: Mesh, functional: Functional | str, gamma: float, V: AmbientField,
                              s: int = 1, A: float = 1.0, index: Optional[int] = None,
                              t: float = 1e-2, n_q: int = 256) -> ConnectionCheck:
    """Compare ``d^2/dt^2 J(c + t V)`` with ``Hess J(V, V) + dJ(nabla_V V)``.

    The left side is a second central difference on the mesh deformed onto
    ``c +/- t V``; the mode is followed by boundary-trace correlation.
    ``index`` defaults to the radial Neumann mode for ``J2`` (the first
    mode whose trace has constant sign and nonzero eigenvalue) and to the
    ground state for ``J3``.
    """
    functional = Functional(functional)
    s = _check_s(s)
    bc = BC.NEUMANN if functional == Functional.J2 else BC.DIRICHLET
    pairs = solve_eigs(mesh, bc, 12, n_q)
    if index is None:
        index = _default_index(pairs, bc)
    ref = pairs[index]
    values = []
    for step in (-t, t):
        moved = mesh.deform(mesh.curve.mapped(V, step, n_q=n_q))
        cand = solve_eigs(moved, bc, index + 3, n_q)
        values.append(_functional_value(functional, track_mode(ref, cand[max(0, index - 2):]), gamma))
    j0 = _functional_value(functional, ref, gamma)
    lhs = (values[0] - 2.0 * j0 + values[1]) / t**2

    fr = boundary_frame(ref)
    v_n = np.einsum("nk,nk->n", V(fr.position), fr.normal)
    hess = hessian_form(ref, functional, gamma, s).evaluate(v_n, v_n)
    nabla = covariant_derivative(mesh.curve, A, V, V, n_q)
    first = fr.integrate(_functional_density(functional, ref, gamma) * nabla)
    rhs = hess + first
    return ConnectionCheck(lhs, rhs, relative_gap(rhs, lhs), s, hess, first)


def _default_index(pairs, bc: BC) -> int:
    if bc == BC.DIRICHLET:
        return 0
    for i, p in enumerate(pairs):
        if p.eigenvalue > 1e-6 and (np.all(p.trace > 0) or np.all(p.trace < 0)):
            return i
    raise WrongBC("no Neumann mode with a sign-definite boundary trace")
