"""Hadamard shape derivatives of Laplace eigenvalue functionals.

Every derivative is a boundary integral ``\\oint G alpha ds`` of a density
``G`` against the normal speed ``alpha`` of the perturbation ``V = alpha nu``;
densities and quadratures live on the uniform theta grid of the curve.
``fd_shape_derivative`` is the independent check: it re-solves the
eigenproblem on meshes deformed to ``c +/- t alpha nu``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence, Union

import numpy as np

from .bessel import BC
from .curve_geometry import Frame, FourierCurve, enclosed_area, frame, normal_perturbation
from .errors import (
    MissingFlux,
    ModeTrackingFailure,
    MultipleEigenvalue,
    NonOrthonormalCluster,
    WrongBC,
    ZeroFlux,
)
from .fem import EigenPair, Mesh, solve_eigs
from .periodic import spectral_derivative

EPS = 1e-12


@dataclass(frozen=True)
class DerivativeReport:
    """A shape-derivative value with its provenance.

    ``value`` is the primary formula value (scalar or symmetric matrix);
    ``half_value`` holds the factor-1/2 variant where one exists.  The
    finite-difference fields stay ``None`` until ``with_fd`` is applied.
    """

    value: Union[float, np.ndarray]
    formula: str
    n_q: int
    half_value: Optional[float] = None
    eigenvalues: Optional[np.ndarray] = None
    fd_value: Optional[float] = None
    fd_step: Optional[float] = None
    rel_gap: Optional[float] = None

    def with_fd(self, fd_value: float, step: float) -> "DerivativeReport":
        gap = abs(float(self.value) - fd_value) / max(abs(fd_value), EPS)
        return replace(self, fd_value=float(fd_value), fd_step=float(step), rel_gap=gap)


def relative_gap(value: float, reference: float) -> float:
    return abs(value - reference) / max(abs(reference), EPS)


def boundary_frame(eig: EigenPair) -> Frame:
    return frame(eig.mesh.curve, eig.n_q, check=False)


def _alpha(alpha, fr: Frame) -> np.ndarray:
    a = np.broadcast_to(np.asarray(alpha, dtype=float), (fr.n_q,))
    if not np.all(np.isfinite(a)):
        raise ValueError("perturbation field must be finite")
    return a


def _require(eig: EigenPair, bc: BC):
    if eig.bc != bc:
        raise WrongBC(f"expected a {bc.value} eigenpair, got {eig.bc.value}")


def _require_flux(eig: EigenPair):
    _require(eig, BC.DIRICHLET)
    if eig.flux is None or not np.all(np.isfinite(eig.flux)):
        raise MissingFlux("eigenpair has no boundary flux trace")


def tangential_derivative(eig: EigenPair, fr: Optional[Frame] = None) -> np.ndarray:
    """Arc-length derivative ``D_s u`` of the boundary trace."""
    fr = boundary_frame(eig) if fr is None else fr
    return spectral_derivative(eig.trace) / fr.speed


# ----------------------------------------------------------------------
# functionals

def functional_J(eig: EigenPair) -> float:
    """Dirichlet energy ``\\int |grad u|^2`` of a normalized Dirichlet eigenfunction."""
    _require(eig, BC.DIRICHLET)
    return eig.dirichlet_energy()


def functional_J2(eig: EigenPair, gamma: float) -> float:
    """``\\oint u^2 ds + gamma |Omega|`` for a Neumann eigenpair."""
    _require(eig, BC.NEUMANN)
    fr = boundary_frame(eig)
    return fr.integrate(eig.trace**2) + gamma * enclosed_area(eig.mesh.curve)


def functional_J3(eig: EigenPair, gamma: float) -> float:
    """``\\int |grad u|^2 + gamma |Omega|`` for a Dirichlet eigenpair."""
    return functional_J(eig) + gamma * enclosed_area(eig.mesh.curve)


# ----------------------------------------------------------------------
# boundary densities

def dirichlet_density(eig: EigenPair, variant: str = "classical") -> np.ndarray:
    """Density of ``dJ`` for the Dirichlet energy: ``-(du/dnu)^2`` (classical) or half of it."""
    _require_flux(eig)
    factor = {"classical": 1.0, "half": 0.5}[variant]
    return -factor * eig.flux**2


def neumann_density(eig: EigenPair, fr: Optional[Frame] = None) -> np.ndarray:
    """``|grad u|^2 - lam u^2`` on the boundary, with ``|grad u| = |D_s u|``."""
    _require(eig, BC.NEUMANN)
    fr = boundary_frame(eig) if fr is None else fr
    return tangential_derivative(eig, fr) ** 2 - eig.eigenvalue * eig.trace**2


def j2_density(eig: EigenPair, gamma: float, fr: Optional[Frame] = None) -> np.ndarray:
    """``H u^2 + gamma`` with ``H`` the curvature."""
    _require(eig, BC.NEUMANN)
    fr = boundary_frame(eig) if fr is None else fr
    return fr.curvature * eig.trace**2 + gamma


def j3_density(eig: EigenPair, gamma: float, variant: str = "half") -> np.ndarray:
    return dirichlet_density(eig, variant) + gamma


# ----------------------------------------------------------------------
# derivatives

def dJ_dirichlet(eig: EigenPair, alpha) -> DerivativeReport:
    """Shape derivative of the Dirichlet energy in direction ``alpha nu``.

    The primary value is the classical Hadamard formula
    ``-\\oint (du/dnu)^2 alpha ds``; ``half_value`` carries the variant
    with factor 1/2.
    """
    _require_flux(eig)
    fr = boundary_frame(eig)
    a = _alpha(alpha, fr)
    classical = fr.integrate(dirichlet_density(eig, "classical") * a)
    return DerivativeReport(classical, "dirichlet_energy", fr.n_q, half_value=0.5 * classical)


def _gram(cluster: Sequence[EigenPair]) -> np.ndarray:
    _, M = cluster[0].mesh.matrices
    U = np.column_stack([p.u for p in cluster])
    return U.T @ (M @ U)


def _check_orthonormal(cluster: Sequence[EigenPair], tol: float = 1e-8):
    if len({id(p.mesh) for p in cluster}) != 1:
        raise NonOrthonormalCluster("cluster members live on different meshes")
    g = _gram(cluster)
    if np.max(np.abs(g - np.eye(len(cluster)))) > tol:
        raise NonOrthonormalCluster("cluster is not mass-orthonormal")


def _neumann_matrix(cluster: Sequence[EigenPair], alpha) -> np.ndarray:
    fr = boundary_frame(cluster[0])
    a = _alpha(alpha, fr)
    lam = np.mean([p.eigenvalue for p in cluster])
    grads = np.column_stack([tangential_derivative(p, fr) for p in cluster])
    vals = np.column_stack([p.trace for p in cluster])
    w = fr.weights * a
    m = grads.T @ (grads * w[:, None]) - lam * vals.T @ (vals * w[:, None])
    return 0.5 * (m + m.T)


def _dirichlet_matrix(cluster: Sequence[EigenPair], alpha) -> np.ndarray:
    fr = boundary_frame(cluster[0])
    a = _alpha(alpha, fr)
    q = np.column_stack([p.flux for p in cluster])
    m = -(q.T @ (q * (fr.weights * a)[:, None]))
    return 0.5 * (m + m.T)


def dlambda_neumann(eig: Union[EigenPair, Sequence[EigenPair]], alpha) -> DerivativeReport:
    """Derivative of a simple Neumann eigenvalue, ``\\oint (|grad u|^2 - lam u^2) alpha ds``.

    Raises
    ------
    MultipleEigenvalue
        When given a cluster with more than one member.
    """
    cluster = [eig] if isinstance(eig, EigenPair) else list(eig)
    if len(cluster) > 1:
        raise MultipleEigenvalue("use multi_matrix_neumann for multiple eigenvalues")
    _require(cluster[0], BC.NEUMANN)
    value = float(_neumann_matrix(cluster, alpha)[0, 0])
    return DerivativeReport(value, "neumann_eigenvalue", cluster[0].n_q)


def multi_matrix_dirichlet(cluster: Sequence[EigenPair], alpha) -> DerivativeReport:
    """``m_ij = -\\oint du_i/dnu du_j/dnu alpha ds``; directional derivatives are its eigenvalues."""
    cluster = list(cluster)
    for p in cluster:
        _require_flux(p)
    _check_orthonormal(cluster)
    m = _dirichlet_matrix(cluster, alpha)
    return DerivativeReport(m, "multiple_dirichlet", cluster[0].n_q, eigenvalues=np.linalg.eigvalsh(m))


def multi_matrix_neumann(cluster: Sequence[EigenPair], alpha) -> DerivativeReport:
    """``m_ij = \\oint (grad u_i . grad u_j - lam u_i u_j) alpha ds``."""
    cluster = list(cluster)
    for p in cluster:
        _require(p, BC.NEUMANN)
    _check_orthonormal(cluster)
    m = _neumann_matrix(cluster, alpha)
    return DerivativeReport(m, "multiple_neumann", cluster[0].n_q, eigenvalues=np.linalg.eigvalsh(m))


def dJ2_reduced(eig: EigenPair, gamma: float, alpha) -> float:
    """Reduced derivative ``\\oint (H u^2 + gamma) alpha ds`` (the ``u u'`` term dropped)."""
    fr = boundary_frame(eig)
    return fr.integrate(j2_density(eig, gamma, fr) * _alpha(alpha, fr))


def dJ3(eig: EigenPair, gamma: float, alpha) -> DerivativeReport:
    """``\\oint (-1/2 (du/dnu)^2 + gamma) alpha ds``.

    ``dJ3_classical`` gives the same integral with factor 1.
    """
    fr = boundary_frame(eig)
    a = _alpha(alpha, fr)
    value = fr.integrate(j3_density(eig, gamma, "half") * a)
    return DerivativeReport(value, "j3_half", fr.n_q, half_value=value)


def dJ3_classical(eig: EigenPair, gamma: float, alpha) -> float:
    fr = boundary_frame(eig)
    return fr.integrate(j3_density(eig, gamma, "classical") * _alpha(alpha, fr))


# ----------------------------------------------------------------------
# optimality and overdetermined residuals

@dataclass(frozen=True)
class OptimalityResidual:
    tau: float
    Lambda: float
    deviation: float


def optimality_residual(eig: EigenPair) -> OptimalityResidual:
    """Lagrange multiplier of the volume constraint and the departure from a constant flux."""
    _require_flux(eig)
    fr = boundary_frame(eig)
    g = -0.5 * eig.flux**2
    tau = fr.integrate(g) / fr.length
    if abs(tau) < EPS:
        raise ZeroFlux("boundary flux vanishes")
    return OptimalityResidual(tau, float(np.sqrt(-2.0 * tau)), float(np.max(np.abs(g - tau)) / abs(tau)))


def constancy_residual(values: np.ndarray, fr: Frame) -> float:
    """``max |f - mean| / max(|mean|, eps)`` with the arc-length mean."""
    mean = fr.integrate(values) / fr.length
    return float(np.max(np.abs(values - mean)) / max(abs(mean), EPS))


@dataclass(frozen=True)
class SchifferResiduals:
    conj4_residual: float
    conj4_mode: int
    conj4_eigenvalue: float
    conj4_trace: float
    conj4_peak_trace: float
    conj5_residual: float
    conj5_mode: int
    conj5_eigenvalue: float
    conj5_flux: float


def schiffer_residuals(mesh: Mesh, n_modes: int = 6, n_q: int = 256) -> SchifferResiduals:
    """How close the first modes come to the two overdetermined problems.

    Neumann modes: constancy of the boundary value (constant mode excluded).
    Dirichlet modes: constancy of ``|du/dnu|``.  Each residual is the minimum
    over the first ``n_modes`` modes, reported with the minimizing mode.
    """
    fr = frame(mesh.curve, n_q, check=False)
    neu = solve_eigs(mesh, BC.NEUMANN, n_modes + 1, n_q)
    nonconst = [(i, p) for i, p in enumerate(neu) if p.eigenvalue > 1e-8 * max(1.0, neu[-1].eigenvalue)]
    r4 = [(constancy_residual(p.trace, fr), i, p) for i, p in nonconst[:n_modes]]
    c4, i4, p4 = min(r4, key=lambda r: r[0])
    dirich = solve_eigs(mesh, BC.DIRICHLET, n_modes, n_q)
    r5 = [(constancy_residual(np.abs(p.flux), fr), i, p) for i, p in enumerate(dirich)]
    c5, i5, p5 = min(r5, key=lambda r: r[0])
    return SchifferResiduals(
        conj4_residual=c4, conj4_mode=i4, conj4_eigenvalue=p4.eigenvalue,
        conj4_trace=fr.integrate(p4.trace) / fr.length,
        conj4_peak_trace=fr.integrate(p4.peak_normalized_trace()) / fr.length,
        conj5_residual=c5, conj5_mode=i5, conj5_eigenvalue=p5.eigenvalue,
        conj5_flux=fr.integrate(np.abs(p5.flux)) / fr.length,
    )


# ----------------------------------------------------------------------
# finite differences

def _signal(eig: EigenPair) -> np.ndarray:
    return eig.flux if eig.bc == BC.DIRICHLET else eig.trace


def track_mode(reference: EigenPair, candidates: Sequence[EigenPair], threshold: float = 0.9) -> EigenPair:
    """Pick the candidate whose boundary signal correlates best with ``reference``."""
    ref = _signal(reference)
    best, best_corr = None, -1.0
    for cand in candidates:
        sig = _signal(cand)
        denom = np.linalg.norm(ref) * np.linalg.norm(sig)
        corr = abs(ref @ sig) / denom if denom > 0 else 0.0
        if corr > best_corr:
            best, best_corr = cand, corr
    if best is None or best_corr < threshold:
        raise ModeTrackingFailure(f"best trace correlation {best_corr:.3f} below {threshold}")
    return best


QUANTITIES = ("lambda_dirichlet", "lambda_neumann", "J2", "J3")


def _quantity_bc(quantity: str) -> BC:
    if quantity not in QUANTITIES:
        raise ValueError(f"unknown quantity {quantity!r}; choose from {QUANTITIES}")
    return BC.DIRICHLET if quantity in ("lambda_dirichlet", "J3") else BC.NEUMANN


def _evaluate(quantity: str, eig: EigenPair, gamma: float) -> float:
    if quantity.startswith("lambda"):
        return eig.eigenvalue
    if quantity == "J2":
        return functional_J2(eig, gamma)
    return functional_J3(eig, gamma)


def perturbed_value(mesh: Mesh, curve: FourierCurve, reference: EigenPair, quantity: str,
                    index: int, gamma: float = 0.0) -> float:
    """Quantity on ``mesh`` deformed onto ``curve``, following the mode of ``reference``."""
    bc = _quantity_bc(quantity)
    moved = mesh.deform(curve)
    pairs = solve_eigs(moved, bc, index + 3, reference.n_q)
    window = pairs[max(0, index - 2): index + 3]
    return _evaluate(quantity, track_mode(reference, window), gamma)


def fd_shape_derivative(mesh: Mesh, alpha, quantity: str, t: float = 1e-3, index: int = 0,
                        gamma: float = 0.0, n_q: int = 256, reference: Optional[EigenPair] = None,
                        harmonics: Optional[int] = None) -> float:
    """Central difference ``(q(c + t alpha nu) - q(c - t alpha nu)) / 2t``.

    ``index`` selects the eigenpair (0-based, ascending) of the unperturbed
    mesh; the perturbed modes are matched by boundary-trace correlation.
    """
    if not 1e-4 <= t <= 1e-2:
        raise ValueError("finite-difference step must lie in [1e-4, 1e-2]")
    alpha = np.broadcast_to(np.asarray(alpha, dtype=float), (n_q,))
    if not np.any(alpha):
        return 0.0
    bc = _quantity_bc(quantity)
    if reference is None:
        reference = solve_eigs(mesh, bc, index + 1, n_q)[index]
    curve = mesh.curve
    plus = normal_perturbation(curve, alpha, t, harmonics)
    minus = normal_perturbation(curve, alpha, -t, harmonics)
    q_plus = perturbed_value(mesh, plus, reference, quantity, index, gamma)
    q_minus = perturbed_value(mesh, minus, reference, quantity, index, gamma)
    return (q_plus - q_minus) / (2.0 * t)


def fd_cluster_derivative(mesh: Mesh, cluster: Sequence[EigenPair], alpha, t: float = 1e-3,
                          n_q: int = 256, harmonics: Optional[int] = None) -> np.ndarray:
    """One-sided second-order differences of the sorted eigenvalues of a cluster.

    Along ``c + t alpha nu`` the branches of a multiple eigenvalue separate
    with slopes equal to the directional derivatives, so the sorted cluster
    at ``t`` and ``2t`` gives them without mode tracking.
    """
    p = len(cluster)
    bc = cluster[0].bc
    lam0 = np.mean([c.eigenvalue for c in cluster])
    first = min(i for i, e in enumerate(solve_eigs(mesh, bc, 60 if p > 6 else 30, n_q))
                if abs(e.eigenvalue - lam0) <= 1e-3 * max(lam0, 1.0))
    alpha = np.broadcast_to(np.asarray(alpha, dtype=float), (n_q,))
    vals = []
    for step in (t, 2 * t):
        moved = mesh.deform(normal_perturbation(mesh.curve, alpha, step, harmonics))
        pairs = solve_eigs(moved, bc, first + p, n_q)
        vals.append(np.sort([e.eigenvalue for e in pairs[first:first + p]]))
    base = np.sort([c.eigenvalue for c in cluster])
    return (-3.0 * base + 4.0 * vals[0] - vals[1]) / (2.0 * t)


@dataclass(frozen=True)
class FDEstimate:
    """Central differences at ``t`` and ``t/2`` and their Richardson combination."""

    value: float
    half_step: float
    extrapolated: float
    t: float

    @property
    def richardson_gap(self) -> float:
        return relative_gap(self.value, self.half_step)


def fd_with_richardson(mesh: Mesh, alpha, quantity: str, t: float = 1e-3, **kwargs) -> FDEstimate:
    """``fd_shape_derivative`` at ``t`` and ``t/2``; the gap flags a step outside the asymptotic range."""
    full = fd_shape_derivative(mesh, alpha, quantity, t, **kwargs)
    half = fd_shape_derivative(mesh, alpha, quantity, 0.5 * t, **kwargs)
    return FDEstimate(full, half, (4.0 * half - full) / 3.0, t)


# ----------------------------------------------------------------------
# test fields and mode selection

def band_limited_alpha(rng: np.random.Generator, n_q: int = 256, harmonics: int = 6) -> np.ndarray:
    """Random trigonometric polynomial with coefficients ``N(0, 1) / (1 + k)`` up to ``harmonics``."""
    theta = 2.0 * np.pi * np.arange(n_q) / n_q
    coef = rng.standard_normal((harmonics + 1, 2)) / (1.0 + np.arange(harmonics + 1))[:, None]
    k = np.arange(harmonics + 1)[:, None]
    return coef[:, 0] @ np.cos(k * theta) + coef[:, 1] @ np.sin(k * theta)


def fourier_alpha(cos: Sequence[float], sin: Sequence[float] = (), n_q: int = 256) -> np.ndarray:
    """``sum_k cos[k] cos(k theta) + sin[k] sin(k theta)`` on the theta grid."""
    theta = 2.0 * np.pi * np.arange(n_q) / n_q
    out = np.zeros(n_q)
    for k, a in enumerate(cos):
        out += a * np.cos(k * theta)
    for k, b in enumerate(sin):
        out += b * np.sin(k * theta)
    return out


def first_simple_index(pairs: Sequence[EigenPair], rel_gap: float = 1e-3, nonzero: bool = True) -> int:
    """Index of the first eigenvalue separated from both neighbours by more than ``rel_gap``."""
    lam = np.array([p.eigenvalue for p in pairs])
    scale = max(abs(lam[-1]), 1.0)
    for i in range(len(lam) - 1):
        if nonzero and lam[i] <= 1e-8 * scale:
            continue
        below = i == 0 or lam[i] - lam[i - 1] > rel_gap * lam[i]
        above = lam[i + 1] - lam[i] > rel_gap * lam[i]
        if below and above:
            return i
    raise MultipleEigenvalue("no simple eigenvalue among the computed modes")
