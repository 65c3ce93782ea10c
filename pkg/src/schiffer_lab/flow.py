"""Area-preserving Riemannian gradient descent for eigenvalue functionals.

Each step moves the boundary by ``-s grad nu``, projects the result onto
``harmonics`` Fourier modes and rescales it about the centroid to the target
area.  The mesh is built once and carried along by harmonic deformation so
that successive functional values are compared on one discretization; a
fresh mesh is generated only on request (``remesh_every``) or when the
deformation degrades the mesh.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .bessel import BC, lambda_disk
from .curve_geometry import (
    FourierCurve,
    disk_defect,
    frame,
    is_convex,
    normal_perturbation,
    rescale_to_area,
)
from .errors import ConfigError, MeshFailure, NumericalFailure, StepFailure
from .fem import MIN_ANGLE_DEG, EigenPair, Mesh, solve_eigs, triangulate
from .riemannian import Functional, MetricKind, MetricSpec, metric, riemannian_gradient
from .shape_calculus import (
    functional_J2,
    functional_J3,
    j2_density,
    j3_density,
    optimality_residual,
    schiffer_residuals,
    track_mode,
)

MAX_HALVINGS = 10


@dataclass(frozen=True)
class FlowConfig:
    """Flow parameters.

    ``gamma=None`` selects the disk-critical value for a disk of area
    ``area``: ``Lambda(R)^2 / 2`` for ``J3`` and ``-1 / (pi R^2)``, the
    boundary value of ``u^2`` for the L2-normalized radial mode, for ``J2``.
    Under the area constraint ``gamma`` only shifts the functional by a
    constant.
    ``variant`` picks the ``J3`` density: ``classical`` (``-(du/dnu)^2 + gamma``)
    or ``half`` (``-1/2 (du/dnu)^2 + gamma``).
    """

    functional: Functional = Functional.J3
    gamma: Optional[float] = None
    metric: MetricSpec = field(default_factory=lambda: MetricSpec(MetricKind.SOBOLEV, 0.05))
    s0: float = 0.05
    max_iter: int = 200
    tol: float = 1e-2
    area: float = math.pi
    harmonics: int = 8
    h: float = 0.1
    remesh_every: int = 0
    variant: str = "classical"
    n_q: int = 256

    def __post_init__(self):
        object.__setattr__(self, "functional", Functional(self.functional))
        if not isinstance(self.metric, MetricSpec):
            object.__setattr__(self, "metric", MetricSpec(**self.metric))
        for name in ("s0", "tol", "area", "h"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.max_iter < 0 or self.harmonics < 1 or self.remesh_every < 0:
            raise ConfigError("max_iter, harmonics and remesh_every must be non-negative")
        if self.variant not in ("classical", "half"):
            raise ConfigError(f"unknown density variant {self.variant!r}")

    @property
    def gamma_value(self) -> float:
        if self.gamma is not None:
            return float(self.gamma)
        radius = math.sqrt(self.area / math.pi)
        if self.functional == Functional.J3:
            return 0.5 * lambda_disk(radius) ** 2
        return -1.0 / (math.pi * radius**2)


@dataclass(frozen=True)
class FlowState:
    iteration: int
    curve: FourierCurve
    value: float
    grad_norm: float
    disk_defect: float
    step: float
    mesh: Mesh = field(repr=False, compare=False)
    eig: EigenPair = field(repr=False, compare=False)
    gradient: np.ndarray = field(repr=False, compare=False)


@dataclass(frozen=True)
class Verdict:
    converged: bool
    status: str
    iterations: int
    disk_defect: float
    conj4_residual: float
    conj5_residual: float
    optimality_deviation: float
    left_convexity: bool


# ----------------------------------------------------------------------

def _bc(config: FlowConfig) -> BC:
    return BC.DIRICHLET if config.functional == Functional.J3 else BC.NEUMANN


def _select_mode(pairs: List[EigenPair], config: FlowConfig, reference: Optional[EigenPair]) -> EigenPair:
    if config.functional == Functional.J3:
        return pairs[0]
    if reference is not None:
        return track_mode(reference, pairs)
    for p in pairs:
        if p.eigenvalue > 1e-6 and (np.all(p.trace > 0) or np.all(p.trace < 0)):
            return p
    raise NumericalFailure("no Neumann mode with sign-definite boundary trace")


def _n_modes(config: FlowConfig) -> int:
    return 1 if config.functional == Functional.J3 else 10


def _value(eig: EigenPair, config: FlowConfig) -> float:
    if config.functional == Functional.J3:
        return functional_J3(eig, config.gamma_value)
    return functional_J2(eig, config.gamma_value)


def _density(eig: EigenPair, config: FlowConfig) -> np.ndarray:
    if config.functional == Functional.J3:
        return j3_density(eig, config.gamma_value, config.variant)
    return j2_density(eig, config.gamma_value)


def _make_state(iteration: int, curve: FourierCurve, mesh: Mesh, config: FlowConfig,
                step: float, reference: Optional[EigenPair] = None) -> FlowState:
    pairs = solve_eigs(mesh, _bc(config), _n_modes(config), config.n_q)
    eig = _select_mode(pairs, config, reference)
    grad = riemannian_gradient(config.metric, curve, _density(eig, config), area_constrained=True)
    norm = math.sqrt(max(metric(config.metric, curve, grad, grad), 0.0))
    return FlowState(iteration, curve, _value(eig, config), norm,
                     disk_defect(curve)[2], step, mesh, eig, grad)


def initial_state(curve: FourierCurve, config: FlowConfig) -> FlowState:
    """Project ``curve`` to the admissible class, mesh it and evaluate the functional."""
    curve = rescale_to_area(curve, config.area)
    frame(curve, config.n_q)  # embeddedness check
    mesh = triangulate(curve, config.h)
    return _make_state(0, curve, mesh, config, 0.0)


def _candidate(state: FlowState, config: FlowConfig, s: float) -> FourierCurve:
    moved = normal_perturbation(state.curve, state.gradient, -s, config.harmonics)
    curve = rescale_to_area(moved, config.area)
    frame(curve, config.n_q)
    return curve


def _mesh_for(state: FlowState, curve: FourierCurve, config: FlowConfig) -> Tuple[Mesh, bool]:
    if config.remesh_every and (state.iteration + 1) % config.remesh_every == 0:
        return triangulate(curve, config.h), True
    try:
        mesh = state.mesh.deform(curve)
        if mesh.min_angle < MIN_ANGLE_DEG:
            raise MeshFailure("deformed mesh too distorted")
        return mesh, False
    except MeshFailure:
        return triangulate(curve, config.h), True


def step(state: FlowState, config: FlowConfig) -> FlowState:
    """One backtracking descent step.

    Starts from ``config.s0`` and halves until the functional decreases,
    at most ten times.  Candidates that stop being embedded or break the
    mesh count as failed decreases.  When the gradient norm is already
    below ``config.tol`` the state is returned unchanged.

    Raises
    ------
    StepFailure
        If no step size produced a decrease.
    """
    if state.grad_norm <= config.tol:
        return state
    s = config.s0
    for _ in range(MAX_HALVINGS + 1):
        try:
            curve = _candidate(state, config, s)
            mesh, remeshed = _mesh_for(state, curve, config)
            new = _make_state(state.iteration + 1, curve, mesh, config, s, state.eig)
            baseline = state.value
            if remeshed:
                # compare on the new discretization
                back = _make_state(state.iteration, state.curve, triangulate(state.curve, config.h),
                                   config, state.step, state.eig)
                baseline = back.value
            if new.value < baseline:
                return new
        except NumericalFailure:
            pass
        s *= 0.5
    raise StepFailure(f"no decrease down to step {2 * s:.3g}")


def verdict(states: List[FlowState], config: FlowConfig, status: str) -> Verdict:
    last = states[-1]
    res = schiffer_residuals(last.mesh, n_q=config.n_q)
    dirichlet = solve_eigs(last.mesh, BC.DIRICHLET, 1, config.n_q)[0]
    left = any(not is_convex(s.curve, config.n_q) for s in states)
    return Verdict(status == "converged", status, last.iteration, last.disk_defect,
                   res.conj4_residual, res.conj5_residual,
                   optimality_residual(dirichlet).deviation, left)


def run(initial: FourierCurve, config: FlowConfig) -> Tuple[List[FlowState], Verdict]:
    """Iterate until the gradient norm drops below ``tol`` or ``max_iter`` is reached.

    A step that finds no decrease ends the run with status ``stalled``.
    """
    states = [initial_state(initial, config)]
    status = "not converged"
    if states[0].grad_norm <= config.tol:
        status = "converged"
    while status != "converged" and states[-1].iteration < config.max_iter:
        try:
            states.append(step(states[-1], config))
        except StepFailure:
            status = "stalled"
            break
        if states[-1].grad_norm <= config.tol:
            status = "converged"
    return states, verdict(states, config, status)


def perturbed_disk(rng: np.random.Generator, amplitude: float = 0.05, harmonics=(2, 3, 4),
                   area: float = math.pi) -> FourierCurve:
    """Circle ``r = 1 + eps(theta)`` with random ``eps`` on ``harmonics``, rescaled to ``area``.

    ``eps`` is scaled so that ``max |eps| = amplitude``.
    """
    coef = rng.standard_normal((len(harmonics), 2))

    def eps(theta):
        return sum(a * np.cos(k * theta) + b * np.sin(k * theta) for k, (a, b) in zip(harmonics, coef))

    peak = np.max(np.abs(eps(np.linspace(0.0, 2.0 * np.pi, 4096, endpoint=False))))
    n = max(harmonics)
    theta = np.linspace(0.0, 2.0 * np.pi, 4 * n + 8, endpoint=False)
    r = 1.0 + amplitude * eps(theta) / peak
    pts = np.column_stack([r * np.cos(theta), r * np.sin(theta)])
    return rescale_to_area(FourierCurve.from_samples(pts, n + 1), area)
