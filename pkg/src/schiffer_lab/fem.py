"""P1 finite elements for ``-Lap u = lam u`` on curve-bounded planar domains.

Meshes keep the curve parameter of every boundary vertex, so boundary traces
can be resampled onto the uniform theta grid used by the shape calculus.
Perturbed domains reuse the topology of a reference mesh (``deform``) which
keeps finite differences of eigenvalues free of remeshing noise.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import List, Optional

import numpy as np
import scipy.linalg
import scipy.sparse as sps
import scipy.sparse.linalg as spla
import shapely
import triangle
from scipy.interpolate import CubicSpline

from .bessel import BC
from .curve_geometry import DEFAULT_NQ, FourierCurve, check_embedded, diameter, theta_grid
from .errors import EmptyCluster, MeshFailure, SingularMass, SolverDivergence
from .periodic import solve_cyclic_tridiagonal

log = logging.getLogger(__name__)

MIN_ANGLE_DEG = 15.0
RESIDUAL_TOL = 1e-8


def _triangle_angles(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    p = vertices[triangles]
    angles = []
    for i in range(3):
        a = p[:, (i + 1) % 3] - p[:, i]
        b = p[:, (i + 2) % 3] - p[:, i]
        cosang = (a * b).sum(1) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
        angles.append(np.degrees(np.arccos(np.clip(cosang, -1.0, 1.0))))
    return np.column_stack(angles)


def _signed_areas(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    p = vertices[triangles]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


@dataclass(frozen=True, eq=False)
class Mesh:
    """Triangulation of a curve interior.

    The first ``len(boundary_theta)`` vertices are the boundary vertices in
    increasing curve parameter; ``boundary_theta`` holds their parameters.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_theta: np.ndarray
    h: float
    curve: FourierCurve

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_boundary(self) -> int:
        return self.boundary_theta.size

    @property
    def boundary_nodes(self) -> np.ndarray:
        return np.arange(self.n_boundary)

    @property
    def interior_nodes(self) -> np.ndarray:
        return np.arange(self.n_boundary, self.n_vertices)

    @cached_property
    def areas(self) -> np.ndarray:
        return _signed_areas(self.vertices, self.triangles)

    @cached_property
    def min_angle(self) -> float:
        return float(_triangle_angles(self.vertices, self.triangles).min())

    @cached_property
    def matrices(self):
        """Sparse ``(stiffness, mass)`` of the P1 space on all vertices."""
        return assemble(self)

    @cached_property
    def boundary_mass(self):
        """Cyclic tridiagonal ``(lower, diag, upper)`` of the P1 mass matrix on the boundary polygon."""
        pb = self.vertices[: self.n_boundary]
        seg = np.linalg.norm(np.roll(pb, -1, axis=0) - pb, axis=1)  # segment i -> i+1
        prev = np.roll(seg, 1)
        return prev / 6.0, (prev + seg) / 3.0, seg / 6.0

    def deform(self, curve: FourierCurve) -> "Mesh":
        """Same topology, boundary vertices moved onto ``curve`` at their parameters.

        Interior vertices follow the discrete harmonic extension of the
        boundary displacement, which reproduces affine maps exactly.
        """
        nb = self.n_boundary
        new_b = curve.evaluate(self.boundary_theta)
        disp_b = new_b - self.vertices[:nb]
        K, _ = self.matrices
        K = K.tocsr()
        I = self.interior_nodes
        verts = self.vertices.copy()
        verts[:nb] = new_b
        if I.size:
            Kii = K[I][:, I].tocsc()
            Kib = K[I][:, :nb]
            disp_i = spla.splu(Kii).solve(-(Kib @ disp_b))
            verts[I] += disp_i
        mesh = Mesh(verts, self.triangles, self.boundary_theta, self.h, curve)
        if np.any(mesh.areas <= 0):
            raise MeshFailure("deformation inverted a triangle")
        return mesh


def _boundary_parameters(curve: FourierCurve, h: float, n_dense: int = 8192) -> np.ndarray:
    th = theta_grid(n_dense)
    d = curve.evaluate(th, 1)
    speed = np.hypot(d[:, 0], d[:, 1])
    # cumulative arc length by the periodic trapezoid rule
    s = np.concatenate([[0.0], np.cumsum(0.5 * (speed + np.roll(speed, -1)) * (2 * np.pi / n_dense))])
    length = s[-1]
    n_b = max(int(np.ceil(length / h)), 8)
    targets = np.arange(n_b) * length / n_b
    return np.interp(targets, s, np.append(th, 2 * np.pi))


def _boundary_layers(curve: FourierCurve, theta_b: np.ndarray, layers: int) -> np.ndarray:
    """Staggered rows of vertices inset along the inward normal.

    A regular strip of near-equilateral triangles along the boundary keeps
    the recovered normal flux free of node-to-node noise.
    """
    pb = curve.evaluate(theta_b)
    spacing = np.linalg.norm(np.roll(pb, -1, axis=0) - pb, axis=1)
    dth = np.diff(np.append(theta_b, 2 * np.pi))
    ring = shapely.LinearRing(pb)
    region = shapely.Polygon(pb)
    rows = []
    for layer in range(1, layers + 1):
        th = theta_b + (0.5 * dth if layer % 2 else 0.0)
        d = curve.evaluate(th, 1)
        nu = np.column_stack([d[:, 1], -d[:, 0]]) / np.hypot(d[:, 0], d[:, 1])[:, None]
        depth = layer * np.sqrt(3.0) / 2.0 * spacing
        cand = curve.evaluate(th) - depth[:, None] * nu
        inside = shapely.contains_xy(region, cand[:, 0], cand[:, 1])
        dist = shapely.distance(ring, shapely.points(cand))
        # drop points where curvature folds the layer
        rows.append(cand[inside & (dist > 0.8 * depth)])
    return np.vstack(rows) if rows else np.empty((0, 2))


def triangulate(curve: FourierCurve, h: float, min_angle: float = 20.0, area_factor: float = 1.7,
                layers: int = 2) -> Mesh:
    """Quality triangulation of the curve interior with boundary segments at most ``h``.

    Boundary vertices are equidistributed in arc length and kept fixed (no
    Steiner points on the boundary); ``layers`` staggered rows follow the
    boundary, and the rest is Delaunay refined with a minimum angle and a
    maximum area ``area_factor`` times the equilateral area ``sqrt(3)/4 h^2``.
    """
    pts = curve.samples(1024)
    if not check_embedded(pts):
        raise MeshFailure("curve is not embedded")
    diam = diameter(pts)
    if not 0 < h < diam / 4:
        raise MeshFailure(f"mesh size h={h} outside (0, diameter/4={diam / 4:.4g})")
    theta_b = _boundary_parameters(curve, h)
    pb = curve.evaluate(theta_b)
    n_b = pb.shape[0]
    seg = np.column_stack([np.arange(n_b), (np.arange(n_b) + 1) % n_b])
    inner = _boundary_layers(curve, theta_b, layers)
    max_area = area_factor * np.sqrt(3.0) / 4.0 * h * h
    out = triangle.triangulate({"vertices": np.vstack([pb, inner]), "segments": seg},
                               f"pq{min_angle:.6g}a{max_area:.12g}YQ")
    verts = np.asarray(out["vertices"], dtype=float)
    tris = np.asarray(out["triangles"], dtype=np.int64)
    if verts.shape[0] < n_b or not np.allclose(verts[:n_b], pb):
        raise MeshFailure("mesher altered the boundary")
    areas = _signed_areas(verts, tris)
    flip = areas < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]
    mesh = Mesh(verts, tris, theta_b, float(h), curve)
    if mesh.min_angle < MIN_ANGLE_DEG:
        raise MeshFailure(f"minimum angle {mesh.min_angle:.2f} deg below {MIN_ANGLE_DEG}")
    return mesh


def assemble(mesh: Mesh):
    """P1 stiffness and consistent mass matrices (CSR)."""
    v, t = mesh.vertices, mesh.triangles
    p = v[t]
    area = _signed_areas(v, t)
    if np.any(area <= 0):
        raise SingularMass("degenerate or inverted triangle")
    # gradients of barycentric coordinates
    rot = np.empty((t.shape[0], 3, 2))
    for i in range(3):
        e = p[:, (i + 2) % 3] - p[:, (i + 1) % 3]
        rot[:, i, 0] = -e[:, 1]
        rot[:, i, 1] = e[:, 0]
    grads = rot / (2.0 * area)[:, None, None]
    k_loc = np.einsum("tid,tjd->tij", grads, grads) * area[:, None, None]
    m_ref = (np.ones((3, 3)) + np.eye(3)) / 12.0
    m_loc = m_ref[None] * area[:, None, None]
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    n = v.shape[0]
    K = sps.coo_matrix((k_loc.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    M = sps.coo_matrix((m_loc.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    return K, M


def periodic_resample(theta_nodes: np.ndarray, values: np.ndarray, n_q: int = DEFAULT_NQ) -> np.ndarray:
    """Periodic cubic interpolation from boundary-node parameters to the uniform grid."""
    x = np.append(theta_nodes, theta_nodes[0] + 2 * np.pi)
    y = np.append(values, values[:1])
    t = theta_grid(n_q)
    return CubicSpline(x, y, bc_type="periodic")(x[0] + np.mod(t - x[0], 2 * np.pi))


@dataclass(frozen=True, eq=False)
class EigenPair:
    """Normalized eigenpair with boundary traces.

    ``u`` holds nodal values on every vertex (zero on the boundary for
    Dirichlet).  ``trace`` and ``flux`` are ``u`` and ``du/dnu`` resampled
    onto the uniform theta grid with ``n_q`` nodes.
    """

    eigenvalue: float
    u: np.ndarray
    bc: BC
    mesh: Mesh = field(repr=False)
    node_flux: np.ndarray = field(repr=False)
    trace: np.ndarray = field(repr=False)
    flux: np.ndarray = field(repr=False)
    residual: float = 0.0

    @property
    def n_q(self) -> int:
        return self.trace.size

    @property
    def node_trace(self) -> np.ndarray:
        return self.u[: self.mesh.n_boundary]

    @property
    def peak_value(self) -> float:
        """Nodal value of largest magnitude (signed)."""
        return float(self.u[np.argmax(np.abs(self.u))])

    def peak_normalized_trace(self) -> np.ndarray:
        """Boundary trace of ``u`` rescaled so that its extreme interior value is 1."""
        return self.trace / self.peak_value

    def dirichlet_energy(self) -> float:
        K, _ = self.mesh.matrices
        return float(self.u @ (K @ self.u))

    def mass_inner(self, other: "EigenPair") -> float:
        _, M = self.mesh.matrices
        return float(self.u @ (M @ other.u))


def _fix_sign(vec: np.ndarray, boundary_signal: np.ndarray, first_mode_positive: bool) -> float:
    if first_mode_positive:
        return 1.0 if vec.sum() >= 0 else -1.0
    spec = np.fft.rfft(boundary_signal) / boundary_signal.size
    seq = np.column_stack([spec.real, spec.imag]).ravel()
    scale = np.abs(seq).max()
    if scale == 0:
        return 1.0
    idx = np.flatnonzero(np.abs(seq) > 1e-6 * scale)[0]
    return 1.0 if seq[idx] > 0 else -1.0


def _recover_flux(mesh: Mesh, u: np.ndarray, lam: float) -> np.ndarray:
    K, M = mesh.matrices
    nb = mesh.n_boundary
    r = (K @ u - lam * (M @ u))[:nb]
    lower, diag, upper = mesh.boundary_mass
    return solve_cyclic_tridiagonal(lower, diag, upper, r)


def _dense_or_sparse_eigs(A, B, count: int, sigma: float):
    n = A.shape[0]
    if n <= 600 or count >= n // 3:
        w, v = scipy.linalg.eigh(A.toarray(), B.toarray(), subset_by_index=[0, min(count, n) - 1])
        return w, v
    # fixed start vector keeps repeated solves bit-identical
    v0 = np.random.default_rng(0).standard_normal(n)
    w, v = spla.eigsh(A.tocsc(), k=count, M=B.tocsc(), sigma=sigma, which="LM", tol=0.0, v0=v0)
    order = np.argsort(w)
    return w[order], v[:, order]


def _m_orthonormalize(vecs: np.ndarray, B) -> np.ndarray:
    gram = vecs.T @ (B @ vecs)
    gram = 0.5 * (gram + gram.T)
    w, q = np.linalg.eigh(gram)
    if np.any(w <= 0):
        raise SingularMass("mass Gram matrix is not positive definite")
    return vecs @ (q @ np.diag(w**-0.5) @ q.T)


def solve_eigs(mesh: Mesh, bc: BC | str, count: int, n_q: int = DEFAULT_NQ) -> List[EigenPair]:
    """The ``count`` smallest eigenpairs of the P1 generalized problem ``K u = lam M u``."""
    bc = BC(bc)
    if count < 1:
        raise ValueError("count must be >= 1")
    K, M = mesh.matrices
    n, nb = mesh.n_vertices, mesh.n_boundary
    if bc == BC.DIRICHLET:
        free = mesh.interior_nodes
        sigma = 0.0
    else:
        free = np.arange(n)
        sigma = -1.0
    if count > free.size:
        raise ValueError(f"only {free.size} degrees of freedom")
    A = K[free][:, free]
    B = M[free][:, free]
    try:
        w, v = _dense_or_sparse_eigs(A, B, count, sigma)
    except (spla.ArpackNoConvergence, np.linalg.LinAlgError) as exc:
        raise SolverDivergence(str(exc)) from exc
    v = _m_orthonormalize(v, B)
    pairs = []
    for i in range(count):
        vec = v[:, i]
        lam = float(w[i])
        res = np.linalg.norm(A @ vec - lam * (B @ vec)) / np.linalg.norm(B @ vec)
        if not res <= RESIDUAL_TOL:
            raise SolverDivergence(f"eigenpair {i} residual {res:.2e} above {RESIDUAL_TOL}")
        u = np.zeros(n)
        u[free] = vec
        node_flux = _recover_flux(mesh, u, lam)
        signal = node_flux if bc == BC.DIRICHLET else u[:nb]
        s = _fix_sign(u, signal, first_mode_positive=(i == 0))
        u *= s
        node_flux *= s
        pairs.append(EigenPair(
            eigenvalue=lam,
            u=u,
            bc=bc,
            mesh=mesh,
            node_flux=node_flux,
            trace=periodic_resample(mesh.boundary_theta, u[:nb], n_q),
            flux=periodic_resample(mesh.boundary_theta, node_flux, n_q),
            residual=float(res),
        ))
    return pairs


def orthonormalize_cluster(cluster: List[EigenPair]) -> List[EigenPair]:
    """Mass-orthonormalize a list of eigenpairs sharing one mesh."""
    if not cluster:
        return cluster
    mesh = cluster[0].mesh
    _, M = mesh.matrices
    U = np.column_stack([p.u for p in cluster])
    gram = U.T @ (M @ U)
    if np.allclose(gram, np.eye(len(cluster)), atol=1e-12, rtol=0):
        return cluster
    # linear combinations mix eigenvalues only inside a near-degenerate cluster
    w, q = np.linalg.eigh(0.5 * (gram + gram.T))
    T = q @ np.diag(w**-0.5) @ q.T
    lam = np.array([p.eigenvalue for p in cluster])
    out = []
    for j in range(len(cluster)):
        coef = T[:, j]
        u = U @ coef
        flux = sum(c * p.node_flux for c, p in zip(coef, cluster))
        nq = cluster[0].n_q
        out.append(EigenPair(
            eigenvalue=float(coef**2 @ lam / (coef**2).sum()),
            u=u, bc=cluster[0].bc, mesh=mesh, node_flux=flux,
            trace=periodic_resample(mesh.boundary_theta, u[: mesh.n_boundary], nq),
            flux=periodic_resample(mesh.boundary_theta, flux, nq),
            residual=max(p.residual for p in cluster),
        ))
    return out


def eig_with_multiplicity(mesh: Mesh, bc: BC | str, target: float, tol: float,
                          n_q: int = DEFAULT_NQ, max_count: int = 200) -> List[EigenPair]:
    """All computed eigenpairs with ``|lam - target| <= tol * target``."""
    if target < 0:
        raise ValueError("target must be non-negative")
    count = 8
    while True:
        pairs = solve_eigs(mesh, bc, count, n_q)
        if pairs[-1].eigenvalue > target * (1 + tol) or count >= max_count:
            break
        count = min(2 * count, max_count)
    # zero target: accept the numerically zero modes
    window = tol * target if target > 0 else tol
    cluster = [p for p in pairs if abs(p.eigenvalue - target) <= window]
    if not cluster:
        raise EmptyCluster(f"no eigenvalue within {window:.3g} of {target:.6g}")
    return orthonormalize_cluster(cluster)
