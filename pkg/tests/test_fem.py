import math

import numpy as np
import pytest

from schiffer_lab.bessel import BC, disk_spectrum, lambda_disk
from schiffer_lab.curve_geometry import FourierCurve, enclosed_area, frame
from schiffer_lab.errors import EmptyCluster, MeshFailure
from schiffer_lab.fem import (
    MIN_ANGLE_DEG,
    assemble,
    eig_with_multiplicity,
    orthonormalize_cluster,
    periodic_resample,
    solve_eigs,
    triangulate,
)

from conftest import J01, J11, JP11


# ----------------------------------------------------------------------
# meshing

def test_triangle_count_estimate():
    mesh = triangulate(FourierCurve.circle(), 0.1)
    estimate = math.pi / (math.sqrt(3) / 4 * 0.01)
    assert 0.6 * estimate <= mesh.triangles.shape[0] <= 1.4 * estimate


def test_mesh_invariants(disk_mesh):
    assert np.all(disk_mesh.areas > 0)
    assert disk_mesh.min_angle >= MIN_ANGLE_DEG
    assert np.all(np.diff(disk_mesh.boundary_theta) > 0)
    np.testing.assert_allclose(disk_mesh.vertices[: disk_mesh.n_boundary],
                               disk_mesh.curve.evaluate(disk_mesh.boundary_theta), atol=1e-12)
    # polygon area converges to the disk area
    assert disk_mesh.areas.sum() == pytest.approx(math.pi, rel=5e-3)


def test_boundary_refinement_rule():
    curve = FourierCurve.ellipse(2, 1)
    mesh = triangulate(curve, 0.1)
    assert mesh.n_boundary >= frame(curve).length / 0.1


def test_degenerate_mesh_size():
    with pytest.raises(MeshFailure):
        triangulate(FourierCurve.circle(), 2.0)
    with pytest.raises(MeshFailure):
        triangulate(FourierCurve.circle(), 0.0)


def test_assembly_identities(disk_mesh):
    K, M = assemble(disk_mesh)
    ones = np.ones(disk_mesh.n_vertices)
    assert np.max(np.abs(K @ ones)) < 1e-12
    assert ones @ (M @ ones) == pytest.approx(disk_mesh.areas.sum(), rel=1e-12)
    x = disk_mesh.vertices[:, 0]
    assert x @ (K @ x) == pytest.approx(disk_mesh.areas.sum(), rel=1e-12)


def test_deform_reproduces_affine_maps(disk_mesh):
    A = np.array([[1.1, 0.2], [-0.1, 0.9]])
    moved = disk_mesh.deform(FourierCurve(disk_mesh.curve.cos @ A.T, disk_mesh.curve.sin @ A.T))
    np.testing.assert_allclose(moved.vertices, disk_mesh.vertices @ A.T, atol=1e-12)


def test_periodic_resample_of_smooth_signal():
    nodes = np.sort(np.random.default_rng(3).uniform(0, 2 * np.pi, 200))
    out = periodic_resample(nodes, np.cos(2 * nodes), 64)
    t = np.linspace(0, 2 * np.pi, 64, endpoint=False)
    np.testing.assert_allclose(out, np.cos(2 * t), atol=1e-4)


# ----------------------------------------------------------------------
# eigenpairs

def test_disk_dirichlet_first_eigenvalue(disk_dirichlet):
    assert disk_dirichlet[0].eigenvalue == pytest.approx(J01**2, rel=5e-3)


def test_disk_neumann_first_two(disk_neumann):
    assert abs(disk_neumann[0].eigenvalue) <= 1e-6
    assert disk_neumann[1].eigenvalue == pytest.approx(JP11**2, rel=1e-2)


def test_disk_spectrum_matches_oracle(disk_dirichlet, disk_neumann):
    for fem, exact in ((disk_dirichlet, disk_spectrum(1, BC.DIRICHLET, 6)),
                       (disk_neumann, disk_spectrum(1, BC.NEUMANN, 8))):
        for e, o in zip(fem, exact):
            assert e.eigenvalue == pytest.approx(o.eigenvalue, rel=1e-2, abs=1e-6)


def test_dirichlet_flux_is_lambda_disk(disk_dirichlet):
    flux = disk_dirichlet[0].flux
    assert np.max(np.abs(np.abs(flux) - lambda_disk(1.0))) < 0.01 * lambda_disk(1.0)


def test_refinement_reduces_error_threefold():
    curve = FourierCurve.circle()
    errs = [abs(solve_eigs(triangulate(curve, h), BC.DIRICHLET, 1)[0].eigenvalue - J01**2) for h in (0.1, 0.05)]
    assert errs[0] / errs[1] >= 3


def test_domain_monotonicity():
    small = solve_eigs(triangulate(FourierCurve.circle(0.8), 0.04), BC.DIRICHLET, 1)[0].eigenvalue
    big = solve_eigs(triangulate(FourierCurve.circle(1.0), 0.05), BC.DIRICHLET, 1)[0].eigenvalue
    assert small > big


@pytest.mark.parametrize("bc", list(BC))
def test_orthonormality_residual_and_traces(disk_mesh, bc, request):
    pairs = request.getfixturevalue("disk_dirichlet" if bc == BC.DIRICHLET else "disk_neumann")
    _, M = disk_mesh.matrices
    U = np.column_stack([p.u for p in pairs])
    np.testing.assert_allclose(U.T @ (M @ U), np.eye(len(pairs)), atol=1e-8)
    for p in pairs:
        assert p.residual <= 1e-8
        assert np.all(np.isfinite(p.trace)) and np.all(np.isfinite(p.flux))
        if bc == BC.DIRICHLET:
            assert np.max(np.abs(p.trace)) == 0.0
        else:
            assert np.max(np.abs(p.node_flux)) < 5 * disk_mesh.h * np.max(np.abs(p.u))


def test_first_dirichlet_mode_positive(disk_dirichlet, ellipse_dirichlet):
    for p in (disk_dirichlet[0], ellipse_dirichlet[0]):
        assert np.all(p.u[p.mesh.interior_nodes] > 0)
        assert np.all(p.flux < 0)


def test_energy_equals_eigenvalue(disk_dirichlet):
    for p in disk_dirichlet:
        assert abs(p.dirichlet_energy() - p.eigenvalue) / p.eigenvalue < 1e-6


def test_sign_convention_is_reproducible(disk_mesh):
    a = solve_eigs(disk_mesh, BC.NEUMANN, 6)
    b = solve_eigs(disk_mesh, BC.NEUMANN, 6)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.u, y.u)


def test_radial_mode_peak_normalized_trace(radial_neumann):
    assert np.mean(radial_neumann.peak_normalized_trace()) == pytest.approx(-0.402759, rel=2e-2)
    assert np.mean(radial_neumann.trace**2) == pytest.approx(1 / math.pi, rel=2e-2)


# ----------------------------------------------------------------------
# clusters

def test_cluster_sizes(disk_mesh, ellipse_mesh):
    assert len(eig_with_multiplicity(disk_mesh, BC.NEUMANN, JP11**2, 1e-2)) == 2
    assert len(eig_with_multiplicity(disk_mesh, BC.DIRICHLET, J01**2, 1e-2)) == 1
    split = eig_with_multiplicity(ellipse_mesh, BC.NEUMANN, JP11**2, 0.4)
    assert len(split) == 2
    assert split[1].eigenvalue - split[0].eigenvalue > 1.0


def test_cluster_orthonormal(disk_mesh):
    cl = eig_with_multiplicity(disk_mesh, BC.DIRICHLET, J11**2, 1e-2)
    _, M = disk_mesh.matrices
    U = np.column_stack([p.u for p in cl])
    np.testing.assert_allclose(U.T @ (M @ U), np.eye(2), atol=1e-8)
    assert orthonormalize_cluster(cl)[0] is cl[0]


def test_empty_cluster(disk_mesh):
    with pytest.raises(EmptyCluster):
        eig_with_multiplicity(disk_mesh, BC.DIRICHLET, 10.0, 1e-3)


def test_zero_target_cluster(disk_mesh):
    cl = eig_with_multiplicity(disk_mesh, BC.NEUMANN, 0.0, 1e-6)
    assert len(cl) == 1
    assert np.ptp(cl[0].u) < 1e-8


def test_scaled_disk_eigenvalues():
    mesh = triangulate(FourierCurve.circle(2.0), 0.1)
    lam = solve_eigs(mesh, BC.DIRICHLET, 1)[0].eigenvalue
    assert lam == pytest.approx(J01**2 / 4, rel=5e-3)
    assert enclosed_area(mesh.curve) == pytest.approx(4 * math.pi)
