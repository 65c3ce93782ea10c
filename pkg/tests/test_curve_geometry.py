import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from schiffer_lab.curve_geometry import (
    AmbientField,
    FourierCurve,
    HalfspaceCap,
    area_centroid,
    diameter,
    disk_defect,
    enclosed_area,
    frame,
    is_convex,
    normal_perturbation,
    p0_predicate,
    rescale_to_area,
    symmetry_defect,
    theta_grid,
)
from schiffer_lab.errors import (
    DegenerateDirection,
    ImmersionViolation,
    NonPositiveTarget,
    SelfIntersection,
)

DIRECTIONS = [(math.cos(2 * math.pi * k / 16), math.sin(2 * math.pi * k / 16)) for k in range(16)]


@st.composite
def near_circles(draw, harmonics=4):
    """Circle plus small random harmonics; small enough to stay embedded and convex-ish."""
    cos = np.zeros((harmonics + 1, 2))
    sin = np.zeros((harmonics + 1, 2))
    cos[0] = [draw(st.floats(-2, 2)), draw(st.floats(-2, 2))]
    cos[1, 0] = sin[1, 1] = draw(st.floats(0.5, 2.0))
    for m in range(2, harmonics + 1):
        bound = 0.08 / m**2
        cos[m] = [draw(st.floats(-bound, bound)) for _ in range(2)]
        sin[m] = [draw(st.floats(-bound, bound)) for _ in range(2)]
    return FourierCurve(cos, sin)


# ----------------------------------------------------------------------
# frame

def test_circle_radius_two_frame():
    fr = frame(FourierCurve.circle(2.0), 64)
    np.testing.assert_allclose(fr.curvature, 0.5, atol=1e-12)
    np.testing.assert_allclose(fr.normal, np.column_stack([np.cos(fr.theta), np.sin(fr.theta)]), atol=1e-12)


def test_ellipse_curvature_at_vertex():
    fr = frame(FourierCurve.ellipse(2.0, 1.0), 64)
    assert fr.curvature[0] == pytest.approx(2.0, abs=1e-12)
    th = fr.theta
    expected = 2.0 / (4 * np.sin(th) ** 2 + np.cos(th) ** 2) ** 1.5
    np.testing.assert_allclose(fr.curvature, expected, atol=1e-12)


@pytest.mark.parametrize("n_q", [16, 64, 256, 1024])
def test_unit_circle_curvature_is_one(n_q):
    assert np.max(np.abs(frame(FourierCurve.circle(), n_q).curvature - 1)) < 1e-10


def test_frame_rejects_coarse_grid():
    with pytest.raises(ValueError):
        frame(FourierCurve.kidney(), 16)


def test_immersion_violation():
    # (cos t - cos 2t / 2, sin t - sin 2t / 2) has a cusp at t = 0
    cos = np.array([[0, 0], [1, 0], [-0.5, 0]], float)
    sin = np.array([[0, 0], [0, 1], [0, -0.5]], float)
    with pytest.raises(ImmersionViolation):
        frame(FourierCurve(cos, sin), 64)


def test_self_intersection():
    # figure-eight style curve: (sin 2t, sin t) crosses itself
    cos = np.zeros((3, 2))
    sin = np.zeros((3, 2))
    sin[2, 0] = 1.0
    sin[1, 1] = 1.0
    with pytest.raises(SelfIntersection):
        frame(FourierCurve(cos, sin), 64)


@settings(max_examples=40, deadline=None)
@given(near_circles())
def test_turning_number_and_orthogonality(curve):
    fr = frame(curve, 256)
    assert fr.integrate(fr.curvature) == pytest.approx(2 * math.pi, abs=1e-6)
    assert np.max(np.abs(np.einsum("nk,nk->n", fr.normal, fr.tangent))) < 1e-12


@pytest.mark.parametrize("curve", [FourierCurve.circle(), FourierCurve.ellipse(1.2, 1 / 1.2),
                                   FourierCurve.ellipse(2, 1), FourierCurve.kidney()])
def test_total_curvature_test_curves(curve):
    fr = frame(curve)
    assert fr.integrate(fr.curvature) == pytest.approx(2 * math.pi, abs=1e-6)


# ----------------------------------------------------------------------
# area

def test_areas():
    assert enclosed_area(FourierCurve.circle()) == pytest.approx(math.pi, rel=1e-14)
    assert enclosed_area(FourierCurve.ellipse(2, 1)) == pytest.approx(2 * math.pi, rel=1e-14)
    small = rescale_to_area(FourierCurve.circle(), math.pi / 4)
    assert enclosed_area(small) == pytest.approx(math.pi / 4, rel=1e-12)


def test_rescale_examples():
    big = rescale_to_area(FourierCurve.circle(), 4 * math.pi)
    np.testing.assert_allclose(big.cos, FourierCurve.circle(2).cos, atol=1e-14)
    e = rescale_to_area(FourierCurve.ellipse(2, 1), math.pi)
    np.testing.assert_allclose(e.cos[1, 0], math.sqrt(2), rtol=1e-13)
    np.testing.assert_allclose(e.sin[1, 1], 1 / math.sqrt(2), rtol=1e-13)
    k = FourierCurve.kidney()
    same = rescale_to_area(k, enclosed_area(k))
    np.testing.assert_allclose(same.cos, k.cos, atol=1e-14)
    np.testing.assert_allclose(same.sin, k.sin, atol=1e-14)


def test_rescale_rejects_nonpositive():
    with pytest.raises(NonPositiveTarget):
        rescale_to_area(FourierCurve.circle(), 0.0)


@settings(max_examples=30, deadline=None)
@given(near_circles(), st.floats(-math.pi, math.pi), st.floats(-3, 3), st.floats(-3, 3))
def test_area_rigid_motion_invariance(curve, angle, dx, dy):
    moved = curve.rotated(angle).translated((dx, dy))
    assert enclosed_area(moved) == pytest.approx(enclosed_area(curve), rel=1e-12)


def test_centroid_of_translated_circle():
    np.testing.assert_allclose(area_centroid(FourierCurve.circle(1, (3, 5))), [3, 5], atol=1e-12)


# ----------------------------------------------------------------------
# Fourier representation

def test_json_round_trip():
    k = FourierCurve.kidney()
    again = FourierCurve.from_dict(k.to_dict())
    np.testing.assert_array_equal(again.cos, k.cos)
    np.testing.assert_array_equal(again.sin, k.sin)


def test_kidney_is_exact_with_five_harmonics():
    k = FourierCurve.kidney()
    t = theta_grid(512)
    r = 1 + 0.65 * np.cos(2 * t)
    expected = np.column_stack([r * np.cos(t) + 0.8 * np.cos(t) ** 2, r * np.sin(t)])
    np.testing.assert_allclose(k.samples(512), expected, atol=1e-13)


def test_normal_perturbation_of_circle_is_dilation():
    c = normal_perturbation(FourierCurve.circle(), np.ones(256), 0.1)
    np.testing.assert_allclose(c.samples(64), FourierCurve.circle(1.1).samples(64), atol=1e-13)


def test_mapped_by_linear_field():
    field = AmbientField.linear(np.eye(2))
    c = FourierCurve.circle().mapped(field, 0.5)
    np.testing.assert_allclose(c.samples(64), FourierCurve.circle(1.5).samples(64), atol=1e-13)


# ----------------------------------------------------------------------
# predicates

def test_p0_true_on_disk_all_directions():
    for e in DIRECTIONS:
        ok, level = p0_predicate(FourierCurve.circle(1.0, (0.3, -0.2)), e)
        assert ok and level is None, e


AXES = [DIRECTIONS[k] for k in (0, 4, 8, 12)]


@pytest.mark.parametrize("curve", [FourierCurve.ellipse(2, 1), FourierCurve.ellipse(1.2, 1 / 1.2)])
def test_p0_true_on_ellipse_symmetry_directions(curve):
    for e in AXES:
        ok, level = p0_predicate(curve, e)
        assert ok and level is None, e


def test_p0_ellipse_oblique_direction_stops_before_centroid():
    # without a symmetry hyperplane the reflected cap leaves the domain at a negative level
    ok, level = p0_predicate(FourierCurve.ellipse(2, 1), DIRECTIONS[2])
    assert not ok
    assert level < 0


def test_p0_false_on_kidney():
    ok, level = p0_predicate(FourierCurve.kidney(), (1.0, 0.0))
    assert not ok
    assert level < 0


def test_p0_rejects_non_unit_direction():
    with pytest.raises(DegenerateDirection):
        p0_predicate(FourierCurve.circle(), (1.0, 1.0))
    with pytest.raises(DegenerateDirection):
        HalfspaceCap(np.array([2.0, 0.0]), 0.0)


def test_halfspace_reflection():
    cap = HalfspaceCap(np.array([1.0, 0.0]), 0.5)
    np.testing.assert_allclose(cap.reflect(np.array([[0.0, 2.0]])), [[1.0, 2.0]])


def test_disk_defect_examples():
    assert disk_defect(FourierCurve.circle())[2] < 1e-10
    center, radius, defect = disk_defect(FourierCurve.circle(1.0, (3, 5)))
    assert defect < 1e-10
    np.testing.assert_allclose(center, [3, 5], atol=1e-10)
    assert radius == pytest.approx(1.0, abs=1e-10)
    assert disk_defect(FourierCurve.ellipse(1.1, 1 / 1.1))[2] == pytest.approx(0.1, abs=0.02)


def test_symmetry_defect():
    e = FourierCurve.ellipse(2, 1, center=(1, -2))
    for d in [(1, 0), (0, 1)]:
        assert symmetry_defect(e, d) < 1e-8
    assert symmetry_defect(FourierCurve.kidney(), (0, 1)) < 1e-8
    assert symmetry_defect(FourierCurve.kidney(), (1, 0)) > 0.05


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(-0.02, 0.02), min_size=3, max_size=3))
def test_symmetry_defect_even_curves(coefs):
    # only cosine x / sine y terms: mirror symmetric about the x axis
    cos = np.zeros((4, 2))
    sin = np.zeros((4, 2))
    cos[1, 0] = sin[1, 1] = 1.0
    for m, a in zip(range(2, 5), coefs):
        if m < 4:
            cos[m, 0] = a
            sin[m, 1] = a
    assert symmetry_defect(FourierCurve(cos, sin), (0, 1)) < 1e-8


def test_convexity_and_diameter():
    assert is_convex(FourierCurve.ellipse(2, 1))
    assert not is_convex(FourierCurve.kidney())
    assert diameter(FourierCurve.ellipse(2, 1).samples(1024)) == pytest.approx(4.0, rel=1e-10)


# ----------------------------------------------------------------------
# ambient fields

def test_ambient_jacobian_matches_finite_differences(rng):
    W = AmbientField.random(rng, 3)
    p = rng.standard_normal((5, 2))
    eps = 1e-6
    for axis in range(2):
        dp = np.zeros(2)
        dp[axis] = eps
        fd = (W(p + dp) - W(p - dp)) / (2 * eps)
        np.testing.assert_allclose(W.jacobian(p)[:, :, axis], fd, atol=1e-7)


def test_ambient_linear_and_constant():
    A = np.array([[1.0, 2.0], [3.0, 4.0]])
    W = AmbientField.linear(A, (0.5, -1))
    p = np.array([[1.0, 1.0], [2.0, -1.0]])
    np.testing.assert_allclose(W(p), p @ A.T + [0.5, -1])
    np.testing.assert_allclose(W.jacobian(p), np.broadcast_to(A, (2, 2, 2)))
    np.testing.assert_allclose(AmbientField.constant((1, 2))(p), [[1, 2], [1, 2]])
