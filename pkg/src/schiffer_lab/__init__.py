"""Numerical laboratory for Laplace eigenvalue shape calculus on planar curves."""

from .bessel import BC, bessel_j, bessel_jp, bessel_root, disk_spectrum, lambda_disk
from .curve_geometry import FourierCurve, AmbientField, frame, enclosed_area, rescale_to_area
from .fem import Mesh, EigenPair, triangulate, solve_eigs

__all__ = [
    "BC", "bessel_j", "bessel_jp", "bessel_root", "disk_spectrum", "lambda_disk",
    "FourierCurve", "AmbientField", "frame", "enclosed_area", "rescale_to_area",
    "Mesh", "EigenPair", "triangulate", "solve_eigs",
]
