"""Gauss rules on the reference simplex.

The reference n-simplex has vertices 0, e_1, ..., e_n.  Triangle rules use
the collapsed (Stroud conical product) construction, Gauss-Jacobi in the
collapsed direction and Gauss-Legendre in the other, so any exactness
degree is available.
"""

from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import roots_jacobi


@lru_cache(maxsize=None)
def _simplex_rule(dim: int, degree: int):
    npts = max(1, (degree + 2) // 2)
    x, w = leggauss(npts)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    if dim == 1:
        return x[:, None], w
    if dim == 2:
        # weight (1 - a) absorbs the Jacobian of the collapse
        a, wa = roots_jacobi(npts, 1.0, 0.0)
        a = 0.5 * (a + 1.0)
        wa = wa / 4.0
        A, B = np.meshgrid(a, x, indexing="ij")
        WA, WB = np.meshgrid(wa, w, indexing="ij")
        pts = np.column_stack([A.ravel(), (B * (1.0 - A)).ravel()])
        return pts, (WA * WB).ravel()
    raise ValueError(f"no simplex rule for dimension {dim}")


def simplex_quadrature(dim: int, degree: int):
    """Points (nq, dim) and weights (nq,) exact for polynomials of total
    degree ``degree`` on the reference simplex.  Weights sum to 1/dim!."""
    if degree < 0:
        raise ValueError("quadrature degree must be nonnegative")
    pts, wts = _simplex_rule(dim, int(degree))
    return pts.copy(), wts.copy()


def barycentric(points: np.ndarray) -> np.ndarray:
    """Barycentric coordinates (nq, dim + 1) of reference points."""
    points = np.atleast_2d(points)
    return np.column_stack([1.0 - points.sum(axis=1), points])


def barycentric_gradients(dim: int) -> np.ndarray:
    """Constant gradients of the barycentric coordinates, shape (dim + 1, dim)."""
    return np.vstack([-np.ones(dim), np.eye(dim)])
