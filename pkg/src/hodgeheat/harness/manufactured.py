"""Registry of smooth exact solutions of the Hodge heat equation.

Every case decays like a single Laplace eigenmode plus a constant harmonic
part ``w0``: u(t) = w0 + exp(-lam t) v with -Lap v = lam v, so the source is
zero and the same evaluators serve elliptic studies (at t = 0, with data
-Lap u) and parabolic ones.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..parabolic import ExactSolution


class UnsupportedCaseError(ValueError):
    pass


@dataclass
class ManufacturedCase:
    geometry: str
    k: int
    exact: ExactSolution
    rate: float
    boundary_trace: object = None  # callable (x, t) for the top-degree trace on flat domains


def _theta(x):
    return np.arctan2(x[:, 1], x[:, 0])


def _square(k, w0):
    pi = np.pi
    lam = 2 * pi ** 2

    def shape(x):
        return np.cos(pi * x[:, 0]) * np.cos(pi * x[:, 1])

    def grad(x):
        return np.column_stack([-pi * np.sin(pi * x[:, 0]) * np.cos(pi * x[:, 1]),
                                -pi * np.cos(pi * x[:, 0]) * np.sin(pi * x[:, 1])])

    def rotated(x):
        g = grad(x)
        return np.column_stack([g[:, 1], -g[:, 0]])

    e = lambda t: np.exp(-lam * t)  # noqa: E731
    if k == 0:
        # Neumann data vanish on the unit square, matching the natural condition
        exact = ExactSolution(
            u=lambda x, t: w0 + e(t) * shape(x),
            u_t=lambda x, t: -lam * e(t) * shape(x),
            minus_laplacian=lambda x, t: lam * e(t) * shape(x),
            harmonic_part=lambda x, t: np.full(len(x), w0),
            du=lambda x, t: e(t) * grad(x))
        return ManufacturedCase("square", 0, exact, lam)
    if k == 2:
        if w0:
            raise UnsupportedCaseError("no harmonic 2-forms on the square")
        # sigma = (u_y, -u_x) as a covector; d sigma = -Lap u
        exact = ExactSolution(
            u=lambda x, t: e(t) * shape(x),
            u_t=lambda x, t: -lam * e(t) * shape(x),
            minus_laplacian=lambda x, t: lam * e(t) * shape(x),
            harmonic_part=lambda x, t: np.zeros(len(x)),
            sigma=lambda x, t: e(t) * rotated(x),
            dsigma=lambda x, t: lam * e(t) * shape(x))
        return ManufacturedCase("square", 2, exact, lam, lambda x, t: e(t) * shape(x))
    raise UnsupportedCaseError(f"no square case for k={k}")


def _circle(k, w0, m):
    lam = float(m * m)
    e = lambda t: np.exp(-lam * t)  # noqa: E731
    cos = lambda x: np.cos(m * _theta(x))  # noqa: E731
    sin = lambda x: np.sin(m * _theta(x))  # noqa: E731
    common = dict(u=lambda x, t: w0 + e(t) * cos(x),
                  u_t=lambda x, t: -lam * e(t) * cos(x),
                  minus_laplacian=lambda x, t: lam * e(t) * cos(x),
                  harmonic_part=lambda x, t: np.full(len(x), w0))
    if k == 0:
        exact = ExactSolution(**common, du=lambda x, t: -m * e(t) * sin(x))
    elif k == 1:
        # densities with respect to arc length; sigma = -u'
        exact = ExactSolution(**common, sigma=lambda x, t: m * e(t) * sin(x),
                              dsigma=lambda x, t: lam * e(t) * cos(x))
    else:
        raise UnsupportedCaseError(f"no circle case for k={k}")
    return ManufacturedCase("circle", k, exact, lam)


def _sphere(k, w0):
    lam = 2.0
    e = lambda t: np.exp(-lam * t)  # noqa: E731

    def z(x):
        return x[:, 2] / np.linalg.norm(x, axis=1)

    def tangent_grad(x):
        nu = x / np.linalg.norm(x, axis=1, keepdims=True)
        return np.array([0.0, 0.0, 1.0]) - z(x)[:, None] * nu

    common = dict(u=lambda x, t: w0 + e(t) * z(x),
                  u_t=lambda x, t: -lam * e(t) * z(x),
                  minus_laplacian=lambda x, t: lam * e(t) * z(x),
                  harmonic_part=lambda x, t: np.full(len(x), w0))
    if k == 0:
        exact = ExactSolution(**common, du=lambda x, t: e(t) * tangent_grad(x))
    elif k == 2:
        def sigma(x, t):
            nu = x / np.linalg.norm(x, axis=1, keepdims=True)
            return e(t) * np.cross(np.array([0.0, 0.0, 1.0]), nu)
        exact = ExactSolution(**common, sigma=sigma, dsigma=lambda x, t: lam * e(t) * z(x))
    else:
        raise UnsupportedCaseError(f"no sphere case for k={k}")
    return ManufacturedCase("sphere", k, exact, lam)


def manufactured_case(geometry: str, k: int, mode: int = 1, harmonic: float = 0.0) -> ManufacturedCase:
    if geometry == "square":
        return _square(k, harmonic)
    if geometry == "circle":
        return _circle(k, harmonic, mode)
    if geometry == "sphere":
        return _sphere(k, harmonic)
    raise UnsupportedCaseError(f"unknown geometry {geometry!r}")
