"""Exact hypersurfaces, normal projection, and degree-s interpolated surfaces.

A :class:`GeometryMap` carries one polynomial chart per top simplex of a
triangulation.  The chart sends the reference simplex onto the approximating
surface M_h; composing it with the normal projection ``a`` of the exact
surface M gives the parametrization used for every pulled-back integral, so
the inverse of ``a`` restricted to M_h is never needed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg as sla

from .mesh import SimplicialComplex
from .quadrature import barycentric, barycentric_gradients


class GeometryError(ValueError):
    """Raised when an approximating surface leaves the tubular neighborhood."""


@dataclass(frozen=True)
class ExactSurface:
    """Evaluators for a closed hypersurface given by a signed distance.

    All callables act on point arrays of shape (npts, ambient_dim).
    ``projection_jacobian`` returns the derivative of the normal projection,
    shape (npts, ambient_dim, ambient_dim).
    """

    name: str
    ambient_dim: int
    distance: Callable[[np.ndarray], np.ndarray]
    normal: Callable[[np.ndarray], np.ndarray]
    projection: Callable[[np.ndarray], np.ndarray]
    projection_jacobian: Callable[[np.ndarray], np.ndarray]
    reach: float = 1.0


def _radial_surface(name: str, dim: int) -> ExactSurface:
    def radius(x):
        r = np.linalg.norm(x, axis=-1)
        if np.any(r == 0.0):
            raise GeometryError("the origin lies outside the tubular neighborhood")
        return r

    def distance(x):
        return radius(np.asarray(x, dtype=float)) - 1.0

    def normal(x):
        x = np.asarray(x, dtype=float)
        return x / radius(x)[..., None]

    def jacobian(x):
        x = np.asarray(x, dtype=float)
        r = radius(x)
        nu = x / r[..., None]
        eye = np.eye(dim)
        return (eye - nu[..., :, None] * nu[..., None, :]) / r[..., None, None]

    return ExactSurface(name, dim, distance, normal, normal, jacobian, reach=1.0)


def make_circle_geometry() -> ExactSurface:
    """Unit circle in R^2: distance |x| - 1, normal and projection x/|x|."""
    return _radial_surface("circle", 2)


def make_sphere_geometry() -> ExactSurface:
    """Unit sphere in R^3."""
    return _radial_surface("sphere", 3)


def exact_surface_for(mesh: SimplicialComplex) -> ExactSurface | None:
    if mesh.surface == "circle":
        return make_circle_geometry()
    if mesh.surface == "sphere":
        return make_sphere_geometry()
    return None


def lagrange_shape(dim: int, s: int, points: np.ndarray):
    """Lagrange shape functions of degree s on the reference simplex.

    Node order: vertices, then edge midpoints in ``combinations(range(dim+1), 2)``
    order.  Returns values (nq, nnodes) and reference gradients (nq, nnodes, dim).
    """
    lam = barycentric(points)
    g = barycentric_gradients(dim)
    if s == 1:
        vals = lam
        grads = np.broadcast_to(g, (len(lam),) + g.shape).copy()
        return vals, grads
    if s == 2:
        pairs = _edge_pairs(dim)
        vals = [lam[:, i] * (2.0 * lam[:, i] - 1.0) for i in range(dim + 1)]
        grads = [(4.0 * lam[:, i] - 1.0)[:, None] * g[i] for i in range(dim + 1)]
        for i, j in pairs:
            vals.append(4.0 * lam[:, i] * lam[:, j])
            grads.append(4.0 * (lam[:, i][:, None] * g[j] + lam[:, j][:, None] * g[i]))
        return np.column_stack(vals), np.stack(grads, axis=1)
    raise ValueError(f"unsupported interpolation degree s={s}")


def _edge_pairs(dim):
    return [(0, 1)] if dim == 1 else [(0, 1), (0, 2), (1, 2)]


class GeometryMap:
    """Element charts of an approximating surface plus the exact surface.

    ``exact=None`` means the triangulated domain is itself the manifold
    (flat meshes); then the pullback to the exact geometry is the identity.
    """

    def __init__(self, mesh: SimplicialComplex, exact: ExactSurface | None = None,
                 s: int = 1, nodes: np.ndarray | None = None):
        if s not in (1, 2):
            raise ValueError("interpolation degree s must be 1 or 2")
        self.mesh = mesh
        self.exact = exact
        self.s = s
        if nodes is None:
            nodes = mesh.vertices[mesh.cells]
        self.nodes = np.asarray(nodes, dtype=float)
        self.nodes.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.mesh.dim

    @property
    def is_flat(self) -> bool:
        return self.exact is None

    @property
    def is_curved(self) -> bool:
        """True when pulled-back integrands are non-polynomial."""
        return self.exact is not None or self.s > 1

    def chart(self, points: np.ndarray) -> np.ndarray:
        """Approximate-surface points, shape (nelem, nq, ambient)."""
        vals, _ = lagrange_shape(self.dim, self.s, points)
        return np.einsum("qj,eja->eqa", vals, self.nodes)

    def chart_jacobian(self, points: np.ndarray) -> np.ndarray:
        """Derivative of the element charts, shape (nelem, nq, ambient, dim)."""
        _, grads = lagrange_shape(self.dim, self.s, points)
        return np.einsum("qjd,eja->eqad", grads, self.nodes)

    def exact_points(self, points: np.ndarray) -> np.ndarray:
        x = self.chart(points)
        if self.exact is None:
            return x
        return self.exact.projection(x.reshape(-1, x.shape[-1])).reshape(x.shape)

    def exact_jacobian(self, points: np.ndarray) -> np.ndarray:
        """Derivative of ``a`` composed with the charts."""
        jac = self.chart_jacobian(points)
        if self.exact is None:
            return jac
        x = self.chart(points)
        da = self.exact.projection_jacobian(x.reshape(-1, x.shape[-1])).reshape(x.shape + (x.shape[-1],))
        return np.einsum("eqab,eqbd->eqad", da, jac)

    def approx_normals(self, points: np.ndarray) -> np.ndarray:
        """Unit normals of M_h oriented like the mesh (outward for closed meshes)."""
        jac = self.chart_jacobian(points)
        if self.dim == 1:
            t = jac[..., 0]
            nu = np.stack([t[..., 1], -t[..., 0]], axis=-1)
        else:
            nu = np.cross(jac[..., 0], jac[..., 1])
        return nu / np.linalg.norm(nu, axis=-1, keepdims=True)


def interpolate_surface(mesh: SimplicialComplex, exact: ExactSurface, s: int,
                        check_points: int = 25) -> GeometryMap:
    """Degree-s Lagrange interpolation of the normal projection over each simplex.

    Midpoint nodes are computed once per global edge, so charts sharing an
    edge agree exactly at their common nodes.
    """
    if s not in (1, 2):
        raise ValueError("interpolation degree s must be 1 or 2")
    if mesh.ambient_dim != exact.ambient_dim or mesh.ambient_dim != mesh.dim + 1:
        raise ValueError("mesh must be a hypersurface mesh in the exact surface's ambient space")
    verts = mesh.vertices
    nodes = verts[mesh.cells]
    if s == 2:
        edges = mesh.simplices[1]
        mids = exact.projection(0.5 * (verts[edges[:, 0]] + verts[edges[:, 1]]))
        index, _ = mesh.element_faces(1)
        # element_faces(1) enumerates local pairs in combinations order
        nodes = np.concatenate([nodes, mids[index]], axis=1)
    geom = GeometryMap(mesh, exact, s, nodes)
    _check_tubular(geom, check_points)
    return geom


def sample_points(dim: int, count: int = 25) -> np.ndarray:
    """At least ``count`` lattice points covering the reference simplex."""
    if dim == 1:
        return np.linspace(0.0, 1.0, max(count, 2))[:, None]
    m = 1
    while (m + 1) * (m + 2) // 2 < count:
        m += 1
    pts = [(i / m, j / m) for i in range(m + 1) for j in range(m + 1 - i)]
    return np.array(pts)


def _check_tubular(geom: GeometryMap, count: int):
    pts = sample_points(geom.dim, count)
    x = geom.chart(pts)
    dist = geom.exact.distance(x.reshape(-1, x.shape[-1])).reshape(x.shape[:2])
    bad = np.flatnonzero(np.abs(dist).max(axis=1) >= 0.5 * geom.exact.reach)
    if len(bad):
        raise GeometryError(f"element {int(bad[0])} leaves the tubular neighborhood")
    nu = geom.exact.normal(x.reshape(-1, x.shape[-1])).reshape(x.shape)
    nu_h = geom.approx_normals(pts)
    flipped = np.flatnonzero((np.einsum("eqa,eqa->eq", nu, nu_h) <= 0.0).any(axis=1))
    if len(flipped):
        raise GeometryError(f"element {int(flipped[0])} is not transverse to the normal fibers")


def geometric_errors(geom: GeometryMap, samples: int = 25) -> tuple[float, float]:
    """Sup-norms of the distance and of the normal mismatch, by dense sampling."""
    if geom.exact is None:
        return 0.0, 0.0
    pts = sample_points(geom.dim, samples)
    x = geom.chart(pts)
    flat = x.reshape(-1, x.shape[-1])
    delta = np.abs(geom.exact.distance(flat)).max()
    nu = geom.exact.normal(flat).reshape(x.shape)
    nu_err = np.linalg.norm(nu - geom.approx_normals(pts), axis=-1).max()
    return float(delta), float(nu_err)


def pullback_mass_matrix(space, geom: GeometryMap | None = None):
    """Gram matrix of the basis pulled back to the exact surface."""
    from .operators import mass_matrix

    if geom is not None and geom is not space.geometry:
        raise ValueError("space was built on a different geometry")
    return mass_matrix(space, exact=True)


def estimate_I_minus_Jh(mass, pullback_mass) -> float:
    """Operator norm of I - J_h in the W_h inner product.

    J_h is self-adjoint in W_h with matrix M^{-1} M~, so the norm is
    max |1 - lambda| over the generalized eigenvalues of M~ v = lambda M v.
    """
    a = _dense(pullback_mass)
    b = _dense(mass)
    if a.shape != b.shape:
        raise ValueError("mass matrices must have matching shapes")
    lam = sla.eigh(0.5 * (a + a.T), 0.5 * (b + b.T), eigvals_only=True)
    return float(np.max(np.abs(1.0 - lam)))


def _dense(m):
    return m.toarray() if hasattr(m, "toarray") else np.asarray(m, dtype=float)
