"""Finite element spaces of polynomial differential forms.

Basis forms are written in barycentric coordinates of each simplex, so their
components in the reference coordinates dxi^1, ..., dxi^n are the same for
every element up to the vertex permutation recorded in the DOF table.  That
is also the representation on curved charts and, after composing with the
normal projection, on the exact surface: pullbacks compose.

Supported spaces:

* ``trimmed``, r = 1: Whitney forms, every degree k.
* ``full``, r = 1: Lagrange P1 for k = 0; discontinuous linear for k = n.
* ``trimmed``, r = 2, k = n - 1: quadratic Lagrange on curves; the
  degree-2 trimmed 1-forms (Raviart-Thomas/Nedelec type) on surfaces.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb, factorial

import numpy as np

from .geometry import GeometryMap
from .mesh import SimplicialComplex
from .quadrature import barycentric, barycentric_gradients

FAMILIES = ("trimmed", "full")


class UnsupportedSpaceError(ValueError):
    pass


def _wedge(u, v):
    return u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]


def _kind(n: int, k: int, r: int, family: str) -> str:
    if family not in FAMILIES:
        raise UnsupportedSpaceError(f"unknown family {family!r}")
    if not 0 <= k <= n:
        raise UnsupportedSpaceError(f"form degree k={k} outside 0..{n}")
    if r == 1 and family == "trimmed":
        return "whitney"
    if r == 1 and family == "full":
        if k == 0:
            return "whitney"
        if k == n:
            return "p1disc"
    if r == 2 and k == n - 1 and (family == "trimmed" or (n == 1 and k == 0)):
        # P_2^- Lambda^0 = P_2 Lambda^0, so the curve case accepts both names
        return "p2lagrange" if n == 1 else "p2trimmed1"
    raise UnsupportedSpaceError(f"unsupported space: family={family}, r={r}, k={k}, n={n}")


class FormSpace:
    """Finite element space of k-forms over a mesh.

    Parameters
    ----------
    mesh : SimplicialComplex
    k : int
        Form degree.
    r : int
        Polynomial degree within the family.
    family : {"trimmed", "full"}
    geometry : GeometryMap, optional
        Element charts; defaults to the mesh itself being the manifold.
    quad_degree : int, optional
        Overrides the default exactness degree (2r + 2 on affine elements,
        2r + 4 on curved ones).
    """

    def __init__(self, mesh: SimplicialComplex, k: int, r: int = 1, family: str = "trimmed",
                 geometry: GeometryMap | None = None, quad_degree: int | None = None):
        self.mesh = mesh
        self.n = mesh.dim
        self.k = k
        self.r = r
        self.family = family
        self.kind = _kind(self.n, k, r, family)
        if geometry is None:
            geometry = GeometryMap(mesh)
        if geometry.mesh is not mesh:
            raise ValueError("geometry belongs to a different mesh")
        self.geometry = geometry
        self.ncomp = comb(self.n, k)
        self.ncomp_next = comb(self.n, k + 1) if k < self.n else 0
        self.poly_degree = 2 if self.kind in ("p2lagrange", "p2trimmed1") else 1
        if quad_degree is None:
            quad_degree = 2 * self.poly_degree + (4 if geometry.is_curved else 2)
        self.quad_degree = int(quad_degree)
        self._build_dofs()
        self._cache = {}

    def __repr__(self):
        return (f"FormSpace(k={self.k}, r={self.r}, family={self.family!r}, "
                f"dofs={self.dof_count}, kind={self.kind})")

    def _build_dofs(self):
        mesh, n, k = self.mesh, self.n, self.k
        nelem = len(mesh.cells)
        if self.kind == "whitney":
            index, local = mesh.element_faces(k)
            self.elem_dofs = index
            self._local = local
            self.dof_count = len(mesh.simplices[k])
        elif self.kind == "p1disc":
            self.elem_dofs = np.arange(nelem * (n + 1)).reshape(nelem, n + 1)
            self._local = None
            self.dof_count = nelem * (n + 1)
        elif self.kind == "p2lagrange":
            nv = len(mesh.vertices)
            self.elem_dofs = np.column_stack([mesh.cells, nv + np.arange(nelem)])
            self._local = None
            self.dof_count = nv + nelem
        else:
            index, local = mesh.element_faces(1)
            ne = len(mesh.simplices[1])
            edge_dofs = np.stack([2 * index, 2 * index + 1], axis=-1).reshape(nelem, -1)
            interior = 2 * ne + np.stack([2 * np.arange(nelem), 2 * np.arange(nelem) + 1], axis=-1)
            self.elem_dofs = np.concatenate([edge_dofs, interior], axis=1)
            self._local = local
            self.dof_count = 2 * ne + 2 * nelem
        self.elem_dofs.setflags(write=False)

    @property
    def local_dim(self) -> int:
        return self.elem_dofs.shape[1]

    def evaluate(self, points: np.ndarray):
        """Basis forms and their exterior derivatives at reference points.

        Returns ``(vals, dvals)`` with shapes (nelem, nq, nloc, ncomp) and
        (nelem, nq, nloc, ncomp_next), components in reference coordinates.
        """
        lam = barycentric(points)
        g = barycentric_gradients(self.n)
        nelem = len(self.mesh.cells)
        nq = len(lam)
        n = self.n
        if self.kind == "whitney":
            vals, dvals = _whitney(self.k, n, lam, g, self._local)
        elif self.kind == "p1disc":
            top = float(factorial(n))
            vals = np.broadcast_to(top * lam[None, :, :, None], (nelem, nq, n + 1, 1))
            dvals = np.zeros((nelem, nq, n + 1, 0))
        elif self.kind == "p2lagrange":
            v = [lam[:, 0] * (2 * lam[:, 0] - 1), lam[:, 1] * (2 * lam[:, 1] - 1), 4 * lam[:, 0] * lam[:, 1]]
            dv = [(4 * lam[:, 0] - 1) * g[0, 0], (4 * lam[:, 1] - 1) * g[1, 0],
                  4 * (lam[:, 1] * g[0, 0] + lam[:, 0] * g[1, 0])]
            vals = np.broadcast_to(np.stack(v, axis=1)[None, :, :, None], (nelem, nq, 3, 1))
            dvals = np.broadcast_to(np.stack(dv, axis=1)[None, :, :, None], (nelem, nq, 3, 1))
        else:
            a, b = self._local[..., 0], self._local[..., 1]
            # edge dofs: lam_a phi_ab and lam_b phi_ab, with (a, b) the stored edge order
            c = np.stack([a, b], axis=-1).reshape(nelem, -1)
            aa = np.repeat(a, 2, axis=1)
            bb = np.repeat(b, 2, axis=1)
            # interior dofs: lam_1 phi_02 and lam_2 phi_01
            ci = np.broadcast_to(np.array([1, 2]), (nelem, 2))
            ai = np.broadcast_to(np.array([0, 0]), (nelem, 2))
            bi = np.broadcast_to(np.array([2, 1]), (nelem, 2))
            c = np.concatenate([c, ci], axis=1)
            aa = np.concatenate([aa, ai], axis=1)
            bb = np.concatenate([bb, bi], axis=1)
            vals, dvals = _weighted_whitney1(lam, g, c, aa, bb)
        return vals, dvals

    def cached(self, key, factory):
        if key not in self._cache:
            self._cache[key] = factory()
        return self._cache[key]

    def zero(self) -> "Cochain":
        return Cochain(self, np.zeros(self.dof_count))


def _whitney(k, n, lam, g, local):
    nelem = local.shape[0]
    nq = len(lam)
    if k == 0:
        a = local[..., 0]
        vals = np.transpose(lam[:, a], (1, 0, 2))[..., None]
        dvals = np.transpose(g[a], (0, 1, 2))[:, None, :, :]
        dvals = np.broadcast_to(dvals, (nelem, nq) + dvals.shape[2:])
        if n == 0:
            dvals = np.zeros((nelem, nq, a.shape[1], 0))
        return vals, dvals
    if k == 1:
        a, b = local[..., 0], local[..., 1]
        la = np.transpose(lam[:, a], (1, 0, 2))[..., None]
        lb = np.transpose(lam[:, b], (1, 0, 2))[..., None]
        vals = la * g[b][:, None] - lb * g[a][:, None]
        if n == 1:
            return vals, np.zeros(vals.shape[:3] + (0,))
        dvals = 2.0 * _wedge(g[a], g[b])[:, None, :, None]
        return vals, np.broadcast_to(dvals, vals.shape[:3] + (1,))
    if k == 2 and n == 2:
        a, b, c = local[..., 0], local[..., 1], local[..., 2]
        la, lb, lc = (np.transpose(lam[:, i], (1, 0, 2)) for i in (a, b, c))
        vals = 2.0 * (la * _wedge(g[b], g[c])[:, None] - lb * _wedge(g[a], g[c])[:, None]
                      + lc * _wedge(g[a], g[b])[:, None])
        return vals[..., None], np.zeros(vals.shape + (0,))
    raise UnsupportedSpaceError(f"no Whitney forms of degree {k} in dimension {n}")


def _weighted_whitney1(lam, g, c, a, b):
    """Values and derivatives of lam_c (lam_a dlam_b - lam_b dlam_a) in 2-d."""
    lc = np.transpose(lam[:, c], (1, 0, 2))[..., None]
    la = np.transpose(lam[:, a], (1, 0, 2))[..., None]
    lb = np.transpose(lam[:, b], (1, 0, 2))[..., None]
    ga, gb, gc = g[a][:, None], g[b][:, None], g[c][:, None]
    vals = lc * (la * gb - lb * ga)
    dvals = (la[..., 0] * _wedge(gc, gb) - lb[..., 0] * _wedge(gc, ga)
             + 2.0 * lc[..., 0] * _wedge(ga, gb))
    return vals, dvals[..., None]


@dataclass
class Cochain:
    """Coefficient vector of a discrete form in a FormSpace basis."""

    space: FormSpace
    coefficients: np.ndarray

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        if self.coefficients.shape != (self.space.dof_count,):
            raise ValueError(
                f"expected {self.space.dof_count} coefficients, got {self.coefficients.shape}")

    def _check(self, other):
        if other.space is not self.space:
            raise ValueError("cochains live in different spaces")

    def __add__(self, other):
        self._check(other)
        return Cochain(self.space, self.coefficients + other.coefficients)

    def __sub__(self, other):
        self._check(other)
        return Cochain(self.space, self.coefficients - other.coefficients)

    def __mul__(self, scalar):
        return Cochain(self.space, scalar * self.coefficients)

    __rmul__ = __mul__

    def __neg__(self):
        return Cochain(self.space, -self.coefficients)

    def norm(self) -> float:
        """W_h norm through the space's mass matrix."""
        from .operators import mass_matrix

        c = self.coefficients
        return float(np.sqrt(max(c @ (mass_matrix(self.space) @ c), 0.0)))


def build_form_space(mesh, k, r=1, family="trimmed", geometry=None, quad_degree=None) -> FormSpace:
    return FormSpace(mesh, k, r, family, geometry, quad_degree)
