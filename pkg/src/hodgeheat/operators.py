"""Assembly of derivative, mass, mixed and stiffness matrices, load vectors
and L2 error norms.

Every integral is computed in the reference coordinates of each element.
The metric is G = J^T J where J is the Jacobian of either the approximating
chart (``exact=False``) or the chart followed by the normal projection
(``exact=True``); the form inner product on k-forms then uses the induced
metric on k-covectors and the volume factor sqrt(det G).

Evaluators of exact forms take ambient points of shape (npts, ambient_dim):

* 0-forms return scalar values;
* top-degree forms return the density with respect to the volume form;
* 1-forms on surfaces (and on flat 2-d domains) return ambient covectors.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .quadrature import simplex_quadrature
from .spaces import Cochain, FormSpace


class IncompatibleSpacesError(ValueError):
    pass


# -- pointwise geometry -----------------------------------------------------

def _jacobian(space: FormSpace, pts, exact: bool):
    geom = space.geometry
    return geom.exact_jacobian(pts) if exact else geom.chart_jacobian(pts)


def _metric(jac):
    g = np.einsum("xqad,xqae->xqde", jac, jac)
    return g, np.linalg.det(g)


def _orientation(space: FormSpace, pts, jac):
    """+1/-1 per point: agreement of the chart with the manifold orientation."""
    n, amb = space.n, jac.shape[2]
    if amb == n:
        return np.sign(np.linalg.det(jac))
    geom = space.geometry
    if geom.exact is None:
        return np.ones(jac.shape[:2])
    x = geom.chart(pts)
    nu = geom.exact.normal(x.reshape(-1, amb)).reshape(x.shape)
    # compare the chart-induced normal with the outward normal of M
    if n == 1:
        t = jac[..., 0]
        nu_chart = np.stack([t[..., 1], -t[..., 0]], axis=-1)
    else:
        nu_chart = np.cross(jac[..., 0], jac[..., 1])
    return np.sign(np.einsum("eqa,eqa->eq", nu_chart, nu))


def _covector_weight(g, det, deg, n):
    """Inner product matrix on deg-covector components, shape (..., c, c)."""
    if deg == 0:
        return np.ones(det.shape + (1, 1))
    if deg == n:
        return (1.0 / det)[..., None, None]
    return np.linalg.inv(g)


def _scatter(local, rows, cols, shape):
    r = np.broadcast_to(rows[:, :, None], local.shape).ravel()
    c = np.broadcast_to(cols[:, None, :], local.shape).ravel()
    return sp.coo_matrix((local.ravel(), (r, c)), shape=shape).tocsr()


def _gram(space, deg, vals_a, vals_b, jac, wts):
    g, det = _metric(jac)
    weight = _covector_weight(g, det, deg, space.n)
    meas = np.sqrt(det) * wts[None, :]
    return np.einsum("eqic,eqcd,eqjd,eq->eij", vals_a, weight, vals_b, meas)


# -- matrices -----------------------------------------------------------------

def mass_matrix(space: FormSpace, exact: bool = False) -> sp.csr_matrix:
    """Gram matrix of the basis; ``exact=True`` pulls it back to the exact surface."""
    if exact and space.geometry.exact is None:
        exact = False

    def build():
        pts, wts = simplex_quadrature(space.n, space.quad_degree)
        vals, _ = space.evaluate(pts)
        jac = _jacobian(space, pts, exact)
        local = _gram(space, space.k, vals, vals, jac, wts)
        m = _scatter(local, space.elem_dofs, space.elem_dofs, (space.dof_count,) * 2)
        return (0.5 * (m + m.T)).tocsr()

    return space.cached(("mass", exact), build)


def stiffness_matrix(space: FormSpace, next_space: FormSpace | None = None) -> sp.csr_matrix:
    """K with entries <d phi_i, d phi_j>; zero for top-degree forms."""
    if next_space is not None:
        exterior_derivative_matrix(space, next_space)
    if space.k == space.n:
        return sp.csr_matrix((space.dof_count, space.dof_count))

    def build():
        pts, wts = simplex_quadrature(space.n, space.quad_degree)
        _, dvals = space.evaluate(pts)
        jac = _jacobian(space, pts, False)
        local = _gram(space, space.k + 1, dvals, dvals, jac, wts)
        k = _scatter(local, space.elem_dofs, space.elem_dofs, (space.dof_count,) * 2)
        return (0.5 * (k + k.T)).tocsr()

    return space.cached(("stiffness",), build)


def mixed_matrix(sigma_space: FormSpace, u_space: FormSpace) -> sp.csr_matrix:
    """B of shape (n_u, n_sigma) with B[l, i] = <d psi_i, phi_l>, so B = M_u D."""
    exterior_derivative_matrix(sigma_space, u_space)

    def build():
        # same rule as the u-space mass matrix, so B = M D holds to rounding
        pts, wts = simplex_quadrature(u_space.n, u_space.quad_degree)
        vals, _ = u_space.evaluate(pts)
        _, dvals = sigma_space.evaluate(pts)
        jac = _jacobian(u_space, pts, False)
        local = _gram(u_space, u_space.k, vals, dvals, jac, wts)
        return _scatter(local, u_space.elem_dofs, sigma_space.elem_dofs,
                        (u_space.dof_count, sigma_space.dof_count))

    return u_space.cached(("mixed", id(sigma_space)), build)


def exterior_derivative_matrix(domain: FormSpace, codomain: FormSpace) -> sp.csr_matrix:
    """Coefficients of d(basis) in the codomain basis, shape (n_codomain, n_domain).

    Each element solves a small projection in reference coordinates; the
    pair is rejected unless d maps the domain into the codomain exactly.
    """
    if domain.mesh is not codomain.mesh or codomain.k != domain.k + 1:
        raise IncompatibleSpacesError("codomain must be the degree k+1 space on the same mesh")

    def build():
        deg = 2 * max(domain.poly_degree, codomain.poly_degree) + 2
        pts, wts = simplex_quadrature(domain.n, deg)
        vals_c, _ = codomain.evaluate(pts)
        _, dvals = domain.evaluate(pts)
        gram = np.einsum("eqic,eqjc,q->eij", vals_c, vals_c, wts)
        rhs = np.einsum("eqic,eqjc,q->eij", vals_c, dvals, wts)
        coef = np.linalg.solve(gram, rhs)
        residual = np.einsum("eqic,eij->eqjc", vals_c, coef) - dvals
        scale = max(1.0, float(np.abs(dvals).max(initial=0.0)))
        if np.abs(residual).max(initial=0.0) > 1e-9 * scale:
            raise IncompatibleSpacesError(
                f"d does not map {domain!r} into {codomain!r}")
        snapped = np.rint(coef)
        coef = np.where(np.abs(coef - snapped) < 1e-10, snapped, coef)
        rows = np.broadcast_to(codomain.elem_dofs[:, :, None], coef.shape).ravel()
        cols = np.broadcast_to(domain.elem_dofs[:, None, :], coef.shape).ravel()
        data = coef.ravel()
        # shared dofs see the same entry from every element; keep one copy
        key = rows.astype(np.int64) * domain.dof_count + cols
        _, first = np.unique(key, return_index=True)
        keep = first[data[first] != 0.0]
        return sp.csr_matrix((data[keep], (rows[keep], cols[keep])),
                             shape=(codomain.dof_count, domain.dof_count))

    return domain.cached(("d", id(codomain)), build)


# -- data ------------------------------------------------------------------

def _error_degree(space: FormSpace):
    return space.quad_degree + 4


def pullback_evaluator(space: FormSpace, f, deg: int, pts, exact: bool = True):
    """Reference-coordinate components of an exact deg-form at element points."""
    geom = space.geometry
    if exact and geom.exact is None:
        exact = False
    x = geom.exact_points(pts) if exact else geom.chart(pts)
    nelem, nq, amb = x.shape
    vals = np.asarray(f(x.reshape(-1, amb)), dtype=float)
    if deg == 0:
        return vals.reshape(nelem, nq, 1)
    jac = _jacobian(space, pts, exact)
    if deg == space.n:
        _, det = _metric(jac)
        return (vals.reshape(nelem, nq) * np.sqrt(det) * _orientation(space, pts, jac))[..., None]
    if deg == 1:
        return np.einsum("eqad,eqa->eqd", jac, vals.reshape(nelem, nq, amb))
    raise ValueError(f"cannot pull back a {deg}-form in dimension {space.n}")


def load_vector(space: FormSpace, f, exact: bool = True, degree: int | None = None) -> np.ndarray:
    """b_i = <f, i_h phi_i> integrated on the exact surface (or M_h if not exact)."""
    if exact and space.geometry.exact is None:
        exact = False
    pts, wts = simplex_quadrature(space.n, degree or _error_degree(space))
    vals, _ = space.evaluate(pts)
    fvals = pullback_evaluator(space, f, space.k, pts, exact)
    jac = _jacobian(space, pts, exact)
    local = _gram(space, space.k, vals, fvals[:, :, None, :], jac, wts)[..., 0]
    return np.bincount(space.elem_dofs.ravel(), weights=local.ravel(), minlength=space.dof_count)


def _mass_solver(space: FormSpace, exact: bool):
    return space.cached(("mass_lu", exact), lambda: splu(mass_matrix(space, exact).tocsc()))


def project_data(space: FormSpace, f) -> Cochain:
    """L2 projection onto the discrete space through the pulled-back inner product.

    Solves M~ c = b with M~ the pullback mass matrix, which makes the map a
    left inverse of the inclusion.  The load uses the mass matrix's rule
    for the same reason.
    """
    b = load_vector(space, f, degree=space.quad_degree)
    c = _mass_solver(space, True).solve(b)
    res = np.linalg.norm(mass_matrix(space, True) @ c - b)
    if not np.isfinite(res) or res > 1e-8 * max(1.0, np.linalg.norm(b)):
        raise np.linalg.LinAlgError(f"projection solve failed, residual {res:.3e}")
    return Cochain(space, c)


def adjoint_inclusion(space: FormSpace, f) -> Cochain:
    """Adjoint of the inclusion: M c = b with the approximate-surface mass M."""
    b = load_vector(space, f, degree=space.quad_degree)
    return Cochain(space, _mass_solver(space, False).solve(b))


def l2_error(space: FormSpace, coefficients, f=None, derivative: bool = False,
             degree: int | None = None) -> float:
    """L2 norm on the exact surface of i_h(u_h) - f, or of d(i_h u_h) - df.

    ``f=None`` measures the discrete form alone.
    """
    coefficients = np.asarray(getattr(coefficients, "coefficients", coefficients), dtype=float)
    exact = space.geometry.exact is not None
    pts, wts = simplex_quadrature(space.n, degree or _error_degree(space))
    vals, dvals = space.evaluate(pts)
    deg = space.k + 1 if derivative else space.k
    if deg > space.n:
        raise ValueError("top-degree forms have no derivative")
    basis = dvals if derivative else vals
    uh = np.einsum("eqic,ei->eqc", basis, coefficients[space.elem_dofs])
    if f is not None:
        uh = uh - pullback_evaluator(space, f, deg, pts, exact)
    jac = _jacobian(space, pts, exact)
    g, det = _metric(jac)
    weight = _covector_weight(g, det, deg, space.n)
    dens = np.einsum("eqc,eqcd,eqd->eq", uh, weight, uh) * np.sqrt(det)
    return float(np.sqrt(max((dens * wts).sum(), 0.0)))


def boundary_trace_load(sigma_space: FormSpace, g) -> np.ndarray:
    """Boundary term -oint g (tau_i . t) ds of the first mixed equation.

    Needed when the top-degree unknown has nonzero boundary trace on a flat
    2-d domain; ``g`` is a scalar evaluator.  Triangles are counterclockwise.
    """
    space = sigma_space
    if space.n != 2 or space.k != 1 or space.geometry.exact is not None:
        raise ValueError("boundary traces are implemented for 1-forms on flat 2-d domains")
    mesh = space.mesh
    out = np.zeros(space.dof_count)
    bnd = set(mesh.boundary_facets.tolist())
    if not bnd:
        return out
    s, w = simplex_quadrature(1, space.quad_degree + 4)
    s = s[:, 0]
    corners = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    cells = mesh.cells
    for p, q in ((0, 1), (1, 2), (2, 0)):
        keys = [mesh.face_index[1][tuple(sorted((int(c[p]), int(c[q]))))] for c in cells]
        hit = np.array([key in bnd for key in keys])
        if not hit.any():
            continue
        pts = corners[p] + s[:, None] * (corners[q] - corners[p])
        vals, _ = space.evaluate(pts)
        x = space.geometry.chart(pts)[hit]
        gv = np.asarray(g(x.reshape(-1, x.shape[-1])), dtype=float).reshape(x.shape[:2])
        tang = np.einsum("eqic,c->eqi", vals[hit], corners[q] - corners[p])
        local = -np.einsum("eqi,eq,q->ei", tang, gv, w)
        np.add.at(out, space.elem_dofs[hit], local)
    return out


def top_form_integrals(space: FormSpace) -> np.ndarray:
    """Integral of each top-degree basis form over M_h (metric independent)."""
    if space.k != space.n:
        raise ValueError("only top-degree forms integrate to numbers")

    def build():
        pts, wts = simplex_quadrature(space.n, space.quad_degree)
        vals, _ = space.evaluate(pts)
        jac = _jacobian(space, pts, False)
        local = np.einsum("eqi,eq,q->ei", vals[..., 0], _orientation(space, pts, jac), wts)
        return np.bincount(space.elem_dofs.ravel(), weights=local.ravel(), minlength=space.dof_count)

    return space.cached(("integrals",), build)
