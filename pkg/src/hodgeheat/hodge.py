"""Discrete harmonic forms, Hodge decomposition and the mixed Hodge Laplacian."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh, splu

from .operators import (exterior_derivative_matrix, mass_matrix, mixed_matrix,
                        stiffness_matrix)
from .spaces import Cochain, FormSpace, UnsupportedSpaceError, build_form_space

NULL_TOL = 1e-8
GAP_LIMIT = 1e-6
DENSE_LIMIT = 4000


class SpectralGapError(RuntimeError):
    pass


class SingularSystemError(RuntimeError):
    pass


@dataclass
class HarmonicBasis:
    """M-orthonormal basis of the discrete harmonic k-forms, stored as columns."""

    space: FormSpace
    vectors: np.ndarray
    gap: float
    spectrum: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def basis(self) -> list[Cochain]:
        return [Cochain(self.space, self.vectors[:, j]) for j in range(self.dim)]

    def project(self, v) -> np.ndarray:
        """Coefficients of the M-orthogonal projection onto the harmonic space."""
        c = np.asarray(getattr(v, "coefficients", v), dtype=float)
        return self.vectors @ (self.vectors.T @ (mass_matrix(self.space) @ c))


def default_next_space(space: FormSpace) -> FormSpace | None:
    """Lowest-order degree k+1 space that contains d of the given space."""
    if space.k == space.n:
        return None
    family = "full" if space.k + 1 == space.n else "trimmed"
    return space.cached(("next",), lambda: build_form_space(
        space.mesh, space.k + 1, 1, family, space.geometry))


def _constraint_blocks(sigma_space, u_space, next_space):
    blocks = []
    if sigma_space is not None:
        blocks.append(mixed_matrix(sigma_space, u_space).T)
    if next_space is None:
        next_space = default_next_space(u_space)
    if next_space is not None:
        blocks.append(exterior_derivative_matrix(u_space, next_space))
    scaled = []
    for b in blocks:
        norm = abs(b).max() if b.nnz else 0.0
        if norm > 0:
            scaled.append(b / norm)
    return scaled


def _cut(values, null_tol):
    """Split a nonnegative spectrum into null and non-null parts; return gap ratio."""
    top = values.max(initial=0.0)
    null = values <= null_tol * top if top > 0 else np.ones(len(values), bool)
    floor = np.finfo(float).eps * max(top, 1.0)
    largest_null = max(values[null].max(initial=0.0), floor)
    smallest_kept = values[~null].min(initial=np.inf)
    return null, largest_null / smallest_kept


def harmonic_basis(sigma_space: FormSpace | None, u_space: FormSpace,
                   next_space: FormSpace | None = None, null_tol: float = NULL_TOL,
                   gap_limit: float = GAP_LIMIT, dense_limit: int = DENSE_LIMIT) -> HarmonicBasis:
    """Null space of the stacked constraints B^T q = 0 and d q = 0, M-orthonormalized."""
    key = ("harmonic", id(sigma_space), id(next_space), null_tol)
    cached = u_space._cache.get(key)
    if cached is not None:
        return cached
    n = u_space.dof_count
    blocks = _constraint_blocks(sigma_space, u_space, next_space)
    mass = mass_matrix(u_space)
    if n <= dense_limit:
        stacked = sp.vstack(blocks).toarray() if blocks else np.zeros((0, n))
        if stacked.shape[0] < n:
            stacked = np.vstack([stacked, np.zeros((n - stacked.shape[0], n))])
        _, s, vt = np.linalg.svd(stacked)
        null, ratio = _cut(s, null_tol)
        vecs = vt[null].T
        spectrum = s
    else:
        vecs, spectrum, ratio = _sparse_null(blocks, mass, null_tol)
    if ratio > gap_limit:
        excerpt = np.sort(spectrum)[:8]
        raise SpectralGapError(f"ambiguous spectral gap (ratio {ratio:.2e}); smallest values {excerpt}")
    if vecs.shape[1]:
        gram = vecs.T @ (mass @ vecs)
        chol = np.linalg.cholesky(0.5 * (gram + gram.T))
        vecs = sla.solve_triangular(chol, vecs.T, lower=True).T
    result = HarmonicBasis(u_space, vecs, 1.0 / ratio, spectrum)
    u_space._cache[key] = result
    return result


def _sparse_null(blocks, mass, null_tol, nev=8):
    """Shift-invert eigensolve of the normal operator, for meshes too big for SVD."""
    n = mass.shape[0]
    normal = sp.csr_matrix((n, n))
    for b in blocks:
        normal = normal + (b.T @ b)
    top = eigsh(normal, k=1, M=mass, which="LA", return_eigenvectors=False)[0]
    shift = -1e-3 * top
    while True:
        vals, vecs = eigsh(normal, k=min(nev, n - 1), M=mass, sigma=shift, which="LM")
        vals = np.clip(vals, 0.0, None)
        sv = np.sqrt(vals)
        null, ratio = _cut(np.append(sv, np.sqrt(top)), null_tol)
        null = null[:-1]
        if null.sum() < len(vals) - 1 or nev >= n - 1:
            return vecs[:, null], sv, ratio
        nev *= 2


class MixedSolution:
    """Discrete (sigma, u, p) with the relative residuals of the three equations."""

    def __init__(self, sigma, u, p, p_coefficients, residuals):
        self.sigma = sigma
        self.u = u
        self.p = p
        self.p_coefficients = p_coefficients
        self.residuals = residuals

    def __repr__(self):
        res = ", ".join(f"{k}={v:.2e}" for k, v in self.residuals.items())
        return f"MixedSolution({res})"


def _rel(res, *terms, floor=0.0):
    scale = max([np.linalg.norm(t) for t in terms] + [floor, np.finfo(float).tiny])
    return float(np.linalg.norm(res) / scale)


class MixedHodgeSolver:
    """Bordered saddle-point solver for the mixed Hodge Laplacian at degree k.

    Unknowns are (Sigma, U, P) with p = H P, H the harmonic basis columns.
    Equations::

        Msig Sigma - B^T U            = g_bd
        B Sigma + K U + M H P         = M f
        H^T M U                       = H^T M w
    """

    def __init__(self, sigma_space: FormSpace | None, u_space: FormSpace,
                 next_space: FormSpace | None = None, harmonic: HarmonicBasis | None = None):
        if sigma_space is None and u_space.k != 0:
            raise UnsupportedSpaceError("a sigma space is required for k > 0")
        self.sigma_space = sigma_space
        self.u_space = u_space
        self.harmonic = harmonic or harmonic_basis(sigma_space, u_space, next_space)
        self.mass = mass_matrix(u_space)
        nxt = next_space or default_next_space(u_space)
        self.stiffness = stiffness_matrix(u_space, nxt)
        mh = sp.csr_matrix(self.mass @ self.harmonic.vectors)
        self.mh = mh
        nh = mh.shape[1]
        if sigma_space is not None:
            self.sigma_mass = mass_matrix(sigma_space)
            self.mixed = mixed_matrix(sigma_space, u_space)
            system = sp.bmat([[-self.sigma_mass, self.mixed.T, None],
                              [self.mixed, self.stiffness, mh],
                              [None, mh.T, None]], format="csc")
            self.n_sigma = sigma_space.dof_count
        else:
            self.sigma_mass = self.mixed = None
            system = sp.bmat([[self.stiffness, mh], [mh.T, None]], format="csc")
            self.n_sigma = 0
        self.n_h = nh
        self.system = system
        try:
            self.lu = splu(system)
        except RuntimeError as exc:
            raise SingularSystemError(
                f"saddle system is singular; harmonic dimension {nh} may be wrong") from exc

    def solve(self, f_h, w_h=None, boundary=None) -> MixedSolution:
        f = np.asarray(getattr(f_h, "coefficients", f_h), dtype=float)
        nu = self.u_space.dof_count
        w = np.zeros(nu) if w_h is None else np.asarray(getattr(w_h, "coefficients", w_h), float)
        g = np.zeros(self.n_sigma) if boundary is None else np.asarray(boundary, float)
        load = self.mass @ f
        target = self.mh.T @ w
        rhs = np.concatenate([-g, load, target])
        x = self.lu.solve(rhs)
        if not np.all(np.isfinite(x)):
            raise SingularSystemError("non-finite solution of the saddle system")
        sig = x[:self.n_sigma]
        u = x[self.n_sigma:self.n_sigma + nu]
        pc = x[self.n_sigma + nu:]
        p = self.harmonic.vectors @ pc
        res = {}
        # equations whose operands all vanish are measured against the whole system
        floor = np.linalg.norm(rhs)
        if self.sigma_space is not None:
            a, b = self.sigma_mass @ sig, self.mixed.T @ u
            res["first"] = _rel(a - b - g, a, b, g, floor=floor)
            bs = self.mixed @ sig
        else:
            bs = np.zeros(nu)
        ku, mp = self.stiffness @ u, self.mh @ pc
        res["second"] = _rel(bs + ku + mp - load, bs, ku, mp, load, floor=floor)
        hu = self.mh.T @ u
        # harmonic coefficients are bounded by |M u| and |M w|
        res["third"] = _rel(hu - target, hu, target, self.mass @ u, self.mass @ w, floor=floor)
        sigma = Cochain(self.sigma_space, sig) if self.sigma_space is not None else None
        return MixedSolution(sigma, Cochain(self.u_space, u), Cochain(self.u_space, p), pc, res)


def mixed_solver(sigma_space, u_space, next_space=None) -> MixedHodgeSolver:
    return u_space.cached(("solver", id(sigma_space), id(next_space)),
                          lambda: MixedHodgeSolver(sigma_space, u_space, next_space))


def solve_mixed_elliptic(sigma_space, u_space, f_h, w_h=None, boundary=None,
                         next_space=None) -> MixedSolution:
    return mixed_solver(sigma_space, u_space, next_space).solve(f_h, w_h, boundary)


def hodge_decompose(v: Cochain, sigma_space: FormSpace | None,
                    harmonic: HarmonicBasis | None = None):
    """Split v = b + h + perp with b a coboundary, h harmonic, perp orthogonal to cocycles."""
    space = v.space
    harmonic = harmonic or harmonic_basis(sigma_space, space)
    c = v.coefficients
    h = harmonic.project(c)
    if sigma_space is None:
        b = np.zeros_like(c)
    else:
        d = exterior_derivative_matrix(sigma_space, space).toarray()
        chol = np.linalg.cholesky(mass_matrix(space).toarray())
        tau = np.linalg.lstsq(chol.T @ d, chol.T @ c, rcond=None)[0]
        b = d @ tau
    perp = c - b - h
    return Cochain(space, b), Cochain(space, h), Cochain(space, perp)


def poincare_constant(domain: FormSpace, codomain: FormSpace, null_tol: float = NULL_TOL) -> float:
    """Smallest constant with |v| <= c |dv| for v orthogonal to the cocycles of ``domain``."""
    k = stiffness_matrix(domain, codomain).toarray()
    m = mass_matrix(domain).toarray()
    lam = sla.eigh(0.5 * (k + k.T), 0.5 * (m + m.T), eigvals_only=True)
    top = lam.max(initial=0.0)
    positive = lam[lam > null_tol * top] if top > 0 else lam[:0]
    if not len(positive):
        raise ValueError("d vanishes on this space; no Poincare constant")
    return float(1.0 / np.sqrt(positive.min()))
