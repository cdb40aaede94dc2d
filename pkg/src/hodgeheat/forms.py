"""Polynomial differential forms on R^n with exact rational coefficients.

Used to check the algebra behind the trimmed families: the Koszul operator
(contraction with the radial field x^i d/dx^i), the exterior derivative, and
the dimension formulas for the full and trimmed polynomial form spaces.
"""

from __future__ import annotations

from fractions import Fraction
from itertools import combinations
from math import comb

import numpy as np


def _monomials(n: int, degree: int):
    if n == 1:
        yield (degree,)
        return
    for first in range(degree, -1, -1):
        for rest in _monomials(n - 1, degree - first):
            yield (first,) + rest


class PolyForm:
    """Sum of terms c * x^alpha dx_I with I strictly increasing."""

    def __init__(self, n: int, k: int, terms=None):
        self.n = n
        self.k = k
        self.terms: dict[tuple, Fraction] = {}
        for (alpha, idx), c in (terms or {}).items():
            self._add(tuple(alpha), tuple(idx), c)

    def _add(self, alpha, idx, c):
        if len(alpha) != self.n or len(idx) != self.k:
            raise ValueError("term shape does not match the form")
        c = Fraction(c)
        if c == 0:
            return
        key = (alpha, idx)
        total = self.terms.get(key, Fraction(0)) + c
        if total == 0:
            self.terms.pop(key, None)
        else:
            self.terms[key] = total

    @classmethod
    def monomial(cls, n, alpha, idx, c=1):
        return cls(n, len(idx), {(tuple(alpha), tuple(idx)): c})

    @classmethod
    def coordinate_differential(cls, n, *idx):
        """dx_{i1} ^ ... ^ dx_{ik} for increasing indices."""
        return cls.monomial(n, (0,) * n, idx)

    def __add__(self, other):
        self._same_shape(other)
        out = self.copy()
        for (a, i), c in other.terms.items():
            out._add(a, i, c)
        return out

    def __sub__(self, other):
        return self + (-1) * other

    def __rmul__(self, scalar):
        return PolyForm(self.n, self.k, {key: scalar * c for key, c in self.terms.items()})

    def __eq__(self, other):
        return isinstance(other, PolyForm) and (self.n, self.k) == (other.n, other.k) \
            and self.terms == other.terms

    def __repr__(self):
        if not self.terms:
            return "0"
        parts = []
        for (alpha, idx), c in sorted(self.terms.items()):
            mono = "*".join(f"x{i}^{a}" if a > 1 else f"x{i}" for i, a in enumerate(alpha) if a)
            diff = "^".join(f"dx{i}" for i in idx)
            parts.append(" ".join(p for p in (str(c), mono, diff) if p))
        return " + ".join(parts)

    def copy(self):
        return PolyForm(self.n, self.k, dict(self.terms))

    def _same_shape(self, other):
        if (self.n, self.k) != (other.n, other.k):
            raise ValueError("forms of different shape")

    def is_zero(self):
        return not self.terms

    def degree(self) -> int:
        return max((sum(a) for a, _ in self.terms), default=-1)

    def is_homogeneous(self, degree: int) -> bool:
        return all(sum(a) == degree for a, _ in self.terms)

    def d(self) -> "PolyForm":
        out = PolyForm(self.n, self.k + 1)
        for (alpha, idx), c in self.terms.items():
            for i in range(self.n):
                if alpha[i] == 0 or i in idx:
                    continue
                beta = list(alpha)
                beta[i] -= 1
                # moving dx_i past the smaller entries of I fixes the sign
                sign = (-1) ** sum(1 for j in idx if j < i)
                out._add(tuple(beta), tuple(sorted(idx + (i,))), sign * alpha[i] * c)
        return out

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        """Components at points x (npts, n), ordered like combinations(range(n), k)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        index = {idx: j for j, idx in enumerate(combinations(range(self.n), self.k))}
        out = np.zeros((len(x), len(index)))
        for (alpha, idx), c in self.terms.items():
            out[:, index[idx]] += float(c) * np.prod(x ** np.array(alpha), axis=1)
        return out


def koszul_apply(form: PolyForm) -> PolyForm:
    """Contraction with the radial vector field, a k-form into a (k-1)-form.

    Coordinates are local, i.e. measured from the chosen origin of the simplex.
    """
    if form.k == 0:
        raise ValueError("cannot contract a 0-form")
    out = PolyForm(form.n, form.k - 1)
    for (alpha, idx), c in form.terms.items():
        for pos, i in enumerate(idx):
            beta = list(alpha)
            beta[i] += 1
            out._add(tuple(beta), idx[:pos] + idx[pos + 1:], (-1) ** pos * c)
    return out


def homogeneous_basis(n: int, degree: int, k: int) -> list[PolyForm]:
    if degree < 0:
        return []
    return [PolyForm.monomial(n, alpha, idx)
            for alpha in _monomials(n, degree)
            for idx in combinations(range(n), k)]


def full_basis(n: int, r: int, k: int) -> list[PolyForm]:
    """Monomial basis of the polynomial k-forms of degree at most r."""
    return [f for deg in range(r + 1) for f in homogeneous_basis(n, deg, k)]


def trimmed_spanning_set(n: int, r: int, k: int) -> list[PolyForm]:
    """Degree r-1 forms plus Koszul images of homogeneous degree r-1 (k+1)-forms."""
    forms = full_basis(n, r - 1, k)
    if k < n:
        forms += [koszul_apply(f) for f in homogeneous_basis(n, r - 1, k + 1)]
    return forms


def span_dimension(forms: list[PolyForm]) -> int:
    keys = sorted({key for f in forms for key in f.terms})
    if not keys:
        return 0
    pos = {key: j for j, key in enumerate(keys)}
    mat = np.zeros((len(forms), len(keys)))
    for i, f in enumerate(forms):
        for key, c in f.terms.items():
            mat[i, pos[key]] = float(c)
    return int(np.linalg.matrix_rank(mat))


def full_dimension(n: int, r: int, k: int) -> int:
    return comb(r + n, n) * comb(n, k)


def trimmed_dimension(n: int, r: int, k: int) -> int:
    if r == 0:
        return 0
    return comb(r + k - 1, k) * comb(n + r, n - k)
