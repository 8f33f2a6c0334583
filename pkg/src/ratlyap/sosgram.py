"""Affine constraint system linking a numerator Gram matrix P to a derivative Gram matrix Q.

For a homogeneous field f of degree d and a candidate W = m(x)'P m(x) / |x|^(2r)
with m the degree-s/2 monomials, the numerator of -dW/dt is

    -2 |x|^2 <J(m)' P m, f> + 2 r (m' P m) <x, f>

which has degree s + d + 1.  The system requires it to equal z(x)' Q z(x),
z the degree-(s+d+1)/2 monomials, coefficient by coefficient.

Symmetric matrices are addressed by upper-triangle coordinates (i <= j); the
unit matrix E_ij has ones at (i, j) and (j, i), so a symmetric P equals
sum_{i<=j} P_ij E_ij.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .dynamics import VectorField
from .polyalg import HomogPoly, MonomialBasis, dot, enumerate_monomials, identity_vector, jacobian


class ShapeError(ValueError):
    """Invalid (s, r, d) combination for a hierarchy level."""


def upper_pairs(size: int) -> list[tuple[int, int]]:
    return [(i, j) for i in range(size) for j in range(i, size)]


def svec(M: np.ndarray) -> np.ndarray:
    """Upper-triangle entries of a symmetric matrix, row-major."""
    iu = np.triu_indices(M.shape[0])
    return np.asarray(M)[iu]


def smat(v: np.ndarray, size: int) -> np.ndarray:
    M = np.zeros((size, size))
    iu = np.triu_indices(size)
    M[iu] = v
    return M + np.triu(M, 1).T


@dataclass(frozen=True)
class CandidateShape:
    n: int
    s: int
    r: int
    d: int

    def __post_init__(self):
        if self.n < 1:
            raise ShapeError("n must be positive")
        if self.s <= 0 or self.s % 2:
            raise ShapeError(f"s must be a positive even integer, got {self.s}")
        if self.r < 0 or 2 * self.r >= self.s:
            raise ShapeError(f"need 0 <= 2r < s, got s={self.s}, r={self.r}")
        if self.d < 1:
            raise ShapeError(f"field degree must be positive, got {self.d}")
        if (self.s + self.d + 1) % 2:
            raise ShapeError(f"s + d + 1 = {self.s + self.d + 1} is odd; d must be odd")

    @cached_property
    def m_basis(self) -> MonomialBasis:
        return enumerate_monomials(self.n, self.s // 2)

    @cached_property
    def z_basis(self) -> MonomialBasis:
        return enumerate_monomials(self.n, (self.s + self.d + 1) // 2)

    @cached_property
    def row_basis(self) -> MonomialBasis:
        return enumerate_monomials(self.n, self.s + self.d + 1)

    @property
    def level(self) -> tuple[int, int]:
        return (self.s, self.r)


def _field_components(f: VectorField, shape: CandidateShape) -> list[HomogPoly]:
    if f.n != shape.n:
        raise ShapeError(f"field has n={f.n}, shape has n={shape.n}")
    comps = f.homogeneous_components()
    if f.degree != shape.d:
        raise ShapeError(f"field degree {f.degree} does not match shape d={shape.d}")
    return comps


class LieNumeratorMap:
    """Linear map P -> numerator of -dW/dt, built from the Jacobian of m(x)."""

    def __init__(self, f: VectorField, shape: CandidateShape):
        fc = _field_components(f, shape)
        self.shape = shape
        n = shape.n
        self._m = shape.m_basis.as_polys()
        J = jacobian(shape.m_basis)
        # <J_k, f> for each basis monomial m_k
        self._g = [dot(row, fc) for row in J]
        self._norm2 = HomogPoly.norm_squared(n)
        self._xf = dot(identity_vector(n), fc)
        self.pairs = upper_pairs(len(self._m))
        self.images = [self._unit_image(i, j) for i, j in self.pairs]

    def _unit_image(self, i: int, j: int) -> HomogPoly:
        m, g, r = self._m, self._g, self.shape.r
        if i == j:
            jac_term = g[i] * m[i]
            quad = m[i] * m[i]
        else:
            jac_term = g[i] * m[j] + g[j] * m[i]
            quad = (m[i] * m[j]).scale(2.0)
        out = (self._norm2 * jac_term).scale(-2.0)
        if r:
            out = out + (quad * self._xf).scale(2.0 * r)
        return out

    def matrix(self) -> np.ndarray:
        """Rows indexed by ``shape.row_basis``; columns by upper-triangle pairs of P."""
        rows = self.shape.row_basis.monomials
        return np.column_stack([img.coefficient_vector(rows) for img in self.images])

    def __call__(self, P: np.ndarray) -> HomogPoly:
        P = np.asarray(P, dtype=float)
        size = len(self._m)
        if P.shape != (size, size):
            raise ShapeError(f"P must be {size}x{size}, got {P.shape}")
        total = HomogPoly.zero(self.shape.n, self.shape.s + self.shape.d + 1)
        for (i, j), img in zip(self.pairs, self.images):
            if P[i, j] != 0.0:
                total = total + img.scale(P[i, j])
        return total


def lie_numerator_map(f: VectorField, shape: CandidateShape) -> LieNumeratorMap:
    return LieNumeratorMap(f, shape)


def gram_poly(Q: np.ndarray, basis: MonomialBasis) -> HomogPoly:
    """m(x)' Q m(x) over the given monomial basis."""
    Q = np.asarray(Q, dtype=float)
    size = len(basis)
    if Q.shape != (size, size):
        raise ShapeError(f"Gram matrix must be {size}x{size}, got {Q.shape}")
    terms: dict[tuple[int, ...], float] = {}
    monos = basis.monomials
    for i in range(size):
        for j in range(size):
            if Q[i, j] != 0.0:
                mono = tuple(a + b for a, b in zip(monos[i], monos[j]))
                terms[mono] = terms.get(mono, 0.0) + Q[i, j]
    return HomogPoly(basis.n, 2 * basis.half_degree, terms)


def gram_matrix(basis: MonomialBasis, row_basis: MonomialBasis) -> np.ndarray:
    """Coefficients of m' E_ij m per upper-triangle pair, rows by ``row_basis``."""
    index = row_basis.index()
    pairs = upper_pairs(len(basis))
    G = np.zeros((len(row_basis), len(pairs)))
    for col, (i, j) in enumerate(pairs):
        mono = tuple(a + b for a, b in zip(basis[i], basis[j]))
        G[index[mono], col] = 1.0 if i == j else 2.0
    return G


@dataclass(frozen=True)
class AffineGramSystem:
    """Rows: gram(Q) - lie(P) = 0, one per monomial of degree s + d + 1."""

    shape: CandidateShape
    A_P: np.ndarray
    A_Q: np.ndarray

    @property
    def n_rows(self) -> int:
        return self.A_P.shape[0]

    @property
    def p_size(self) -> int:
        return len(self.shape.m_basis)

    @property
    def q_size(self) -> int:
        return len(self.shape.z_basis)

    def residual(self, P: np.ndarray, Q: np.ndarray) -> np.ndarray:
        return self.A_Q @ svec(Q) - self.A_P @ svec(P)

    def triplets(self) -> list[dict]:
        """Sparse (row, block, i, j, value) entries of the row functionals.

        Values are symmetric-matrix entries (i <= j); an off-diagonal value
        acts on both (i, j) and (j, i), so it is half the coefficient of P_ij.
        """
        out = []
        blocks = (("Q", self.A_Q, self.q_size, 1.0), ("P", self.A_P, self.p_size, -1.0))
        for row in range(self.n_rows):
            for name, A, size, sign in blocks:
                for col, (i, j) in enumerate(upper_pairs(size)):
                    v = A[row, col]
                    if v != 0.0:
                        v = float(v) if i == j else 0.5 * float(v)
                        out.append({"row": row, "block": name, "i": i, "j": j, "value": sign * v})
        return out

    def to_json(self) -> str:
        return json.dumps({
            "n": self.shape.n, "s": self.shape.s, "r": self.shape.r, "d": self.shape.d,
            "rows": [list(m) for m in self.shape.row_basis.monomials],
            "entries": self.triplets(),
        })


def assemble(f: VectorField, shape: CandidateShape) -> AffineGramSystem:
    A_P = lie_numerator_map(f, shape).matrix()
    A_Q = gram_matrix(shape.z_basis, shape.row_basis)
    return AffineGramSystem(shape=shape, A_P=A_P, A_Q=A_Q)
