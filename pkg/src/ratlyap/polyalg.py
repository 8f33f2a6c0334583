"""Sparse homogeneous polynomials over real coefficients.

Monomials are plain tuples of exponents.  A :class:`HomogPoly` stores a map
from exponent tuple to coefficient; every stored monomial has the same total
degree and no stored coefficient is exactly zero.  There is no epsilon
pruning here: tolerance policy lives in :mod:`ratlyap.verify`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from itertools import combinations_with_replacement
from math import comb
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np

Monomial = tuple[int, ...]


class PolyStructureError(ValueError):
    """Raised on dimension or degree mismatches between polynomials."""


def _graded_lex_key(mono: Monomial) -> tuple:
    # within a fixed degree, larger leading exponents come first: x^2, xy, y^2
    return tuple(-e for e in mono)


def enumerate_monomials(n: int, k: int) -> "MonomialBasis":
    """All monomials of degree ``k`` in ``n`` variables, in graded-lex order."""
    if n < 1 or k < 0:
        raise ValueError(f"need n >= 1 and k >= 0, got n={n}, k={k}")
    monos = []
    for combo in combinations_with_replacement(range(n), k):
        exps = [0] * n
        for i in combo:
            exps[i] += 1
        monos.append(tuple(exps))
    monos.sort(key=_graded_lex_key)
    return MonomialBasis(n=n, half_degree=k, monomials=tuple(monos))


@dataclass(frozen=True)
class MonomialBasis:
    n: int
    half_degree: int
    monomials: tuple[Monomial, ...]

    def __post_init__(self):
        if len(self.monomials) != comb(self.n + self.half_degree - 1, self.half_degree):
            raise PolyStructureError("basis is not the complete set of monomials")

    def __len__(self) -> int:
        return len(self.monomials)

    def __iter__(self):
        return iter(self.monomials)

    def __getitem__(self, i: int) -> Monomial:
        return self.monomials[i]

    def index(self) -> dict[Monomial, int]:
        return {m: i for i, m in enumerate(self.monomials)}

    def as_polys(self) -> list["HomogPoly"]:
        return [HomogPoly.monomial(m) for m in self.monomials]

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        """Vector of monomial values; ``x`` may be a point or an (N, n) array."""
        x = np.asarray(x, dtype=float)
        exps = np.array(self.monomials, dtype=int)
        return np.prod(x[..., None, :] ** exps, axis=-1)


class HomogPoly:
    """Immutable homogeneous polynomial in ``n`` variables."""

    __slots__ = ("n", "degree", "_terms")

    def __init__(self, n: int, degree: int, terms: Mapping[Monomial, float] | None = None):
        if n < 1 or degree < 0:
            raise PolyStructureError(f"invalid shape n={n}, degree={degree}")
        clean: dict[Monomial, float] = {}
        for mono, coeff in (terms or {}).items():
            mono = tuple(int(e) for e in mono)
            if len(mono) != n or any(e < 0 for e in mono):
                raise PolyStructureError(f"bad exponent vector {mono} for n={n}")
            if sum(mono) != degree:
                raise PolyStructureError(f"monomial {mono} is not of degree {degree}")
            coeff = float(coeff)
            if coeff != 0.0:
                clean[mono] = coeff
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "degree", degree)
        object.__setattr__(self, "_terms", MappingProxyType(clean))

    def __setattr__(self, name, value):
        raise AttributeError("HomogPoly is immutable")

    # -- constructors -------------------------------------------------------

    @classmethod
    def zero(cls, n: int, degree: int) -> "HomogPoly":
        return cls(n, degree, {})

    @classmethod
    def monomial(cls, mono: Sequence[int], coeff: float = 1.0) -> "HomogPoly":
        mono = tuple(mono)
        return cls(len(mono), sum(mono), {mono: coeff})

    @classmethod
    def variable(cls, n: int, i: int) -> "HomogPoly":
        exps = [0] * n
        exps[i] = 1
        return cls.monomial(exps)

    @classmethod
    def norm_squared(cls, n: int) -> "HomogPoly":
        """The form x1^2 + ... + xn^2."""
        terms = {}
        for i in range(n):
            exps = [0] * n
            exps[i] = 2
            terms[tuple(exps)] = 1.0
        return cls(n, 2, terms)

    @classmethod
    def from_coefficients(cls, basis_monos: Iterable[Monomial], coeffs: Iterable[float]) -> "HomogPoly":
        monos = list(basis_monos)
        if not monos:
            raise PolyStructureError("cannot infer shape from an empty monomial list")
        return cls(len(monos[0]), sum(monos[0]), dict(zip(monos, coeffs)))

    # -- access -------------------------------------------------------------

    @property
    def terms(self) -> Mapping[Monomial, float]:
        return self._terms

    def coeff(self, mono: Sequence[int]) -> float:
        return self._terms.get(tuple(mono), 0.0)

    def coefficient_vector(self, monos: Sequence[Monomial]) -> np.ndarray:
        return np.array([self._terms.get(m, 0.0) for m in monos])

    def is_zero(self) -> bool:
        return not self._terms

    def max_abs_coeff(self) -> float:
        return max((abs(c) for c in self._terms.values()), default=0.0)

    def __len__(self) -> int:
        return len(self._terms)

    def __eq__(self, other) -> bool:
        if not isinstance(other, HomogPoly):
            return NotImplemented
        return (self.n, self.degree, dict(self._terms)) == (other.n, other.degree, dict(other._terms))

    def __hash__(self):
        return hash((self.n, self.degree, frozenset(self._terms.items())))

    def __repr__(self) -> str:
        return f"HomogPoly(n={self.n}, degree={self.degree}, {to_text(self)!r})"

    # -- arithmetic ---------------------------------------------------------

    def _check_compatible(self, other: "HomogPoly", same_degree: bool) -> None:
        if not isinstance(other, HomogPoly):
            raise TypeError(f"expected HomogPoly, got {type(other).__name__}")
        if other.n != self.n:
            raise PolyStructureError(f"dimension mismatch: {self.n} vs {other.n}")
        if same_degree and other.degree != self.degree:
            raise PolyStructureError(f"degree mismatch: {self.degree} vs {other.degree}")

    def __add__(self, other: "HomogPoly") -> "HomogPoly":
        self._check_compatible(other, same_degree=True)
        out = dict(self._terms)
        for mono, c in other._terms.items():
            out[mono] = out.get(mono, 0.0) + c
        return HomogPoly(self.n, self.degree, out)

    def __neg__(self) -> "HomogPoly":
        return self.scale(-1.0)

    def __sub__(self, other: "HomogPoly") -> "HomogPoly":
        return self + (-other)

    def scale(self, c: float) -> "HomogPoly":
        c = float(c)
        return HomogPoly(self.n, self.degree, {m: c * v for m, v in self._terms.items()})

    def __mul__(self, other):
        if isinstance(other, (int, float, np.floating, np.integer)):
            return self.scale(other)
        self._check_compatible(other, same_degree=False)
        out: dict[Monomial, float] = {}
        for ma, ca in self._terms.items():
            for mb, cb in other._terms.items():
                mono = tuple(a + b for a, b in zip(ma, mb))
                out[mono] = out.get(mono, 0.0) + ca * cb
        return HomogPoly(self.n, self.degree + other.degree, out)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __pow__(self, k: int) -> "HomogPoly":
        if k < 0:
            raise ValueError("negative powers are not polynomials")
        out = HomogPoly(self.n, 0, {(0,) * self.n: 1.0})
        for _ in range(k):
            out = out * self
        return out

    def diff(self, i: int) -> "HomogPoly":
        """Partial derivative with respect to variable ``i``."""
        if self.degree == 0:
            return HomogPoly.zero(self.n, 0)
        out = {}
        for mono, c in self._terms.items():
            e = mono[i]
            if e:
                lowered = mono[:i] + (e - 1,) + mono[i + 1:]
                out[lowered] = c * e
        return HomogPoly(self.n, self.degree - 1, out)

    # -- evaluation ---------------------------------------------------------

    def __call__(self, x) -> float | np.ndarray:
        return evaluate(self, x)


def evaluate(p: HomogPoly, x) -> float | np.ndarray:
    """Sum of coefficient times monomial value; ``x`` is a point or an (N, n) array."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != p.n:
        raise PolyStructureError(f"point has {x.shape[-1]} coordinates, polynomial has n={p.n}")
    if not p.terms:
        return 0.0 if x.ndim == 1 else np.zeros(x.shape[:-1])
    exps = np.array(list(p.terms.keys()), dtype=int)
    coeffs = np.array(list(p.terms.values()))
    vals = np.prod(x[..., None, :] ** exps, axis=-1) @ coeffs
    return float(vals) if x.ndim == 1 else vals


def evaluate_rational(num: HomogPoly, den: HomogPoly, x) -> float | np.ndarray:
    return evaluate(num, x) / evaluate(den, x)


def gradient(p: HomogPoly) -> list[HomogPoly]:
    return [p.diff(i) for i in range(p.n)]


def jacobian(basis: MonomialBasis) -> list[list[HomogPoly]]:
    """Entry (i, j) is the derivative of the i-th basis monomial w.r.t. x_j."""
    if basis.half_degree < 1:
        raise ValueError("jacobian of a degree-0 basis is identically zero")
    return [gradient(HomogPoly.monomial(m)) for m in basis.monomials]


def dot(u: Sequence[HomogPoly], v: Sequence[HomogPoly]) -> HomogPoly:
    """Inner product of two equal-length polynomial vectors."""
    if len(u) != len(v) or not u:
        raise PolyStructureError("polynomial vectors must be nonempty and of equal length")
    total = u[0] * v[0]
    for a, b in zip(u[1:], v[1:]):
        total = total + a * b
    return total


def identity_vector(n: int) -> list[HomogPoly]:
    """The vector field x, as a list of linear forms."""
    return [HomogPoly.variable(n, i) for i in range(n)]


def allclose(a: HomogPoly, b: HomogPoly, rtol: float = 1e-10, atol: float = 0.0) -> bool:
    """Coefficientwise comparison relative to the largest coefficient of either side."""
    if a.n != b.n:
        return False
    if a.degree != b.degree and not (a.is_zero() and b.is_zero()):
        return False
    scale = max(a.max_abs_coeff(), b.max_abs_coeff())
    monos = set(a.terms) | set(b.terms)
    worst = max((abs(a.coeff(m) - b.coeff(m)) for m in monos), default=0.0)
    return worst <= atol + rtol * scale


# -- text and JSON formats --------------------------------------------------

def variable_names(n: int) -> list[str]:
    return [f"x{i + 1}" for i in range(n)]


def to_text(p: HomogPoly, names: Sequence[str] | None = None) -> str:
    names = list(names or variable_names(p.n))
    if not p.terms:
        return "0"
    parts = []
    for mono in sorted(p.terms, key=_graded_lex_key):
        factors = [f"{v}^{e}" if e > 1 else v for v, e in zip(names, mono) if e]
        parts.append("*".join([repr(p.terms[mono])] + factors))
    return " + ".join(parts).replace("+ -", "- ")


def parse_polynomial(text: str, n: int, names: Sequence[str] | None = None) -> list[HomogPoly]:
    """Parse ``coeff * x1^a1*...*xn^an`` sums into graded homogeneous parts.

    Variables are ``x1..xn``; for n <= 3 the names ``x, y, z`` are also accepted.
    Returns the nonzero homogeneous parts sorted by degree (possibly empty).
    """
    from tokenize import TokenError

    import sympy
    from sympy.parsing.sympy_parser import (convert_xor, implicit_multiplication,
                                            parse_expr, standard_transformations)

    names = list(names or variable_names(n))
    syms = sympy.symbols(names)
    local = dict(zip(names, syms))
    if names == variable_names(n) and n <= 3:
        local.update(zip("xyz"[:n], syms))
    transforms = standard_transformations + (convert_xor, implicit_multiplication)
    try:
        expr = parse_expr(text, local_dict=local, transformations=transforms, evaluate=True)
        poly = sympy.Poly(sympy.expand(expr), *syms)
    except (sympy.SympifyError, sympy.PolynomialError, SyntaxError, TypeError, TokenError) as exc:
        raise ValueError(f"cannot parse polynomial {text!r}: {exc}") from exc
    by_degree: dict[int, dict[Monomial, float]] = {}
    for mono, coeff in poly.terms():
        by_degree.setdefault(sum(mono), {})[tuple(mono)] = float(coeff)
    parts = [HomogPoly(n, deg, terms) for deg, terms in sorted(by_degree.items())]
    return [p for p in parts if not p.is_zero()]


def to_json_dict(p: HomogPoly) -> dict:
    return {
        "n": p.n,
        "degree": p.degree,
        "terms": [{"exps": list(m), "coeff": c} for m, c in sorted(p.terms.items(), key=lambda t: _graded_lex_key(t[0]))],
    }


def from_json_dict(data: Mapping) -> HomogPoly:
    terms = {tuple(t["exps"]): t["coeff"] for t in data.get("terms", [])}
    return HomogPoly(int(data["n"]), int(data["degree"]), terms)


def dumps(p: HomogPoly) -> str:
    return json.dumps(to_json_dict(p))
