"""Polynomial vector fields, benchmark families, and a fixed-step RK4 simulator."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .polyalg import HomogPoly, PolyStructureError, from_json_dict, parse_polynomial, to_json_dict

DIVERGENCE_GUARD = 1e12


@dataclass(frozen=True)
class VectorField:
    """Each component is a list of homogeneous parts (possibly empty = zero)."""

    n: int
    components: tuple[tuple[HomogPoly, ...], ...]
    declared_degree: int | None = None
    name: str = ""
    _compiled: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.components) != self.n:
            raise PolyStructureError(f"{len(self.components)} components for n={self.n}")
        comps = []
        for parts in self.components:
            parts = tuple(p for p in parts if not p.is_zero())
            for p in parts:
                if p.n != self.n:
                    raise PolyStructureError("component polynomial has the wrong number of variables")
            if len({p.degree for p in parts}) != len(parts):
                raise PolyStructureError("graded parts of one component must have distinct degrees")
            comps.append(tuple(sorted(parts, key=lambda p: p.degree)))
        object.__setattr__(self, "components", tuple(comps))
        if self.declared_degree is not None and not self.is_homogeneous(self.declared_degree):
            raise PolyStructureError(f"field is not homogeneous of degree {self.declared_degree}")

        monos = sorted({m for parts in comps for p in parts for m in p.terms})
        index = {m: k for k, m in enumerate(monos)}
        coeffs = np.zeros((self.n, len(monos)))
        for i, parts in enumerate(comps):
            for p in parts:
                for m, c in p.terms.items():
                    coeffs[i, index[m]] += c
        exps = np.array(monos, dtype=int).reshape(len(monos), self.n)
        object.__setattr__(self, "_compiled", (exps, coeffs))

    @classmethod
    def homogeneous(cls, polys: Sequence[HomogPoly], name: str = "") -> "VectorField":
        degrees = {p.degree for p in polys}
        if len(degrees) != 1:
            raise PolyStructureError(f"components have mixed degrees {sorted(degrees)}")
        return cls(len(polys), tuple((p,) for p in polys), declared_degree=degrees.pop(), name=name)

    def degrees(self) -> set[int]:
        return {p.degree for parts in self.components for p in parts}

    def is_homogeneous(self, d: int | None = None) -> bool:
        degs = self.degrees()
        if len(degs) > 1:
            return False
        if not degs:
            # identically zero field; homogeneous of whatever degree is asked
            return True
        return d is None or degs == {d}

    @property
    def degree(self) -> int:
        """Homogeneity degree; raises for inhomogeneous fields."""
        if self.declared_degree is not None:
            return self.declared_degree
        degs = self.degrees()
        if len(degs) != 1:
            raise PolyStructureError("vector field is not homogeneous")
        return next(iter(degs))

    def homogeneous_components(self) -> list[HomogPoly]:
        d = self.degree
        if not self.is_homogeneous(d):
            raise PolyStructureError("vector field is not homogeneous")
        return [parts[0] if parts else HomogPoly.zero(self.n, d) for parts in self.components]

    def __call__(self, x) -> np.ndarray:
        exps, coeffs = self._compiled
        x = np.asarray(x, dtype=float)
        vals = np.prod(x[..., None, :] ** exps, axis=-1)
        return vals @ coeffs.T

    def to_json_dict(self) -> dict:
        return {
            "n": self.n,
            "name": self.name,
            "declared_degree": self.declared_degree,
            "components": [[to_json_dict(p) for p in parts] for parts in self.components],
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "VectorField":
        n = int(data["n"])
        comps = []
        for entry in data["components"]:
            if isinstance(entry, str):
                comps.append(tuple(parse_polynomial(entry, n)))
            elif isinstance(entry, dict):
                comps.append((from_json_dict(entry),))
            else:
                comps.append(tuple(from_json_dict(p) for p in entry))
        field_ = cls(n, tuple(comps), name=data.get("name", ""))
        declared = data.get("declared_degree")
        if declared is None and field_.degrees() and field_.is_homogeneous():
            declared = field_.degree
        if declared is not None:
            field_ = cls(n, field_.components, declared_degree=int(declared), name=field_.name)
        return field_

    @classmethod
    def from_text(cls, lines: Sequence[str], name: str = "") -> "VectorField":
        n = len(lines)
        field_ = cls(n, tuple(tuple(parse_polynomial(s, n)) for s in lines), name=name)
        if field_.degrees() and field_.is_homogeneous():
            return cls(n, field_.components, declared_degree=field_.degree, name=name)
        return field_


# -- benchmark families -------------------------------------------------------

def _poly2(terms: dict[tuple[int, int], float], degree: int) -> HomogPoly:
    return HomogPoly(2, degree, terms)


def family_nonhomog_counterexample() -> VectorField:
    """xdot = -x + x*y, ydot = -y."""
    fx = (_poly2({(1, 0): -1.0}, 1), _poly2({(1, 1): 1.0}, 2))
    fy = (_poly2({(0, 1): -1.0}, 1),)
    return VectorField(2, (fx, fy), name="nonhomog")


def _cubic_center(lam: float) -> tuple[HomogPoly, HomogPoly]:
    # -2 lam y (x^2+y^2) - 2 y (2x^2+y^2) and 4 lam x (x^2+y^2) + 2 x (2x^2+y^2)
    gx = _poly2({(2, 1): -2 * lam - 4.0, (0, 3): -2 * lam - 2.0}, 3)
    gy = _poly2({(3, 0): 4 * lam + 4.0, (1, 2): 4 * lam + 2.0}, 3)
    return gx, gy


def family_cubic(theta: float, lam: float) -> VectorField:
    """Cubic field rotated by angle theta; theta = 0 is a center."""
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    gx, gy = _cubic_center(lam)
    c, s = math.cos(theta), math.sin(theta)
    fx = gx.scale(c) - gy.scale(s)
    fy = gx.scale(s) + gy.scale(c)
    return VectorField.homogeneous([fx, fy], name=f"cubic(theta={theta:g}, lambda={lam:g})")


def rotation_quintic(theta: float) -> np.ndarray:
    return np.array([[-math.sin(theta), -math.cos(theta)], [math.cos(theta), -math.sin(theta)]])


def family_quintic(theta: float) -> VectorField:
    """Quintic field 2 R(theta) (x(x^4+2x^2y^2-y^4), y(-x^4+2x^2y^2+y^4))."""
    ux = _poly2({(5, 0): 2.0, (3, 2): 4.0, (1, 4): -2.0}, 5)
    uy = _poly2({(4, 1): -2.0, (2, 3): 4.0, (0, 5): 2.0}, 5)
    R = rotation_quintic(theta)
    fx = ux.scale(R[0, 0]) + uy.scale(R[0, 1])
    fy = ux.scale(R[1, 0]) + uy.scale(R[1, 1])
    return VectorField.homogeneous([fx, fy], name=f"quintic(theta={theta:g})")


def family_linear(A) -> VectorField:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"A must be square, got shape {A.shape}")
    n = A.shape[0]
    comps = []
    for i in range(n):
        terms = {}
        for j in range(n):
            e = [0] * n
            e[j] = 1
            terms[tuple(e)] = A[i, j]
        comps.append(HomogPoly(n, 1, terms))
    return VectorField(n, tuple((p,) for p in comps), declared_degree=1, name="linear")


def conserved_I(lam: float, x) -> float | np.ndarray:
    """(x^2 + y^2) (2x^2 + y^2)^lam, a first integral of the theta = 0 cubic field."""
    x = np.asarray(x, dtype=float)
    a, b = x[..., 0] ** 2, x[..., 1] ** 2
    return (a + b) * (2 * a + b) ** lam


# -- simulation ---------------------------------------------------------------

@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    step: float
    diverged: bool = False

    def __len__(self) -> int:
        return len(self.times)

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def to_csv(self, path, extra_columns: dict[str, np.ndarray] | None = None) -> None:
        n = self.states.shape[1]
        extra = extra_columns or {}
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"x{i + 1}" for i in range(n)] + list(extra))
            for k, (t, x) in enumerate(zip(self.times, self.states)):
                w.writerow([repr(float(t))] + [repr(float(v)) for v in x] + [repr(float(col[k])) for col in extra.values()])


def step_count(step: float, horizon: float) -> int:
    # snap near-integer ratios so horizon = N * step does not pick up a spare step
    ratio = horizon / step
    nearest = round(ratio)
    if abs(ratio - nearest) <= 1e-9 * max(1.0, ratio):
        return max(1, nearest)
    return max(1, math.ceil(ratio))


def simulate(f: VectorField, x0, step: float, horizon: float) -> Trajectory:
    """Classical RK4 on a uniform grid ending exactly at ``horizon``.

    The requested step is shrunk (never enlarged) so that the grid lands on the
    horizon.  Integration stops early, with ``diverged=True``, once the state
    norm exceeds the overflow guard.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    if horizon < step:
        raise ValueError("horizon must be at least one step")
    x = np.array(x0, dtype=float)
    if x.shape != (f.n,):
        raise ValueError(f"initial state must have {f.n} coordinates")
    nsteps = step_count(step, horizon)
    h = horizon / nsteps
    states = np.empty((nsteps + 1, f.n))
    states[0] = x
    diverged = False
    last = nsteps
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(nsteps):
            k1 = f(x)
            k2 = f(x + 0.5 * h * k1)
            k3 = f(x + 0.5 * h * k2)
            k4 = f(x + h * k3)
            x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            states[k + 1] = x
            if not np.all(np.isfinite(x)) or np.linalg.norm(x) > DIVERGENCE_GUARD:
                diverged = True
                last = k + 1
                break
    times = h * np.arange(last + 1)
    return Trajectory(times=times, states=states[: last + 1], step=h, diverged=diverged)
