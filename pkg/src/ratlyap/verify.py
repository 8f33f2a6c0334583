"""Certificate checking and Lyapunov-candidate validation.

Nothing here reads solver output.  A certificate is checked by rebuilding
both sides of the Gram identity from (P, Q) and the vector field, then
checking spectral margins and sampling the two numerators on the sphere.
The derivative numerator is computed from the gradient of p directly, a
separate route from the Jacobian-based assembly in :mod:`ratlyap.sosgram`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import __version__
from .dynamics import Trajectory, VectorField
from .polyalg import HomogPoly, dot, evaluate, gradient, identity_vector
from .sosgram import CandidateShape, ShapeError, gram_poly

DEFAULT_SEED = 20190101


@dataclass(frozen=True)
class VerifySettings:
    residual_tol: float = 1e-6
    eig_tol: float = 1e-8
    n_samples: int = 200
    seed: int = DEFAULT_SEED
    margin_tol: float = 1e-9


@dataclass
class Certificate:
    s: int
    r: int
    d: int
    n: int
    P: np.ndarray
    Q: np.ndarray
    diagnostics: dict[str, Any] = field(default_factory=dict)

    @property
    def shape(self) -> CandidateShape:
        return CandidateShape(self.n, self.s, self.r, self.d)

    def lyapunov(self) -> "RationalLyapunov":
        return RationalLyapunov(gram_poly(self.P, self.shape.m_basis), self.r)

    def to_json_dict(self) -> dict:
        iu = np.triu_indices(self.P.shape[0])
        ju = np.triu_indices(self.Q.shape[0])
        return {
            "format": "ratlyap-certificate",
            "tool_version": __version__,
            "shape": {"n": self.n, "s": self.s, "r": self.r, "d": self.d},
            "P_upper": [float(v) for v in self.P[iu]],
            "Q_upper": [float(v) for v in self.Q[ju]],
            "P": self.P.tolist(),
            "Q": self.Q.tolist(),
            "diagnostics": _jsonable(self.diagnostics),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2)

    @classmethod
    def from_json_dict(cls, data: dict) -> "Certificate":
        sh = data["shape"]
        return cls(int(sh["s"]), int(sh["r"]), int(sh["d"]), int(sh["n"]),
                   np.array(data["P"], dtype=float), np.array(data["Q"], dtype=float),
                   dict(data.get("diagnostics", {})))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


@dataclass(frozen=True)
class RationalLyapunov:
    """V(x) = numerator(x) / |x|^(2r)."""

    numerator: HomogPoly
    r: int

    def __post_init__(self):
        if self.r < 0 or self.numerator.degree <= 2 * self.r:
            raise ShapeError(f"numerator degree {self.numerator.degree} must exceed 2r = {2 * self.r}")

    @property
    def n(self) -> int:
        return self.numerator.n

    def __call__(self, x) -> float | np.ndarray:
        x = np.asarray(x, dtype=float)
        return evaluate(self.numerator, x) / np.sum(x * x, axis=-1) ** self.r

    def grad(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        pts = np.atleast_2d(x)
        nrm2 = np.sum(pts * pts, axis=-1)[:, None]
        p = np.atleast_1d(evaluate(self.numerator, pts))[:, None]
        gp = np.stack([np.atleast_1d(evaluate(g, pts)) for g in gradient(self.numerator)], axis=-1)
        out = (gp * nrm2 - 2 * self.r * p * pts) / nrm2 ** (self.r + 1)
        return out.reshape(x.shape)

    def derivative(self, f: VectorField, x) -> float | np.ndarray:
        """dV/dt = <grad V, f> at x."""
        return np.sum(self.grad(x) * f(x), axis=-1)


def quintic_W() -> RationalLyapunov:
    """(x^4 + y^4) / (x^2 + y^2)."""
    return RationalLyapunov(HomogPoly(2, 4, {(4, 0): 1.0, (0, 4): 1.0}), 1)


def lyapunov_derivative(V: RationalLyapunov, f: VectorField) -> tuple[HomogPoly, int]:
    """Numerator and denominator exponent of -dV/dt.

    -dV/dt = (-|x|^2 <grad p, f> + 2 r p <x, f>) / |x|^(2(r+1)).
    """
    fc = f.homogeneous_components()
    if len(fc) != V.n:
        raise ShapeError("dimension mismatch between V and f")
    p = V.numerator
    norm2 = HomogPoly.norm_squared(V.n)
    num = -(norm2 * dot(gradient(p), fc))
    if V.r:
        num = num + (p * dot(identity_vector(V.n), fc)).scale(2.0 * V.r)
    return num, V.r + 1


def sphere_samples(n: int, count: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    pts = rng.standard_normal((count, n))
    return pts / np.linalg.norm(pts, axis=1, keepdims=True)


@dataclass
class CheckResult:
    passed: bool
    reasons: list[str]
    diagnostics: dict[str, Any]

    def __bool__(self) -> bool:
        return self.passed


def check_certificate(f: VectorField, cert: Certificate, settings: VerifySettings | None = None) -> CheckResult:
    """Rebuild the Gram identity from (P, Q) and f and test every condition."""
    settings = settings or VerifySettings()
    shape = cert.shape
    if f.n != cert.n or not f.is_homogeneous() or f.degree != cert.d:
        raise ShapeError("certificate shape does not match the vector field")
    P = np.asarray(cert.P, dtype=float)
    Q = np.asarray(cert.Q, dtype=float)
    if P.shape != (len(shape.m_basis),) * 2 or Q.shape != (len(shape.z_basis),) * 2:
        raise ShapeError("Gram matrix sizes do not match the certificate shape")
    reasons = []

    sym_err = max(np.abs(P - P.T).max(), np.abs(Q - Q.T).max())
    P = 0.5 * (P + P.T)
    Q = 0.5 * (Q + Q.T)
    numerator = gram_poly(P, shape.m_basis)
    rhs, _ = lyapunov_derivative(RationalLyapunov(numerator, cert.r), f)
    lhs = gram_poly(Q, shape.z_basis)
    monos = set(lhs.terms) | set(rhs.terms)
    residual = max((abs(lhs.coeff(m) - rhs.coeff(m)) for m in monos), default=0.0)
    scale = max(lhs.max_abs_coeff(), rhs.max_abs_coeff())
    rel_residual = residual / scale if scale > 0 else (0.0 if residual == 0 else np.inf)
    if not residual <= settings.residual_tol * scale or scale == 0.0:
        reasons.append(f"identity residual {residual:.3g} exceeds {settings.residual_tol:g} x {scale:.3g}")
    if sym_err > settings.residual_tol * max(1.0, np.abs(P).max(), np.abs(Q).max()):
        reasons.append(f"Gram matrices are not symmetric (asymmetry {sym_err:.3g})")

    eig_P = float(np.linalg.eigvalsh(P).min())
    eig_Q = float(np.linalg.eigvalsh(Q).min())
    if eig_P < 1 - settings.eig_tol:
        reasons.append(f"min eig P = {eig_P:.6g} < 1")
    if eig_Q < 1 - settings.eig_tol:
        reasons.append(f"min eig Q = {eig_Q:.6g} < 1")

    # m' P m >= eig_min(P) |m|^2 pointwise, likewise for Q
    pts = sphere_samples(cert.n, settings.n_samples, settings.seed)
    m_vals = shape.m_basis.evaluate(pts)
    z_vals = shape.z_basis.evaluate(pts)
    num_vals = evaluate(numerator, pts)
    der_vals = evaluate(rhs, pts)
    num_floor = np.max(eig_P * np.sum(m_vals ** 2, axis=1) - num_vals)
    der_floor = np.max(eig_Q * np.sum(z_vals ** 2, axis=1) - der_vals)
    tol_num = settings.residual_tol * max(1.0, np.abs(num_vals).max())
    tol_der = settings.residual_tol * max(1.0, np.abs(der_vals).max())
    if num_floor > tol_num or num_vals.min() <= 0:
        reasons.append(f"sampled W numerator below its spectral lower bound (min {num_vals.min():.3g})")
    if der_floor > tol_der or der_vals.min() <= 0:
        reasons.append(f"sampled -dW/dt numerator below its spectral lower bound (min {der_vals.min():.3g})")

    diagnostics = {
        "identity_residual": residual,
        "identity_residual_relative": rel_residual,
        "min_eig_P": eig_P,
        "min_eig_Q": eig_Q,
        "sphere_min_W_numerator": float(num_vals.min()),
        "sphere_min_dW_numerator": float(der_vals.min()),
        "samples": settings.n_samples,
        "seed": settings.seed,
        "residual_tol": settings.residual_tol,
        "eig_tol": settings.eig_tol,
    }
    return CheckResult(not reasons, reasons, diagnostics)


def check_candidate(V: RationalLyapunov, f: VectorField, samples: int = 2000,
                    seed: int = DEFAULT_SEED, margin_tol: float = 1e-9) -> CheckResult:
    """Falsification check of V > 0 and -dV/dt > 0 on sampled sphere points.

    Passing is evidence, not proof.  The V numerator is normalized by its
    largest sampled magnitude; the -dV/dt numerator by the largest sampled
    Cauchy-Schwarz bound |x|^2 |grad p| |f| + 2r |p| |x| |f|, so values that
    are positive only at rounding level do not pass.
    """
    pts = sphere_samples(V.n, samples, seed)
    v_vals = np.atleast_1d(evaluate(V.numerator, pts))
    num, _ = lyapunov_derivative(V, f)
    d_vals = np.atleast_1d(evaluate(num, pts))
    grad_norm = np.linalg.norm(np.stack([np.atleast_1d(evaluate(g, pts)) for g in gradient(V.numerator)], axis=-1), axis=1)
    f_norm = np.linalg.norm(f(pts), axis=1)
    bound = grad_norm * f_norm + 2 * V.r * np.abs(v_vals) * f_norm
    tiny = np.finfo(float).tiny
    v_min = float(v_vals.min() / max(np.abs(v_vals).max(), tiny))
    d_min = float(d_vals.min() / max(bound.max(), tiny))
    reasons = []
    if not v_min > margin_tol:
        reasons.append(f"V not positive on samples (normalized min {v_min:.3g})")
    if not d_min > margin_tol:
        reasons.append(f"-dV/dt not positive on samples (normalized min {d_min:.3g})")
    return CheckResult(not reasons, reasons, {"min_V": v_min, "min_neg_dV": d_min, "samples": samples, "seed": seed})


def trajectory_decrease(V, traj: Trajectory) -> float:
    """Largest increase of V between consecutive trajectory samples."""
    vals = np.asarray(V(traj.states), dtype=float)
    if len(vals) < 2:
        return 0.0
    return float(np.max(np.diff(vals)))


__all__ = [
    "Certificate", "CheckResult", "RationalLyapunov", "VerifySettings", "check_candidate",
    "check_certificate", "lyapunov_derivative", "quintic_W", "sphere_samples", "trajectory_decrease",
]
