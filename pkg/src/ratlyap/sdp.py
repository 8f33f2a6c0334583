"""Semidefinite feasibility problems and a cvxpy-backed solver adapter.

A problem has named PSD blocks and affine equality rows ``<A_k, X> = b_k``.
Row functionals are stored as symmetric matrices in upper-triangle
coordinates: an entry ``(block, i, j, v)`` with ``i < j`` contributes
``2 * v * X[i, j]`` (the usual symmetric inner product), a diagonal entry
contributes ``v * X[i, i]``.  This matches the SDPA sparse convention, so the
export below can be fed to SDPA-family solvers directly.

The Gram system ``gram(Q) = lie(P)`` with ``P >= I, Q >= I`` is shifted to
``P = I + P0``, ``Q = I + Q0`` with ``P0, Q0 >= 0``.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .sosgram import AffineGramSystem, smat, svec, upper_pairs

logger = logging.getLogger(__name__)


class SdpStatus(str, Enum):
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"
    INACCURATE = "inaccurate"
    FAILED = "failed"


@dataclass(frozen=True)
class SdpProblem:
    blocks: tuple[tuple[str, int], ...]
    # each row: tuple of (block_index, i, j, value) sorted, i <= j
    rows: tuple[tuple[tuple[int, int, int, float], ...], ...]
    rhs: np.ndarray

    def __post_init__(self):
        canon = []
        for row in self.rows:
            merged: dict[tuple[int, int, int], float] = {}
            for b, i, j, v in row:
                if i > j:
                    i, j = j, i
                if not 0 <= b < len(self.blocks) or not 0 <= i <= j < self.blocks[b][1]:
                    raise ValueError(f"entry ({b}, {i}, {j}) out of range")
                merged[(b, i, j)] = merged.get((b, i, j), 0.0) + float(v)
            canon.append(tuple((b, i, j, v) for (b, i, j), v in sorted(merged.items()) if v != 0.0))
        object.__setattr__(self, "rows", tuple(canon))
        rhs = np.asarray(self.rhs, dtype=float).reshape(-1)
        if rhs.shape != (len(canon),):
            raise ValueError("rhs length must equal the number of rows")
        object.__setattr__(self, "rhs", rhs)

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    def block_index(self, name: str) -> int:
        return [b for b, _ in self.blocks].index(name)

    def operator(self, block: int) -> sp.csr_matrix:
        """Sparse map from the column-major vec of a block to row values."""
        size = self.blocks[block][1]
        data, ri, ci = [], [], []
        for k, row in enumerate(self.rows):
            for b, i, j, v in row:
                if b != block:
                    continue
                data.append(v)
                ri.append(k)
                ci.append(i + j * size)
                if i != j:
                    data.append(v)
                    ri.append(k)
                    ci.append(j + i * size)
        return sp.csr_matrix((data, (ri, ci)), shape=(self.n_rows, size * size))

    def apply(self, values: dict[str, np.ndarray]) -> np.ndarray:
        out = np.zeros(self.n_rows)
        for b, (name, _) in enumerate(self.blocks):
            out += self.operator(b) @ np.asarray(values[name], dtype=float).reshape(-1, order="F")
        return out

    def coefficient_scale(self) -> float:
        vals = [abs(v) for row in self.rows for *_, v in row] + list(np.abs(self.rhs))
        return max(vals, default=0.0)

    def to_sdpa(self) -> str:
        """SDPA sparse text: m, nBLOCK, block sizes, b vector, then `k blk i j v` lines (1-based)."""
        lines = [
            f'"ratlyap feasibility problem: blocks {", ".join(n for n, _ in self.blocks)}"',
            str(self.n_rows),
            str(len(self.blocks)),
            " ".join(str(size) for _, size in self.blocks),
            " ".join(repr(float(v)) for v in self.rhs) if self.n_rows else "",
        ]
        for k, row in enumerate(self.rows, start=1):
            for b, i, j, v in row:
                lines.append(f"{k} {b + 1} {i + 1} {j + 1} {v!r}")
        return "\n".join(lines) + "\n"

    def write_sdpa(self, path) -> None:
        Path(path).write_text(self.to_sdpa())

    @classmethod
    def from_sdpa(cls, text: str) -> "SdpProblem":
        raw = [ln.strip() for ln in text.splitlines()]
        lines = [ln for ln in raw if not ln.startswith(('"', "*"))]
        m = int(lines[0])
        nblocks = int(lines[1])
        sizes = [int(t) for t in lines[2].replace(",", " ").split()]
        rhs = [float(t) for t in lines[3].replace(",", " ").split()] if m else []
        rows: list[list] = [[] for _ in range(m)]
        for ln in lines[4:]:
            if not ln:
                continue
            k, b, i, j, v = ln.split()
            if int(k) == 0:
                # objective matrix; feasibility problems carry none
                continue
            rows[int(k) - 1].append((int(b) - 1, int(i) - 1, int(j) - 1, float(v)))
        blocks = tuple((f"B{b + 1}", sizes[b]) for b in range(nblocks))
        return cls(blocks, tuple(tuple(r) for r in rows), np.array(rhs))


def to_sdp(system: AffineGramSystem) -> SdpProblem:
    """Shifted problem in blocks P0, Q0; each row reads <Q0> - <P0> = lie(I) - gram(I)."""
    p_pairs = upper_pairs(system.p_size)
    q_pairs = upper_pairs(system.q_size)
    rows = []
    for k in range(system.n_rows):
        row = []
        for col, (i, j) in enumerate(p_pairs):
            v = system.A_P[k, col]
            if v:
                row.append((0, i, j, -v if i == j else -0.5 * v))
        for col, (i, j) in enumerate(q_pairs):
            v = system.A_Q[k, col]
            if v:
                row.append((1, i, j, v if i == j else 0.5 * v))
        rows.append(tuple(row))
    rhs = system.A_P @ svec(np.eye(system.p_size)) - system.A_Q @ svec(np.eye(system.q_size))
    return SdpProblem(blocks=(("P", system.p_size), ("Q", system.q_size)), rows=tuple(rows), rhs=rhs)


@dataclass(frozen=True)
class SolverSettings:
    solver: str = "CLARABEL"
    feas_tol: float = 1e-7
    eig_tol: float = 1e-8
    max_iters: int = 500
    time_limit: float | None = None


@dataclass
class SdpSolution:
    status: SdpStatus
    values: dict[str, np.ndarray] = field(default_factory=dict)
    equality_residual: float | None = None
    min_eigenvalues: dict[str, float] = field(default_factory=dict)
    solver_status: str = ""
    solve_time: float = 0.0
    message: str = ""

    @property
    def feasible(self) -> bool:
        return self.status is SdpStatus.FEASIBLE


def _check_values(problem: SdpProblem, values: dict[str, np.ndarray]) -> tuple[float, dict[str, float]]:
    residual = float(np.max(np.abs(problem.apply(values) - problem.rhs), initial=0.0))
    eigs = {}
    for name, size in problem.blocks:
        X = values[name]
        eigs[name] = float(np.linalg.eigvalsh(0.5 * (X + X.T)).min()) if size else 0.0
    return residual, eigs


def solve(problem: SdpProblem, settings: SolverSettings | None = None) -> SdpSolution:
    """Solve ``find X_b >= 0 with <A_k, X> = b_k`` and grade the result independently.

    The solver's own claims are never trusted for ``feasible``: residual and
    eigenvalues are recomputed from the returned blocks.
    """
    settings = settings or SolverSettings()
    if problem.n_rows == 0:
        values = {name: np.zeros((size, size)) for name, size in problem.blocks}
        residual, eigs = _check_values(problem, values)
        return SdpSolution(SdpStatus.FEASIBLE, values, residual, eigs, solver_status="trivial")

    import cvxpy as cp

    X = {name: cp.Variable((size, size), symmetric=True, name=name) for name, size in problem.blocks}
    lhs = 0
    for b, (name, _) in enumerate(problem.blocks):
        lhs = lhs + problem.operator(b) @ cp.vec(X[name], order="F")
    constraints = [lhs == problem.rhs] + [X[name] >> 0 for name, _ in problem.blocks]
    prob = cp.Problem(cp.Minimize(0), constraints)

    kwargs = {}
    if settings.solver.upper() == "CLARABEL":
        kwargs["max_iter"] = settings.max_iters
        if settings.time_limit:
            kwargs["time_limit"] = settings.time_limit
    elif settings.solver.upper() == "SCS":
        kwargs["max_iters"] = settings.max_iters * 20
        if settings.time_limit:
            kwargs["time_limit_secs"] = settings.time_limit
    elif settings.solver.upper() == "CVXOPT":
        kwargs["max_iters"] = settings.max_iters

    t0 = time.perf_counter()
    try:
        prob.solve(solver=settings.solver, **kwargs)
    except (cp.SolverError, ValueError, ArithmeticError) as exc:
        logger.warning("solver %s failed: %s", settings.solver, exc)
        return SdpSolution(SdpStatus.FAILED, solver_status="error", solve_time=time.perf_counter() - t0,
                           message=str(exc))
    elapsed = time.perf_counter() - t0
    raw = prob.status or ""

    values = {name: var.value for name, var in X.items()}
    have_values = all(v is not None for v in values.values())
    residual, eigs = (None, {})
    if have_values:
        values = {k: np.asarray(v, dtype=float) for k, v in values.items()}
        residual, eigs = _check_values(problem, values)
    else:
        values = {}

    if raw == cp.OPTIMAL and have_values:
        tol = settings.feas_tol * max(1.0, problem.coefficient_scale())
        if residual <= tol and min(eigs.values()) >= -settings.eig_tol:
            status = SdpStatus.FEASIBLE
            msg = ""
        else:
            status = SdpStatus.INACCURATE
            msg = f"solver reported optimal but recheck failed (residual {residual:.3g}, eigs {eigs})"
    elif raw == cp.INFEASIBLE:
        status, msg = SdpStatus.INFEASIBLE, ""
    elif raw in (cp.OPTIMAL_INACCURATE, cp.INFEASIBLE_INACCURATE):
        status, msg = SdpStatus.INACCURATE, f"solver status {raw}"
    else:
        status, msg = SdpStatus.FAILED, f"solver status {raw}"
    return SdpSolution(status, values, residual, eigs, solver_status=raw, solve_time=elapsed, message=msg)


def unshift(solution: SdpSolution) -> tuple[np.ndarray, np.ndarray]:
    """Recover P = I + P0 and Q = I + Q0 from a solved Gram problem."""
    P0, Q0 = solution.values["P"], solution.values["Q"]
    P = np.eye(P0.shape[0]) + 0.5 * (P0 + P0.T)
    Q = np.eye(Q0.shape[0]) + 0.5 * (Q0 + Q0.T)
    return P, Q


__all__ = ["SdpProblem", "SdpSolution", "SdpStatus", "SolverSettings", "solve", "to_sdp", "unshift", "smat"]
