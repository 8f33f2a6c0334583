"""The (s, r) search schedule over Gram feasibility problems."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator

from .dynamics import VectorField
from .polyalg import PolyStructureError
from .sdp import SdpStatus, SolverSettings, solve, to_sdp, unshift
from .sosgram import CandidateShape, assemble
from .verify import Certificate, VerifySettings, check_certificate

logger = logging.getLogger(__name__)

NO_INSTABILITY_CLAIM = (
    "no certificate found up to the configured degree cap; "
    "no conclusion about instability can be drawn"
)


class Outcome(str, Enum):
    CERTIFIED = "certified"
    EXHAUSTED = "exhausted"
    ABORTED = "aborted"


class RejectedField(ValueError):
    """Input the hierarchy cannot be applied to.

    ``unstable`` is True only for even-degree homogeneous fields, which are
    never asymptotically stable.
    """

    def __init__(self, message: str, unstable: bool = False):
        super().__init__(message)
        self.unstable = unstable


@dataclass(frozen=True)
class SearchConfig:
    s_max: int = 12
    r_mode: str = "free"  # "free" or "zero-only"
    level_time_budget: float | None = None
    total_time_budget: float | None = None
    solver: SolverSettings = field(default_factory=SolverSettings)
    verify: VerifySettings = field(default_factory=VerifySettings)

    def __post_init__(self):
        if self.s_max < 2 or self.s_max % 2:
            raise ValueError(f"s_max must be an even integer >= 2, got {self.s_max}")
        if self.r_mode not in ("free", "zero-only"):
            raise ValueError(f"r_mode must be 'free' or 'zero-only', got {self.r_mode!r}")


@dataclass
class LevelRecord:
    s: int
    r: int
    status: str
    wall_time: float
    verified: bool = False
    message: str = ""

    def to_json_dict(self) -> dict:
        return {"s": self.s, "r": self.r, "status": self.status, "wall_time": self.wall_time,
                "verified": self.verified, "message": self.message}


@dataclass
class SearchReport:
    outcome: Outcome
    levels: list[LevelRecord]
    certificate: Certificate | None = None
    message: str = ""

    @property
    def certified_level(self) -> tuple[int, int] | None:
        return (self.certificate.s, self.certificate.r) if self.certificate else None

    def status_of(self, s: int, r: int) -> str | None:
        for rec in self.levels:
            if (rec.s, rec.r) == (s, r):
                return rec.status
        return None

    def to_json_dict(self) -> dict:
        return {
            "outcome": self.outcome.value,
            "certified_level": list(self.certified_level) if self.certificate else None,
            "message": self.message,
            "levels": [rec.to_json_dict() for rec in self.levels],
            "certificate": self.certificate.to_json_dict() if self.certificate else None,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2)


def schedule(s_max: int, r_mode: str = "free") -> Iterator[tuple[int, int]]:
    """Levels (s, r) in the order they are tried: s outer, r inner."""
    for s in range(2, s_max + 1, 2):
        for r in range(s // 2 if r_mode == "free" else 1):
            yield s, r


def check_searchable(f: VectorField) -> int:
    """Return the field degree, or raise RejectedField."""
    if not f.degrees():
        raise RejectedField("the zero vector field is not asymptotically stable", unstable=True)
    if not f.is_homogeneous():
        raise RejectedField(
            "vector field is not homogeneous; rational Lyapunov functions need not exist for "
            "inhomogeneous fields (e.g. xdot = -x + xy, ydot = -y), so the hierarchy does not apply"
        )
    d = f.degree
    if d % 2 == 0:
        raise RejectedField(f"homogeneous fields of even degree ({d}) are never asymptotically stable",
                            unstable=True)
    return d


def certify_level(f: VectorField, s: int, r: int, solver: SolverSettings | None = None,
                  verify: VerifySettings | None = None) -> tuple[Certificate | None, LevelRecord]:
    """Assemble, solve and verify one level.  Never raises on solver trouble."""
    t0 = time.perf_counter()
    shape = CandidateShape(f.n, s, r, f.degree)
    problem = to_sdp(assemble(f, shape))
    sol = solve(problem, solver)
    record = LevelRecord(s, r, sol.status.value, 0.0, message=sol.message)
    cert = None
    if sol.status is SdpStatus.FEASIBLE:
        P, Q = unshift(sol)
        cand = Certificate(s, r, f.degree, f.n, P, Q)
        check = check_certificate(f, cand, verify)
        cand.diagnostics = dict(check.diagnostics, solver_status=sol.solver_status,
                                solver_residual=sol.equality_residual)
        if check.passed:
            cert = cand
            record.verified = True
        else:
            record.message = "; ".join(check.reasons)
            logger.info("level (%d, %d) solver-feasible but rejected: %s", s, r, record.message)
    record.wall_time = time.perf_counter() - t0
    return cert, record


def search(f: VectorField, config: SearchConfig | None = None) -> SearchReport:
    """Walk the schedule and return the first verified certificate."""
    config = config or SearchConfig()
    try:
        check_searchable(f)
    except PolyStructureError as exc:
        raise RejectedField(str(exc)) from exc
    solver = config.solver
    if config.level_time_budget and solver.time_limit is None:
        solver = SolverSettings(**{**solver.__dict__, "time_limit": config.level_time_budget})

    t_start = time.perf_counter()
    levels: list[LevelRecord] = []
    failures = 0
    for s, r in schedule(config.s_max, config.r_mode):
        if config.total_time_budget and time.perf_counter() - t_start > config.total_time_budget:
            return SearchReport(Outcome.ABORTED, levels, message="time budget exhausted; " + NO_INSTABILITY_CLAIM)
        cert, record = certify_level(f, s, r, solver, config.verify)
        levels.append(record)
        logger.info("level (%d, %d): %s in %.3fs", s, r, record.status, record.wall_time)
        if cert is not None:
            return SearchReport(Outcome.CERTIFIED, levels, cert,
                                message=f"verified rational Lyapunov certificate at (s, r) = ({s}, {r})")
        if record.status == SdpStatus.FAILED.value:
            failures += 1
    if failures:
        return SearchReport(Outcome.ABORTED, levels,
                            message=f"{failures} level(s) hit solver failures; " + NO_INSTABILITY_CLAIM)
    return SearchReport(Outcome.EXHAUSTED, levels, message=NO_INSTABILITY_CLAIM)
