"""Command-line entry point: ``ratlyap {certify, verify, simulate, bench}``.

Exit codes
    0  certified / verified / ok
    1  malformed input
    2  search exhausted (no conclusion about instability)
    3  field rejected (even degree or not homogeneous)
    4  solver failure or time budget hit
    5  certificate failed verification
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .dynamics import (VectorField, conserved_I, family_cubic, family_linear, family_nonhomog_counterexample,
                       family_quintic, simulate)
from .hierarchy import Outcome, RejectedField, SearchConfig, search
from .polyalg import PolyStructureError
from .sdp import SolverSettings, to_sdp
from .sosgram import CandidateShape, ShapeError, assemble
from .verify import DEFAULT_SEED, Certificate, RationalLyapunov, VerifySettings, check_certificate, quintic_W

logger = logging.getLogger("ratlyap")

EXIT_OK, EXIT_INPUT, EXIT_EXHAUSTED, EXIT_REJECTED, EXIT_SOLVER, EXIT_VERIFY_FAIL = 0, 1, 2, 3, 4, 5
TIME_BUDGET_ENV = "RATLYAP_LEVEL_TIME_BUDGET"


class InputError(ValueError):
    pass


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path) -> str:
    return sha256_bytes(Path(path).read_bytes())


@dataclass
class RunManifest:
    command: str
    input_digest: str
    config: dict
    tool_version: str = __version__
    seed: int | None = None
    wall_time: float = 0.0
    outputs: list[dict] = field(default_factory=list)

    def add_output(self, path) -> None:
        self.outputs.append({"path": str(path), "sha256": sha256_file(path)})

    def write(self, path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2, default=str))


# -- input handling -------------------------------------------------------------

def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.replace(";", ",").split(",") if t.strip()]
    except ValueError as exc:
        raise InputError(f"expected comma-separated numbers, got {text!r}") from exc


def _matrix(text: str) -> np.ndarray:
    rows = [r for r in text.split(";") if r.strip()]
    try:
        A = np.array([[float(v) for v in r.split(",")] for r in rows])
    except ValueError as exc:
        raise InputError(f"cannot parse matrix {text!r}; use 'a,b;c,d'") from exc
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InputError(f"matrix must be square, got shape {A.shape}")
    return A


def load_field_file(path) -> VectorField:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    try:
        if path.suffix == ".json" or text.lstrip().startswith("{"):
            return VectorField.from_json_dict(json.loads(text))
        lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
        return VectorField.from_text(lines, name=path.stem)
    except (ValueError, KeyError, TypeError, PolyStructureError) as exc:
        raise InputError(f"malformed vector field in {path}: {exc}") from exc


def field_from_args(args) -> VectorField:
    if getattr(args, "field", None):
        return load_field_file(args.field)
    family = getattr(args, "family", None)
    if family is None:
        raise InputError("give either --field FILE or --family NAME")
    if family == "quintic":
        return family_quintic(args.theta)
    if family == "cubic":
        try:
            return family_cubic(args.theta, args.lam)
        except ValueError as exc:
            raise InputError(str(exc)) from exc
    if family == "linear":
        if not args.matrix:
            raise InputError("--family linear needs --matrix 'a,b;c,d'")
        return family_linear(_matrix(args.matrix))
    if family == "nonhomog":
        return family_nonhomog_counterexample()
    raise InputError(f"unknown family {family!r}")


def field_digest(f: VectorField) -> str:
    return sha256_bytes(json.dumps(f.to_json_dict(), sort_keys=True).encode())


def _add_field_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("vector field")
    g.add_argument("--field", help="vector-field file (JSON, or text with one component per line)")
    g.add_argument("--family", choices=["linear", "cubic", "quintic", "nonhomog"], help="builtin family")
    g.add_argument("--theta", type=float, default=0.05, help="rotation angle for cubic/quintic (rad)")
    g.add_argument("--lambda", dest="lam", type=float, default=math.sqrt(2), help="cubic family parameter")
    g.add_argument("--matrix", help="linear family matrix, rows separated by ';'")


def _manifest_path(args, command: str) -> Path:
    if getattr(args, "manifest", None):
        return Path(args.manifest)
    if getattr(args, "out", None):
        return Path(str(args.out) + ".manifest.json")
    return Path(f"ratlyap_{command}.manifest.json")


def _solver_settings(args) -> SolverSettings:
    budget = os.environ.get(TIME_BUDGET_ENV)
    try:
        limit = float(budget) if budget else None
    except ValueError as exc:
        raise InputError(f"{TIME_BUDGET_ENV} must be a number of seconds") from exc
    return SolverSettings(solver=args.solver, time_limit=limit)


# -- commands -----------------------------------------------------------------------

def cmd_certify(args) -> int:
    t0 = time.perf_counter()
    f = field_from_args(args)
    config = SearchConfig(s_max=args.s_max, r_mode=args.r_mode, solver=_solver_settings(args),
                          verify=VerifySettings(seed=args.seed))
    manifest = RunManifest("certify", field_digest(f),
                           {"s_max": args.s_max, "r_mode": args.r_mode, "solver": args.solver,
                            "field": f.name or getattr(args, "field", "")}, seed=args.seed)
    try:
        report = search(f, config)
    except RejectedField as exc:
        payload = {"outcome": "rejected", "unstable": exc.unstable, "message": str(exc), "levels": []}
        code = EXIT_REJECTED
        print(("not asymptotically stable: " if exc.unstable else "rejected: ") + str(exc), file=sys.stderr)
    else:
        payload = report.to_json_dict()
        code = {Outcome.CERTIFIED: EXIT_OK, Outcome.EXHAUSTED: EXIT_EXHAUSTED, Outcome.ABORTED: EXIT_SOLVER}[report.outcome]
        for rec in report.levels:
            print(f"  (s, r) = ({rec.s}, {rec.r}): {rec.status}{' [verified]' if rec.verified else ''}"
                  f"  {rec.wall_time:.3f}s", file=sys.stderr)
        print(f"{report.outcome.value}: {report.message}", file=sys.stderr)
        if report.certificate is not None and args.cert_out:
            Path(args.cert_out).write_text(report.certificate.to_json())
            manifest.add_output(args.cert_out)
        if args.sdpa_dir:
            out_dir = Path(args.sdpa_dir)
            out_dir.mkdir(parents=True, exist_ok=True)
            for rec in report.levels:
                path = out_dir / f"level_s{rec.s}_r{rec.r}.dat-s"
                to_sdp(assemble(f, CandidateShape(f.n, rec.s, rec.r, f.degree))).write_sdpa(path)
                manifest.add_output(path)
    payload["field"] = f.to_json_dict()
    text = json.dumps(payload, indent=2)
    if args.out:
        Path(args.out).write_text(text)
        manifest.add_output(args.out)
    else:
        print(text)
    manifest.wall_time = time.perf_counter() - t0
    manifest.write(_manifest_path(args, "certify"))
    return code


def cmd_verify(args) -> int:
    t0 = time.perf_counter()
    try:
        data = json.loads(Path(args.certificate).read_text())
        cert = Certificate.from_json_dict(data.get("certificate") or data)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise InputError(f"cannot read certificate {args.certificate}: {exc}") from exc
    if args.field or args.family:
        f = field_from_args(args)
    elif "field" in data:
        f = VectorField.from_json_dict(data["field"])
    else:
        raise InputError("give the vector field with --field or --family")
    manifest = RunManifest("verify", sha256_file(args.certificate), {"field_digest": field_digest(f)}, seed=args.seed)
    try:
        result = check_certificate(f, cert, VerifySettings(seed=args.seed))
        out = {"passed": result.passed, "reasons": result.reasons, "diagnostics": result.diagnostics}
    except (ShapeError, PolyStructureError) as exc:
        out = {"passed": False, "reasons": [str(exc)], "diagnostics": {}}
    text = json.dumps(out, indent=2)
    if args.out:
        Path(args.out).write_text(text)
        manifest.add_output(args.out)
    print(text)
    manifest.wall_time = time.perf_counter() - t0
    manifest.write(_manifest_path(args, "verify"))
    return EXIT_OK if out["passed"] else EXIT_VERIFY_FAIL


class _CubicV:
    """(2x^2 + y^2)^lam (x^2 + y^2); homogeneous of degree 2 + 2 lam."""

    def __init__(self, lam: float):
        self.lam = lam
        self.degree = 2 + 2 * lam

    def __call__(self, x):
        return conserved_I(self.lam, x)


def load_lyapunov(source: str, args):
    """Return (callable V, homogeneity degree)."""
    if source == "builtin:quintic-W":
        return quintic_W(), 2.0
    if source == "builtin:cubic-V":
        v = _CubicV(args.lam)
        return v, v.degree
    try:
        data = json.loads(Path(source).read_text())
        cert = Certificate.from_json_dict(data.get("certificate") or data)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise InputError(f"unknown Lyapunov function {source!r}: {exc}") from exc
    V: RationalLyapunov = cert.lyapunov()
    return V, float(cert.s - 2 * cert.r)


def level_set_curves(V, degree: float, levels, n_angles: int = 361) -> list[tuple[float, np.ndarray]]:
    """Polar samples of {V = c} for a positive homogeneous V in the plane."""
    phi = np.linspace(0.0, 2 * np.pi, n_angles)
    units = np.column_stack([np.cos(phi), np.sin(phi)])
    vu = np.asarray(V(units), dtype=float)
    if np.any(vu <= 0):
        raise InputError("Lyapunov function is not positive on the unit circle; level sets undefined")
    return [(c, units * ((c / vu) ** (1.0 / degree))[:, None]) for c in levels]


def cmd_simulate(args) -> int:
    t0 = time.perf_counter()
    f = field_from_args(args)
    x0 = _floats(args.x0)
    if len(x0) != f.n:
        raise InputError(f"--x0 needs {f.n} coordinates")
    try:
        traj = simulate(f, x0, args.step, args.horizon)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    manifest = RunManifest("simulate", field_digest(f),
                           {"x0": x0, "step": args.step, "effective_step": traj.step, "horizon": args.horizon,
                            "lyapunov": args.lyapunov, "field": f.name}, seed=None)
    extra = {}
    if args.lyapunov:
        V, degree = load_lyapunov(args.lyapunov, args)
        extra["V"] = np.asarray(V(traj.states), dtype=float)
    out = args.out or "trajectory.csv"
    traj.to_csv(out, extra)
    manifest.add_output(out)
    if traj.diverged:
        print(f"trajectory diverged (|x| > 1e12) at t = {traj.times[-1]:.6g}", file=sys.stderr)
    if args.levelsets:
        if not args.lyapunov or f.n != 2:
            raise InputError("--levelsets needs --lyapunov and a planar field")
        levels = _floats(args.levels) if args.levels else sorted({float(extra["V"][0]), float(extra["V"][-1])})
        with open(args.levelsets, "w") as fh:
            fh.write("level,x1,x2\n")
            for c, pts in level_set_curves(V, degree, levels):
                for p in pts:
                    fh.write(f"{float(c)!r},{float(p[0])!r},{float(p[1])!r}\n")
        manifest.add_output(args.levelsets)
    summary = {"final_time": float(traj.times[-1]), "final_state": traj.final.tolist(),
               "final_norm": float(np.linalg.norm(traj.final)), "diverged": traj.diverged}
    if "V" in extra:
        summary["max_V_increase"] = float(np.max(np.diff(extra["V"]), initial=-np.inf))
    print(json.dumps(summary))
    manifest.wall_time = time.perf_counter() - t0
    manifest.write(_manifest_path(args, "simulate"))
    return EXIT_INPUT if traj.diverged and args.fail_on_divergence else EXIT_OK


def random_hurwitz(n: int, rng: np.random.Generator, margin: float = 0.1) -> np.ndarray:
    """Random matrix whose eigenvalues all have real part <= -margin."""
    A = rng.standard_normal((n, n))
    top = np.linalg.eigvals(A).real.max()
    return A - (top + margin + rng.uniform(0, 1)) * np.eye(n)


def bench_rows(seed: int = DEFAULT_SEED, s_max: int = 12, solver: SolverSettings | None = None) -> list[dict]:
    rng = np.random.default_rng(seed)
    cases = [(f"linear n={n} #{k}", family_linear(random_hurwitz(n, rng))) for n in (2, 3) for k in range(2)]
    lam = math.sqrt(2)
    cases += [(f"cubic theta={name} lambda=sqrt2", family_cubic(th, lam))
              for name, th in (("pi/4", math.pi / 4), ("pi/2", math.pi / 2), ("3pi/4", 3 * math.pi / 4))]
    cases += [(f"quintic theta={th}", family_quintic(th)) for th in (0.05, 0.5, 1.5)]
    rows = []
    for name, f in cases:
        t0 = time.perf_counter()
        kw = dict(s_max=s_max, solver=solver or SolverSettings())
        rational = search(f, SearchConfig(r_mode="free", **kw))
        poly = search(f, SearchConfig(r_mode="zero-only", **kw))
        rows.append({
            "system": name,
            "rational_level": list(rational.certified_level) if rational.certificate else None,
            "polynomial_s": poly.certified_level[0] if poly.certificate else None,
            "rational_outcome": rational.outcome.value,
            "polynomial_outcome": poly.outcome.value,
            "wall_time": time.perf_counter() - t0,
        })
    return rows


def format_bench(rows: list[dict]) -> str:
    head = f"{'system':34s} {'rational (s,r)':>15s} {'polynomial s':>13s} {'time [s]':>9s}"
    lines = [head, "-" * len(head)]
    for row in rows:
        rat = "({}, {})".format(*row["rational_level"]) if row["rational_level"] else "-"
        pol = str(row["polynomial_s"]) if row["polynomial_s"] else "-"
        lines.append(f"{row['system']:34s} {rat:>15s} {pol:>13s} {row['wall_time']:9.2f}")
    return "\n".join(lines)


def cmd_bench(args) -> int:
    t0 = time.perf_counter()
    rows = bench_rows(seed=args.seed, s_max=args.s_max, solver=_solver_settings(args))
    manifest = RunManifest("bench", sha256_bytes(b"builtin-bench"), {"s_max": args.s_max, "solver": args.solver},
                           seed=args.seed)
    table = format_bench(rows)
    print(table)
    if args.out:
        Path(args.out).write_text(json.dumps({"rows": rows, "seed": args.seed}, indent=2))
        manifest.add_output(args.out)
        txt = Path(str(args.out) + ".txt")
        txt.write_text(table + "\n")
        manifest.add_output(txt)
    manifest.wall_time = time.perf_counter() - t0
    manifest.write(_manifest_path(args, "bench"))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ratlyap", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"ratlyap {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", help="output file")
        p.add_argument("--manifest", help="run manifest path (default: <out>.manifest.json)")
        p.add_argument("--seed", type=int, default=DEFAULT_SEED, help="sphere-sampling seed")

    p = sub.add_parser("certify", help="search the (s, r) hierarchy for a rational Lyapunov function")
    _add_field_args(p)
    common(p)
    p.add_argument("--s-max", type=int, default=12)
    p.add_argument("--r-mode", choices=["free", "zero-only"], default="free")
    p.add_argument("--solver", default="CLARABEL")
    p.add_argument("--cert-out", help="write the certificate JSON here on success")
    p.add_argument("--sdpa-dir", help="write each attempted level's SDP here in SDPA sparse format")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("verify", help="independently check a stored certificate")
    p.add_argument("certificate")
    _add_field_args(p)
    common(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("simulate", help="fixed-step RK4 trajectory to CSV")
    _add_field_args(p)
    common(p)
    p.add_argument("--x0", required=True, help="initial state, comma separated")
    p.add_argument("--step", type=float, default=1e-3)
    p.add_argument("--horizon", type=float, default=10.0)
    p.add_argument("--lyapunov", help="builtin:quintic-W, builtin:cubic-V, or a certificate JSON")
    p.add_argument("--levelsets", help="write level-set curves of the Lyapunov function to this CSV")
    p.add_argument("--levels", help="comma-separated level values (default: V at start and end)")
    p.add_argument("--fail-on-divergence", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bench", help="minimal certified levels across the builtin families")
    common(p)
    p.add_argument("--s-max", type=int, default=12)
    p.add_argument("--solver", default="CLARABEL")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
