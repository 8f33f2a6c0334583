"""Exit criteria for the package, one test per criterion.

Each test records a pass/fail line that is printed in the pytest terminal
summary under "acceptance criteria".
"""

import json
import math
import time

import numpy as np
import pytest
import sympy
from scipy.linalg import solve_continuous_lyapunov

from conftest import PRODUCED_CERTIFICATES
from ratlyap.cli import main, random_hurwitz
from ratlyap.dynamics import VectorField, conserved_I, family_cubic, family_linear, family_nonhomog_counterexample, \
    family_quintic, simulate
from ratlyap.hierarchy import NO_INSTABILITY_CLAIM, SearchConfig, search
from ratlyap.polyalg import HomogPoly, enumerate_monomials
from ratlyap.sosgram import CandidateShape, gram_poly, lie_numerator_map
from ratlyap.verify import Certificate, RationalLyapunov, check_certificate, lyapunov_derivative, quintic_W

pytestmark = pytest.mark.acceptance

SQRT2 = math.sqrt(2)


def certify_cli(tmp_path, *extra):
    out = tmp_path / "report.json"
    t0 = time.perf_counter()
    code = main(["certify", "--family", "quintic", "--theta", "0.05", "--out", str(out), *extra])
    elapsed = time.perf_counter() - t0
    return code, json.loads(out.read_text()), elapsed


def test_criterion_1_rational_reproduction(tmp_path, criterion):
    criterion(1, "quintic theta=0.05 certifies at (s, r) = (4, 1); (2,0), (4,0) infeasible; < 10 s")
    code, report, elapsed = certify_cli(tmp_path)
    statuses = {(lv["s"], lv["r"]): lv["status"] for lv in report["levels"]}
    criterion(1, "quintic theta=0.05 certifies at (s, r) = (4, 1); (2,0), (4,0) infeasible; < 10 s",
              f"{elapsed:.2f}s")
    assert code == 0
    assert report["certified_level"] == [4, 1]
    assert statuses == {(2, 0): "infeasible", (4, 0): "infeasible", (4, 1): "feasible"}
    assert elapsed < 10


def test_criterion_2_polynomial_only(tmp_path, criterion):
    title = "zero-only mode: first success at s = 8, infeasible at s = 2, 4, 6; < 30 s"
    criterion(2, title)
    code, report, elapsed = certify_cli(tmp_path, "--r-mode", "zero-only")
    criterion(2, title, f"{elapsed:.2f}s")
    assert code == 0
    assert report["certified_level"] == [8, 0]
    assert [(lv["s"], lv["status"]) for lv in report["levels"]] == [
        (2, "infeasible"), (4, "infeasible"), (6, "infeasible"), (8, "feasible")]
    assert elapsed < 30


def quadratic_form_after_dividing_norm(h: HomogPoly) -> tuple[np.ndarray, float]:
    """S with h = |x|^2 x'Sx, found by least squares on coefficients; also the remainder."""
    n = h.n
    quad = enumerate_monomials(n, 2).monomials
    rows = enumerate_monomials(n, 4).monomials
    norm2 = HomogPoly.norm_squared(n)
    M = np.column_stack([(norm2 * HomogPoly.monomial(m)).coefficient_vector(rows) for m in quad])
    target = h.coefficient_vector(rows)
    c, *_ = np.linalg.lstsq(M, target, rcond=None)
    S = np.zeros((n, n))
    for coef, m in zip(c, quad):
        idx = [i for i, e in enumerate(m) for _ in range(e)]
        i, j = idx
        if i == j:
            S[i, i] = coef
        else:
            S[i, j] = S[j, i] = coef / 2
    return S, float(np.max(np.abs(M @ c - target)))


def test_criterion_3_linear_baseline(criterion):
    title = "20 random Hurwitz 2x2 and 3x3: (2, 0) certificates satisfy the Lyapunov equation to 1e-6 |S|"
    criterion(3, title)
    rng = np.random.default_rng(2024)
    worst = 0.0
    for n in (2, 3):
        for _ in range(20):
            A = random_hurwitz(n, rng)
            assert np.linalg.eigvals(A).real.max() <= -0.1
            report = search(family_linear(A), SearchConfig(s_max=2))
            assert report.certified_level == (2, 0)
            cert = report.certificate
            P = cert.P  # linear monomial basis: the Gram matrix is the quadratic form itself
            S, remainder = quadratic_form_after_dividing_norm(gram_poly(cert.Q, cert.shape.z_basis))
            assert remainder <= 1e-9 * np.abs(S).max()
            lyap = np.abs(A.T @ P + P @ A + S).max()
            assert lyap <= 1e-6 * np.linalg.norm(S, 2)
            P_oracle = solve_continuous_lyapunov(A.T, -S)
            assert np.abs(P_oracle - P).max() <= 1e-6 * np.linalg.norm(P, 2)
            worst = max(worst, lyap / np.linalg.norm(S, 2))
    criterion(3, title, f"worst relative residual {worst:.2e}")


def test_criterion_4_explicit_solution(criterion):
    title = "xdot=-x+xy, ydot=-y from (2, 3): endpoint at ln 2 within 1e-4 of (e^1.5, 1.5)"
    traj = simulate(family_nonhomog_counterexample(), [2.0, 3.0], 1e-4, math.log(2))
    err = np.abs(traj.final - [math.exp(1.5), 1.5]).max()
    criterion(4, title, f"error {err:.2e}")
    assert traj.times[-1] == pytest.approx(math.log(2), abs=1e-14)
    assert err <= 1e-4


def test_criterion_5_conservation(criterion):
    title = "theta=0 cubic, lambda=sqrt2: relative drift of I(x, y) <= 1e-5 over t in [0, 5]"
    lam = SQRT2
    drift = 0.0
    for x0 in ([1.0, 1.0], [0.3, -1.2]):
        traj = simulate(family_cubic(0.0, lam), x0, 1e-4, 5.0)
        vals = conserved_I(lam, traj.states)
        drift = max(drift, float(np.max(np.abs(vals - vals[0])) / vals[0]))
    criterion(5, title, f"drift {drift:.2e}")
    assert drift <= 1e-5


def test_criterion_6_closed_form_derivative(criterion):
    title = "-dW/dt numerator equals sin(theta) |x|^4 |grad W|^2 coefficientwise (1e-10)"
    x, y = sympy.symbols("x y")
    W = (x**4 + y**4) / (x**2 + y**2)
    grad_sq = sympy.diff(W, x) ** 2 + sympy.diff(W, y) ** 2
    worst = 0.0
    for theta in (0.05, 0.5, 1.5):
        num, k = lyapunov_derivative(quintic_W(), family_quintic(theta))
        assert k == 2
        # -dW/dt = num / (x^2 + y^2)^2, so num = sin(theta) (x^2 + y^2)^4 |grad W|^2
        closed = sympy.Poly(sympy.cancel((x**2 + y**2) ** 4 * grad_sq), x, y)
        expect = {m: math.sin(theta) * float(c) for m, c in closed.terms()}
        scale = max(abs(v) for v in expect.values())
        monos = set(expect) | set(num.terms)
        err = max(abs(num.coeff(m) - expect.get(m, 0.0)) for m in monos)
        worst = max(worst, err / scale)
    criterion(6, title, f"worst relative error {worst:.2e}")
    assert worst <= 1e-10


def mutations(cert):
    for name in ("P", "Q"):
        M = getattr(cert, name)
        for i in range(M.shape[0]):
            for j in range(i, M.shape[0]):
                for delta in (10.0, -10.0):
                    mutated = M.copy()
                    mutated[i, j] += delta
                    if i != j:
                        mutated[j, i] += delta
                    kw = {"P": cert.P, "Q": cert.Q, name: mutated}
                    yield Certificate(cert.s, cert.r, cert.d, cert.n, kw["P"], kw["Q"])
                    if i != j:
                        lone = M.copy()
                        lone[i, j] += delta
                        kw = {"P": cert.P, "Q": cert.Q, name: lone}
                        yield Certificate(cert.s, cert.r, cert.d, cert.n, kw["P"], kw["Q"])


def test_criterion_7_certificate_soundness(criterion):
    title = "every produced certificate verifies; every +-10 single-entry mutation fails"
    criterion(7, title)
    # make sure a spread of shapes is present even when run in isolation
    for f, cfg in [(family_quintic(0.05), SearchConfig(s_max=8)),
                   (family_quintic(0.05), SearchConfig(s_max=8, r_mode="zero-only")),
                   (family_quintic(0.5), SearchConfig(s_max=8)),
                   (family_cubic(math.pi / 4, SQRT2), SearchConfig(s_max=8)),
                   (family_linear([[-1.0, 1.0], [0.0, -1.0]]), SearchConfig())]:
        assert search(f, cfg).certificate is not None
    assert PRODUCED_CERTIFICATES
    n_mut = 0
    for f, cert in PRODUCED_CERTIFICATES:
        res = check_certificate(f, cert)
        assert res.passed, res.reasons
        assert res.diagnostics["identity_residual_relative"] <= 1e-6
        assert res.diagnostics["min_eig_P"] >= 1 - 1e-8 and res.diagnostics["min_eig_Q"] >= 1 - 1e-8
        for bad in mutations(cert):
            n_mut += 1
            assert not check_certificate(f, bad).passed
    criterion(7, title, f"{len(PRODUCED_CERTIFICATES)} certificates, {n_mut} mutations")


def random_homogeneous_field(rng, n, d):
    basis = enumerate_monomials(n, d)
    return VectorField.homogeneous(
        [HomogPoly(n, d, dict(zip(basis.monomials, rng.standard_normal(len(basis))))) for _ in range(n)])


def test_criterion_8_two_path_equivalence(criterion):
    title = "Jacobian-based assembly and gradient-based derivative agree on 50 random instances (1e-10)"
    rng = np.random.default_rng(77)
    worst = 0.0
    for _ in range(50):
        d = int(rng.choice([1, 3, 5]))
        s = int(rng.choice([2, 4, 6]))
        r = int(rng.integers(0, s // 2))
        f = random_homogeneous_field(rng, 2, d)
        shape = CandidateShape(2, s, r, d)
        k = len(shape.m_basis)
        M = rng.standard_normal((k, k))
        P = M + M.T
        a = lie_numerator_map(f, shape)(P)
        b, _ = lyapunov_derivative(RationalLyapunov(gram_poly(P, shape.m_basis), r), f)
        scale = max(a.max_abs_coeff(), b.max_abs_coeff())
        err = max((abs(a.coeff(m) - b.coeff(m)) for m in set(a.terms) | set(b.terms)), default=0.0)
        worst = max(worst, err / scale)
    criterion(8, title, f"worst relative difference {worst:.2e}")
    assert worst <= 1e-10


def test_criterion_9_exhausted_is_not_unstable(tmp_path, criterion):
    title = "theta=0 cubic (a center) exhausts with exit 2 and an explicit no-instability-claim message"
    criterion(9, title)
    out = tmp_path / "center.json"
    code = main(["certify", "--family", "cubic", "--theta", "0", "--lambda", "1.41421356", "--s-max", "8",
                 "--out", str(out)])
    report = json.loads(out.read_text())
    assert code == 2
    assert report["outcome"] == "exhausted" and report["certificate"] is None
    assert report["message"] == NO_INSTABILITY_CLAIM
    assert all(lv["status"] != "feasible" for lv in report["levels"])
