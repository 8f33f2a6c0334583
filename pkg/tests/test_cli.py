import csv
import json
import math

import numpy as np
import pytest

from ratlyap.cli import main, random_hurwitz, sha256_file


def run(args, tmp_path):
    return main([str(a) for a in args])


@pytest.fixture
def quintic_cert(tmp_path):
    out, cert = tmp_path / "report.json", tmp_path / "cert.json"
    code = run(["certify", "--family", "quintic", "--theta", "0.05", "--s-max", "8", "--out", out,
                "--cert-out", cert], tmp_path)
    assert code == 0
    return out, cert


class TestCertify:
    def test_quintic_rational(self, quintic_cert):
        report = json.loads(quintic_cert[0].read_text())
        assert report["certified_level"] == [4, 1]
        assert [lv["status"] for lv in report["levels"]] == ["infeasible", "infeasible", "feasible"]

    def test_quintic_polynomial_only(self, tmp_path):
        out = tmp_path / "r.json"
        assert run(["certify", "--family", "quintic", "--theta", "0.05", "--r-mode", "zero-only", "--s-max", "8",
                    "--out", out], tmp_path) == 0
        assert json.loads(out.read_text())["certified_level"] == [8, 0]

    def test_center_exhausted(self, tmp_path):
        out = tmp_path / "r.json"
        code = run(["certify", "--family", "cubic", "--theta", "0", "--lambda", "1.41421356", "--s-max", "8",
                    "--out", out], tmp_path)
        assert code == 2
        assert "no conclusion about instability" in json.loads(out.read_text())["message"]

    def test_rejections(self, tmp_path):
        assert run(["certify", "--family", "nonhomog", "--out", tmp_path / "a.json"], tmp_path) == 3
        field = tmp_path / "even.txt"
        field.write_text("-x1^2\n-x2^2\n")
        assert run(["certify", "--field", field, "--out", tmp_path / "b.json"], tmp_path) == 3

    def test_malformed_input(self, tmp_path):
        bad = tmp_path / "bad.txt"
        bad.write_text("x1 +* (\n")
        assert run(["certify", "--field", bad, "--out", tmp_path / "c.json"], tmp_path) == 1
        assert run(["certify", "--family", "linear", "--out", tmp_path / "d.json"], tmp_path) == 1
        assert run(["certify", "--out", tmp_path / "e.json"], tmp_path) == 1

    def test_solver_failure(self, tmp_path):
        assert run(["certify", "--family", "linear", "--matrix=-1,0;0,-1", "--s-max", "2", "--solver", "NOPE",
                    "--out", tmp_path / "f.json"], tmp_path) == 4

    def test_field_files(self, tmp_path):
        txt = tmp_path / "lin.txt"
        txt.write_text("# stable linear system\n-x1 + x2\n-x2\n")
        assert run(["certify", "--field", txt, "--out", tmp_path / "a.json"], tmp_path) == 0
        js = tmp_path / "lin.json"
        js.write_text(json.dumps({"n": 2, "components": [
            {"n": 2, "degree": 1, "terms": [{"exps": [1, 0], "coeff": -1.0}]},
            {"n": 2, "degree": 1, "terms": [{"exps": [0, 1], "coeff": -2.0}]}]}))
        assert run(["certify", "--field", js, "--out", tmp_path / "b.json"], tmp_path) == 0

    def test_sdpa_export(self, tmp_path):
        from ratlyap.dynamics import family_quintic
        from ratlyap.sdp import SdpProblem, to_sdp
        from ratlyap.sosgram import CandidateShape, assemble

        out_dir = tmp_path / "sdpa"
        run(["certify", "--family", "quintic", "--theta", "0.05", "--s-max", "4", "--sdpa-dir", out_dir,
             "--out", tmp_path / "q.json"], tmp_path)
        assert sorted(p.name for p in out_dir.iterdir()) == [
            "level_s2_r0.dat-s", "level_s4_r0.dat-s", "level_s4_r1.dat-s"]
        loaded = SdpProblem.from_sdpa((out_dir / "level_s4_r1.dat-s").read_text())
        direct = to_sdp(assemble(family_quintic(0.05), CandidateShape(2, 4, 1, 5)))
        assert [n for _, n in loaded.blocks] == [n for _, n in direct.blocks] and loaded.rows == direct.rows
        np.testing.assert_array_equal(loaded.rhs, direct.rhs)

    def test_manifest(self, quintic_cert):
        out, cert = quintic_cert
        manifest = json.loads((out.parent / (out.name + ".manifest.json")).read_text())
        assert manifest["command"] == "certify"
        digests = {o["path"]: o["sha256"] for o in manifest["outputs"]}
        assert digests[str(out)] == sha256_file(out)
        assert digests[str(cert)] == sha256_file(cert)
        assert manifest["seed"] is not None and manifest["tool_version"]

    def test_rerun_reproduces_statuses(self, tmp_path):
        outs = []
        for k in range(2):
            out = tmp_path / f"r{k}.json"
            run(["certify", "--family", "quintic", "--theta", "0.05", "--s-max", "8", "--out", out], tmp_path)
            outs.append([lv["status"] for lv in json.loads(out.read_text())["levels"]])
        assert outs[0] == outs[1]


class TestVerify:
    def test_round_trip(self, quintic_cert, tmp_path):
        _, cert = quintic_cert
        assert run(["verify", cert, "--family", "quintic", "--theta", "0.05", "--out", tmp_path / "v.json"],
                   tmp_path) == 0

    def test_report_embeds_field(self, quintic_cert, tmp_path):
        report, _ = quintic_cert
        assert run(["verify", report, "--out", tmp_path / "v.json"], tmp_path) == 0

    def test_perturbed_entry(self, quintic_cert, tmp_path):
        _, cert = quintic_cert
        data = json.loads(cert.read_text())
        data["P"][0][1] += 10.0
        data["P"][1][0] += 10.0
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(data))
        assert run(["verify", bad, "--family", "quintic", "--theta", "0.05", "--out", tmp_path / "v.json"],
                   tmp_path) == 5

    def test_other_theta(self, quintic_cert, tmp_path):
        _, cert = quintic_cert
        assert run(["verify", cert, "--family", "quintic", "--theta", "0.5", "--out", tmp_path / "v.json"],
                   tmp_path) == 5

    def test_wrong_shape(self, quintic_cert, tmp_path):
        _, cert = quintic_cert
        assert run(["verify", cert, "--family", "cubic", "--theta", "1", "--out", tmp_path / "v.json"],
                   tmp_path) == 5


def read_csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


class TestSimulate:
    def test_quintic_with_W(self, tmp_path, capsys):
        out, ls = tmp_path / "t.csv", tmp_path / "ls.csv"
        code = run(["simulate", "--family", "quintic", "--theta", "0.05", "--x0", "1,0.2", "--horizon", "40",
                    "--step", "1e-3", "--lyapunov", "builtin:quintic-W", "--levelsets", ls, "--levels", "0.5,1",
                    "--out", out], tmp_path)
        assert code == 0
        head, data = read_csv(out)
        assert head == ["t", "x1", "x2", "V"]
        assert np.all(np.diff(data[:, 3]) <= 0)
        norms = np.linalg.norm(data[:, 1:3], axis=1)
        # decay is polynomial in t for this degree-5 field, roughly |x| ~ t^(-1/4)
        assert norms[-1] < 0.6 * norms[0]
        lhead, curves = read_csv(ls)
        assert lhead == ["level", "x1", "x2"]
        W = (curves[:, 1] ** 4 + curves[:, 2] ** 4) / (curves[:, 1] ** 2 + curves[:, 2] ** 2)
        np.testing.assert_allclose(W, curves[:, 0], rtol=1e-12)
        manifest = json.loads((tmp_path / "t.csv.manifest.json").read_text())
        assert manifest["config"]["x0"] == [1.0, 0.2]

    def test_explicit_solution(self, tmp_path):
        out = tmp_path / "t.csv"
        assert run(["simulate", "--family", "nonhomog", "--x0", "2,3", "--step", "1e-4", "--horizon",
                    repr(math.log(2)), "--out", out], tmp_path) == 0
        _, data = read_csv(out)
        np.testing.assert_allclose(data[-1, 1:], [math.exp(1.5), 1.5], atol=1e-4)

    def test_certificate_as_lyapunov(self, quintic_cert, tmp_path):
        _, cert = quintic_cert
        out = tmp_path / "t.csv"
        assert run(["simulate", "--family", "quintic", "--theta", "0.05", "--x0", "0.3,-0.9", "--horizon", "5",
                    "--lyapunov", cert, "--out", out], tmp_path) == 0
        _, data = read_csv(out)
        assert np.max(np.diff(data[:, 3])) <= 1e-9

    def test_bad_x0(self, tmp_path):
        assert run(["simulate", "--family", "quintic", "--x0", "1,2,3", "--out", tmp_path / "t.csv"], tmp_path) == 1


def test_bench(tmp_path, capsys):
    out = tmp_path / "bench.json"
    assert run(["bench", "--out", out], tmp_path) == 0
    rows = {r["system"]: r for r in json.loads(out.read_text())["rows"]}
    q = rows["quintic theta=0.05"]
    assert q["rational_level"] == [4, 1] and q["polynomial_s"] == 8
    assert tuple(rows["quintic theta=1.5"]["rational_level"]) <= (4, 1)
    for name, row in rows.items():
        if name.startswith("linear"):
            assert row["rational_level"] == [2, 0]
    assert "rational (s,r)" in capsys.readouterr().out


def test_random_hurwitz():
    rng = np.random.default_rng(0)
    for n in (2, 3):
        assert np.linalg.eigvals(random_hurwitz(n, rng)).real.max() <= -0.1
