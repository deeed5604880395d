import json
import os

import pytest

from stopcert.cli import main

QUARTIC = """\
discount = 8.0
direction = "l"

[process]
tag = "gbm"
alpha = 0.5
sigma = 1.0

[payoff]
g = "(x-1)**3 + x**4"
"""

QUADRATIC = QUARTIC.replace("8.0", "2.0").replace("x**4", "x**2")

ABANDON = """\
discount = 0.06
direction = "r"

[process]
tag = "gbm"
alpha = -0.05
sigma = 0.25

[payoff]
g0 = "-2.0"
g1 = "x - 1.0"

[grid]
reference = 1.0
"""

EXPRESSION_PROCESS = """\
discount = 2.0
direction = "l"

[process]
a = "x/2"
sigma = "x"
l = 0.0
r = "inf"

[payoff]
g = "x**2"

[grid]
lo = 0.1
hi = 10.0
n_points = 801
"""


@pytest.fixture()
def quartic_file(tmp_path):
    f = tmp_path / "quartic.toml"
    f.write_text(QUARTIC)
    return str(f)


@pytest.fixture()
def quadratic_file(tmp_path):
    f = tmp_path / "quadratic.toml"
    f.write_text(QUADRATIC)
    return str(f)


@pytest.fixture()
def abandon_file(tmp_path):
    f = tmp_path / "abandon.toml"
    f.write_text(ABANDON)
    return str(f)


def read(outdir, name):
    with open(os.path.join(outdir, name)) as fh:
        return fh.read()


class TestExitCodes:
    def test_solve_success_is_zero(self, quartic_file, tmp_path):
        out = str(tmp_path / "out")
        assert main(["solve", "--problem", quartic_file, "--output-dir", out]) == 0

    def test_solve_boundary_sup_is_two(self, quadratic_file, tmp_path):
        out = str(tmp_path / "out")
        assert main(["solve", "--problem", quadratic_file, "--output-dir", out]) == 2
        report = read(out, "solve_report.txt")
        assert "SupAtBoundary" in report

    def test_schema_violation_is_one(self, tmp_path):
        f = tmp_path / "broken.toml"
        f.write_text("direction = 'l'\n[payoff]\ng='x'\n")
        assert main(["solve", "--problem", str(f),
                     "--output-dir", str(tmp_path / "o")]) == 1

    def test_missing_file_is_one(self, tmp_path):
        assert main(["solve", "--problem", str(tmp_path / "nope.toml"),
                     "--output-dir", str(tmp_path / "o")]) == 1

    def test_verify_quartic_zero(self, quartic_file, tmp_path):
        assert main(["verify", "--problem", quartic_file,
                     "--output-dir", str(tmp_path / "o")]) == 0

    def test_verify_quadratic_two(self, quadratic_file, tmp_path):
        assert main(["verify", "--problem", quadratic_file,
                     "--output-dir", str(tmp_path / "o")]) == 2


class TestOutputs:
    def test_solve_writes_all_tables(self, quartic_file, tmp_path):
        out = str(tmp_path / "out")
        main(["solve", "--problem", quartic_file, "--output-dir", out])
        names = set(os.listdir(out))
        assert {"solve_report.txt", "h_sweep.csv", "value_table.csv",
                "fundamental_pair.csv", "solve_manifest.json"} <= names
        assert read(out, "h_sweep.csv").startswith("p,h\n")
        report = read(out, "solve_report.txt")
        assert "certificate" in report and "p_star" in report

    def test_manifest_lists_outputs_and_digest(self, quartic_file, tmp_path):
        out = str(tmp_path / "out")
        main(["solve", "--problem", quartic_file, "--output-dir", out])
        manifest = json.loads(read(out, "solve_manifest.json"))
        files = set(os.listdir(out))
        assert set(manifest["outputs"]) == files
        assert len(manifest["problem_digest"]) == 64
        assert manifest["command"] == "solve"

    def test_rerun_is_byte_identical(self, quartic_file, tmp_path):
        out_a, out_b = str(tmp_path / "a"), str(tmp_path / "b")
        main(["solve", "--problem", quartic_file, "--output-dir", out_a])
        main(["solve", "--problem", quartic_file, "--output-dir", out_b])
        for name in os.listdir(out_a):
            if name.endswith("manifest.json"):
                a = json.loads(read(out_a, name))
                b = json.loads(read(out_b, name))
                a["parameters"].pop("output_dir")
                b["parameters"].pop("output_dir")
                assert a == b
            else:
                assert read(out_a, name) == read(out_b, name)

    def test_json_report_flag(self, quartic_file, tmp_path):
        out = str(tmp_path / "out")
        main(["solve", "--problem", quartic_file, "--output-dir", out,
              "--json-report"])
        doc = json.loads(read(out, "solve_report.json"))
        assert doc["exists"] is True
        assert doc["certificate"]["passed"] is True
        assert doc["global_optimality"]["verdict"] == "globally-optimal"

    def test_expression_process_solves(self, tmp_path):
        f = tmp_path / "expr.toml"
        f.write_text(EXPRESSION_PROCESS)
        out = str(tmp_path / "out")
        # payoff proportional to the increasing solution: plateau ratio, the
        # smallest maximizer sits at the window edge, reported as exit 2
        code = main(["solve", "--problem", str(f), "--output-dir", out])
        assert code == 2


class TestFbpCommand:
    def test_fbp_quartic(self, quartic_file, tmp_path):
        out = str(tmp_path / "out")
        assert main(["fbp", "--problem", quartic_file, "--output-dir", out,
                     "--json-report"]) == 0
        doc = json.loads(read(out, "fbp_report.json"))
        assert len(doc["stationary_points"]) == 2
        assert doc["selected"] == 1
        assert read(out, "stationarity.csv").startswith("p,h,dh\n")

    def test_fbp_quadratic_exit_two(self, quadratic_file, tmp_path):
        assert main(["fbp", "--problem", quadratic_file,
                     "--output-dir", str(tmp_path / "o")]) == 2


class TestGreenCommand:
    def test_green_table(self, abandon_file, tmp_path):
        out = str(tmp_path / "out")
        assert main(["green", "--problem", abandon_file, "--output-dir", out]) == 0
        assert read(out, "green_table.csv").startswith("x,R,I1,I2,residual\n")

    def test_green_requires_flow(self, quartic_file, tmp_path):
        assert main(["green", "--problem", quartic_file,
                     "--output-dir", str(tmp_path / "o")]) == 1


class TestRealOptionCommands:
    def test_invest_flags(self, tmp_path):
        out = str(tmp_path / "out")
        code = main(["invest", "--cost", "1.0", "--alpha", "0.03",
                     "--sigma", "0.25", "--rho", "0.07",
                     "--output-dir", out, "--json-report"])
        assert code == 0
        doc = json.loads(read(out, "invest_report.json"))
        assert doc["p_star"] == pytest.approx(doc["closed_form_comparator"], rel=1e-6)
        assert doc["certificate"]["passed"] is True

    def test_invest_missing_flags(self, tmp_path):
        assert main(["invest", "--cost", "1.0",
                     "--output-dir", str(tmp_path / "o")]) == 1

    def test_abandon_flags(self, tmp_path):
        out = str(tmp_path / "out")
        code = main(["abandon", "--salvage", "2.0", "--revenue-cost", "1.0",
                     "--alpha", "-0.05", "--sigma", "0.25", "--rho", "0.06",
                     "--output-dir", out, "--json-report"])
        assert code == 0
        doc = json.loads(read(out, "abandon_report.json"))
        assert doc["p_star"] == pytest.approx(doc["closed_form_comparator"], rel=1e-6)
        assert doc["breakeven"]["revenue_negative"] is True


class TestMcAndSweep:
    def test_mc_check_reports_comparator(self, tmp_path):
        f = tmp_path / "quad.toml"
        f.write_text("""discount = 2.0\ndirection = "l"\n\n[process]\ntag = "gbm"\nalpha = 0.5\nsigma = 1.0\n\n[payoff]\ng = "x**2"\n""")
        out = str(tmp_path / "out")
        code = main(["mc-check", "--problem", str(f), "--threshold", "2.0",
                     "--start", "1.0", "--paths", "4000", "--dt", "0.004",
                     "--scheme", "exact-gbm", "--output-dir", out,
                     "--json-report"])
        assert code == 0
        doc = json.loads(read(out, "mc-check_manifest.json"))
        report = json.loads(read(out, "mc_report.json"))
        assert report["analytic_comparator"] == pytest.approx(1.0, rel=1e-10)
        assert report["within_3_stderr"] is True
        assert doc["parameters"]["paths"] == 4000

    def test_sweep_csv(self, tmp_path):
        out = str(tmp_path / "out")
        code = main(["sweep", "--model", "invest", "--cost", "1.0",
                     "--alpha", "0.03", "--sigma", "0.25", "--rho", "0.07",
                     "--sigma-min", "0.15", "--sigma-max", "0.5",
                     "--count", "5", "--output-dir", out])
        assert code == 0
        lines = read(out, "sweep.csv").strip().split("\n")
        assert lines[0] == "sigma,p_star"
        assert len(lines) == 6


class TestAliasesAndLoader:
    def test_fbp_analyze_alias(self, quartic_file, tmp_path):
        assert main(["fbp-analyze", "--problem", quartic_file,
                     "--output-dir", str(tmp_path / "o")]) == 0

    def test_bm_tagged_problem_file(self, tmp_path):
        f = tmp_path / "bm.toml"
        f.write_text('discount = 1.0\ndirection = "l"\n\n[process]\ntag = "bm"\n'
                     'a = 0.0\nsigma = 1.4142135623730951\n\n[payoff]\n'
                     'g = "x + 2"\n\n[grid]\nlo = -5.0\nhi = 5.0\nn_points = 501\n')
        out = str(tmp_path / "out")
        code = main(["solve", "--problem", str(f), "--output-dir", out])
        assert code == 0
        # increasing solution e^x: ratio (p+2)e^{-p} peaks at p = -1
        report = json.loads(read(out, "solve_manifest.json"))
        assert report["command"] == "solve"
        body = read(out, "solve_report.txt")
        assert "p_star: -0.99" in body or "p_star: -1" in body
