import json
import math

import numpy as np
import pytest

from robustprocure import cli
from robustprocure.model import AffineShare, ConstantShare, Kinked, Linear, Tabulated, TabulatedConvex
from robustprocure.transform import Log1pUtility, PowerUtility, TabulatedUtility

SQRT2_M1 = math.sqrt(2) - 1


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr().out
    return code, out


def run_json(capsys, *argv):
    code, out = run(capsys, *argv)
    return code, json.loads(out)


class TestParsers:
    def test_mechanisms(self, fixtures_dir):
        assert cli.parse_mechanism("share:0.4") == ConstantShare(0.4)
        assert cli.parse_mechanism("affine:0.5:0.1") == AffineShare(0.5, 0.1)
        assert isinstance(cli.parse_mechanism(f"table:{fixtures_dir / 'bad.csv'}"), Tabulated)

    def test_costs(self, tmp_path):
        assert cli.parse_cost("linear:2") == Linear(2.0)
        assert cli.parse_cost("kinked:1:0.5") == Kinked(1.0, 0.5)
        path = tmp_path / "c.csv"
        path.write_text("q,value\n0,0\n1,0\n2,1\n")
        assert isinstance(cli.parse_cost(f"table:{path}"), TabulatedConvex)

    def test_utilities(self, tmp_path):
        assert cli.parse_utility("power:0.5") == PowerUtility(0.5)
        assert cli.parse_utility("log1p") == Log1pUtility()
        path = tmp_path / "u.csv"
        path.write_text("q,value\n1,1\n2,1.5\n3,1.8\n")
        assert isinstance(cli.parse_utility(f"table:{path}"), TabulatedUtility)

    @pytest.mark.parametrize("spec", ["share", "share:x", "affine:0.5", "bogus:1", "share:0.5:1"])
    def test_bad_mechanism(self, spec):
        with pytest.raises(ValueError):
            cli.parse_mechanism(spec)

    def test_table_header(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("x,y\n0,0\n1,1\n")
        with pytest.raises(ValueError, match="header"):
            cli.read_table(str(path))

    def test_malformed_table(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("q,value\n0,0\n1,abc\n")
        with pytest.raises(ValueError, match="malformed"):
            cli.read_table(str(path))


class TestSubcommands:
    def test_share(self, capsys):
        code, out = run_json(capsys, "share", "--sigma", "0.5")
        assert code == 0
        assert out["z_star"] == pytest.approx(SQRT2_M1, abs=1e-12)
        assert out["bound"] == pytest.approx(SQRT2_M1, abs=1e-12)

    def test_share_with_weight(self, capsys):
        _, out = run_json(capsys, "share", "--sigma", "0.5", "--alpha", "1")
        assert out == {"z_star": 1.0, "bound": 1.0}

    def test_adversary(self, capsys):
        code, out = run_json(capsys, "adversary", "--sigma", "0.5", "--mechanism", "share:0.5",
                             "--grid-n", "401")
        assert code == 0
        assert out["min_ratio_found"] == pytest.approx(0.4, abs=1e-6)
        assert out["worst_cost"]["type"] == "kinked"

    def test_adversary_nonconcave_table(self, capsys, fixtures_dir):
        _, out = run_json(capsys, "adversary", "--sigma", "0.5",
                          "--mechanism", f"table:{fixtures_dir / 'bad.csv'}")
        assert out["min_ratio_found"] < SQRT2_M1 - 0.1
        assert out["worst_q_hat"] == pytest.approx(1.0, rel=0.05)

    def test_bayes(self, capsys):
        _, out = run_json(capsys, "bayes", "--sigma", "0.5", "--alpha-exp", "1.05", "--c-bar", "1000")
        assert abs(out["expected_ratio"] - out["limit"]) <= 0.05 * out["limit"]

    def test_saddle(self, capsys):
        code, out = run_json(capsys, "saddle", "--sigma", "0.5")
        assert code == 0 and out["checks"] == "pass"
        assert out["b_hat"] == pytest.approx(1 / (1.5 + math.log(2)), rel=1e-12)

    def test_benchmark(self, capsys):
        code, out = run_json(capsys, "benchmark", "--sigma", "0.5")
        assert code == 0 and out["checks"] == "pass"
        assert out["value"] == pytest.approx(out["b_hat"], abs=1e-3)

    def test_markup(self, capsys):
        _, out = run_json(capsys, "markup", "--sigma", "2")
        assert out == pytest.approx({"markup": 0.5, "guarantee": 0.25})

    def test_transform_log1p(self, capsys):
        code, out = run_json(capsys, "transform", "--utility", "log1p",
                             "--cost", "kinked:1:0.01", "--cost", "kinked:1:0.1",
                             "--q-lo", "1.000000001", "--points", "201", "--verify")
        assert code == 0
        assert out["delta_inf"] == pytest.approx(math.log(2), abs=1e-6)
        assert out["verification"]["passed"]

    def test_transform_table_utility(self, capsys, tmp_path):
        q = np.linspace(0.01, 100, 2000)
        path = tmp_path / "u.csv"
        path.write_text("q,value\n" + "".join(f"{a},{b}\n" for a, b in zip(q.tolist(), (2 * np.sqrt(q)).tolist())))
        code, out = run_json(capsys, "transform", "--utility", f"table:{path}", "--cost", "linear:1",
                             "--q-lo", "0.1", "--q-hi", "50", "--points", "51")
        assert code == 0
        assert out["sigma_hat"] == pytest.approx(0.5, abs=0.01)

    def test_sweep_formats(self, capsys):
        _, csv_text = run(capsys, "sweep", "--sigma-min", "0.2", "--sigma-max", "0.8", "--steps", "4")
        lines = csv_text.strip().split("\n")
        assert lines[0] == "sigma,z_star,B,B_hat,sigma_ratio,joint_lb" and len(lines) == 5
        _, js = run_json(capsys, "sweep", "--sigma-min", "0.2", "--sigma-max", "0.8", "--steps", "4",
                         "--format", "json")
        assert [r["sigma"] for r in js] == pytest.approx([0.2, 0.4, 0.6, 0.8])
        _, svg = run(capsys, "sweep", "--steps", "5", "--format", "svg")
        assert svg.startswith("<svg") or svg.startswith("<?xml")

    def test_sweep_svg_file(self, capsys, tmp_path):
        svg = tmp_path / "plot.svg"
        out = tmp_path / "rows.csv"
        assert cli.main(["sweep", "--steps", "5", "--svg", str(svg), "--out", str(out)]) == 0
        assert capsys.readouterr().out == ""
        assert "<svg" in svg.read_text() and out.read_text().startswith("sigma,")


class TestErrors:
    def test_sigma_out_of_range(self, capsys):
        code, out = run_json(capsys, "share", "--sigma", "1.5")
        assert code == 2
        assert out["error"] == "sigma out of procurement range"
        assert out["detail"].startswith("SigmaOutOfRange")

    def test_numeric_failure(self, capsys):
        code, out = run_json(capsys, "bayes", "--sigma", "0.5", "--alpha-exp", "0.5", "--c-bar", "1")
        assert code == 3 and set(out) == {"error", "detail"}

    def test_unknown_argument(self, capsys):
        code, out = run_json(capsys, "share", "--sigma", "0.5", "--bogus")
        assert code == 2 and "error" in out

    def test_missing_subcommand(self, capsys):
        code, _ = run(capsys)
        assert code == 2

    def test_svg_only_for_sweep(self):
        with pytest.raises(cli.CliArgumentError):
            cli.RunConfig("share", fmt="svg")

    def test_transform_needs_cost(self, capsys):
        code, _ = run(capsys, "transform", "--utility", "log1p")
        assert code == 2

    def test_sweep_bounds(self, capsys):
        code, _ = run(capsys, "sweep", "--sigma-min", "0.8", "--sigma-max", "0.2")
        assert code == 2

    def test_markup_rejects_procurement_sigma(self, capsys):
        code, _ = run(capsys, "markup", "--sigma", "0.5")
        assert code == 2


class TestDeterminism:
    @pytest.mark.parametrize("argv", [
        ("share", "--sigma", "0.37"),
        ("sweep", "--steps", "7"),
        ("adversary", "--sigma", "0.5", "--mechanism", "affine:0.5:0.01", "--grid-n", "201"),
    ])
    def test_identical_bytes(self, capsys, argv):
        assert run(capsys, *argv) == run(capsys, *argv)

    def test_grid_env_override(self, capsys, monkeypatch):
        monkeypatch.setenv("ROBUSTPROCURE_GRID_N", "201")
        argv = ["adversary", "--sigma", "0.5", "--mechanism", "share:0.5"]
        assert cli.config_from_args(argv).grid().n == 201
        assert cli.config_from_args(argv + ["--grid-n", "301"]).grid().n == 301
        code, out = run_json(capsys, *argv)
        assert code == 0 and out["min_ratio_found"] == pytest.approx(0.4, abs=1e-6)
