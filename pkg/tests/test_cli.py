import json
import math

import pytest

from spiked_ldp import cli
from spiked_ldp.cli import EXIT_INPUT, EXIT_IO, EXIT_OK, EXIT_VERIFY, main, read_csv, read_json


def run(tmp_path, *argv, name="out.csv"):
    out = tmp_path / name
    code = main([*argv, "--out", str(out)])
    return code, out


class TestTransforms:
    def test_semicircle_values(self, tmp_path):
        code, out = run(tmp_path, "transforms", "--stieltjes", "3", "--r-transform", "0.4",
                        "--log-potential", "2", "--j", "0.1", "3")
        assert code == EXIT_OK
        rows = {r["quantity"]: r for r in read_csv(out)}
        assert rows["stieltjes"]["value"] == pytest.approx((3 - math.sqrt(5)) / 2, rel=1e-8)
        assert rows["r_transform"]["value"] == pytest.approx(0.4, rel=1e-8)
        assert rows["log_potential"]["value"] == pytest.approx(0.5, rel=1e-8)
        assert rows["j"]["value"] == pytest.approx(0.01, rel=1e-8)
        assert rows["j"]["point"] == "0.1;3"

    def test_mp_measure(self, tmp_path):
        code, out = run(tmp_path, "transforms", "--measure", "mp", "--alpha", "0.5",
                        "--r-transform", "0.4")
        assert code == EXIT_OK
        assert read_csv(out)[0]["value"] == pytest.approx(1 / 0.8, rel=1e-8)

    def test_inside_support_is_input_error(self, tmp_path):
        assert run(tmp_path, "transforms", "--stieltjes", "1.0")[0] == EXIT_INPUT

    def test_nothing_requested(self, tmp_path):
        assert run(tmp_path, "transforms")[0] == EXIT_INPUT

    def test_missing_density_file(self, tmp_path):
        code, _ = run(tmp_path, "transforms", "--measure", "csv", "--density-csv",
                      str(tmp_path / "nope.csv"), "--stieltjes", "3")
        assert code == EXIT_IO


class TestRates:
    def test_rate_point_at_typical_point(self, tmp_path):
        code, out = run(tmp_path, "rate-point", "--x", str(10 / 3), "--u", str(8 / 9))
        assert code == EXIT_OK
        row = read_csv(out)[0]
        assert abs(row["rate"]) < 1e-9
        assert row["regime"] in ("sticking", "popped", "blocked")

    def test_surface_small_grid(self, tmp_path):
        code, out = run(tmp_path, "rate-surface", "--x-steps", "2", "--u-steps", "2")
        assert code == EXIT_OK
        rows = read_csv(out)
        assert len(rows) == 4
        assert [r["x"] for r in rows] == [2.0, 2.0, 5.0, 5.0]
        summary = read_json(out.with_suffix(".json"))
        assert summary["minimum"]["x"] == pytest.approx(10 / 3)
        assert summary["minimum"]["u"] == pytest.approx(8 / 9)
        assert summary["minimum"]["rate"] < 1e-9

    def test_surface_weak_spike_minimum(self, tmp_path):
        summary = tmp_path / "s.json"
        code, _ = run(tmp_path, "rate-surface", "--theta", "0.5", "--x-steps", "3",
                      "--u-steps", "3", "--summary", str(summary))
        assert code == EXIT_OK
        m = read_json(summary)["minimum"]
        assert (m["x"], m["u"]) == pytest.approx((2.0, 0.0))

    def test_grid_below_edge_rejected(self, tmp_path):
        assert run(tmp_path, "rate-grid", "--x-min", "1.5")[0] == EXIT_INPUT
        assert run(tmp_path, "rate-grid", "--x-steps", "1")[0] == EXIT_INPUT
        assert run(tmp_path, "rate-grid", "--u-max", "1.5")[0] == EXIT_INPUT

    def test_rate_multi_json(self, tmp_path):
        code, out = run(tmp_path, "rate-multi", "--xs", str(10 / 3), "2", "--us", str(8 / 9), "0",
                        name="m.json")
        assert code == EXIT_OK
        assert read_json(out)["rate"] < 1e-9

    def test_rate_wishart_point(self, tmp_path):
        code, out = run(tmp_path, "rate-wishart", "--x", "3.75", "--u", "0.7")
        assert code == EXIT_OK
        assert read_csv(out)[0]["rate"] < 1e-8

    def test_minimize_models(self, tmp_path):
        code, out = run(tmp_path, "minimize", name="g.json")
        assert code == EXIT_OK
        res = read_json(out)
        assert (res["x"], res["u"]) == pytest.approx((10 / 3, 8 / 9))
        assert res["second_eigenvalue"] == pytest.approx(2.0)
        code, out = run(tmp_path, "minimize", "--model", "wishart", name="w.json")
        assert (read_json(out)["x"], read_json(out)["u"]) == pytest.approx((3.75, 0.7))
        code, out = run(tmp_path, "minimize", "--model", "multi", "--n-pairs", "2",
                        "--x1", "4", "--u1", "0.5", name="s.json")
        res = read_json(out)
        assert (res["u2"] == 0.0) == (res["x2"] == 2.0)

    def test_minimize_bad_second_pair_request(self, tmp_path):
        assert run(tmp_path, "minimize", "--model", "multi", "--x1", "4")[0] == EXIT_INPUT


class TestSimulate:
    ARGS = ("simulate", "--n", "40", "--theta", "2", "--samples", "6", "--seed", "17")

    def test_deterministic_across_threads(self, tmp_path):
        _, a = run(tmp_path, *self.ARGS, name="a.json")
        _, b = run(tmp_path, *self.ARGS, "--threads", "3", name="b.json")
        assert a.read_bytes() == b.read_bytes()
        assert read_json(a)["samples"] == 6

    def test_wishart_alpha(self, tmp_path):
        code, out = run(tmp_path, "simulate", "--kind", "wishart", "--n", "60", "--alpha", "0.5",
                        "--samples", "2", name="w.json")
        assert code == EXIT_OK
        assert read_json(out)["m"] == 30
        assert run(tmp_path, "simulate", "--kind", "wishart")[0] == EXIT_INPUT

    @pytest.mark.parametrize("method", ["point", "naive"])
    def test_tilt_block(self, tmp_path, method):
        code, out = run(tmp_path, "simulate", "--n", "40", "--theta", "2", "--samples", "50",
                        "--tilt", "2", "--tilt-window", "0.1", "--tilt-method", method,
                        name="t.json")
        assert code == EXIT_OK
        tilt = read_json(out)["tilt"]
        assert tilt["value"] == pytest.approx(0.0, abs=1e-12)
        assert tilt["rate_goe"] < 1e-9

    def test_bad_seed(self, tmp_path):
        assert run(tmp_path, "simulate", "--seed", "-3")[0] == EXIT_INPUT


class TestVerify:
    def test_clean_subset_passes(self, capsys):
        assert main(["verify", "--only", "constants", "--only", "rates.tilting"]) == EXIT_OK
        assert "2/2 passed" in capsys.readouterr().out

    def test_injected_fault_is_caught(self, capsys):
        code = main(["verify", "--only", "constants", "--inject-fault", "cprime-sign"])
        assert code == EXIT_VERIFY
        assert "FAIL" in capsys.readouterr().out
        # the fault does not leak into later calls
        assert main(["verify", "--only", "constants"]) == EXIT_OK


class TestExitCodesAndConfig:
    def test_usage_error(self):
        assert main(["rate-point", "--x", "abc"]) == EXIT_INPUT
        assert main(["no-such-command"]) == EXIT_INPUT

    def test_help_is_ok(self, capsys):
        assert main(["--help"]) == EXIT_OK

    def test_unwritable_output(self, tmp_path):
        bad = tmp_path / "missing-dir" / "x.csv"
        assert main(["rate-point", "--x", "4", "--u", "0.5", "--out", str(bad)]) == EXIT_IO

    def test_missing_config(self, tmp_path):
        assert run(tmp_path, "rate-point", "--config", str(tmp_path / "none.json"))[0] == EXIT_IO

    def test_malformed_and_unknown_config(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert run(tmp_path, "rate-point", "--config", str(bad))[0] == EXIT_INPUT
        unknown = tmp_path / "unknown.json"
        unknown.write_text(json.dumps({"colour": "red"}))
        assert run(tmp_path, "rate-point", "--config", str(unknown))[0] == EXIT_INPUT
        neg = tmp_path / "neg.json"
        neg.write_text(json.dumps({"grid_step": -1}))
        assert run(tmp_path, "rate-point", "--x", "4", "--u", "0.5",
                   "--config", str(neg))[0] == EXIT_INPUT

    def test_precedence_defaults_config_flags(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"theta": 2.0, "x": 4.0, "u": 0.5, "grid_step": 0.02}))
        ns = cli.build_parser().parse_args(["rate-point", "--config", str(cfg), "--u", "0.25"])
        o = cli.resolve(ns)
        assert (o["theta"], o["x"], o["u"], o["beta"]) == (2.0, 4.0, 0.25, 1)
        assert o["rate_config"].grid_step == 0.02
        assert cli.resolve(cli.build_parser().parse_args(["rate-point"]))["theta"] == 3.0

    def test_stdout_output(self, capsys):
        assert main(["rate-point", "--x", "4", "--u", "0.5", "--out", "-"]) == EXIT_OK
        assert capsys.readouterr().out.startswith("x,u,rate,y_star,regime\n")


class TestFormats:
    def test_csv_round_trip(self, tmp_path):
        path = tmp_path / "t.csv"
        cli.write_atomic(path, cli.csv_text(["a", "b", "c"], [(1 / 3, None, "popped")]))
        row = read_csv(path)[0]
        assert row["a"] == pytest.approx(1 / 3, rel=1e-9)
        assert row["b"] is None and row["c"] == "popped"

    def test_json_round_trip_is_exact(self, tmp_path):
        path = tmp_path / "t.json"
        obj = {"v": 1 / 3, "w": [math.pi, 2.0]}
        cli.write_atomic(path, cli.json_text(obj))
        assert read_json(path) == obj

    def test_atomic_write_leaves_no_temp_files(self, tmp_path):
        cli.write_atomic(tmp_path / "f.txt", "x")
        assert [p.name for p in tmp_path.iterdir()] == ["f.txt"]
