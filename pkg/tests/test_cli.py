import json

import numpy as np
import numpy.testing as npt
import pytest

from augpdgd.cli import main
from augpdgd.counterexample import CounterexampleParams, closed_form_arrays
from augpdgd.problem import dump_json_17g


def read_csv(path):
    lines = path.read_text().splitlines()
    header = lines[0].split(",")
    data = np.array([[float(v) for v in line.split(",")] for line in lines[1:]])
    return header, data


def licq_violating_problem(tmp_path):
    # the active inequality gradient is parallel to the equality row
    payload = {"n": 1, "m_I": 1, "m_E": 1,
               "quadratic": {"H": [[1.0]], "q": [-1.0]},
               "ineq_affine": {"F": [[1.0]], "v": [0.0]},
               "A": [[1.0]], "b": [0.0], "mu": 1.0, "ell": 1.0}
    path = tmp_path / "degenerate.json"
    with open(path, "w") as fp:
        dump_json_17g(payload, fp)
    return path


class TestSimulate:
    def test_counterexample_matches_closed_form(self, tmp_path):
        out = tmp_path / "run"
        code = main(["simulate", "--problem", "counterexample", "--alpha", "1",
                     "--rho", "1", "--out", str(out)])
        assert code == 0
        header, data = read_csv(out / "trajectory.csv")
        assert header[:4] == ["t", "x_1", "lambda_1", "nu_1"]
        cp = CounterexampleParams(alpha=1.0, rho=1.0)
        ref = closed_form_arrays(cp, data[:, 0])
        assert np.max(np.abs(data[:, 1:4] - ref)) < 1e-6
        summary = json.loads((out / "summary.json").read_text())
        assert summary["max_expansion_ratio"] <= 1.0 + 1e-8
        assert summary["min_lambda"] >= -1e-8
        assert (out / "trajectory.png").exists()

    def test_deterministic_outputs(self, tmp_path):
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            code = main(["simulate", "--problem", "qp", "--seed", "7",
                         "--horizon", "5", "--out", str(out), "--no-plot"])
            assert code == 0
            outs.append((out / "trajectory.csv").read_bytes())
        assert outs[0] == outs[1]

    def test_missing_problem_file(self, tmp_path, capsys):
        missing = tmp_path / "nope.json"
        code = main(["simulate", "--problem", str(missing),
                     "--out", str(tmp_path / "o")])
        assert code == 2
        assert str(missing) in capsys.readouterr().err

    def test_no_plot_skips_figures(self, tmp_path):
        out = tmp_path / "np"
        main(["simulate", "--problem", "counterexample", "--horizon", "2",
              "--out", str(out), "--no-plot"])
        assert not (out / "trajectory.png").exists()


class TestCertify:
    def test_counterexample_unit_distance(self, tmp_path):
        out = tmp_path / "cert"
        code = main(["certify", "--problem", "counterexample", "--d0", "1",
                     "--out", str(out), "--no-plot"])
        assert code == 0
        cert = json.loads((out / "certificate.json").read_text())
        npt.assert_allclose(cert["beta"], 1.0 / 92.0, rtol=1e-12)
        expected_m = np.sqrt((1 + np.sqrt(2) / 23) / (1 - np.sqrt(2) / 23))
        npt.assert_allclose(cert["M_beta"], expected_m, rtol=1e-12)

    def test_licq_violation_exits_3(self, tmp_path, capsys):
        path = licq_violating_problem(tmp_path)
        code = main(["certify", "--problem", str(path), "--d0", "1",
                     "--out", str(tmp_path / "o"), "--no-plot"])
        assert code == 3
        assert "assumption violation" in capsys.readouterr().err

    def test_verify_appends_report(self, tmp_path):
        out = tmp_path / "v"
        code = main(["certify", "--problem", "counterexample", "--alpha", "1",
                     "--verify", "--out", str(out)])
        assert code == 0
        cert = json.loads((out / "certificate.json").read_text())
        assert cert["verification"]["passed"] is True
        assert cert["verification"]["max_ratio"] <= 1.0 + 1e-8
        assert (out / "envelope.csv").exists()
        assert (out / "envelope.png").exists()

    def test_eta_rejected(self, tmp_path):
        code = main(["certify", "--problem", "counterexample", "--eta", "2",
                     "--out", str(tmp_path / "o"), "--no-plot"])
        assert code == 3


class TestCounterexampleCommand:
    def test_integral_table(self, tmp_path):
        out = tmp_path / "ce"
        code = main(["counterexample", "--alphas", "1,5,10", "--rho", "1",
                     "--out", str(out), "--no-plot"])
        assert code == 0
        header, data = read_csv(out / "integrals.csv")
        assert header == ["alpha", "integral", "envelope_bound", "ratio"]
        from augpdgd.counterexample import h_alpha_integral
        for alpha, integral, _, _ in data:
            cp = CounterexampleParams(alpha=alpha, rho=1.0)
            npt.assert_allclose(integral, h_alpha_integral(cp), rtol=1e-14)
        for alpha in (1, 5, 10):
            tag = f"{alpha:g}".replace(".", "p")
            assert (out / f"trajectory_alpha_{tag}.csv").exists()

    def test_empty_alpha_list_is_usage_error(self, tmp_path):
        with pytest.raises(SystemExit) as err:
            main(["counterexample", "--alphas", "", "--out", str(tmp_path)])
        assert err.value.code == 2


class TestPowerCommand:
    def test_small_feeder_run(self, tmp_path):
        feeder = {"buses": 2, "lines": [[0, 1, 0.001, 0.002]],
                  "inverters": [[1, 10.0]], "loads": [0.0, 1.0]}
        cfg_path = tmp_path / "feeder.json"
        with open(cfg_path, "w") as fp:
            dump_json_17g(feeder, fp)
        out = tmp_path / "pw"
        code = main(["power", "--ratios", "0.5,2", "--instances", "2",
                     "--pv-ratio", "2", "--config", str(cfg_path),
                     "--horizon", "15", "--rho", "0.1",
                     "--out", str(out)])
        assert code == 0
        header, data = read_csv(out / "curves.csv")
        assert header == ["instance", "ratio", "t", "normalized_distance"]
        assert set(data[:, 0]) == {0.0, 1.0, 2.0, 3.0}
        rates = json.loads((out / "rates.json").read_text())
        assert len(rates["instances"]) == 4
        assert (out / "power.png").exists()
        assert (out / "feeder.json").exists()

    def test_empty_ratio_list_is_usage_error(self, tmp_path):
        with pytest.raises(SystemExit) as err:
            main(["power", "--ratios", "", "--out", str(tmp_path)])
        assert err.value.code == 2
