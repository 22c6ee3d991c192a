import json
import math

import pytest

from dpiter.cli import main


def write_params(tmp_path, name="params.json", **overrides):
    fields = dict(
        n=100, b=100, lipschitz=1.0, smoothness=20.0, strong_convexity=0.0,
        diameter=0.999, stepsize=0.05, sigma=2.0, iterations=500,
        adjacency="replace",
    )
    fields.update(overrides)
    path = tmp_path / name
    path.write_text(json.dumps(fields))
    return str(path)


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestComputeEpsilon:
    def test_full_batch_reports_formula_id(self, tmp_path, capsys):
        params = write_params(tmp_path)
        code, out, _ = run(capsys, "compute-epsilon", "--params", params,
                           "--regime", "full_batch", "--alpha", "3.0")
        assert code == 0
        payload = json.loads(out)
        assert payload["formula_id"] == "B.1"
        assert payload["epsilon"] > 0
        assert payload["branch"] in ("T-linear", "plateau")

    def test_invalid_stepsize_exits_2(self, tmp_path, capsys):
        params = write_params(tmp_path, stepsize=3.0, smoothness=1.0)
        code, _, err = run(capsys, "compute-epsilon", "--params", params,
                           "--regime", "full_batch", "--alpha", "3.0")
        assert code == 2
        assert "stepsize <= 2 / smoothness" in err

    def test_delta_adds_dp_point(self, tmp_path, capsys):
        params = write_params(tmp_path)
        code, out, _ = run(capsys, "compute-epsilon", "--params", params,
                           "--regime", "full_batch", "--alpha", "3.0",
                           "--delta", "1e-6")
        assert code == 0
        payload = json.loads(out)
        assert payload["epsilon_dp"] == pytest.approx(
            payload["epsilon"] + math.log(1e6) / 2.0
        )

    def test_unknown_field_exits_2(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"n": 5, "bogus": 1}))
        code, _, err = run(capsys, "compute-epsilon", "--params", str(path),
                           "--regime", "full_batch", "--alpha", "3.0")
        assert code == 2
        assert "bogus" in err


class TestPrivacyCurve:
    def test_single_point(self, tmp_path, capsys):
        params = write_params(tmp_path)
        code, out, _ = run(capsys, "privacy-curve", "--params", params,
                           "--regime", "full_batch", "--alpha", "3.0",
                           "--t-grid", "10")
        assert code == 0
        lines = out.strip().split("\n")
        assert lines[0] == "T,epsilon,branch"
        assert len(lines) == 2
        assert lines[1].startswith("10,")

    def test_geometric_grid_plateaus(self, tmp_path, capsys):
        params = write_params(tmp_path)
        code, out, _ = run(capsys, "privacy-curve", "--params", params,
                           "--regime", "full_batch", "--alpha", "3.0",
                           "--t-grid", "geom:1:100000:12")
        assert code == 0
        rows = [line.split(",") for line in out.strip().split("\n")[1:]]
        eps = [float(r[1]) for r in rows]
        assert all(b <= a * (1 + 1e-12) for a, b in zip(eps[1:], eps[:-1]))
        assert eps[-1] == eps[-2]
        assert rows[-1][2] == "plateau"

    def test_bad_grid_exits_2(self, tmp_path, capsys):
        params = write_params(tmp_path)
        code, _, err = run(capsys, "privacy-curve", "--params", params,
                           "--regime", "full_batch", "--alpha", "3.0",
                           "--t-grid", "5,4,3")
        assert code == 2
        assert "ascending" in err

    def test_byte_stable(self, tmp_path, capsys):
        params = write_params(tmp_path)
        args = ("privacy-curve", "--params", params, "--regime", "full_batch",
                "--alpha", "3.0", "--t-grid", "1,10,100")
        _, out1, _ = run(capsys, *args)
        _, out2, _ = run(capsys, *args)
        assert out1 == out2

    def test_strong_convexity_flattens_earlier(self, tmp_path, capsys):
        params = write_params(tmp_path, n=20000, b=20, smoothness=1.0,
                              strong_convexity=0.02, stepsize=1.0, sigma=8.0,
                              diameter=1.0, iterations=1)
        grid = "50," + ",".join(str(50 * 2**k) for k in range(1, 15))

        def onset(regime):
            _, out, _ = run(capsys, "privacy-curve", "--params", params,
                            "--regime", regime, "--alpha", "2.0", "--t-grid", grid)
            rows = [line.split(",") for line in out.strip().split("\n")[1:]]
            final = rows[-1][1]
            return next(int(r[0]) for r in rows if r[1] == final)

        assert onset("strongly_convex") < onset("noisy_sgd")


class TestSolveSigma:
    def test_reports_sigma_meeting_budget(self, tmp_path, capsys):
        params = write_params(tmp_path)
        code, out, _ = run(capsys, "solve-sigma", "--params", params,
                           "--regime", "full_batch", "--alpha", "3.0",
                           "--epsilon", "0.05")
        assert code == 0
        payload = json.loads(out)
        assert payload["epsilon_at_sigma"] <= 0.05
        assert payload["sigma"] > 0

    def test_sigma_field_optional_in_file(self, tmp_path, capsys):
        path = tmp_path / "nosigma.json"
        path.write_text(json.dumps(dict(
            n=100, b=100, lipschitz=1.0, smoothness=20.0, diameter=0.999,
            stepsize=0.05, iterations=500,
        )))
        code, out, _ = run(capsys, "solve-sigma", "--params", str(path),
                           "--regime", "full_batch", "--alpha", "3.0",
                           "--epsilon", "0.05")
        assert code == 0

    def test_unreachable_budget_exits_4(self, tmp_path, capsys):
        params = write_params(tmp_path)
        code, _, err = run(capsys, "solve-sigma", "--params", params,
                           "--regime", "full_batch", "--alpha", "3.0",
                           "--epsilon", "1e-30")
        assert code == 4
        assert "unreachable" in err


class TestRunSgd:
    def test_default_experiment_trajectory(self, tmp_path, capsys):
        params = write_params(tmp_path, n=10, b=2, iterations=25, diameter=100.0,
                              smoothness=None, stepsize=0.1)
        code, out, _ = run(capsys, "run-sgd", "--params", params, "--seed", "9")
        assert code == 0
        lines = out.strip().split("\n")
        assert lines[0] == "step,x0,batch"
        assert len(lines) == 27

    def test_repeatable_bytes(self, tmp_path, capsys):
        params = write_params(tmp_path, n=10, b=2, iterations=10, diameter=100.0,
                              smoothness=None, stepsize=0.1)
        args = ("run-sgd", "--params", params, "--seed", "13", "--mode", "cyclic")
        _, out1, _ = run(capsys, *args)
        _, out2, _ = run(capsys, *args)
        assert out1 == out2

    def test_explicit_experiment_section(self, tmp_path, capsys):
        path = tmp_path / "exp.json"
        path.write_text(json.dumps(dict(
            n=3, b=1, lipschitz=1.0, smoothness=2.0, diameter=2.0,
            stepsize=0.1, sigma=1.0, iterations=5,
            experiment=dict(
                dimension=2,
                losses=[
                    {"kind": "zero"},
                    {"kind": "quadratic", "center": [0.0, 0.0], "curvatures": 1.0},
                    {"kind": "linear", "gradient": [1.0, -1.0]},
                ],
                constraint_set={"kind": "ball", "center": [0.0, 0.0], "radius": 1.0},
            ),
        )))
        code, out, _ = run(capsys, "run-sgd", "--params", str(path), "--seed", "5")
        assert code == 0
        assert out.startswith("step,x0,x1,batch")


class TestAudit:
    def audit_params(self, tmp_path):
        return write_params(
            tmp_path, "walk.json", n=1, b=1, lipschitz=1.0, smoothness=None,
            stepsize=1.0, diameter=1000.0, iterations=750,
            sigma=math.sqrt(0.001 * 1000.0**2 / 750.0) * 0.999,
        )

    def test_verdict_and_echo(self, tmp_path, capsys):
        params = self.audit_params(tmp_path)
        code, out, _ = run(capsys, "audit", "--params", params, "--replicas", "2000",
                           "--seed", "3", "--epsilon", "0.1", "--delta", "0.01")
        assert code == 0
        payload = json.loads(out)
        assert payload["verdict"] in ("REFUTED", "INCONCLUSIVE")
        assert payload["p_sym"]["trials"] == 2000
        assert payload["t_bar"] == 750
        assert payload["delta_hat"] == pytest.approx(
            payload["p_biased"]["ci_lower"] - math.exp(0.1) * payload["p_sym"]["ci_upper"]
        )

    def test_byte_identical_repeats(self, tmp_path, capsys):
        params = self.audit_params(tmp_path)
        args = ("audit", "--params", params, "--replicas", "500", "--seed", "11",
                "--epsilon", "0.1", "--delta", "0.01")
        _, out1, _ = run(capsys, *args)
        _, out2, _ = run(capsys, *args)
        assert out1 == out2

    def test_violated_precondition_exits_2(self, tmp_path, capsys):
        params = write_params(tmp_path, "walk2.json", n=1, b=1, smoothness=None,
                              stepsize=1.0, diameter=1000.0, iterations=750, sigma=5.0)
        code, _, err = run(capsys, "audit", "--params", params, "--replicas", "100",
                           "--seed", "3", "--epsilon", "0.1", "--delta", "0.01")
        assert code == 2
        assert "precondition" in err


class TestOutFlag:
    def test_out_writes_identical_copy(self, tmp_path, capsys):
        params = write_params(tmp_path)
        out_path = tmp_path / "result.json"
        code, out, _ = run(capsys, "compute-epsilon", "--params", params,
                           "--regime", "full_batch", "--alpha", "3.0",
                           "--out", str(out_path))
        assert code == 0
        assert out_path.read_text() == out
