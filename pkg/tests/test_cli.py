import json

import pytest

from beltrami.cli import main


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_p_eval_rational_spot_value(capsys):
    code, out, _ = run_cli(
        capsys, "p-eval", "--f", "1+a*x1+b*x1^3+x3", "--param", "a=1",
        "--param", "b=1", "--point", "0,0,0", "--degree", "4", "--mode", "rational",
    )
    assert code == 0
    data = json.loads(out)
    deg0 = [e for e in data["coeffs"] if e["mi"] == [0, 0]]
    assert deg0[0]["c"] == "-81/4"
    assert data["frame"] == "graph"


def test_p_eval_critical_point_exit_code(capsys):
    code, out, err = run_cli(
        capsys, "p-eval", "--f", "1+x1^2+x2^2+x3^2", "--point", "0,0,0"
    )
    assert code == 1
    assert out == ""
    payload = json.loads(err)
    assert payload["error"] == "CriticalPointError"


def test_usage_error_exit_code(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["p-eval"])  # missing --f
    assert exc.value.code == 2


def test_p_hierarchy(capsys):
    code, out, _ = run_cli(
        capsys, "p-hierarchy", "--f", "1+a*x1+x3", "--param", "a=1",
        "--point", "0,0,0", "--indices", "2,3,4,6", "--degree", "3",
    )
    assert code == 0
    data = json.loads(out)
    assert data["indices"] == [2, 3, 4, 6]
    assert all(abs(float(e["c"])) < 1e-10 for e in data["coeffs"])


def test_coeffs_prop3_defaults_rational(capsys):
    code, out, _ = run_cli(capsys, "coeffs-prop3", "--a", "2", "--b", "1")
    assert code == 0
    data = json.loads(out)
    assert data["mode"] == "rational"
    assert data["pass"] is True


def test_coeffs_prop4_vanishing(capsys):
    code, out, _ = run_cli(capsys, "coeffs-prop4", "--a", "1")
    assert code == 0
    data = json.loads(out)
    assert data["pass"] is True
    assert data["vanishes_at_1"] is True


def test_verify_affine_report(capsys):
    code, out, _ = run_cli(capsys, "verify-affine", "--a", "1", "--samples", "25")
    assert code == 0
    data = json.loads(out)
    assert data["pass"] is True
    assert data["samples"] == 25
    assert set(data["per_check"]) == {
        "beltrami_residual",
        "elliptic_residual",
        "pullback_dim2a",
        "pullback_dim2b",
        "pullback_closedness",
        "pullback_beta_t",
    }


def test_conformal_check_deterministic(capsys):
    code1, out1, _ = run_cli(capsys, "conformal-check", "--seed", "3", "--samples", "10")
    code2, out2, _ = run_cli(capsys, "conformal-check", "--seed", "3", "--samples", "10")
    assert code1 == code2 == 0
    assert out1 == out2
    assert json.loads(out1)["pass"] is True


def test_evolve_csv(capsys):
    code, out, _ = run_cli(
        capsys, "evolve", "--f", "1+x1^2+x3", "--point", "0,0,0", "--tmax", "0.01",
        "--dt", "0.005", "--grid", "9x9", "--spacing", "0.01",
        "--init", "psi:x1+x2",
    )
    assert code == 0
    lines = out.strip().split("\n")
    assert lines[0] == "t,max_drift,l2_drift,max_beta,max_drift_normalized"
    assert len(lines) == 4  # header + initial sample + 2 steps


def test_evolve_affine_exact_runs(capsys):
    code, out, _ = run_cli(
        capsys, "evolve", "--f", "1+a*x1+x3", "--param", "a=1", "--point", "0,0,0",
        "--tmax", "0.01", "--dt", "0.005", "--grid", "9x9", "--spacing", "0.01",
        "--init", "affine-exact", "--format", "json",
    )
    assert code == 0
    data = json.loads(out)
    assert data["final"]["max_drift"] == 0.0
    assert data["final"]["max_beta"] > 0.5


def test_evolve_rejects_malformed_grid(capsys):
    code, _, err = run_cli(
        capsys, "evolve", "--f", "1+x3", "--point", "0,0,0", "--tmax", "0.01",
        "--dt", "0.005", "--grid", "21", "--init", "psi:x1",
    )
    assert code == 1
    assert "n1xn2" in json.loads(err)["message"]


def test_dump_chart_rational(capsys):
    code, out, _ = run_cli(
        capsys, "dump-chart", "--f", "1+x1^2+x3", "--point", "0,0,0",
        "--mode", "rational", "--t-order", "3", "--xi-order", "3",
    )
    assert code == 0
    data = json.loads(out)
    assert data["mode"] == "rational"
    assert data["level"] == "1"


def test_evolve_affine_exact_requires_affine(capsys):
    code, _, err = run_cli(
        capsys, "evolve", "--f", "1+x1^2+x3", "--point", "0,0,0", "--tmax", "0.01",
        "--dt", "0.005", "--init", "affine-exact",
    )
    assert code == 1
    assert "affine" in json.loads(err)["message"]


def test_cross_check_passes(capsys):
    code, out, _ = run_cli(capsys, "cross-check")
    assert code == 0
    data = json.loads(out)
    assert data["pass"] is True
    assert len(data["battery"]) == 5
    names = {row["name"] for row in data["battery"]}
    assert any("cubic" in n for n in names) and any("quadratic" in n for n in names)


def test_dump_chart(capsys):
    code, out, _ = run_cli(
        capsys, "dump-chart", "--f", "1+x3", "--point", "0,0,0",
        "--t-order", "3", "--xi-order", "3",
    )
    assert code == 0
    data = json.loads(out)
    assert data["orders"]["total"] == 6


def test_out_file_and_config(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("t_order = 4\nxi_order = 4\n# comment\nseed = 9\n")
    out_path = tmp_path / "report.json"
    code, out, _ = run_cli(
        capsys, "dump-chart", "--f", "1+x3", "--point", "0,0,0",
        "--config", str(cfg), "--out", str(out_path),
    )
    assert code == 0
    assert out == ""
    data = json.loads(out_path.read_text())
    assert data["orders"] == {"t": 4, "xi": 4, "total": 8}
    # flags override the file
    code, out, _ = run_cli(
        capsys, "dump-chart", "--f", "1+x3", "--point", "0,0,0",
        "--config", str(cfg), "--t-order", "3",
    )
    assert json.loads(out)["orders"]["t"] == 3


def test_negative_parameter_values(capsys):
    code, out, _ = run_cli(capsys, "coeffs-prop4", "--a", "-1")
    assert code == 0
    assert json.loads(out)["pass"] is True


def test_thread_cap_env(monkeypatch):
    from beltrami.cli import _workers

    monkeypatch.setenv("BELTRAMI_THREADS", "2")
    assert _workers() == 2
    monkeypatch.delenv("BELTRAMI_THREADS")
    assert _workers() >= 1


def test_determinism_byte_identical(capsys):
    args = ["p-eval", "--f", "1+x1^2+a*x2^2+x3", "--param", "a=2",
            "--point", "0,0,0", "--degree", "2"]
    _, out1, _ = run_cli(capsys, *args)
    _, out2, _ = run_cli(capsys, *args)
    assert out1 == out2
