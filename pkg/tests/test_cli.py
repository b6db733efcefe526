import json

import pytest

from subdiff import cli, harness


def _write_config(tmp_path, **kwargs):
    run_fields = dict(
        algorithms=("exact_diffusion",), mu=0.02, iterations=300,
        monte_carlo_runs=2, burn_in_fraction=0.5, master_seed=7,
        stderr_gate_db=10.0,
    )
    run_fields.update(kwargs)
    cfg = harness.ExperimentConfig(
        network=harness.NetworkConfig(K=8, P=2, M=2, radius=0.8, kernel_width=0.3, tau=0.5, seed=3),
        problem=harness.ProblemConfig(seed=5),
        run=harness.RunConfig(**run_fields),
        outputs=harness.OutputConfig(directory=str(tmp_path / "results"), trace_stride=10),
    )
    path = tmp_path / "config.json"
    path.write_text(json.dumps(harness.config_to_json(cfg)))
    return path


def test_missing_config_exits_one(tmp_path, capsys):
    rc = cli.main(["run", "--config", str(tmp_path / "nope.json")])
    assert rc == 1
    assert "nope.json" in capsys.readouterr().err


def test_invalid_json_exits_one(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    rc = cli.main(["run", "--config", str(bad)])
    assert rc == 1
    assert "bad.json" in capsys.readouterr().err


def test_run_smoke(tmp_path, capsys):
    path = _write_config(tmp_path)
    rc = cli.main(["run", "--config", str(path)])
    assert rc == 0
    assert (tmp_path / "results" / "curves.csv").exists()
    assert (tmp_path / "results" / "summary.json").exists()
    assert "steady-state" in capsys.readouterr().out


def test_run_quiet_and_out_override(tmp_path, capsys):
    path = _write_config(tmp_path)
    rc = cli.main(["run", "--config", str(path), "--quiet", "--out", str(tmp_path / "other")])
    assert rc == 0
    assert capsys.readouterr().out == ""
    assert (tmp_path / "other" / "curves.csv").exists()


def test_seed_override_changes_summary(tmp_path):
    path = _write_config(tmp_path)
    cli.main(["run", "--config", str(path), "--quiet"])
    summary1 = json.loads((tmp_path / "results" / "summary.json").read_text())
    cli.main(["run", "--config", str(path), "--quiet", "--seed", "1234"])
    summary2 = json.loads((tmp_path / "results" / "summary.json").read_text())
    assert summary1["seeds"]["master_seed"] == 7
    assert summary2["seeds"]["master_seed"] == 1234


def test_deterministic_flag(tmp_path):
    path = _write_config(tmp_path, monte_carlo_runs=1)
    rc = cli.main(["run", "--config", str(path), "--quiet", "--deterministic"])
    assert rc == 0
    summary = json.loads((tmp_path / "results" / "summary.json").read_text())
    assert summary["algorithms"]["exact_diffusion"]["n_runs"] == 1
    assert summary["config"]["run"]["deterministic"] is True


def test_gen_writes_network_and_problem(tmp_path):
    path = _write_config(tmp_path)
    rc = cli.main(["gen", "--config", str(path), "--quiet"])
    assert rc == 0
    network = json.loads((tmp_path / "results" / "network.json").read_text())
    assert set(network) == {"K", "M", "P", "coords", "edges", "U", "w_o"}
    problem = json.loads((tmp_path / "results" / "problem.json").read_text())
    assert "sigma_h2" in problem and "seeds" in problem


def test_sweep_smoke(tmp_path):
    path = _write_config(tmp_path)
    rc = cli.main(["sweep", "--config", str(path), "--quiet", "--mu-list", "0.02,0.01"])
    assert rc == 0
    sweep = (tmp_path / "results" / "sweep.csv").read_text().strip().splitlines()
    assert sweep[0] == "mu,algorithm,msd_db,msd_theory_exact_db,msd_theory_small_mu_db,stderr_db,error"
    assert len(sweep) == 3


def test_verify_prints_residuals(tmp_path, capsys):
    path = _write_config(tmp_path)
    rc = cli.main(["verify", "--config", str(path)])
    out = capsys.readouterr().out
    assert rc == 0
    for name in (
        "sparsity", "fixes_projector", "symmetry", "spectral_radius",
        "sqrt_residual", "annihilation",
    ):
        assert name in out
    assert "optimum_off_subspace" in out


def test_numerical_failure_exits_two(tmp_path, capsys):
    # a wildly unstable step-size fails the series stability pre-check
    path = _write_config(tmp_path, mu=100.0)
    rc = cli.main(["run", "--config", str(path), "--quiet"])
    assert rc == 2
    assert "numerical failure" in capsys.readouterr().err


def test_usage_error_nonzero_exit(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["frobnicate"])
    assert exc.value.code != 0
