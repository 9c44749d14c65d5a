import json
import subprocess
import sys

import numpy as np
import pytest

from gnedr.cli import EXIT_CONFIG, EXIT_MISMATCH, EXIT_NOT_CONVERGED, EXIT_OK, main
from gnedr.config import ConfigError, load_config, parse_config
from gnedr.cournot import sample_instance
from gnedr.metrics import read_metrics


def write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return p


SMALL = {
    "seed": 3,
    "game": {"type": "cournot", "N": 3, "m": 1, "n_range": [1, 1]},
    "graph": {"type": "cycle_plus", "chords": 1},
    "max_iters": 20000,
    "stop_tol": 0,
    "cert_tol": 1e-9,
    "out": "out",
}


def test_run_writes_artifacts(tmp_path, capsys):
    p = write(tmp_path, {**SMALL, "checkpoint": "state.bin"})
    assert main(["run", str(p)]) == EXIT_OK
    recs = read_metrics(tmp_path / "out" / "metrics.csv")
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert summary["certified"] and summary["iterations"] == len(recs) - 1
    assert set(summary["constants"]) == {"eta", "theta1", "theta2", "sigma1", "rho_mu_bound"}
    assert summary["rho_mu"] == summary["constants"]["rho_mu_bound"]
    assert recs[-1].avg_norm_dist <= 1e-6
    assert "normalization" in summary
    assert (tmp_path / "state.bin").exists()


def test_resume_from_checkpoint_finishes_immediately(tmp_path):
    p = write(tmp_path, {**SMALL, "checkpoint": "state.bin"})
    assert main(["run", str(p)]) == EXIT_OK
    p2 = write(tmp_path, {**SMALL, "resume_from": "state.bin", "out": "out2"}, "cfg2.json")
    assert main(["run", str(p2)]) == EXIT_OK
    assert len(read_metrics(tmp_path / "out2" / "metrics.csv")) == 2


def test_zero_iterations_exit_code_and_single_row(tmp_path):
    p = write(tmp_path, SMALL)
    assert main(["run", str(p), "--max-iters", "0", "--out", str(tmp_path / "z")]) == EXIT_NOT_CONVERGED
    assert len(read_metrics(tmp_path / "z" / "metrics.csv")) == 1


def test_flags_override_config(tmp_path):
    p = write(tmp_path, SMALL)
    assert main(["run", str(p), "--mode", "A", "--seed", "4", "--workers", "2", "--out", str(tmp_path / "a")]) in (0, 3)
    s = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert s["mode"] == "A" and s["rho_mu"] >= 2


def test_low_rho_warns_but_runs(tmp_path):
    p = write(tmp_path, {**SMALL, "rho_mu": 1.0, "max_iters": 10})
    main(["run", str(p)])
    s = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert any("mode B" in w for w in s["warnings"])
    assert s["iterations"] == 10


def test_instance_file_game(tmp_path):
    inst = sample_instance(8, 2, 1, n_range=(1, 1))
    (tmp_path / "inst.json").write_text(json.dumps(inst.to_dict()))
    p = write(tmp_path, {**SMALL, "game": {"type": "file", "path": "inst.json"},
                         "graph": {"num_nodes": 2, "edges": [[1, 2], [2, 1]]}})
    assert main(["run", str(p)]) == EXIT_OK


def test_verify_and_constants(tmp_path, capsys):
    p = write(tmp_path, SMALL)
    assert main(["verify", str(p)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "brute-force" in out and "MISMATCH" not in out
    assert main(["constants", str(p)]) == EXIT_OK
    assert "rho_mu_bound" in capsys.readouterr().out


def test_verify_without_oracle_marks_distances_unavailable(tmp_path, capsys):
    p = write(tmp_path, {**SMALL, "oracle": False})
    assert main(["verify", str(p)]) == EXIT_OK
    assert "unavailable" in capsys.readouterr().out


def test_verify_mismatch_exit_code(tmp_path, monkeypatch):
    import gnedr.cli as cli

    real = cli.centralized_vgne

    def shifted(game):
        sol = real(game)
        return type(sol)(sol.x_star + 0.1, sol.lambda_star, sol.certificate, sol.iterations)

    monkeypatch.setattr(cli, "centralized_vgne", shifted)
    assert main(["verify", str(write(tmp_path, SMALL))]) == EXIT_MISMATCH


@pytest.mark.parametrize(
    "patch, field",
    [
        ({"mode": "C"}, "mode"),
        ({"rho_z": -1}, "rho_z"),
        ({"gamma": 1.5}, "gamma"),
        ({"max_iters": 2.5}, "max_iters"),
        ({"bogus": 1}, "bogus"),
        ({"game": {"type": "file", "path": "missing.json"}}, "game.path"),
        ({"game": {"type": "cournot", "m": 2}}, "game.N"),
        ({"graph": {"num_nodes": 3, "edges": [[1, 1]]}}, "graph"),
        ({"resume_from": "nope.bin"}, "resume_from"),
    ],
)
def test_config_errors_name_field(tmp_path, capsys, patch, field):
    p = write(tmp_path, {**SMALL, **patch})
    assert main(["run", str(p)]) == EXIT_CONFIG
    assert field in capsys.readouterr().err


def test_json_syntax_error_reports_line(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "seed": 1,\n  "game": \n}')
    assert main(["constants", str(p)]) == EXIT_CONFIG
    assert "line 4" in capsys.readouterr().err


def test_parse_config_defaults():
    cfg = parse_config({"game": {"N": 2, "m": 1}, "graph": {}})
    assert cfg.mode == "B" and cfg.rho_mu == "auto" and cfg.gamma == 0.5 and cfg.workers == 0
    with pytest.raises(ConfigError, match="graph"):
        parse_config({"game": {}})


def test_module_entry_point(tmp_path):
    p = write(tmp_path, SMALL)
    out = subprocess.run([sys.executable, "-m", "gnedr", "constants", str(p)], capture_output=True, text=True)
    assert out.returncode == 0 and "eta" in out.stdout
