import json

import numpy as np
import pytest

from dfs_cavity.cli import EXIT_DIAGNOSTICS, EXIT_INVALID, EXIT_OK, main
from dfs_cavity.io import SweepResult

BASE = {"delta": 0.5, "Omega": 2.0, "Tr_a": 20.0, "Tr_b": 30.0, "nbar": 0.2,
        "T_grid": {"start": 3.0, "stop": 60.0, "num": 128}}


@pytest.fixture
def config(tmp_path):
    def make(**changes):
        path = tmp_path / f"cfg{len(list(tmp_path.iterdir()))}.json"
        path.write_text(json.dumps({**BASE, **changes}))
        return str(path)
    return make


def _run(argv, tmp_path, name):
    out = tmp_path / name
    code = main([*argv, "--out", str(out)])
    return code, (SweepResult.read_csv(out) if out.exists() else None)


def test_ideal_model(config, tmp_path):
    code, res = _run(["pe-curve", config(), "--model", "ideal"], tmp_path, "a.csv")
    assert code == EXIT_OK
    T, v = res.curve()
    np.testing.assert_allclose(v, 0.5 * (1 + np.cos(0.5 * T + 0.5 * np.pi / 4)), atol=1e-15)


def test_diagonal_without_loss_equals_ideal(config, tmp_path):
    path = config(k11=0.0, k22=0.0)
    _, ideal = _run(["pe-curve", path, "--model", "ideal"], tmp_path, "i.csv")
    _, diag = _run(["pe-curve", path, "--model", "diagonal"], tmp_path, "d.csv")
    assert ideal.curve()[1].tolist() == diag.curve()[1].tolist()


def test_general_matches_protocol(config, tmp_path):
    path = config(k12=0.01, k21=0.012, delta12=0.003)
    _, gen = _run(["pe-curve", path, "--model", "general"], tmp_path, "g.csv")
    _, prot = _run(["pe-curve", path, "--model", "protocol"], tmp_path, "p.csv")
    assert np.abs(gen.curve()[1] - prot.curve()[1]).max() <= 1e-6


def test_output_is_deterministic_and_quiet_safe(config, tmp_path):
    path = config(seed=3)
    texts = []
    for i, flags in enumerate(([], ["-q"], ["-v"], ["--jobs", "2"])):
        out = tmp_path / f"r{i}.csv"
        assert main(["pe-curve", path, *flags, "--out", str(out)]) == EXIT_OK
        texts.append(out.read_bytes())
    assert all(t == texts[0] for t in texts)


def test_stdout_when_no_out(config, capsys):
    assert main(["pe-curve", config(), "--model", "ideal", "-q"]) == EXIT_OK
    assert capsys.readouterr().out.startswith("# dfs_cavity sweep")


def test_overlay_reporting(config, tmp_path, capsys):
    ov = tmp_path / "ov.csv"
    ov.write_text("T,pe,sigma\n10,0.3,0.05\n20,0.6,0.05\n")
    code, res = _run(["pe-curve", config(), "--overlay", str(ov), "--bracket", "-1", "1"], tmp_path, "o.csv")
    assert code == EXIT_OK
    summary = json.loads(next(ln for ln in capsys.readouterr().err.splitlines() if ln.startswith("{")))
    assert summary["chi2"] is not None and summary["best_offset"] is not None
    assert res.metadata["overlay"]["rms"] == summary["rms"]


def test_dfs_scan(tmp_path, config):
    k = 0.1
    path = config(delta=0.0, Omega=1.0, k11=k, k22=k, T_grid=[5.0, 50.0, 20 / k])
    code, res = _run(["dfs-scan", path], tmp_path, "s.csv")
    assert code == EXIT_OK
    tags = res.tags()
    assert len(tags) == 5
    tails = [res.curve(t)[1][-1] for t in tags]
    assert tails == sorted(tails)
    assert tails[-1] == pytest.approx(0.25, abs=1e-3)
    assert tails[0] <= 1e-3
    assert res.metadata["dfs_reports"]["1"]["protected_branch"] is not None


def test_dfs_scan_forces_zero_splitting(tmp_path, config):
    path = config(k11=0.1, k22=0.1, T_grid=[5.0, 10.0])
    with pytest.warns(UserWarning, match="zero splitting"):
        code, res = _run(["dfs-scan", path, "--ratio-grid", "0,1"], tmp_path, "z.csv")
    assert code == EXIT_OK and res.metadata["config"]["delta"] == 0.0


def test_protocol_and_propagate(config, tmp_path, capsys):
    code, res = _run(["protocol", config(), "--T", "5", "10"], tmp_path, "pr.csv")
    assert code == EXIT_OK and res.curve()[0].tolist() == [5.0, 10.0]
    capsys.readouterr()
    npy = tmp_path / "rho.npy"
    assert main(["propagate", config(), "--t", "3", "--n-trunc", "1", "--out", str(npy)]) == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert report["trace"] == pytest.approx(1.0, abs=1e-12)
    assert np.load(npy).shape == (4, 4)
    assert main(["propagate", config(), "--t", "3", "--n-trunc", "1", "--method", "oracle"]) == EXIT_OK


def test_coeffs(config, capsys):
    assert main(["coeffs", config(k12=0.01, k21=0.01), "--t", "0", "2", "--schedule"]) == EXIT_OK
    rows = json.loads(capsys.readouterr().out)["coefficients"]
    assert rows[0]["F1"] == [1.0, 0.0] and len(rows[1]["schedule"]) == 12


def test_invalid_config_exit_code(config, capsys):
    assert main(["pe-curve", config(Tr_a=0)]) == EXIT_INVALID
    assert "Tr_a" in capsys.readouterr().err
    assert main(["pe-curve", config(bogus=1), "--strict"]) == EXIT_INVALID
    assert main(["pe-curve", "/nonexistent.json"]) == EXIT_INVALID


def test_out_of_range_overlay_exit_code(config, tmp_path):
    ov = tmp_path / "ov.csv"
    ov.write_text("T,pe\n1000,0.3\n")
    assert main(["pe-curve", config(), "--overlay", str(ov)]) == EXIT_INVALID


def test_diagnostics_exit_code(config, monkeypatch):
    import dfs_cavity.cli as cli
    from dfs_cavity.core import DiagnosticsError

    def boom(*args, **kwargs):
        raise DiagnosticsError("negative eigenvalue", eigenvalue=-1e-3)

    monkeypatch.setattr(cli, "sweep", boom)
    assert main(["pe-curve", config()]) == EXIT_DIAGNOSTICS


def test_certify_dfs(tmp_path, capsys):
    out = tmp_path / "cert.json"
    assert main(["certify", "--suite", "dfs", "--out", str(out)]) == EXIT_OK
    report = json.loads(out.read_text())
    assert report["passed"] and report["seed"] is not None


def test_failed_certification_exit_code(monkeypatch):
    import dfs_cavity.cli as cli
    from dfs_cavity.certify import CheckResult

    monkeypatch.setattr(cli, "run_suite", lambda *a: [CheckResult("x", False, 1.0, 0.1)])
    assert main(["certify", "--suite", "dfs"]) == EXIT_DIAGNOSTICS
