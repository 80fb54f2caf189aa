import subprocess
import sys

import numpy as np
import pytest

from polyads import __version__
from polyads.cli import main


def _kv(text):
    out = {}
    for line in text.strip().splitlines():
        k, _, v = line.partition("=")
        out.setdefault(k, v)
    return out


def _simulate(tmp_path, capsys, *extra, name="sim"):
    out = tmp_path / name
    code = main(["simulate", "--n1", "20", "--n2", "20", "--n3", "4", "--density", "0.2", "--seed", "5",
                 "--out-dir", str(out), *extra])
    assert code == 0
    return out, _kv(capsys.readouterr().out)


def test_simulate_then_fit(tmp_path, capsys):
    out, sim = _simulate(tmp_path, capsys)
    assert sim["polyads.version"] == __version__
    assert sim["config.n1"] == "20" and sim["config.seed"] == "5"
    assert (out / "simulate.txt").exists()
    code = main(["fit", "--edges", str(out / "edges.csv"), "--covariates", str(out / "covariates.csv"),
                 "--output", str(tmp_path / "fit.txt")])
    rep = _kv(capsys.readouterr().out)
    assert code == 0
    assert rep["status"] == "converged"
    beta = float(rep["beta"])
    assert float(rep["ci95_pair.lower"]) < beta < float(rep["ci95_pair.upper"])
    assert float(rep["ci95_edge.lower"]) < beta < float(rep["ci95_edge.upper"])
    for key in ("n_active", "n_canonical", "counter.inner_loop", "counter.pair_entries", "trace[0]",
                "timing.enumeration", "timing.newton", "timing.variance", "config.truncation_L"):
        assert key in rep
    assert _kv((tmp_path / "fit.txt").read_text()) == rep


def test_fit_recovers_truth_across_seeds(tmp_path, capsys):
    covered = 0
    for seed in range(10):
        out = tmp_path / f"s{seed}"
        main(["simulate", "--n1", "20", "--n2", "20", "--n3", "4", "--density", "0.2", "--seed", str(seed),
              "--out-dir", str(out)])
        main(["fit", "--edges", str(out / "edges.csv"), "--covariates", str(out / "covariates.csv")])
        rep = _kv(capsys.readouterr().out.split("command=fit")[1])
        covered += float(rep["ci95_pair.lower"]) <= 1.0 <= float(rep["ci95_pair.upper"])
    assert covered >= 9


def test_simulate_is_reproducible(tmp_path, capsys):
    a, _ = _simulate(tmp_path, capsys, name="a")
    b, _ = _simulate(tmp_path, capsys, name="b")
    for f in ("edges.csv", "covariates.csv"):
        assert (a / f).read_bytes() == (b / f).read_bytes()


def test_simulate_density_target(tmp_path, capsys):
    main(["simulate", "--n1", "50", "--n2", "50", "--density", "0.1", "--out-dir", str(tmp_path)])
    rep = _kv(capsys.readouterr().out)
    assert abs(float(rep["realized_density"]) - 0.1) <= 0.01
    main(["simulate", "--n1", "50", "--n2", "50", "--sparse-regime", "--out-dir", str(tmp_path)])
    rep = _kv(capsys.readouterr().out)
    assert int(rep["n_edges"]) == pytest.approx(4 * np.sqrt(50 * 50 * 5), rel=0.3)


def test_config_file_and_flag_precedence(tmp_path, capsys, monkeypatch):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# design\nn1 = 9\nn2=8\nseed=3\n")
    monkeypatch.setenv("POLYADS_WORKERS", "3")
    main(["simulate", "--config", str(cfg), "--n2", "7", "--n3", "3", "--density", "0.3",
          "--out-dir", str(tmp_path)])
    rep = _kv(capsys.readouterr().out)
    assert (rep["config.n1"], rep["config.n2"], rep["config.seed"]) == ("9", "7", "3")
    (tmp_path / "bad.cfg").write_text("n1=9\ncolour=blue\n")
    assert main(["simulate", "--config", str(tmp_path / "bad.cfg")]) == 2
    assert "colour" in capsys.readouterr().err


def test_workers_env_default(tmp_path, capsys, monkeypatch):
    out, _ = _simulate(tmp_path, capsys)
    monkeypatch.setenv("POLYADS_WORKERS", "2")
    main(["fit", "--edges", str(out / "edges.csv"), "--covariates", str(out / "covariates.csv")])
    assert _kv(capsys.readouterr().out)["config.workers"] == "2"


def test_deterministic_fit_reports_are_identical(tmp_path, capsys):
    out, _ = _simulate(tmp_path, capsys)
    texts = []
    for k, workers in enumerate(("1", "1", "4")):
        path = tmp_path / "report.txt"
        main(["fit", "--edges", str(out / "edges.csv"), "--covariates", str(out / "covariates.csv"),
              "--deterministic", "--workers", workers, "--output", str(path)])
        texts.append(path.read_bytes())
    assert texts[0] == texts[1] == texts[2]
    assert b"timing." not in texts[0]


def test_input_errors_exit_2(tmp_path, capsys):
    assert main(["fit", "--edges", str(tmp_path / "nope.csv"), "--covariates", "x.csv"]) == 2
    assert main(["fit", "--edges", "e.csv"]) == 2
    (tmp_path / "e.csv").write_text("i1,i2,y\n0,0,3\n1,1,2\n0,1,1\n")
    (tmp_path / "x.csv").write_text("i1,i2,x1\n0,0,1\n1,1,1\n0,1,1\n1,0,1\n")
    assert main(["fit", "--edges", str(tmp_path / "e.csv"), "--covariates", str(tmp_path / "x.csv")]) == 2
    assert "Collinearity" in capsys.readouterr().err


def test_missing_covariates_listing(tmp_path, capsys):
    ids = np.arange(12) * 10
    with open(tmp_path / "e.csv", "w") as fh:
        fh.write("i1,i2,y\n")
        for a in ids:
            for b in ids + 1:
                fh.write(f"{a},{b},1\n")
    (tmp_path / "x.csv").write_text("i1,i2,x1\n0,1,0.5\n10,11,0.1\n")
    code = main(["fit", "--edges", str(tmp_path / "e.csv"), "--covariates", str(tmp_path / "x.csv")])
    rep = _kv(capsys.readouterr().out)
    assert code == 2
    assert rep["error"] == "missing_covariates"
    assert int(rep["missing.total"]) == 144 - 2
    listed = [k for k in rep if k.startswith("missing[")]
    assert len(listed) == 100
    a, b = map(int, rep["missing[0]"].split(","))
    assert a in ids and b in ids + 1


def test_non_convergence_exit_3(tmp_path, capsys):
    out, _ = _simulate(tmp_path, capsys)
    code = main(["fit", "--edges", str(out / "edges.csv"), "--covariates", str(out / "covariates.csv"),
                 "--max-iter", "1", "--tol", "1e-300"])
    rep = _kv(capsys.readouterr().out)
    assert code == 3 and rep["status"] == "not_converged" and "beta" in rep


def test_resource_guard_exit_4(tmp_path, capsys):
    out, _ = _simulate(tmp_path, capsys)
    code = main(["fit", "--edges", str(out / "edges.csv"), "--covariates", str(out / "covariates.csv"),
                 "--max-records", "10"])
    assert code == 4
    assert "resource_guard" in capsys.readouterr().err


def test_pair_guard_is_not_fatal(tmp_path, capsys):
    out, _ = _simulate(tmp_path, capsys)
    code = main(["fit", "--edges", str(out / "edges.csv"), "--covariates", str(out / "covariates.csv"),
                 "--max-pair-entries", "10"])
    rep = _kv(capsys.readouterr().out)
    assert code == 0 and rep["ci95_pair"] == "unavailable" and "warning" in rep


def test_meta_command(tmp_path, capsys):
    (tmp_path / "r.csv").write_text("beta,var\n0.0,1.0\n2.0,1.0\n")
    assert main(["meta", "--results", str(tmp_path / "r.csv")]) == 0
    rep = _kv(capsys.readouterr().out)
    assert float(rep["pooled"]) == pytest.approx(1.0)
    (tmp_path / "s.csv").write_text("beta_hat,se\n0.9,0.1\n1.3,0.2\n1.1,0.1\n")
    assert main(["meta", "--results", str(tmp_path / "s.csv")]) == 0
    assert _kv(capsys.readouterr().out)["method"] == "paule-mandel"
    (tmp_path / "one.csv").write_text("beta,var\n1.0,1.0\n")
    assert main(["meta", "--results", str(tmp_path / "one.csv")]) == 2
    (tmp_path / "cols.csv").write_text("b,v\n1.0,1.0\n2,1\n")
    assert main(["meta", "--results", str(tmp_path / "cols.csv")]) == 2


def test_bench_single_replication(tmp_path, capsys):
    code = main(["bench", "--grid", "10x10x3:0.3", "--replications", "1", "--output", str(tmp_path / "t.csv"),
                 "--long-output", str(tmp_path / "l.csv")])
    assert code == 0
    table = (tmp_path / "t.csv").read_text().strip().splitlines()
    assert len(table) == 3 and table[0].startswith("config,estimator")
    assert len((tmp_path / "l.csv").read_text().strip().splitlines()) == 3


def test_bench_grid_errors(capsys):
    assert main(["bench", "--grid", "10x10:0.3", "--replications", "1"]) == 2
    assert main(["bench", "--grid", "10x10x3:0.3", "--estimators", "ols"]) == 2


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "polyads", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and __version__ in res.stdout
