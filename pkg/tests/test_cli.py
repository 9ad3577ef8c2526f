import json
import os
import stat
import subprocess
import sys
import textwrap

import numpy as np
import pytest

from gsakit.cli import main, read_config, resolve, study_error
from gsakit.output import atomic_write, read_table, write_table
from gsakit.results import SobolResult


def _run(tmp_path, *args):
    return main([*args, "--out", str(tmp_path)])


def _manifest(path):
    with open(os.path.join(path, "manifest.json")) as fh:
        return json.load(fh)


def test_sobol_run_and_replay_are_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert _run(a, "run", "--method", "sobol", "--model", "ishigami", "--n", "512",
                "--seed", "3", "--n-boot", "50") == 0
    man = _manifest(a)
    assert man["eval_count"] == man["expected_evals"] == 512 * 5
    assert main(["replay", str(a / "manifest.json"), "--out", str(b)]) == 0
    for name in ("sobol.csv", "sobol.json", "sobol_curves.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    rows = read_table(a / "sobol.csv")
    assert [r["input"] for r in rows] == ["X1", "X2", "X3"]


@pytest.mark.parametrize("method,extra,files", [
    ("fast", ["--n", "101"], ["fast.csv"]),
    ("morris", ["--r", "4"], ["morris.csv", "morris_design.csv"]),
    ("shapley", ["--n-perm", "5", "--n-outer", "10", "--n-var", "200"], ["shapley.csv"]),
    ("delta", ["--n", "1000", "--input", "1"], ["delta.csv", "delta_curves.csv"]),
    ("ale", ["--n", "400", "--bins", "8"], ["ale.csv"]),
    ("dgsm", ["--n", "20"], ["dgsm.csv"]),
    ("dsd", [], ["dsd_design.csv", "dsd_fit.csv", "dsd_r2.csv"]),
])
def test_every_method_writes_its_outputs(tmp_path, method, extra, files):
    assert _run(tmp_path, "run", "--method", method, "--model", "ishigami", *extra) == 0
    man = _manifest(tmp_path)
    for f in files:
        assert (tmp_path / f).exists() and (tmp_path / f.replace(".csv", ".json")).exists()
    if man["expected_evals"] is not None:
        assert man["eval_count"] == man["expected_evals"]


def test_budget_formulas(tmp_path):
    _run(tmp_path / "m", "run", "--method", "morris", "--model", "gfunction", "--r", "4")
    assert _manifest(tmp_path / "m")["eval_count"] == 4 * (8 + 1)
    _run(tmp_path / "d", "run", "--method", "dgsm", "--model", "ishigami", "--n", "30")
    assert _manifest(tmp_path / "d")["eval_count"] == 30 * (2 * 3 + 1)
    _run(tmp_path / "s", "run", "--method", "dsd", "--model", "gfunction",
         "--model-param", "a=0,1,4.5,9,99,99,99,99,99,99")
    assert _manifest(tmp_path / "s")["eval_count"] == 25


def test_given_data_delta(tmp_path):
    rng = np.random.default_rng(0)
    X = rng.random((1000, 2))
    rows = [{"a": x[0], "b": x[1], "y": x[0] + 0.01 * x[1]} for x in X]
    write_table(tmp_path / "data.csv", ["a", "b", "y"], rows)
    assert _run(tmp_path / "o", "run", "--method", "delta", "--data",
                str(tmp_path / "data.csv")) == 0
    res = read_table(tmp_path / "o" / "delta.csv")
    assert [r["input"] for r in res] == ["a", "b"]
    assert float(res[0]["delta"]) > float(res[1]["delta"])
    assert _manifest(tmp_path / "o")["eval_count"] == 0
    assert _run(tmp_path / "o2", "run", "--method", "morris", "--data",
                str(tmp_path / "data.csv")) == 3


def test_exit_codes(tmp_path, capsys):
    assert _run(tmp_path, "run", "--method", "fast", "--model", "ishigami", "--n", "50") == 2
    assert _run(tmp_path, "run", "--method", "sobol", "--model", "borehole") == 2
    assert _run(tmp_path, "converge", "--methods", "morris", "--model", "ishigami",
                "--n-grid", "64") == 4
    assert "gsakit: error:" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        main(["run", "--method", "kriging"])


def test_config_precedence(tmp_path):
    cfg = tmp_path / "gsa.cfg"
    cfg.write_text("# study\nmethod = sobol\nmodel = linear\nn = 64  # small\n"
                   "model_param = beta=1,3\nseed = 9\n")
    c = read_config(cfg)
    s = resolve({"n": 128}, c)
    assert s["n"] == 128 and s["seed"] == 9 and s["model_param"] == ["beta=1,3"]
    assert s["n_boot"] == 500
    assert main(["run", "--config", str(cfg), "--n-boot", "0", "--out", str(tmp_path / "o")]) == 0
    man = _manifest(tmp_path / "o")
    assert man["settings"]["n"] == 64 and man["eval_count"] == 64 * 4
    bad = tmp_path / "bad.cfg"
    bad.write_text("colour = blue\n")
    assert main(["run", "--config", str(bad), "--out", str(tmp_path / "x")]) == 2


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("GSAKIT_OUTPUT_DIR", str(tmp_path / "env"))
    assert main(["run", "--method", "morris", "--model", "linear", "--r", "2"]) == 0
    assert (tmp_path / "env" / "morris.csv").exists()


def test_external_model_through_cli(tmp_path):
    script = tmp_path / "model.py"
    script.write_text(f"#!{sys.executable}\n" + textwrap.dedent("""
        import sys
        p, n = map(int, sys.stdin.readline().split(","))
        for _ in range(n):
            x = [float(v) for v in sys.stdin.readline().split(",")]
            print(repr(2 * x[0] + x[1]))
    """))
    script.chmod(script.stat().st_mode | stat.S_IEXEC)
    assert _run(tmp_path / "o", "run", "--method", "morris", "--model-cmd", str(script),
                "--p", "2", "--r", "3") == 0
    rows = read_table(tmp_path / "o" / "morris.csv")
    assert float(rows[0]["mean_abs"]) == pytest.approx(2.0)
    assert _run(tmp_path / "o2", "run", "--method", "morris", "--model-cmd", str(script)) == 2


def test_converge_single_replicate(tmp_path):
    assert _run(tmp_path, "converge", "--model", "ishigami", "--n-grid", "64,256",
                "--replicates", "1", "--seed", "1") == 0
    rows = read_table(tmp_path / "converge.csv")
    assert [int(r["n"]) for r in rows] == [64, 256]
    assert [int(r["eval_count"]) for r in rows] == [64 * 5, 256 * 5]
    assert not (tmp_path / "converge_summary.csv").exists()
    for r in rows:
        err = float(r["error"])
        assert float(r["error_display"]) == (err if err > 0 else 0.009)


def test_converge_replay_and_workers(tmp_path):
    args = ["converge", "--model", "ishigami", "--n-grid", "64,128", "--replicates", "3"]
    assert _run(tmp_path / "a", *args, "--workers", "3") == 0
    assert main(["replay", str(tmp_path / "a" / "manifest.json"), "--out",
                 str(tmp_path / "b")]) == 0
    for name in ("converge.csv", "converge_summary.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_study_error_is_exact_in_hundredths():
    est = SobolResult(np.array([0.314, 0.444]), np.array([0.556, 0.445]), 1.0, 0, 0, "x")
    truth = SobolResult(np.array([0.3139, 0.4424]), np.array([0.5576, 0.4424]), 1.0, 0, 0, "t")
    assert study_error(est, truth, "sum-abs-rounded") == 0.0
    est2 = SobolResult(np.array([0.30, 0.46]), np.array([0.56, 0.44]), 1.0, 0, 0, "x")
    assert study_error(est2, truth, "sum-abs-rounded") == 0.03


def test_atomic_write_leaves_no_partial_file(tmp_path, monkeypatch):
    target = tmp_path / "out.csv"
    atomic_write(target, "old\n")

    def boom(*a):
        raise OSError("disk full")

    monkeypatch.setattr(os, "replace", boom)
    with pytest.raises(OSError):
        atomic_write(target, "new\n")
    assert target.read_text() == "old\n"
    assert os.listdir(tmp_path) == ["out.csv"]


def test_module_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "gsakit", "--version"], capture_output=True,
                         text=True, check=True)
    assert out.stdout.startswith("gsakit ")
