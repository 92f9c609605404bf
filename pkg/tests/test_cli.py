import subprocess
import sys

import pytest

from stochlie.cli import EXIT_FAIL, EXIT_OK, EXIT_USAGE, main
from stochlie.experiments import ConfigError, Experiment, parse_config

CAP_DSL = "field A dim 1: 1=x1^2;\nfield B dim 1: 1=x1^3;\n"


def run(argv, capsys):
    code = main([str(a) for a in argv])
    return code, capsys.readouterr()


def test_parse_config_strict():
    cfg = parse_config("experiment = gbm_closed_form\nseed=3\n# comment\n\nsteps=64\n")
    assert cfg.experiment is Experiment.GBM_CLOSED_FORM and cfg.seed == 3 and cfg.steps == 64
    with pytest.raises(ConfigError, match="colour"):
        parse_config("colour=blue\n")
    with pytest.raises(ConfigError):
        parse_config("seed=1\nseed=2\n")
    with pytest.raises(ConfigError):
        parse_config("steps=-4\n")
    with pytest.raises(ConfigError):
        parse_config("experiment=nope\n")


def test_flags_override_config():
    cfg = parse_config("seed=3\npaths=8\n", seed=9, paths=None)
    assert cfg.seed == 9 and cfg.paths == 8


def test_unknown_config_key_exits_before_running(tmp_path, capsys):
    conf = tmp_path / "bad.conf"
    conf.write_text("experiment=gbm_closed_form\nwobble=1\n")
    out = tmp_path / "out"
    code, io = run(["run", "--config", conf, "--out", out], capsys)
    assert code == EXIT_USAGE
    assert "wobble" in io.err
    assert not out.exists()


def test_missing_experiment(tmp_path, capsys):
    code, io = run(["run", "--out", tmp_path], capsys)
    assert code == EXIT_USAGE


def test_bad_flag_is_usage_error(capsys):
    with pytest.raises(SystemExit) as info:
        main(["run", "--steps", "many"])
    assert info.value.code == EXIT_USAGE


def test_closure_cap_hit(tmp_path, capsys):
    dsl = tmp_path / "cap.dsl"
    dsl.write_text(CAP_DSL)
    code, io = run(["check-algebra", "--dsl", dsl, "--dim-cap", 10, "--out", tmp_path / "o"], capsys)
    assert code == EXIT_OK
    assert "cap_hit=true" in io.out
    assert (tmp_path / "o" / "closure.csv").exists()


def test_bad_dsl_reports_location(tmp_path, capsys):
    dsl = tmp_path / "bad.dsl"
    dsl.write_text("field Bad dim 1: 1=x1^;")
    code, io = run(["check-algebra", "--dsl", dsl, "--out", tmp_path], capsys)
    assert code == EXIT_USAGE
    assert "line 1, column 23" in io.err


def test_failing_criterion_exit_code(tmp_path, capsys):
    code, io = run(["superpose", "--rule", "linear", "--out", tmp_path], capsys)
    assert code == EXIT_FAIL
    assert "FAIL" in io.out
    assert (tmp_path / "superpose.csv").read_text().startswith("z_index,seed,max_dev,pass\n")


def test_gbm_run_writes_csv(tmp_path, capsys):
    code, io = run(["run", "gbm_closed_form", "--paths", 8, "--out", tmp_path], capsys)
    assert code == EXIT_OK
    assert io.out.splitlines()[0] == "# gbm_closed_form seed=1"
    assert all(line.startswith(("#", "PASS")) for line in io.out.splitlines())
    assert (tmp_path / "gbm.csv").exists()


def test_unwritable_output(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("")
    code, io = run(["paths", "--out", blocker / "sub"], capsys)
    assert code == EXIT_USAGE
    assert "cannot write" in io.err


def test_paths_and_group_outputs(tmp_path, capsys):
    assert run(["paths", "--dims", 2, "--time", "--steps", 4, "--paths", 2, "--out", tmp_path], capsys)[0] == EXIT_OK
    assert (tmp_path / "path_1.csv").read_text().splitlines()[0] == "t,x0,x1,x2"
    assert run(["group", "--group", "so3", "--steps", 8, "--out", tmp_path], capsys)[0] == EXIT_OK
    assert (tmp_path / "group_0.csv").read_text().startswith("t,m00,")
    assert run(["wei-norman", "--group", "heisenberg", "--steps", 8, "--out", tmp_path], capsys)[0] == EXIT_OK
    assert (tmp_path / "wei_norman_0.csv").read_text().startswith("t,d0,d1,d2,valid")


def test_simulate(tmp_path, capsys):
    dsl = tmp_path / "gbm.dsl"
    dsl.write_text("field Y dim 1: 1=x1;\ncoeff Y noise 2: 1=0.08; 2=0.2;\n")
    code, _ = run(["simulate", "--dsl", dsl, "--z0", "1", "--time", "--steps", 16, "--out", tmp_path], capsys)
    assert code == EXIT_OK
    lines = (tmp_path / "trajectory_0.csv").read_text().splitlines()
    assert lines[0] == "t,g0,exit" and lines[1] == "0,1,0" and len(lines) == 18
    code, io = run(["simulate", "--dsl", dsl, "--z0", "1,2", "--out", tmp_path], capsys)
    assert code == EXIT_USAGE


def test_taylor_with_dsl(tmp_path, capsys):
    dsl = tmp_path / "heis.dsl"
    dsl.write_text("field Y0 dim 2: 1=0;\nfield Y1 dim 2: 1=1;\nfield Y2 dim 2: 2=x1;\n")
    code, io = run(["taylor", "--dsl", dsl, "--z0", "0.1,0.2", "--order", 2, "--paths", 4, "--out", tmp_path],
                   capsys)
    assert code == EXIT_OK
    assert "integrator floor" in io.out
    assert (tmp_path / "taylor.csv").read_text().startswith("t,N,mean_err,slope\n")


def test_console_script_entry(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "stochlie.cli", "run", "iterated_integrals", "--out", str(tmp_path)],
                          capture_output=True, text=True, timeout=120)
    assert proc.returncode == EXIT_OK, proc.stderr
    assert "PASS" in proc.stdout
