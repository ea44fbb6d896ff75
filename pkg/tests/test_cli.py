import json
import subprocess
import sys

import pytest

from obstacle_walk import cli, scaling
from obstacle_walk.config import THREADS_ENV, parse_config, parse_config_text
from obstacle_walk.errors import ConfigError

TAILS = """\
# small tail run
experiment = tails
law = uniform3
obstacle.family = quadratic
obstacle.param = 0.5
obstacle.n = 512
lambda.min = 1.0
lambda.max = 2.5
lambda.count = 5
output_dir = {out}
"""

VARIANCE = """\
experiment = variance
obstacle.family = cosine
n_grid = 512, 1024, 2048, 4096
output_dir = {out}
"""


def test_empty_config_is_rejected():
    with pytest.raises(ConfigError) as exc:
        parse_config_text("")
    assert exc.value.key == "experiment"


def test_happy_path_config():
    cfg = parse_config_text(TAILS.format(out="o"))
    assert cfg.experiment == "tails" and cfg.n == 512 and cfg.lambda_count == 5
    assert cfg.k_cap == 12 and cfg.threads == 1 and cfg.k is None


def test_bad_values_report_line_and_key():
    with pytest.raises(ConfigError) as exc:
        parse_config_text("experiment = tails\nkernel.k_cap = -1\n")
    assert exc.value.line == 2 and exc.value.key == "kernel.k_cap"
    with pytest.raises(ConfigError, match="line 3.*unknown key"):
        parse_config_text("experiment = tails\n\nbogus = 1\n")
    with pytest.raises(ConfigError, match="duplicate"):
        parse_config_text("experiment = tails\nexperiment = variance\n")
    with pytest.raises(ConfigError, match="lambda.max"):
        parse_config_text("experiment = tails\nlambda.min = 3\nlambda.max = 2\n")
    with pytest.raises(ConfigError, match="expected"):
        parse_config_text("experiment tails\n")


def test_thread_override(tmp_path, monkeypatch):
    path = tmp_path / "run.cfg"
    path.write_text("experiment = variance\nthreads = 2\n")
    assert parse_config(path).threads == 2
    monkeypatch.setenv(THREADS_ENV, "5")
    assert parse_config(path).threads == 5
    monkeypatch.setenv(THREADS_ENV, "zero")
    with pytest.raises(ConfigError):
        parse_config(path)


def test_missing_file_is_an_error(tmp_path, capsys):
    assert cli.main(["run", str(tmp_path / "nope.cfg")]) == cli.EXIT_ERROR
    assert "not found" in capsys.readouterr().err


def test_check_subcommand_passes(capsys):
    assert cli.main(["check"]) == cli.EXIT_PASS
    out = capsys.readouterr().out
    assert "FAIL" not in out and out.count("PASS") == 21


def test_unknown_subcommand_prints_usage():
    proc = subprocess.run([sys.executable, "-m", "obstacle_walk.cli", "frobnicate"], capture_output=True, text=True)
    assert proc.returncode == 1
    assert "usage:" in proc.stderr


def test_list_subcommand(capsys):
    assert cli.main(["list"]) == 0
    out = capsys.readouterr().out
    assert "ld_correction" in out and "uniform3" in out and "cosine" in out


def test_run_writes_outputs_and_is_reproducible(tmp_path, capsys):
    out = tmp_path / "tails"
    cfg = tmp_path / "tails.cfg"
    cfg.write_text(TAILS.format(out=out))
    code = cli.main(["run", str(cfg)])
    assert code in (cli.EXIT_PASS, cli.EXIT_FAIL)
    first = (out / "rows.csv").read_bytes()
    lines = first.decode().splitlines()
    assert lines[0] == ",".join(scaling.CSV_COLUMNS)
    assert len(lines) == 6 and all(line.startswith("tails,512,256,") for line in lines[1:])
    report = json.loads((out / "report.json").read_text())
    assert report["verdict"] in ("pass", "fail")
    assert (code == cli.EXIT_PASS) == (report["verdict"] == "pass")
    dat = (out / "tail_slope.dat").read_text().splitlines()
    assert dat[0].startswith("# tail_slope") and len(dat) == 6 and len(dat[1].split()) == 3
    assert "tail_slope.dat" in (out / "plot.gp").read_text()
    assert "tail_slope" in capsys.readouterr().out

    assert cli.main(["run", str(cfg)]) == code
    assert (out / "rows.csv").read_bytes() == first


def test_passing_run_exits_zero(tmp_path, capsys):
    out = tmp_path / "var"
    cfg = tmp_path / "var.cfg"
    cfg.write_text(VARIANCE.format(out=out))
    assert cli.main(["run", str(cfg)]) == cli.EXIT_PASS
    assert "verdict: pass" in capsys.readouterr().out


def test_invalid_config_exits_one(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("experiment = tails\nkernel.k_cap = -1\n")
    assert cli.main(["run", str(cfg)]) == cli.EXIT_ERROR
    assert "line 2" in capsys.readouterr().err
