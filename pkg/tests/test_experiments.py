import subprocess
import sys
from dataclasses import replace

import pytest

from adaband.cli import main
from adaband.config import ConfigError, ExperimentConfig, parse_config
from adaband.drivers import (
    CSV_HEADER,
    ResultRow,
    format_csv,
    read_csv,
    resolve_threads,
    run,
)

CHI = """[experiment]
name = chi_square
seed = 3

[params]
cases = 4:3:0.2, 2:1:1.0
draws = 2000
"""

COVERAGE = """[experiment]
name = coverage
band = two_class
n_list = 2^13
reps = 20
alpha = 0.1
seed = 9

[class]
r = 0.5
s = 1.0
B = 1.0

[constants]
L = 2.0
L_prime = 0.75
kappa = 0.5
C_L = 1.4
k = 1.9

[model.uniform]
kind = uniform

[model.cap]
kind = cap
s = 1.0
j = 3

[model.sep]
kind = separated
"""


def test_parse_defaults_and_powers():
    cfg = parse_config(COVERAGE)
    assert cfg.n_list == (8192,)
    assert cfg.constants["kappa"] == 0.5
    assert [m["name"] for m in cfg.models] == ["uniform", "cap", "sep"]


def test_alpha_zero_rejected():
    with pytest.raises(ConfigError, match="alpha"):
        parse_config(COVERAGE.replace("alpha = 0.1", "alpha = 0"))


def test_unknown_key_reports_line():
    text = COVERAGE.replace("seed = 9", "seed = 9\ncolour = blue")
    with pytest.raises(ConfigError, match=r"<config>:8: \[experiment\] colour: unknown key"):
        parse_config(text)


def test_bad_value_reports_line():
    with pytest.raises(ConfigError, match=r":5: \[experiment\] reps"):
        parse_config(COVERAGE.replace("reps = 20", "reps = many"))


def test_unknown_section_and_params():
    with pytest.raises(ConfigError, match="unknown section"):
        parse_config(COVERAGE + "\n[extra]\nx = 1\n")
    with pytest.raises(ConfigError, match="unknown key for experiment"):
        parse_config(COVERAGE + "\n[params]\nlevels = 2\n")


def test_config_invariants():
    with pytest.raises(ConfigError):
        ExperimentConfig("coverage", reps=0)
    with pytest.raises(ConfigError):
        ExperimentConfig("coverage", n_list=(1,))
    with pytest.raises(ConfigError):
        ExperimentConfig("nonsense")


def test_partial_constants_rejected():
    cfg = parse_config(COVERAGE.replace("kappa = 0.5\n", ""))
    with pytest.raises(ConfigError, match="give all of"):
        run(cfg)


def test_csv_format_and_round_trip():
    rows = [ResultRow("x", 8, "m", "v", 1 / 3, 0.0, 5, 2)]
    text = format_csv(rows)
    assert text.splitlines()[0] == ",".join(CSV_HEADER)
    assert "\r" not in text and text.endswith("\n")
    assert text.splitlines()[1] == "x,8,m,v,0.3333333333,0,5,2"
    assert read_csv(text)[0].value == pytest.approx(1 / 3, rel=1e-9)


def test_rows_reject_non_finite():
    with pytest.raises(FloatingPointError):
        ResultRow("x", 1, "m", "v", float("nan"), 0.0, 1, 0)
    with pytest.raises(FloatingPointError):
        ResultRow("x", 1, "m", "v", 1.0, -1.0, 1, 0)


def test_chi_square_rows_match_closed_form():
    rows = run(parse_config(CHI))
    closed = {r.model: r.value for r in rows if r.metric == "closed_form"}
    assert closed == {"M4_gamma0.2": pytest.approx(0.031216, rel=1e-12), "M2_gamma1": 0.5}


def test_coverage_rows(tmp_path):
    rows = run(parse_config(COVERAGE))
    metrics = {(r.model, r.metric): r for r in rows}
    assert metrics[("uniform", "width_exact")].value == 1.0
    assert metrics[("sep", "correct_selection")].reps == 20
    assert rows == sorted(rows, key=ResultRow.key)


def test_threads_resolution(monkeypatch):
    monkeypatch.delenv("ADABAND_THREADS", raising=False)
    assert resolve_threads(None) == 1
    monkeypatch.setenv("ADABAND_THREADS", "3")
    assert resolve_threads(None) == 3
    assert resolve_threads(2) == 2
    assert resolve_threads(0) >= 1
    monkeypatch.setenv("ADABAND_THREADS", "lots")
    with pytest.raises(ConfigError):
        resolve_threads(None)


def test_threads_do_not_change_output():
    cfg = parse_config(COVERAGE)
    assert format_csv(run(cfg, 1)) == format_csv(run(cfg, 3))


def test_cli_exit_codes(tmp_path, capsys):
    good = tmp_path / "chi.ini"
    good.write_text(CHI)
    out = tmp_path / "out.csv"
    assert main(["chi_square", "--config", str(good), "--out", str(out)]) == 0
    first = out.read_bytes()
    assert main(["chi_square", "--config", str(good), "--out", str(out), "--seed", "3"]) == 0
    assert out.read_bytes() == first
    assert main(["chi_square", "--config", str(good), "--out", str(out), "--seed", "4"]) == 0
    assert out.read_bytes() != first

    bad = tmp_path / "bad.ini"
    bad.write_text(CHI.replace("seed = 3", "seed = 3\nfoo = 1"))
    assert main(["chi_square", "--config", str(bad)]) == 2
    assert "bad.ini:4" in capsys.readouterr().err
    assert main(["coverage", "--config", str(good)]) == 2
    assert main(["chi_square", "--config", str(tmp_path / "missing.ini")]) == 2

    guard = tmp_path / "guard.ini"
    guard.write_text(COVERAGE.replace("[model.uniform]\nkind = uniform", "[model.neg]\nkind = bump\neps = 50\nr = 0.5\nj = 3"))
    assert main(["coverage", "--config", str(guard)]) == 3


def test_cli_stdout_and_module_entry(tmp_path):
    cfg = tmp_path / "chi.ini"
    cfg.write_text(CHI)
    proc = subprocess.run([sys.executable, "-m", "adaband", "chi_square", "--config", str(cfg)],
                          capture_output=True, text=True, check=True)
    assert proc.stdout.startswith(",".join(CSV_HEADER))
