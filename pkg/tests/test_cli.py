import csv
import io
import subprocess
import sys
from pathlib import Path

import pytest

from transportkit.cli import EXIT_ERROR, EXIT_FAIL, EXIT_OK, RunConfig, UsageError, example_config, main
from transportkit.config import parse_config
from transportkit.scenarios import BUILTIN

ROOT = Path(__file__).resolve().parents[1]
DEMO = ROOT / "demos" / "configs"
FIX = Path(__file__).resolve().parent / "fixtures"


def run_cli(*args):
    return subprocess.run([sys.executable, "-m", "transportkit.cli", *map(str, args)],
                          capture_output=True, text=True, cwd=ROOT)


def test_run_reynolds_passes(capsys):
    assert main(["run", "reynolds-translate", "--workers", "1"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "PASS" in out and "scenario reynolds-translate" in out


def test_run_wave_csv(tmp_path, capsys):
    out = tmp_path / "wave.csv"
    code = main(["run", "sandwich-wave", "--t-max", "0.8", "--tol", "1e-6", "--out", str(out), "--workers", "1"])
    assert code == EXIT_OK
    rows = list(csv.reader(io.StringIO(out.read_bytes().decode())))
    assert rows[0] == ["t", "integral", "lhs", "rhs", "residual", "scale", "abs_integral", "converged"]
    assert float(rows[-1][0]) == 0.8
    masses = [float(r[1]) for r in rows[1:]]
    assert max(masses) - min(masses) <= 1e-3 * abs(masses[0])
    assert "interpretive reading" in capsys.readouterr().out


def test_run_unknown_scenario(capsys):
    assert main(["run", "no-such-scenario"]) == EXIT_ERROR
    assert "unknown scenario" in capsys.readouterr().err


def test_run_failing_fixture_exit_2(capsys):
    assert main(["run", str(FIX / "failing-residual.ini"), "--workers", "1"]) == EXIT_FAIL
    assert "FAIL" in capsys.readouterr().out


def test_run_override_out_of_range(capsys):
    assert main(["run", "sandwich-wave", "--t-max", "2.5"]) == EXIT_ERROR
    assert "below" in capsys.readouterr().err


def test_config_error_has_file_and_line(capsys):
    assert main(["integrate", str(FIX / "bad-expression.ini")]) == EXIT_ERROR
    err = capsys.readouterr().err
    assert "bad-expression.ini:6:" in err


@pytest.mark.parametrize("kw", [dict(t_steps=1), dict(tol=0.0), dict(h=-1.0), dict(format="xml")])
def test_run_config_invariants(kw):
    with pytest.raises(UsageError):
        RunConfig("reynolds-translate", **kw)


def test_integrate_examples(capsys):
    assert main(["integrate", str(DEMO / "gaussian-plane.ini")]) == EXIT_OK
    out = capsys.readouterr().out
    value = float(out.split()[1])
    assert abs(value - 3.141592653589793) <= 1e-8
    assert main(["integrate", str(DEMO / "unit-square.ini")]) == EXIT_OK
    assert float(capsys.readouterr().out.split()[1]) == pytest.approx(1.0, abs=1e-14)
    assert main(["integrate", str(DEMO / "non-integrable.ini")]) == EXIT_FAIL
    assert "divergence" in capsys.readouterr().out


def test_verify_algebra(capsys):
    assert main(["verify", "algebra", "--seed", "3"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "d_of_d" in out and "alternation" in out and "checks passed" in out


def test_verify_flow_has_semigroup(capsys):
    assert main(["verify", "flow"]) == EXIT_OK
    assert "semigroup" in capsys.readouterr().out


@pytest.mark.parametrize("name", sorted(BUILTIN))
def test_example_config_roundtrip(name, capsys):
    assert main(["example-config", name]) == EXIT_OK
    text = capsys.readouterr().out
    assert text == example_config(name)
    parse_config(text)


def test_subprocess_csv_byte_identical(tmp_path):
    paths = [tmp_path / "a.csv", tmp_path / "b.csv"]
    for p in paths:
        r = run_cli("run", "lorenz-volume", "--t-max", "0.1", "--t-steps", "2", "--seed", "7", "--workers", "1",
                    "--out", p)
        assert r.returncode == 0, r.stderr
    assert paths[0].read_bytes() == paths[1].read_bytes()
    assert b"\r\n" in paths[0].read_bytes()


def test_subprocess_error_exit():
    r = run_cli("run", "no-such-scenario")
    assert r.returncode == 1 and "Traceback" not in r.stderr
