import json
import subprocess
import sys

import pytest

from hslab import cli, minimizer
from hslab.cli import Command, OutputFormat, ParseError, main, parse_config

FAST = ["--nr", "40", "--ns", "40", "--max-iters", "400"]


def run_main(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_classify_json(capsys):
    code, out, _ = run_main(capsys, "classify", "-d", "4", "-k", "2", "-p", "2", "-q", "pstar", "-a", "1",
                            "-b", "-0.5", "--gamma", "-0.5")
    assert code == 0
    data = json.loads(out)
    assert data["attainability"] == "NotAchieved" and data["q"] == 4.0 and data["regime"] == "BottomCritical"


def test_classify_csv(capsys):
    code, out, _ = run_main(capsys, "classify", "-d", "3", "-k", "1", "-p", "2", "-q", "6", "--format", "csv")
    assert code == 0
    header, row = out.splitlines()
    assert "attainability" in header.split(",") and "Achieved" in row


def test_flags_only_config():
    cfg = parse_config(["constant", "-d", "3", "-k", "1", "-p", "2", "-q", "6", "--nr", "64", "--tol", "1e-5"])
    assert cfg.command is Command.CONSTANT
    assert cfg.params.q == 6.0 and cfg.mesh.nr == 64 and cfg.mesh.ns == 64
    assert cfg.solver.tol_rel == 1e-5 and cfg.format is OutputFormat.CSV


def test_flag_overrides_file(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text('d = 4\nk = 2\np = 2\nq = 4\nmax-iters = 700\nnr = 32\n')
    cfg = parse_config(["constant", "--config", str(path), "-q", "pstar", "--nr", "48"])
    assert cfg.params.q == 4.0
    assert cfg.mesh.nr == 48 and cfg.solver.max_iters == 700
    path.write_text('d = 4\nk = 2\np = 2\nq = 3\n')
    assert parse_config(["constant", "--config", str(path), "-q", "pstar"]).params.q == 4.0


def test_missing_parameter_named():
    with pytest.raises(ParseError, match="'d'"):
        parse_config(["classify", "-k", "1", "-p", "2", "-q", "6"])


def test_gamma_below_b_parses():
    cfg = parse_config(["classify", "-d", "3", "-k", "1", "-p", "2", "-q", "4", "-a", "1", "-b", "0.5", "--gamma", "0"])
    assert cfg.params.gamma < cfg.params.b


@pytest.mark.parametrize("argv, code", [
    (["classify", "-k", "1", "-p", "2", "-q", "6"], 2),
    (["classify", "-d", "3", "-k", "1", "-p", "2", "-q", "banana"], 2),
    (["constant", "-d", "3", "-k", "1", "-p", "2", "-q", "6", "--nr", "4"], 2),
    (["constant", "-d", "3", "-k", "1", "-p", "2", "-q", "6", "--nr", "5000"], 2),
    (["constant", "-d", "3", "-k", "1", "-p", "2", "-q", "6", "--max-iters", "10"], 2),
    (["constant", "-d", "3", "-k", "1", "-p", "2", "-q", "6", "--format", "markdown"], 2),
    (["frobnicate"], 2),
    (["constant", "-d", "4", "-k", "2", "-p", "2", "-q", "3", "-b", "0.5", "--gamma", "0"] + FAST, 4),
    (["constant", "-d", "4", "-k", "2", "-p", "2", "-q", "5"] + FAST, 4),
    (["sweep-b", "-d", "4", "-k", "2", "-p", "2", "-q", "3", "--bs", "0,2.5"] + FAST, 2),
    (["family", "-d", "4", "-k", "2", "-p", "2", "-q", "3", "--kind", "TranslateAlongSigma0",
      "--values", "1"] + FAST, 2),
    (["family", "-d", "4", "-k", "2", "-p", "2", "-q", "3", "--kind", "RadialPower", "--values", "0.1",
      "--radii", "5,1"] + FAST, 2),
    (["verify-tb", "-d", "4", "-k", "2", "-p", "2", "-q", "3", "-b", "1", "--profile", "/no/such/file.csv"], 2),
])
def test_exit_code_matrix(capsys, argv, code):
    got, out, err = run_main(capsys, *argv)
    assert got == code
    assert err.strip()
    assert out == ""


def test_diverged_exit_code(capsys, monkeypatch):
    def boom(*args, **kwargs):
        raise minimizer.Diverged("line search failed")
    monkeypatch.setattr(minimizer, "minimize_quotient", boom)
    code, _, err = run_main(capsys, "constant", "-d", "3", "-k", "1", "-p", "2", "-q", "6")
    assert code == 3 and "diverged" in err


def test_sweep_b_message_names_condition(capsys, tmp_path):
    path = tmp_path / "bottom.toml"
    path.write_text('d = 4\nk = 2\np = 2\nq = 3\na = 0\nbs = [0.5, 3.0]\n')
    code, _, err = run_main(capsys, "sweep-b", "--config", str(path))
    assert code == 2 and "b < 2H_a" in err


def test_constant_writes_csv_and_trace(capsys, tmp_path):
    out, trace = tmp_path / "c.csv", tmp_path / "t.csv"
    code, stdout, _ = run_main(capsys, "constant", "-d", "4", "-k", "2", "-p", "2", "-q", "3", "-b", "0.5",
                               "--gamma", "1", "--out", str(out), "--trace", str(trace), *FAST)
    assert code == 0 and stdout == ""
    header, row = out.read_text().splitlines()
    fields = dict(zip(header.split(","), row.split(",")))
    assert float(fields["estimate"]) > 0 and fields["caveat"] == "symmetric-class constant"
    assert trace.read_text().startswith("iter,quotient\n")


def test_determinism_byte_identical(tmp_path, capsys):
    outputs = []
    for n in range(2):
        target = tmp_path / f"run{n}.csv"
        code, _, _ = run_main(capsys, "sweep-gamma", "-d", "2", "-k", "1", "-p", "2", "-q", "4", "-a", "1",
                              "--gammas", "0,1", "--init", "Random", "--seed", "5", "--out", str(target), *FAST)
        assert code == 0
        outputs.append((target.read_bytes(), (tmp_path / f"run{n}.csv.json").read_bytes()))
    assert outputs[0] == outputs[1]


def test_radial_and_family_and_verify(capsys):
    code, out, _ = run_main(capsys, "radial", "-d", "3", "-k", "1", "-p", "2", "-q", "6", "--format", "json")
    data = json.loads(out)
    assert code == 0 and data["estimate"] == pytest.approx(data["closed_form"], rel=1e-3)
    code, out, _ = run_main(capsys, "family", "-d", "4", "-k", "2", "-p", "2", "-q", "3", "--gamma", "0.5",
                            "--kind", "TranslateAlongSigma0", "--values", "40,80", "--rmax", "4", "--nr", "32")
    assert code == 0 and out.splitlines()[0] == "kind,h,quotient,quad_error" and len(out.splitlines()) == 3
    code, out, _ = run_main(capsys, "verify-tb", "-d", "4", "-k", "2", "-p", "2", "-q", "3", "-b", "1",
                            "--format", "json", "--nr", "64")
    assert code == 0 and json.loads(out)["residual"] < 5e-2


def test_table_markdown_and_csv(capsys):
    rows = "4,2,2,3,0.5,0.25,1;4,2,2,4,0.5,0.25,1;4,2,2,3,0.5,0.25,0.25"
    code, out, _ = run_main(capsys, "table", "--rows", rows)
    assert code == 0 and out.startswith("| d | k |") and len(out.splitlines()) == 5
    code, out, _ = run_main(capsys, "table", "--rows", rows, "--format", "csv")
    assert code == 0 and len(out.splitlines()) == 4
    code, out, _ = run_main(capsys, "table")
    assert code == 0 and len(out.splitlines()) == 2


def test_console_script_entry_point():
    proc = subprocess.run([sys.executable, "-m", "hslab.cli", "classify", "-d", "3", "-k", "1", "-p", "2", "-q", "6"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["attainability"] == "Achieved"


def test_run_returns_zero_for_table():
    cfg = parse_config(["table", "--rows", "3,1,2,6,0,0,0", "--format", "csv"])
    assert cli.run(cfg) == 0
