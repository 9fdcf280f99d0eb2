import json
import subprocess
import sys

import pytest

from colorlq import __version__
from colorlq.cli import main

COLORED = """\
N: 3
sigma2: 1.0
A0: [[1.1]]
A1: [[0.3]]
B0: [[1.0]]
B1: [[0.2]]
B2: [[0.6]]
Q: [[1.0]]
R: [[1.0]]
P_terminal: [[1.0]]
noise: {kind: rademacher, sigma: 1.0}
init: {x0: [1.0], w_prev: 1.0}
"""

WHITE = COLORED.replace("B2: [[0.6]]", "B2: [[0.0]]").replace("N: 3", "N: 2")


@pytest.fixture
def cfg(tmp_path):
    def write(text, name="inst.yaml"):
        p = tmp_path / name
        p.write_text(text)
        return str(p)
    return write


def run(args, capsys):
    code = main(args)
    out, err = capsys.readouterr()
    return code, out, err


def test_white_mode_on_colored_model(cfg, tmp_path, capsys):
    code, _, err = run(["solve", "--config", cfg(COLORED), "--out", str(tmp_path / "o"),
                        "--mode", "white"], capsys)
    assert code == 2
    assert json.loads(err)["error"] == "RequiresB2Zero"


def test_solve_writes_schedule_and_manifest(cfg, tmp_path, capsys):
    out = tmp_path / "o"
    code, stdout, _ = run(["solve", "--config", cfg(WHITE), "--out", str(out)], capsys)
    assert code == 0
    assert json.loads(stdout)["mode"] == "white"
    sched = json.loads((out / "schedule.json").read_text())
    assert sched["kind"] == "white"
    man = json.loads((out / "manifest.json").read_text())
    assert man["version"] == __version__
    assert man["command"] == "solve"
    assert all((out / f).exists() for f in man["outputs"])
    assert man["config"]["N"] == 2


def test_simulate_is_byte_reproducible(cfg, tmp_path, capsys):
    c = cfg(COLORED)
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        code, _, _ = run(["simulate", "--config", c, "--out", str(out), "--samples", "2000",
                          "--seed", "7", "--exact"], capsys)
        assert code == 0
        outs.append(out)
    for f in ("estimate.csv", "trajectory.csv", "exact.csv"):
        assert (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes()
    header = (outs[0] / "estimate.csv").read_text().split("\n")[0]
    assert header == "mean,stderr,n_samples,seed"


def test_compare_measurable_gap(cfg, tmp_path, capsys):
    out = tmp_path / "o"
    code, _, _ = run(["compare", "--config", cfg(COLORED), "--out", str(out)], capsys)
    assert code == 0
    rep = json.loads((out / "report.json").read_text())
    gaps = {r["method"]: r["gap"] for r in rep["methods"]}
    assert abs(gaps["measurable"]) <= 1e-8
    assert gaps["literal"] >= -1e-9
    assert (out / "compare.csv").read_text().startswith("instance_id,method,cost,gap")


@pytest.mark.parametrize("delay,condition", [(0, "Upsilon_k > 0"), (1, "R_k > 0")])
def test_negative_R_exits_one(cfg, tmp_path, capsys, delay, condition):
    text = WHITE.replace("R: [[1.0]]", "R: [[-1.0]]") + f"delay: {delay}\n"
    mode = "delayed" if delay else "literal"
    code, _, err = run(["solve", "--config", cfg(text), "--out", str(tmp_path / "o"),
                        "--mode", mode], capsys)
    assert code == 1
    doc = json.loads(err)
    assert doc["error"] == "NotSolvable"
    assert doc["condition"] == condition
    assert isinstance(doc["k"], int)


def test_set_override_and_config_untouched(cfg, tmp_path, capsys):
    c = cfg(WHITE)
    out = tmp_path / "o"
    code, _, _ = run(["solve", "--config", c, "--out", str(out), "--set", "N=5",
                      "--set", "init.x0=[2.0]"], capsys)
    assert code == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["config"]["N"] == 5 and man["config"]["init"]["x0"] == [2.0]
    assert open(c).read() == WHITE


def test_oracle_outputs(cfg, tmp_path, capsys):
    c = cfg(COLORED)
    code, stdout, _ = run(["oracle", "--config", c, "--out", str(tmp_path / "q")], capsys)
    assert code == 0
    qp_cost = json.loads(stdout)["cost"]
    rows = (tmp_path / "q" / "policy_tree.csv").read_text().strip().split("\n")
    assert rows[0] == "history,k,u0"
    assert len(rows) == 1 + 1 + 2 + 4 + 8
    code, stdout, _ = run(["oracle", "--config", c, "--out", str(tmp_path / "d"),
                           "--method", "dp"], capsys)
    assert code == 0
    assert json.loads(stdout)["value"] == pytest.approx(qp_cost, abs=1e-9)


def test_verify(cfg, tmp_path, capsys):
    out = tmp_path / "v"
    code, _, _ = run(["verify", "--config", cfg(COLORED), "--out", str(out)], capsys)
    assert code == 0
    assert json.loads((out / "verify.json").read_text())["passed"] is True


@pytest.mark.parametrize("text,err", [
    ("N: 2\nA0: [[1.0]]\nB0: [[1.0]]\nQ: [[1.0]]\nR: [[1.0]]\nbogus: 1\n", "UnknownKey"),
    ("N: 2\nA0: [[1.0, 0.0]]\nB0: [[1.0]]\nQ: [[1.0]]\nR: [[1.0]]\n", "DimensionMismatch"),
    ("N: [\n", "ParseError"),
])
def test_config_errors_exit_two(cfg, tmp_path, capsys, text, err):
    code, _, stderr = run(["solve", "--config", cfg(text), "--out", str(tmp_path / "o")], capsys)
    assert code == 2
    assert json.loads(stderr)["error"] == err


def test_missing_config_file(tmp_path, capsys):
    code, _, _ = run(["solve", "--config", str(tmp_path / "nope.yaml"), "--out",
                      str(tmp_path / "o")], capsys)
    assert code == 2


def test_module_entry_point(cfg, tmp_path):
    proc = subprocess.run([sys.executable, "-m", "colorlq", "solve", "--config", cfg(WHITE),
                           "--out", str(tmp_path / "o")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert "optimal_value" in proc.stdout
