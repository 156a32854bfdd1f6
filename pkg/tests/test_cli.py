import csv
import json
import subprocess
import sys

import pytest

from levykit.cli import main, sweep_points

DIRICHLET = """
seed = 11
[kernel]
key = "constant"
dim = 1
alpha = 1.5
[domain]
shape = "ball"
center = [0.0]
radius = 1.0
[params]
x = [[0.0], [0.5]]
n_paths = 500
f = 1.0
[euler]
dt = 0.01
t_max = 20.0
"""


def write(tmp_path, text, name="exp.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def load(path):
    return json.loads(path.read_text())


def test_dirichlet_run_and_manifest(tmp_path):
    out = tmp_path / "o"
    assert main(["dirichlet", "--config", write(tmp_path, DIRICHLET), "--out", str(out)]) == 0
    man = load(out / "manifest.json")
    assert man["exit_code"] == 0 and man["error"] is None
    assert man["seed"] == 11 and len(man["config_hash"]) == 64
    assert set(man["files"]) == {"result.json", "dirichlet.csv"}
    for k in ("python", "numpy", "scipy", "levykit"):
        assert k in man["versions"]
    recs = load(out / "result.json")
    assert len(recs) == 2 and all(r["op"] == "dirichlet" for r in recs)
    with open(out / "dirichlet.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["x0", "mean", "stderr", "n", "truncated_fraction"] and len(rows) == 3


def test_same_seed_same_numbers(tmp_path):
    cfg = write(tmp_path, DIRICHLET)
    for d in ("a", "b"):
        assert main(["dirichlet", "--config", cfg, "--out", str(tmp_path / d)]) == 0
    a, b = load(tmp_path / "a" / "result.json"), load(tmp_path / "b" / "result.json")
    assert [(r["mean"], r["stderr"]) for r in a] == [(r["mean"], r["stderr"]) for r in b]
    assert main(["dirichlet", "--config", cfg, "--seed", "12", "--out", str(tmp_path / "c")]) == 0
    c = load(tmp_path / "c" / "result.json")
    assert c[0]["mean"] != a[0]["mean"]


def test_bad_kernel_key_exits_2(tmp_path, capsys):
    out = tmp_path / "o"
    code = main(["dirichlet", "--config", write(tmp_path, DIRICHLET.replace('"constant"', '"no_such_kernel"')), "--out", str(out)])
    assert code == 2
    man = load(out / "manifest.json")
    assert "no_such_kernel" in man["error"]["message"]
    assert "no_such_kernel" in capsys.readouterr().err
    assert not (out / "result.json").exists()


def test_missing_seed_exits_2(tmp_path):
    out = tmp_path / "o"
    assert main(["dirichlet", "--config", write(tmp_path, DIRICHLET.replace("seed = 11", "")), "--out", str(out)]) == 2
    assert "seed" in load(out / "manifest.json")["error"]["message"]


def test_unparsable_config_exits_2(tmp_path):
    assert main(["validate", "--config", write(tmp_path, "[kernel\n"), "--out", str(tmp_path / "o")]) == 2


def test_sweep_rows_and_sub_seeds(tmp_path):
    text = DIRICHLET.replace("x = [[0.0], [0.5]]", "x = [[0.0]]") + '[sweep]\n"kernel.alpha" = [1.2, 1.5, 1.8]\n'
    out = tmp_path / "o"
    assert main(["dirichlet", "--config", write(tmp_path, text), "--out", str(out)]) == 0
    man = load(out / "manifest.json")
    seeds = [s["sub_seed"] for s in man["sub_seeds"]]
    assert len(seeds) == 3 and len(set(seeds)) == 3
    with open(out / "sweep.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 3
    assert [float(r["sweep.kernel.alpha"]) for r in rows] == [1.2, 1.5, 1.8]
    # mean exit time from the centre decreases with alpha
    means = [float(r["mean"]) for r in rows]
    assert means[0] > means[2]


def test_sweep_points_product():
    pts = sweep_points({"a": {"b": 1}, "sweep": {"a.b": [1, 2], "c": [3, 4, 5]}})
    assert len(pts) == 6
    assert pts[-1][1] == {"a": {"b": 2}, "c": 5}


def test_estimator_error_exit_3(tmp_path):
    text = DIRICHLET.replace("t_max = 20.0", "t_max = 0.05")
    out = tmp_path / "o"
    assert main(["dirichlet", "--config", write(tmp_path, text), "--out", str(out)]) == 3
    man = load(out / "manifest.json")
    assert man["error"]["type"] == "TruncationDominant"


GENERATOR = """
seed = 1
[kernel]
key = "constant"
dim = 1
alpha = 1.5
[params]
x = [[0.0]]
probe = { kind = "gaussian", width = 0.7071067811865476 }
"""


def test_generator_subcommand(tmp_path):
    out = tmp_path / "o"
    assert main(["generator", "--config", write(tmp_path, GENERATOR), "--out", str(out)]) == 0
    rec = load(out / "result.json")[0]
    # e^(-x^2): the fractional Laplacian of order 3/4 at 0 is 2^1.5 Gamma(5/4) / sqrt(pi)
    assert rec["value"] == pytest.approx(-1.4464090846320776, rel=1e-6)


def test_fd_solve_subcommand(tmp_path):
    text = GENERATOR.replace("x = [[0.0]]", "n = 128\nf = 1.0").replace('probe = { kind = "gaussian", width = 0.7071067811865476 }', "")
    out = tmp_path / "o"
    code = main(["fd-solve", "--config", write(tmp_path, text), "--out", str(out)])
    assert code == 0, load(out / "manifest.json")["error"]
    assert "fd_solution.csv" in load(out / "manifest.json")["files"]
    assert load(out / "result.json")[0]["op"] == "fd-solve"


def test_verify_subcommand(tmp_path):
    out = tmp_path / "v"
    assert main(["verify", "--smoke", "--criteria", "1,2,13", "--out", str(out)]) == 0
    with open(out / "verify.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["criterion"] for r in rows] == ["1", "2", "13"]
    assert all(r["status"] == "PASS" for r in rows)
    assert load(out / "manifest.json")["exit_code"] == 0


def test_console_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "levykit.cli", "validate", "--out", str(tmp_path / "o")],
                       capture_output=True, text=True)
    assert r.returncode == 2
    assert "--config" in r.stderr
