import json
import math

import numpy as np
import pytest

from irreghist.cli import main
from irreghist.model import HistogramEstimate


@pytest.fixture
def write(tmp_path):
    def _write(name, values):
        p = tmp_path / name
        p.write_text("\n".join(repr(float(v)) for v in values) + "\n")
        return str(p)

    return _write


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_fit_outputs_valid_histogram(write, capsys):
    path = write("g.txt", np.random.default_rng(0).gamma(3, 1 / 3, size=800))
    code, out, _ = run(capsys, "fit", path)
    assert code == 0
    obj = json.loads(out)
    assert {"breaks", "probs", "density", "k", "score"} <= set(obj)
    total = math.fsum(np.asarray(obj["density"]) * np.diff(obj["breaks"]))
    assert abs(total - 1.0) < 1e-9
    est = HistogramEstimate.from_dict(obj)
    assert est.k == obj["k"]
    # explicit default concentration changes nothing
    assert run(capsys, "fit", path, "--a", "5")[1] == out


def test_fit_large_uniform_regular_grid(write, capsys):
    path = write("u.txt", np.random.default_rng(1).uniform(size=1_000_000))
    code, out, _ = run(capsys, "fit", path, "--grid", "regular")
    assert code == 0 and json.loads(out)["k"] <= 10


def test_fit_reports_value_at_one(write, capsys):
    path = write("p.txt", np.random.default_rng(2).uniform(size=500))
    obj = json.loads(run(capsys, "fit", path, "--support", "0,1")[1])
    assert "f_at_1" in obj and obj["support"] == [0.0, 1.0]
    obj = json.loads(run(capsys, "fit", path, "--grid", "orderstat", "--exact", "--k-prior", "power:1")[1])
    assert "f_at_1" not in obj


def test_fit_errors(write, tmp_path, capsys):
    bad = tmp_path / "bad.txt"
    bad.write_text("1\n2\nthree\n")
    assert run(capsys, "fit", str(bad))[0] == 3
    assert run(capsys, "fit", str(tmp_path / "missing.txt"))[0] == 3
    assert run(capsys, "fit", write("c.txt", [4, 4, 4]))[0] == 3
    with pytest.raises(SystemExit) as err:
        main(["fit", str(bad), "--support", "1,0"])
    assert err.value.code == 2


def test_pi0_command(write, capsys):
    path = write("p.txt", np.random.default_rng(3).uniform(size=5000))
    code, out, _ = run(capsys, "pi0", path)
    assert code == 0
    assert 0.9 <= json.loads(out)["pi0_hat"] <= 1.0
    assert run(capsys, "pi0", path)[1] == out
    assert run(capsys, "pi0", write("q.txt", [0.2, 1.3]))[0] == 3


def test_simulate_command(tmp_path, capsys):
    cfg = {"densities": ["beta_3_3"], "n": [100], "methods": ["rih"], "losses": ["hellinger", "pid"], "B": 5,
           "seed": 3}
    p = tmp_path / "c.json"
    p.write_text(json.dumps(cfg))
    out_csv = tmp_path / "r.csv"
    assert main(["simulate", str(p), "-o", str(out_csv), "--summary", str(tmp_path / "s.json")]) == 0
    first = out_csv.read_text()
    rows = first.strip().splitlines()
    assert rows[0] == "density,n,method,loss,risk,B,seed,stderr" and len(rows) == 3
    assert all(r.split(",")[5] == "5" for r in rows[1:])
    assert main(["simulate", str(p), "-o", str(out_csv), "--workers", "2"]) == 0
    assert out_csv.read_text() == first

    p.write_text(json.dumps({**cfg, "methods": []}))
    code, _, err = run(capsys, "simulate", str(p))
    assert code == 3 and "methods" in err


def test_sensitivity_and_pi0_experiment_commands(tmp_path, capsys):
    plot = tmp_path / "plot.json"
    code, out, _ = run(capsys, "sensitivity", "concentration", "--densities", "beta_3_3", "--n", "100", "--B", "3",
                       "--plot", str(plot))
    assert code == 0 and out.startswith("density,n,setting")
    series = json.loads(plot.read_text())["series"]
    assert {"label", "x", "y"} <= set(series[0])
    code, out, _ = run(capsys, "pi0-experiment", "--pi0", "0.8", "--beta", "4", "--n", "200", "--B", "3")
    assert code == 0 and len(out.strip().splitlines()) == 2
    assert run(capsys, "pi0-experiment", "--pi0", "1.5", "--B", "1")[0] == 3
