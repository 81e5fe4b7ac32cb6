import json

import numpy as np
import pytest

from momentcal.cli import main
from momentcal.core import PredictorBundle, Sample
from momentcal.io import (DataFormatError, distribution_from_json, distribution_to_json, read_dataset_csv,
                          write_dataset_csv)
from momentcal.synthetic import beta_grid, two_point


def test_dataset_round_trip(tmp_path):
    s = Sample.from_arrays([[0.1, 0.2], [0.3, 0.4]], [0.0, 0.75], ids=["a", "b"])
    path = tmp_path / "d.csv"
    write_dataset_csv(path, s, {"version": "x", "command": "t", "config_hash": "h", "config": {"k": 1}})
    back = read_dataset_csv(path)
    assert np.array_equal(back.features, s.features) and np.array_equal(back.y, s.y)
    assert list(back.ids) == ["a", "b"]


@pytest.mark.parametrize("body, match", [
    ("id,x,y\na,0.1\n", ":2: expected 3"),
    ("id,x,y\na,zz,0.5\n", ":2:"),
    ("id,x,y\na,0.1,1.5\n", "outside"),
    ("id,x,y\na,inf,0.5\n", "non-finite"),
    ("", "no header"),
])
def test_dataset_errors_name_the_line(tmp_path, body, match):
    path = tmp_path / "bad.csv"
    path.write_text(body)
    with pytest.raises(DataFormatError, match=match):
        read_dataset_csv(path)


def test_distribution_round_trip():
    dist = beta_grid()
    back = distribution_from_json(json.loads(json.dumps(distribution_to_json(dist))))
    assert np.array_equal(back.X, dist.X) and np.array_equal(back.mass, dist.mass)
    assert np.allclose(back.conditional_mean(), dist.conditional_mean(), rtol=0, atol=1e-15)
    with pytest.raises(DataFormatError):
        distribution_from_json({"points": []})


def _synth(tmp_path, name="two_point", extra=()):
    out = tmp_path / f"{name}.json"
    assert main(["synth", "--name", name, "--out", str(out), *extra]) == 0
    return out


def test_train_and_audit_two_point(tmp_path, capsys):
    dist = _synth(tmp_path)
    run = tmp_path / "run"
    assert main(["train", "--dist", str(dist), "--alpha", "0.05", "--beta", "0.05", "--m", "20", "--k", "4",
                 "--out", str(run)]) == 0
    bundle = PredictorBundle.load(run / "bundle.json")
    assert bundle.predict([[0.0]])[0][0] == pytest.approx(0.5)
    assert main(["audit", "--bundle", str(run / "bundle.json"), "--dist", str(dist), "--alpha", "0.05",
                 "--beta", "0.05", "--out", str(tmp_path / "audit")]) == 0
    report = json.loads((tmp_path / "audit" / "report.json").read_text())
    assert report["summary"]["violations"] == 0
    assert (tmp_path / "audit" / "report.csv").read_text().startswith("# momentcal")


def test_rerun_is_byte_identical(tmp_path):
    args = ["train", "--synth", "bernoulli", "--mode", "sample", "--alpha", "0.1", "--beta", "0.1",
            "--delta", "0.001", "--n", "20000", "--k", "2", "--seed", "4"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    for name in ("bundle.json", "report.json", "trace.jsonl"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_config_file_fills_defaults(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"alpha": 0.1, "beta": 0.1, "k": 2, "synth": "two_point"}))
    assert main(["train", "--config", str(cfg), "--out", str(tmp_path / "r")]) == 0
    assert json.loads((tmp_path / "r" / "bundle.json").read_text())["header"]["config"]["alpha"] == 0.1


def test_exit_codes(tmp_path, capsys):
    # alpha too small for n: precondition names the inequality
    code = main(["train", "--synth", "bernoulli", "--mode", "sample", "--alpha", "0.01", "--beta", "0.1",
                 "--delta", "0.05", "--n", "100", "--out", str(tmp_path / "x")])
    assert code == 2 and "sqrt(ln(2/delta)" in capsys.readouterr().err
    assert main(["calc-n", "--alpha-target", "0.2", "--beta-target", "0.2", "--delta-target", "0.05",
                 "--eps", "0.3", "--groups-count", "8", "--k", "4", "--m", "10"]) == 2
    assert main(["audit", "--bundle", str(tmp_path / "missing.json"), "--synth", "two_point", "--alpha", "0.1",
                 "--beta", "0.1", "--out", str(tmp_path / "y")]) == 4
    # a pool too small for even one block
    _synth(tmp_path, "bernoulli", ["--sample-out", str(tmp_path / "s.csv"), "--sample-size", "500"])
    code = main(["train", "--data", str(tmp_path / "s.csv"), "--mode", "sample", "--alpha", "0.3", "--beta", "0.3",
                 "--delta", "0.05", "--n", "1000", "--out", str(tmp_path / "z")])
    assert code == 4 and "short by 500" in capsys.readouterr().err


def test_calc_n_output(tmp_path, capsys):
    out = tmp_path / "plan.json"
    assert main(["calc-n", "--alpha-target", "0.2", "--beta-target", "0.2", "--delta-target", "0.05",
                 "--eps", "0.05", "--groups-count", "8", "--k", "4", "--m", "10", "--out", str(out)]) == 0
    assert json.loads(out.read_text())["n"] == 2557573055
    assert "2557573055" in capsys.readouterr().out


def test_intervals_and_cover(tmp_path):
    dist = _synth(tmp_path, "beta")
    run = tmp_path / "run"
    assert main(["train", "--dist", str(dist), "--alpha", "0.1", "--beta", "0.1", "--k", "4",
                 "--out", str(run)]) == 0
    common = ["--bundle", str(run / "bundle.json"), "--dist", str(dist), "--gamma", "0.1", "--delta-cov", "0.1"]
    assert main(["intervals", *common, "--k", "2", "--out", str(tmp_path / "iv")]) == 0
    lines = [ln for ln in (tmp_path / "iv" / "intervals.csv").read_text().splitlines() if not ln.startswith("#")]
    assert lines[0].startswith("id,mean") and len(lines) == 1 + len(beta_grid())
    assert main(["cover", *common, "--degrees", "2,4", "--brute-force", "--out", str(tmp_path / "cv")]) == 0
    res = json.loads((tmp_path / "cv" / "cover.json").read_text())
    assert res["greedy"]["objective"] >= res["optimum"]["objective"] - 1e-12


def test_synth_two_point_file(tmp_path):
    out = _synth(tmp_path)
    obj = json.loads(out.read_text())
    assert distribution_from_json(obj).conditional_mean().tolist() == two_point().conditional_mean().tolist()
