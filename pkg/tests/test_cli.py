import csv
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from ccinls import cli
from ccinls.anchors import AnchorSet
from ccinls.predictor import RepairExhausted

THREE = AnchorSet(np.array([[0.0], [1.0], [2.0]]), np.array([0.0, 0.1, 2.0]))


def rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def outputs(d):
    return {p: (d / p).read_bytes() for p in sorted(os.listdir(d)) if p != "manifest.json"}


@pytest.fixture
def three_csv(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("x,y\n1,1\n2,3\n3,2\n")
    return p


@pytest.fixture
def three_anchors(tmp_path):
    p = tmp_path / "anchors.json"
    p.write_text(THREE.to_json())
    return p


def test_fit(tmp_path, three_csv):
    out = tmp_path / "fit"
    assert cli.main(["fit", "--data", str(three_csv), "--response", "y",
                     "--strategy", "vertices", "--out", str(out)]) == 0
    assert sorted(os.listdir(out)) == ["anchors.csv", "anchors.json", "fit.json", "manifest.json"]
    assert [(r["x1"], r["alpha"]) for r in rows(out / "anchors.csv")] == [("1.0", "1.0"), ("2.0", "2.5")]
    fit = json.loads((out / "fit.json").read_text())
    assert fit["sse"] == pytest.approx(0.5)
    man = json.loads((out / "manifest.json").read_text())
    assert man["subcommand"] == "fit" and str(three_csv.resolve()) in man["inputs"]


def test_fit_both_variants_feed_predict(tmp_path, three_csv):
    out = tmp_path / "fit"
    assert cli.main(["fit", "--data", str(three_csv), "--response", "y", "--strategy", "both",
                     "--out", str(out)]) == 0
    assert {r["strategy"] for r in rows(out / "anchors.csv")} == {"vertices", "centroids"}
    q = tmp_path / "q.csv"
    q.write_text("x\n2.5\n")
    assert cli.main(["predict", "--anchors", str(out / "anchors.json"), "--points", str(q),
                     "--variant", "centroids", "--out", str(tmp_path / "p")]) == 0
    assert float(rows(tmp_path / "p" / "predictions.csv")[0]["theta"]) == pytest.approx(2.5)


def test_fit_is_idempotent(tmp_path, three_csv):
    for name in ("a", "b"):
        cli.main(["fit", "--data", str(three_csv), "--response", "y", "--out", str(tmp_path / name)])
    assert outputs(tmp_path / "a") == outputs(tmp_path / "b")


def test_usage_and_input_errors(tmp_path, three_csv, capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["fit", "--data", str(three_csv)])
    assert exc.value.code == 2
    assert cli.main(["fit", "--data", str(tmp_path / "none.csv"), "--response", "y",
                     "--out", str(tmp_path / "o")]) == 2
    assert cli.main(["fit", "--data", str(three_csv), "--response", "z",
                     "--out", str(tmp_path / "o")]) == 2


def test_predict_columns_and_examples(tmp_path, three_anchors):
    q = tmp_path / "q.csv"
    q.write_text("x\n1.5\n1.0\n-1.0\n")
    out = tmp_path / "p"
    assert cli.main(["predict", "--anchors", str(three_anchors), "--points", str(q),
                     "--out", str(out)]) == 0
    got = rows(out / "predictions.csv")
    assert list(got[0]) == ["x1", "theta", "grad1", "elas1", "extrapolated"]
    assert float(got[0]["theta"]) == pytest.approx(1.05)
    assert float(got[0]["grad1"]) == pytest.approx(1.9)
    assert float(got[0]["elas1"]) == pytest.approx(1.9 * 1.5 / 1.05)
    assert float(got[1]["theta"]) == pytest.approx(0.1)
    assert got[2]["extrapolated"] == "true" and float(got[2]["theta"]) == 0.0


def test_predict_error_policy(tmp_path, three_anchors):
    q = tmp_path / "q.csv"
    q.write_text("x\n1.5\n-1.0\n")
    base = ["predict", "--anchors", str(three_anchors), "--points", str(q), "--policy", "error"]
    assert cli.main(base + ["--out", str(tmp_path / "a")]) == 3
    assert cli.main(base + ["--on-error", "record", "--out", str(tmp_path / "r")]) == 0
    got = rows(tmp_path / "r" / "predictions.csv")
    assert got[0]["error"] == "" and "InfeasiblePoint" in got[1]["error"]


def test_repair_exhausted_exit_code(tmp_path, three_anchors, monkeypatch):
    def boom(*a, **k):
        raise RepairExhausted("no luck")
    monkeypatch.setattr(cli, "predict_points", boom)
    q = tmp_path / "q.csv"
    q.write_text("x\n1.5\n")
    assert cli.main(["predict", "--anchors", str(three_anchors), "--points", str(q),
                     "--out", str(tmp_path / "o")]) == 4


def test_predict_dump_lp(tmp_path, three_anchors):
    q = tmp_path / "q.csv"
    q.write_text("x\n1.5\n")
    lp_dir = tmp_path / "lp"
    assert cli.main(["predict", "--anchors", str(three_anchors), "--points", str(q),
                     "--dump-lp", str(lp_dir), "--out", str(tmp_path / "o")]) == 0
    assert list(lp_dir.glob("*.lp"))


def test_predict_parallel_matches_serial(tmp_path, three_anchors):
    q = tmp_path / "q.csv"
    q.write_text("x\n" + "\n".join(str(v) for v in np.linspace(-0.5, 2.5, 9)) + "\n")
    for n, name in ((1, "s"), (2, "p")):
        cli.main(["predict", "--anchors", str(three_anchors), "--points", str(q),
                  "--threads", str(n), "--out", str(tmp_path / name)])
    assert outputs(tmp_path / "s") == outputs(tmp_path / "p")


def test_simulate_determinism_and_env_seed(tmp_path, monkeypatch):
    args = ["simulate", "--form", "logistic", "--s", "1", "--noise", "low", "--n-in", "12",
            "--n-out", "20", "--reps", "1", "--seed", "7"]
    for name in ("a", "b"):
        assert cli.main(args + ["--out", str(tmp_path / name)]) == 0
    assert outputs(tmp_path / "a") == outputs(tmp_path / "b")
    table = rows(tmp_path / "a" / "table.csv")
    assert [r["estimator"] for r in table] == ["INLS", "CC-INLS-vertices", "CC-INLS-centroids"]
    assert "low:n_in=12" in table[0]
    monkeypatch.setenv("CCINLS_SEED", "11")
    assert cli.main(args + ["--out", str(tmp_path / "env")]) == 0
    man = json.loads((tmp_path / "env" / "manifest.json").read_text())
    assert man["config"]["scenarios"][0]["rng_seed"] == 11


def test_simulate_grid_and_config(tmp_path):
    assert cli.main(["simulate", "--form", "cobb", "--noise", "low,high", "--n-in", "10,15",
                     "--n-out", "10", "--reps", "1", "--estimators", "INLS",
                     "--out", str(tmp_path / "g")]) == 0
    assert len(rows(tmp_path / "g" / "metrics.csv")) == 4
    cfg = tmp_path / "sc.txt"
    cfg.write_text("form = logistic\ns = 2\nn_in = 10\nn_out = 10\nreplications = 1\n")
    assert cli.main(["simulate", "--config", str(cfg), "--estimators", "INLS",
                     "--out", str(tmp_path / "c")]) == 0
    detail = json.loads((tmp_path / "c" / "detail.json").read_text())
    assert detail["scenarios"][0]["scenario"]["s"] == 2


def write_panel(path, records):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "year", "population", "jobs"])
        w.writerows(records)


def test_apply_constant_panel(tmp_path):
    p = tmp_path / "panel.csv"
    write_panel(p, [(i, y, pop, jobs) for i, pop, jobs in (("A", 1000, 400), ("B", 3000, 900))
                    for y in range(2010, 2016)])
    out = tmp_path / "o"
    assert cli.main(["apply", "--data", str(p), "--train-years", "2010-2012",
                     "--test-years", "2013-2015", "--out", str(out)]) == 0
    assert sorted(os.listdir(out)) == ["curve.csv", "manifest.json", "rmse.txt",
                                       "test_predictions.csv", "train_summary.json"]
    for line in (out / "rmse.txt").read_text().splitlines()[1:]:
        assert "raw=0\t" in line


def test_apply_protocol(tmp_path):
    recs = []
    for y in (2001, 2002, 2003):
        recs += [("A", y, 12000 + y - 2001, 500), ("B", y, 20000, 800 + 10 * (y - 2001)),
                 ("small", y, 900, 50), ("Capital", y, 500000, 90000)]
    recs += [("A", 2004, 12500, 510), ("B", 2004, 20100, 820), ("small", 2004, 950, 55),
             ("Capital", 2004, 510000, 91000), ("C", 2004, 15000, 600)]
    p = tmp_path / "panel.csv"
    write_panel(p, recs)
    out = tmp_path / "o"
    assert cli.main(["apply", "--data", str(p), "--train-years", "2001-2003", "--test-years", "2004",
                     "--min-population", "10000", "--exclude", "Capital", "--out", str(out)]) == 0
    summary = json.loads((out / "train_summary.json").read_text())
    assert summary["ids"] == ["A", "B"]
    assert summary["excluded"] == ["Capital"]
    assert summary["dropped_below_min_population"] == ["small"]
    anchors = summary["anchors"]["vertices"]["anchors"]
    # per-id averages over the training years
    assert [a["x"][0] for a in anchors] == [500.0, 810.0]
    assert [a["alpha"] for a in anchors] == [12001.0, 20000.0]
    test = rows(out / "test_predictions.csv")
    assert [r["id"] for r in test] == ["A", "B"]  # C was never in the training sample
    curve = {float(r["jobs"]): r for r in rows(out / "curve.csv")}
    for a in anchors:
        assert float(curve[a["x"][0]]["cc_vertices"]) == pytest.approx(a["alpha"], abs=1e-6)


def test_apply_errors(tmp_path):
    p = tmp_path / "panel.csv"
    p.write_text("id,year,population\nA,2001,3\n")
    assert cli.main(["apply", "--data", str(p), "--train-years", "2001", "--test-years", "2002",
                     "--out", str(tmp_path / "o")]) == 2
    write_panel(p, [("A", 2001, 10, 1), ("B", 2001, 20, 2)])
    assert cli.main(["apply", "--data", str(p), "--train-years", "2001", "--test-years", "2002",
                     "--out", str(tmp_path / "o")]) == 2
    assert cli.main(["apply", "--data", str(p), "--train-years", "1990", "--test-years", "2001",
                     "--out", str(tmp_path / "o")]) == 2


def test_console_entry_point(tmp_path, three_csv):
    res = subprocess.run([sys.executable, "-m", "ccinls.cli", "fit", "--data", str(three_csv),
                          "--response", "y", "--out", str(tmp_path / "o")], capture_output=True)
    assert res.returncode == 0, res.stderr
    res = subprocess.run([sys.executable, "-m", "ccinls.cli", "--version"], capture_output=True, text=True)
    assert "ccinls" in res.stdout
