import csv
import json
from pathlib import Path

import numpy as np
import pytest

from folomin import ResponseFamily, ResponseMatrix, build_report
from folomin.cli import main
from folomin.erm import ParamPair
from folomin.sim import SimDesign, gen_dataset


def _write_dataset(path: Path, seed=0, n=120, q=60, r=2):
    design = SimDesign(n=n, q=q, r=r, lambda_signal=0.4, tau=0.0, seed=seed)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    Z_star, A_star, data = gen_dataset(design, rng)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"item{j}" for j in range(q)])
        for row in data.values:
            writer.writerow([f"{v:.17g}" for v in row])
    return data


def test_simulate_writes_outputs(tmp_path):
    out = tmp_path / "sim"
    code = main(
        [
            "simulate",
            "--n", "100", "--q", "80", "--r", "2",
            "--tau", "0.0", "--lambda", "0.4",
            "--reps", "2", "--loss", "mcp", "--seed", "7",
            "--methods", "oracle,folomin_mcp",
            "--out", str(out),
        ]
    )
    assert code == 0
    assert (out / "replications.csv").exists()
    assert (out / "summary.json").exists()
    assert (out / "manifest.json").exists()
    summary = json.loads((out / "summary.json").read_text())
    assert summary["n_reps"] == 2
    assert "folomin_mcp" in summary["mean_coverage_A"]
    manifest = json.loads((out / "manifest.json").read_text())
    assert "replications.csv" in manifest["outputs"]


def test_simulate_usage_errors(tmp_path, capsys):
    with pytest.raises(SystemExit) as info:
        main(["simulate", "--n", "100", "--q", "80", "--tau", "0.0"])
    assert info.value.code == 2
    assert "--r" in capsys.readouterr().err

    code = main(
        ["simulate", "--n", "100", "--q", "80", "--r", "2", "--reps", "0", "--out", str(tmp_path)]
    )
    assert code == 2


def test_simulate_determinism(tmp_path):
    args = [
        "simulate", "--n", "100", "--q", "80", "--r", "2", "--tau", "0.0",
        "--lambda", "0.4", "--reps", "2", "--seed", "3",
        "--methods", "oracle", "--out",
    ]
    main(args + [str(tmp_path / "a")])
    main(args + [str(tmp_path / "b")])
    assert (tmp_path / "a/replications.csv").read_bytes() == (
        tmp_path / "b/replications.csv"
    ).read_bytes()
    assert (tmp_path / "a/summary.json").read_bytes() == (
        tmp_path / "b/summary.json"
    ).read_bytes()


def test_fit_infer_roundtrip(tmp_path):
    data_csv = tmp_path / "data.csv"
    data = _write_dataset(data_csv, seed=1)
    model = tmp_path / "model"
    code = main(
        [
            "fit", str(data_csv),
            "--family", "bernoulli", "--r", "2", "--loss", "mcp",
            "--seed", "5", "--out", str(model),
        ]
    )
    assert code == 0
    A = np.loadtxt(model / "A.csv", delimiter=",", skiprows=1)
    Z = np.loadtxt(model / "Z.csv", delimiter=",", skiprows=1)
    assert A.shape == (60, 2) and Z.shape == (120, 2)
    meta = json.loads((model / "rotation.json").read_text())
    assert meta["loss"] == "mcp" and meta["r"] == 2

    code = main(["infer", str(model), "--level", "0.95", "--adjust", "bh", "--per-column", "--heatmap"])
    assert code == 0
    inference = model / "inference.csv"
    assert inference.exists()
    assert (model / "inference_summary.json").exists()
    assert (model / "significance_heatmap.svg").exists()
    with open(inference) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 60 * 2
    assert {"estimate", "std_error", "z", "p", "p_bh", "p_bonferroni", "ci_lower", "ci_upper"} <= set(rows[0])

    # file round-trip reproduces the in-process pipeline exactly
    report = build_report(
        ResponseMatrix(data.values, ResponseFamily.bernoulli()),
        ParamPair(Z, A),
        level=0.95,
        adjust="bh",
        per_column=True,
    )
    got = np.array([[float(r["p"]), float(r["ci_lower"]), float(r["ci_upper"])] for r in rows])
    expected = np.column_stack(
        [report.p_A.ravel(), report.lower_A.ravel(), report.upper_A.ravel()]
    )
    np.testing.assert_array_equal(got, expected)
    # bonferroni column matches min(1, m p) per column
    p_raw = report.p_A
    bonf = np.minimum(1.0, p_raw * p_raw.shape[0])
    got_bonf = np.array([float(r["p_bonferroni"]) for r in rows]).reshape(p_raw.shape)
    np.testing.assert_allclose(got_bonf, bonf, atol=1e-15)


def test_fit_determinism(tmp_path):
    data_csv = tmp_path / "data.csv"
    _write_dataset(data_csv, seed=2)
    base = ["fit", str(data_csv), "--family", "bernoulli", "--r", "2", "--seed", "9", "--out"]
    main(base + [str(tmp_path / "m1")])
    main(base + [str(tmp_path / "m2")])
    assert (tmp_path / "m1/A.csv").read_bytes() == (tmp_path / "m2/A.csv").read_bytes()
    assert (tmp_path / "m1/Z.csv").read_bytes() == (tmp_path / "m2/Z.csv").read_bytes()


def test_fit_rejects_bad_data(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1.0,2.0\n3.0\n")
    code = main(["fit", str(bad), "--family", "gaussian", "--r", "1"])
    assert code == 3
    err = capsys.readouterr().err
    assert "row 3" in err

    nonnum = tmp_path / "nonnum.csv"
    nonnum.write_text("a,b\n1.0,x\n")
    code = main(["fit", str(nonnum), "--family", "gaussian", "--r", "1"])
    assert code == 3
    err = capsys.readouterr().err
    assert "row 2" in err and "column 2" in err

    small = tmp_path / "small.csv"
    small.write_text("a,b\n1.0,0.0\n0.0,1.0\n")
    code = main(["fit", str(small), "--family", "gaussian", "--r", "3"])
    assert code == 2


def test_fit_domain_violation(tmp_path):
    bad = tmp_path / "bad_domain.csv"
    bad.write_text("a,b,c\n0.0,1.0,2.0\n1.0,0.0,1.0\n0.5,1.0,0.0\n")
    code = main(["fit", str(bad), "--family", "bernoulli", "--r", "2"])
    assert code == 3


def test_infer_requires_model(tmp_path):
    code = main(["infer", str(tmp_path / "nothing")])
    assert code == 3


def test_center_flag_gaussian(tmp_path):
    rng = np.random.default_rng(11)
    loadings = np.zeros((10, 2))
    loadings[:5, 0] = rng.uniform(1, 2, 5)
    loadings[5:, 1] = rng.uniform(1, 2, 5)
    scores = rng.standard_normal((50, 2))
    raw = scores @ loadings.T + 0.1 * rng.standard_normal((50, 10)) + 5.0
    data_csv = tmp_path / "g.csv"
    with open(data_csv, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"v{j}" for j in range(10)])
        for row in raw:
            w.writerow([f"{v:.17g}" for v in row])
    model = tmp_path / "model"
    code = main(
        ["fit", str(data_csv), "--family", "gaussian", "--r", "2", "--center", "--out", str(model)]
    )
    assert code == 0
    meta = json.loads((model / "rotation.json").read_text())
    np.testing.assert_allclose(np.asarray(meta["column_means"]), raw.mean(axis=0), atol=1e-12)


def test_report_from_simulation(tmp_path):
    out = tmp_path / "sim"
    main(
        [
            "simulate", "--n", "100", "--q", "80", "--r", "2", "--tau", "0.0",
            "--lambda", "0.4", "--reps", "2", "--seed", "7",
            "--methods", "oracle", "--out", str(out),
        ]
    )
    code = main(["report", str(out)])
    assert code == 0
    assert (out / "report.txt").exists()
    assert (out / "report_coverage.svg").exists()
    text = (out / "report.txt").read_text()
    assert "oracle" in text


def test_report_empty_dir(tmp_path):
    assert main(["report", str(tmp_path)]) == 3
