"""Command-line front end: simulate | fit | infer | report.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
Every run writes a ``manifest.json`` recording the resolved
configuration, the package version, wall-clock timing, and SHA-256
digests of inputs and outputs; numeric outputs themselves carry no
timestamps, so reruns with the same seed are byte-identical. Floats are
serialized with 17 significant digits, which round-trips IEEE doubles
losslessly. Worker parallelism for the simulation harness is capped by
the ``FOLOMIN_THREADS`` environment variable.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .erm import FitConfig, ParamPair
from .exceptions import DataError, FolominError, NumericalError
from .inference import build_report
from .model import ResponseFamily, ResponseMatrix
from .pipeline import fit_pipeline, make_loss
from .sim import RNG_NAME, SimDesign, run_replications
from .svgplots import heatmap_svg, histogram_svg, line_panel_svg

__all__ = ["main"]

USAGE_EXIT, DATA_EXIT, NUMERICAL_EXIT = 2, 3, 4


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    h.update(path.read_bytes())
    return h.hexdigest()


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(x) for x in row])


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _json_ready(obj):
    if isinstance(obj, dict):
        return {k: _json_ready(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_ready(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_json_ready(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        return float(f"{float(obj):.17g}")
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _write_manifest(out_dir: Path, command: str, config: dict, inputs: dict, outputs: list[Path], t0: float):
    config = {k: v for k, v in config.items() if not callable(v)}
    manifest = {
        "command": command,
        "config": _json_ready(config),
        "version": __version__,
        "rng": RNG_NAME,
        "duration_seconds": time.time() - t0,
        "inputs": {str(p): _sha256(Path(p)) for p in inputs.values() if Path(p).is_file()},
        "outputs": {p.name: _sha256(p) for p in outputs},
    }
    _write_json(out_dir / "manifest.json", manifest)


def _family_from_flag(name: str, variance: float = 1.0) -> ResponseFamily:
    if name == "gaussian":
        return ResponseFamily.gaussian(variance)
    if name == "bernoulli":
        return ResponseFamily.bernoulli()
    if name == "poisson":
        return ResponseFamily.poisson()
    raise ValueError(f"unknown family {name!r}")


def _read_numeric_csv(path: Path) -> tuple[list[str], np.ndarray]:
    """Read a rectangular numeric CSV with a header row.

    Errors carry 1-based row/column coordinates of the offending cell.
    """
    if not path.exists():
        raise DataError(f"data file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        width = len(header)
        rows = []
        for i, row in enumerate(reader, start=2):
            if len(row) != width:
                raise DataError(
                    f"{path}: ragged row {i} has {len(row)} cells, expected {width}"
                )
            values = []
            for j, cell in enumerate(row, start=1):
                try:
                    values.append(float(cell))
                except ValueError:
                    raise DataError(
                        f"{path}: non-numeric cell at row {i}, column {j}: {cell!r}"
                    ) from None
            rows.append(values)
    if not rows:
        raise DataError(f"{path}: no data rows")
    return header, np.asarray(rows)


# --------------------------------------------------------------------- #
# simulate
# --------------------------------------------------------------------- #


def cmd_simulate(args) -> int:
    t0 = time.time()
    if args.reps < 1:
        raise ValueError("--reps must be at least 1")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    design = SimDesign(
        n=args.n,
        q=args.q,
        r=args.r,
        lambda_signal=getattr(args, "lambda"),
        tau=args.tau,
        family=_family_from_flag(args.family, args.variance),
        seed=args.seed,
    )
    losses = ["mcp", "scad", "tl1"] if args.loss == "all" else [args.loss]
    if args.methods:
        methods = tuple(args.methods.split(","))
    else:
        methods = ("oracle",) + tuple(f"folomin_{k}" for k in losses) + (
            "varimax",
            "varimax_debiased",
            "promax",
        )
    summary = run_replications(
        design, methods=methods, n_reps=args.reps, level=args.level, workers=args.workers
    )

    tidy_rows = []
    for method in summary.methods:
        if method not in summary.entry_mean_sq_err:
            continue
        for metric, table in (
            ("mean_sq_err", summary.entry_mean_sq_err[method]),
            ("coverage", summary.entry_coverage[method]),
            ("mean_bias", summary.entry_mean_bias[method]),
        ):
            for j in range(table.shape[0]):
                for l in range(table.shape[1]):
                    tidy_rows.append([method, j, l, metric, table[j, l]])
    rep_csv = out / "replications.csv"
    _write_csv(rep_csv, ["method", "row", "col", "metric", "value"], tidy_rows)

    summary_payload = {
        "design": {
            "n": design.n,
            "q": design.q,
            "r": design.r,
            "lambda": design.lambda_signal,
            "tau": design.tau,
            "family": design.family.kind,
            "simple_fraction": design.simple_fraction,
            "seed": design.seed,
        },
        "level": summary.level,
        "n_reps": summary.n_reps,
        "n_failed": summary.n_failed,
        "failures": summary.failures,
        "mean_coverage_A": summary.mean_coverage_A,
        "mean_scaled_mse_A": summary.mean_scaled_mse_A,
        "mean_coverage_Z": summary.mean_coverage_Z,
        "methods": list(summary.methods),
        "rng": RNG_NAME,
        "manifest": "manifest.json",
    }
    summary_json = out / "summary.json"
    _write_json(summary_json, _json_ready(summary_payload))

    outputs = [rep_csv, summary_json]
    if args.plots:
        outputs += _simulation_plots(out, summary)
    _write_manifest(out, "simulate", vars(args), {}, outputs, t0)
    print(f"wrote {', '.join(p.name for p in outputs)} and manifest.json to {out}")
    return 0


def _simulation_plots(out: Path, summary) -> list[Path]:
    paths = []
    # bias histograms for the first row's entries, per method
    for method in summary.methods:
        samples = [
            res.per_method[method]["aligned_A"][0] - res.A_star[0]
            for res in summary.rep_results
            if method in res.per_method
        ]
        if not samples:
            continue
        arr = np.stack(samples)
        for l in range(min(arr.shape[1], 5)):
            p = out / f"bias_hist_{method}_row1_dim{l + 1}.svg"
            p.write_text(
                histogram_svg(arr[:, l], title=f"{method}: estimate - truth, entry (1,{l + 1})")
            )
            paths.append(p)
    # per-column scaled error and coverage panels
    mse_series = {
        m: [(l + 1, float(summary.design.n * t[:, l].mean())) for l in range(t.shape[1])]
        for m, t in summary.entry_mean_sq_err.items()
    }
    cov_series = {
        m: [(l + 1, float(t[:, l].mean())) for l in range(t.shape[1])]
        for m, t in summary.entry_coverage.items()
    }
    p1 = out / "scaled_mse_columns.svg"
    p1.write_text(line_panel_svg(mse_series, title="scaled MSE by latent dimension", ylabel="n x MSE"))
    p2 = out / "coverage_columns.svg"
    p2.write_text(
        line_panel_svg(
            cov_series, title="interval coverage by latent dimension", ylabel="coverage",
            y_min=0.0, y_max=1.0,
        )
    )
    return paths + [p1, p2]


# --------------------------------------------------------------------- #
# fit
# --------------------------------------------------------------------- #


def cmd_fit(args) -> int:
    t0 = time.time()
    data_path = Path(args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    header, values = _read_numeric_csv(data_path)
    n, q = values.shape
    if n < args.r or q < args.r:
        raise ValueError(f"need n, q >= r; data is {n} x {q} with r = {args.r}")

    column_means = values.mean(axis=0) if args.center else np.zeros(values.shape[1])
    centered = values - column_means
    family = _family_from_flag(args.family, args.variance)
    data = ResponseMatrix(centered, family)

    loss = None if args.gamma is None else make_loss(args.loss, args.gamma)
    pipe = fit_pipeline(
        data,
        args.r,
        losses={args.loss: loss},
        fit_config=FitConfig(M=args.cap, max_iters=args.max_iters, tol=args.tol, seed=args.seed),
        eta=args.eta,
        T=args.lqa_iters,
        mode=args.mode,
    )
    rotation = pipe.rotations[args.loss]
    params = rotation.params

    a_csv, z_csv = out / "A.csv", out / "Z.csv"
    _write_csv(a_csv, [f"dim{l + 1}" for l in range(args.r)], params.A)
    _write_csv(z_csv, [f"dim{l + 1}" for l in range(args.r)], params.Z)
    rotation_payload = {
        "family": args.family,
        "variance": args.variance,
        "r": args.r,
        "loss": args.loss,
        "gamma": pipe.gammas[args.loss],
        "eta": args.eta,
        "lqa_iters": args.lqa_iters,
        "mode": args.mode,
        "seed": args.seed,
        "center": bool(args.center),
        "column_means": column_means,
        "data": str(data_path),
        "data_sha256": _sha256(data_path),
        "columns": header,
        "initial_rotation": pipe.init.rotation,
        "total_rotation": rotation.G_total,
        "selected_sets": [sorted(s) for s in pipe.init.selected_sets],
        "criterion_trace": rotation.trace.criterion,
        "fit_status": pipe.fit.trace.status,
        "manifest": "manifest.json",
    }
    rotation_json = out / "rotation.json"
    _write_json(rotation_json, _json_ready(rotation_payload))

    outputs = [a_csv, z_csv, rotation_json]
    _write_manifest(out, "fit", vars(args), {"data": str(data_path)}, outputs, t0)
    print(f"fitted {q} x {args.r} representation; wrote A.csv, Z.csv, rotation.json to {out}")
    return 0


# --------------------------------------------------------------------- #
# infer
# --------------------------------------------------------------------- #


def _load_model(model_dir: Path):
    rotation_json = model_dir / "rotation.json"
    for name in ("A.csv", "Z.csv", "rotation.json"):
        if not (model_dir / name).exists():
            raise DataError(f"missing model file {model_dir / name}; run `folomin fit` first")
    meta = json.loads(rotation_json.read_text())
    _, A = _read_numeric_csv(model_dir / "A.csv")
    _, Z = _read_numeric_csv(model_dir / "Z.csv")
    return meta, ParamPair(Z, A)


def cmd_infer(args) -> int:
    t0 = time.time()
    model_dir = Path(args.model_dir)
    out = Path(args.out) if args.out else model_dir
    out.mkdir(parents=True, exist_ok=True)
    meta, params = _load_model(model_dir)

    data_path = Path(args.data) if args.data else Path(meta["data"])
    _, values = _read_numeric_csv(data_path)
    if values.shape != (params.n, params.q):
        raise DataError(
            f"data shape {values.shape} does not match fitted model ({params.n}, {params.q})"
        )
    centered = values - np.asarray(meta["column_means"])
    family = _family_from_flag(meta["family"], meta.get("variance", 1.0))
    data = ResponseMatrix(centered, family)

    report = build_report(
        data,
        params,
        level=args.level,
        alpha=args.alpha,
        adjust=args.adjust,
        per_column=args.per_column,
    )
    from .inference import bonferroni_adjust

    p_bonf = np.empty_like(report.p_A)
    if args.per_column:
        for l in range(report.p_A.shape[1]):
            p_bonf[:, l], _ = bonferroni_adjust(report.p_A[:, l], args.alpha)
    else:
        p_bonf = bonferroni_adjust(report.p_A.ravel(), args.alpha)[0].reshape(report.p_A.shape)

    columns = meta.get("columns")
    rows = []
    for j in range(params.q):
        for l in range(params.r):
            rows.append(
                [
                    j,
                    l,
                    columns[j] if columns and j < len(columns) else f"col{j + 1}",
                    params.A[j, l],
                    report.se_A[j, l],
                    report.z_A[j, l],
                    report.p_A[j, l],
                    report.adjusted_p_A[j, l],
                    p_bonf[j, l],
                    int(report.rejections_A[j, l]),
                    report.lower_A[j, l],
                    report.upper_A[j, l],
                ]
            )
    inference_csv = out / "inference.csv"
    _write_csv(
        inference_csv,
        [
            "row",
            "col",
            "item",
            "estimate",
            "std_error",
            "z",
            "p",
            "p_bh" if args.adjust == "bh" else "p_adjusted",
            "p_bonferroni",
            "rejected",
            "ci_lower",
            "ci_upper",
        ],
        rows,
    )
    summary_payload = {
        "entries_tested": int(params.q * params.r),
        "rejected": int(report.rejections_A.sum()),
        "level": args.level,
        "alpha": args.alpha,
        "adjust": args.adjust,
        "per_column": bool(args.per_column),
        "max_abs_z": float(np.abs(report.z_A).max()),
        "manifest": "manifest.json",
    }
    inference_json = out / "inference_summary.json"
    _write_json(inference_json, _json_ready(summary_payload))
    outputs = [inference_csv, inference_json]
    if args.heatmap:
        signs = np.where(report.rejections_A, np.sign(params.A), 0.0)
        p = out / "significance_heatmap.svg"
        p.write_text(
            heatmap_svg(
                signs.T,
                title=f"significant entries ({args.adjust}, alpha={args.alpha:g})",
            )
        )
        outputs.append(p)
    _write_manifest(
        out, "infer", vars(args), {"data": str(data_path), "model": str(model_dir)}, outputs, t0
    )
    print(f"wrote {', '.join(p.name for p in outputs)} to {out}")
    return 0


# --------------------------------------------------------------------- #
# report
# --------------------------------------------------------------------- #


def cmd_report(args) -> int:
    t0 = time.time()
    src = Path(args.source)
    out = Path(args.out) if args.out else src
    out.mkdir(parents=True, exist_ok=True)
    outputs = []
    lines = [f"folomin report ({__version__})", f"source: {src}", ""]

    summary_json = src / "summary.json"
    rep_csv = src / "replications.csv"
    inference_csv = src / "inference.csv"
    if summary_json.exists() and rep_csv.exists():
        summary = json.loads(summary_json.read_text())
        lines.append("simulation summary")
        lines.append(f"  design: {summary['design']}")
        lines.append(f"  replications: {summary['n_reps']} (failed: {summary['n_failed']})")
        lines.append("  method                mean coverage    scaled MSE")
        for m in summary["methods"]:
            cov = summary["mean_coverage_A"].get(m)
            mse = summary["mean_scaled_mse_A"].get(m)
            if cov is not None:
                lines.append(f"  {m:<20}  {cov:>13.4f}  {mse:>12.4f}")
        header, table = _read_numeric_csv_report(rep_csv)
        outputs += _report_panels(out, table)
    elif inference_csv.exists():
        _, rows = _read_numeric_csv_strings(inference_csv)
        n_sig = sum(int(float(r["rejected"])) for r in rows)
        lines.append("inference summary")
        lines.append(f"  entries tested: {len(rows)}")
        lines.append(f"  rejected: {n_sig}")
        zmax = max(abs(float(r["z"])) for r in rows)
        lines.append(f"  max |z|: {zmax:.4f}")
    else:
        raise DataError(
            f"{src}: nothing to report on (expected replications.csv + summary.json, or inference.csv)"
        )

    report_txt = out / "report.txt"
    report_txt.write_text("\n".join(lines) + "\n")
    outputs.append(report_txt)
    _write_manifest(out, "report", vars(args), {"source": str(src)}, outputs, t0)
    print(f"wrote {', '.join(p.name for p in outputs)} to {out}")
    return 0


def _read_numeric_csv_strings(path: Path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
    return reader.fieldnames, rows


def _read_numeric_csv_report(path: Path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
    return reader.fieldnames, rows


def _report_panels(out: Path, tidy_rows) -> list[Path]:
    by_method: dict = {}
    for row in tidy_rows:
        m, metric = row["method"], row["metric"]
        l, value = int(row["col"]), float(row["value"])
        by_method.setdefault(metric, {}).setdefault(m, {}).setdefault(l, []).append(value)
    paths = []
    for metric, series_by_method in by_method.items():
        if metric not in ("mean_sq_err", "coverage"):
            continue
        series = {
            m: [(l + 1, float(np.mean(vals))) for l, vals in sorted(cols.items())]
            for m, cols in series_by_method.items()
        }
        p = out / f"report_{metric}.svg"
        kwargs = {"y_min": 0.0, "y_max": 1.0} if metric == "coverage" else {}
        p.write_text(line_panel_svg(series, title=f"{metric} by latent dimension", ylabel=metric, **kwargs))
        paths.append(p)
    return paths


# --------------------------------------------------------------------- #
# parser
# --------------------------------------------------------------------- #


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="folomin",
        description="Bias-free sparse representation learning via folded-loss rotation",
    )
    parser.add_argument("--version", action="version", version=f"folomin {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run the Monte Carlo replication study")
    sim.add_argument("--n", type=int, required=True, help="number of subjects")
    sim.add_argument("--q", type=int, required=True, help="number of response variables")
    sim.add_argument("--r", type=int, required=True, help="latent dimension")
    sim.add_argument("--tau", type=float, default=0.5, help="latent correlation decay")
    sim.add_argument("--lambda", type=float, default=0.2, help="minimum signal magnitude")
    sim.add_argument("--reps", type=int, default=100, help="number of replications")
    sim.add_argument("--loss", choices=["mcp", "scad", "tl1", "all"], default="mcp")
    sim.add_argument("--family", choices=["gaussian", "bernoulli", "poisson"], default="bernoulli")
    sim.add_argument("--variance", type=float, default=1.0, help="gaussian noise variance")
    sim.add_argument("--level", type=float, default=0.95, help="interval confidence level")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--methods", default=None, help="comma-separated subset of methods")
    sim.add_argument("--workers", type=int, default=None, help="parallel workers (default FOLOMIN_THREADS)")
    sim.add_argument("--plots", action="store_true", help="also write SVG panels")
    sim.add_argument("--out", default=".", help="output directory")
    sim.set_defaults(func=cmd_simulate)

    fit = sub.add_parser("fit", help="fit and rotate a representation from a CSV")
    fit.add_argument("data", help="CSV file with a header row, subjects in rows")
    fit.add_argument("--family", choices=["gaussian", "bernoulli", "poisson"], required=True)
    fit.add_argument("--variance", type=float, default=1.0)
    fit.add_argument("--r", type=int, required=True, help="latent dimension")
    fit.add_argument("--loss", choices=["mcp", "scad", "tl1"], default="mcp")
    fit.add_argument("--gamma", type=float, default=None, help="folded loss scale (default: data-driven)")
    fit.add_argument("--center", action="store_true", help="subtract column means before fitting")
    fit.add_argument("--cap", type=float, default=None, help="row-norm cap (default: 2x warm start)")
    fit.add_argument("--eta", type=float, default=0.15, help="weight regularizer")
    fit.add_argument("--lqa-iters", type=int, default=5)
    fit.add_argument("--mode", choices=["oblique", "orthogonal"], default="oblique")
    fit.add_argument("--max-iters", type=int, default=1000)
    fit.add_argument("--tol", type=float, default=1e-9)
    fit.add_argument("--seed", type=int, default=0)
    fit.add_argument("--out", default=".", help="output directory")
    fit.set_defaults(func=cmd_fit)

    inf = sub.add_parser("infer", help="entrywise tests and intervals for a fitted model")
    inf.add_argument("model_dir", help="directory containing A.csv, Z.csv, rotation.json")
    inf.add_argument("--data", default=None, help="override the data path stored in the model")
    inf.add_argument("--level", type=float, default=0.95)
    inf.add_argument("--alpha", type=float, default=0.05)
    inf.add_argument("--adjust", choices=["bh", "bonferroni"], default="bh")
    inf.add_argument(
        "--per-column",
        action=argparse.BooleanOptionalAction,
        default=True,
        help="adjust p-values within each latent dimension separately",
    )
    inf.add_argument("--heatmap", action="store_true", help="write a significance heatmap SVG")
    inf.add_argument("--out", default=None, help="output directory (default: model dir)")
    inf.set_defaults(func=cmd_infer)

    rep = sub.add_parser("report", help="render plots and a text summary from prior outputs")
    rep.add_argument("source", help="directory with simulate or infer outputs")
    rep.add_argument("--out", default=None)
    rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return DATA_EXIT
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return NUMERICAL_EXIT
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return USAGE_EXIT
    except FolominError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return NUMERICAL_EXIT


if __name__ == "__main__":
    sys.exit(main())
