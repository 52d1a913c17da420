"""Command-line entry point and report emitters.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
Flag precedence: command line > --config JSON file > built-in defaults.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import harness
from .data import (DataError, LorenzConfig, generate_lorenz,
                   generate_synthetic, load_dataset, save_dataset)
from .harness import (ExperimentReport, TrainConfig, config_from_dict,
                      config_to_dict, report_to_dict, trace_to_csv)
from .metrics import EvalBatch, evaluate, reports_to_csv
from .models import ModelSpec, TrainingTrace, TraceRecord, load_model, save_model, predict
from .optim import NumericFailure, TemperatureSchedule

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems via exit code 1."""

    def error(self, message):
        raise UsageError(message)


def _default_seed() -> int:
    env = os.environ.get("LIKA_SEED")
    return int(env) if env else 0


def build_parser() -> _Parser:
    parser = _Parser(prog="lika", description=__doc__)
    sub = parser.add_subparsers(dest="verb", required=True)

    def add_common(p):
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out-dir", default=".")

    p = sub.add_parser("gen-lorenz", help="generate the Lorenz denoising dataset")
    add_common(p)
    p.add_argument("--n-samples", type=int, default=2000)
    p.add_argument("--noise-sigma", type=float, default=0.5)
    p.add_argument("--window", type=int, default=9)

    p = sub.add_parser("gen-synth", help="generate the synthetic heteroscedastic dataset")
    add_common(p)
    p.add_argument("--n", type=int, default=2000)

    for verb in ("train", "ablate", "ood"):
        p = sub.add_parser(verb)
        add_common(p)
        p.add_argument("--data", required=True)
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument("--method", default=None)
        p.add_argument("--epochs", type=int, default=None)
        p.add_argument("--batch-size", type=int, default=None)
        p.add_argument("--lr", type=float, default=None)
        p.add_argument("--t0", type=float, default=None)
        p.add_argument("--t-end", type=float, default=None)
        p.add_argument("--bins", type=int, default=None)
        p.add_argument("--ensemble-size", type=int, default=None)
        p.add_argument("--dropout-rate", type=float, default=None)
        p.add_argument("--prior", default=None)
        p.add_argument("--prior-lambda", type=float, default=None)
        p.add_argument("--hidden", default=None,
                       help="comma-separated hidden widths, e.g. 64,64")
        p.add_argument("--activation", default=None)
        if verb == "ood":
            p.add_argument("--methods", default="nll,lika")
            p.add_argument("--seeds", default="0,1,2,3,4")

    p = sub.add_parser("eval", help="evaluate a saved model on a dataset")
    add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--bins", type=int, default=None)

    p = sub.add_parser("report", help="re-emit saved experiment reports")
    p.add_argument("--format", choices=("csv", "json", "markdown", "svg"),
                   default="csv")
    p.add_argument("--out-dir", default=".")
    p.add_argument("inputs", nargs="+", help="report.json files")
    return parser


def _build_config(args) -> TrainConfig:
    """defaults < config file < explicit flags."""
    merged = config_to_dict(TrainConfig())
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise DataError(f"no such config file: {path}")
        with open(path) as fh:
            merged.update(json.load(fh))
    flag_map = {
        "method": args.method, "epochs": args.epochs,
        "batch-size": args.batch_size, "lr0": args.lr,
        "bins": args.bins, "ensemble-size": args.ensemble_size,
        "dropout-rate": args.dropout_rate, "prior": args.prior,
        "prior-lambda": args.prior_lambda, "seed": args.seed,
    }
    for key, value in flag_map.items():
        if value is not None:
            merged[key] = value
    if "seed" not in merged or merged["seed"] is None:
        merged["seed"] = _default_seed()
    epochs = merged.get("epochs", 2000)
    sched = merged.get("schedule")
    sched = dict(sched) if isinstance(sched, dict) else {}
    if args.t0 is not None:
        sched["t0"] = args.t0
    if args.t_end is not None:
        sched["t-end"] = args.t_end
    sched["total-epochs"] = epochs
    merged["schedule"] = sched
    try:
        return config_from_dict(merged)
    except ValueError as err:
        raise UsageError(str(err)) from err


def _model_spec(args, dataset) -> ModelSpec | None:
    if args.hidden is None and args.activation is None:
        return None
    hidden = tuple(int(w) for w in (args.hidden or "64,64").split(","))
    return ModelSpec(input_dim=dataset.inputs.shape[1],
                     output_dim=dataset.targets.shape[1],
                     hidden_layers=hidden,
                     activation=args.activation or "tanh")


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write(path: Path, content: str) -> None:
    with open(path, "w") as fh:
        fh.write(content)


# ---------------------------------------------------------------------------
# Subcommands


def cmd_gen_lorenz(args) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    cfg = LorenzConfig(n_samples=args.n_samples, noise_sigma=args.noise_sigma,
                       window=args.window, seed=seed)
    ds = generate_lorenz(cfg)
    out = _out_dir(args)
    save_dataset(ds, out / "lorenz.csv")
    print(f"wrote {out / 'lorenz.csv'} ({ds.n_samples} rows)")
    return EXIT_OK


def cmd_gen_synth(args) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    ds = generate_synthetic(args.n, seed=seed)
    out = _out_dir(args)
    save_dataset(ds, out / "synth.csv")
    print(f"wrote {out / 'synth.csv'} ({ds.n_samples} rows)")
    return EXIT_OK


def cmd_train(args) -> int:
    dataset = load_dataset(args.data)
    config = _build_config(args)
    spec = _model_spec(args, dataset)
    report = harness.run_experiment(dataset, config, spec,
                                    dataset_name=Path(args.data).stem)
    out = _out_dir(args)
    _emit_run(out, report)
    print(f"method={config.method} test MAE={report.metrics.mae:.4f} "
          f"UCE={report.metrics.uce:.4f} -> {out}")
    return EXIT_OK


def _emit_run(out: Path, report: ExperimentReport) -> None:
    _write(out / "trace.csv", trace_to_csv(report.trace))
    _write(out / "report.json",
           json.dumps(report_to_dict(report), indent=2) + "\n")
    row = report.metrics.row(report.config.method, report.dataset_name,
                             report.config.seed)
    _write(out / "summary.csv", reports_to_csv([row]))


def cmd_eval(args) -> int:
    dataset = load_dataset(args.data)
    params, spec = load_model(args.model)
    bins = args.bins if args.bins is not None else 10
    x_val, y_val = dataset.subset("val")
    x_test, y_test = dataset.subset("test")
    pred_val = predict(params, spec, x_val)
    pred_test = predict(params, spec, x_test)
    report = evaluate(
        EvalBatch(mean=pred_test.mean, sigma=pred_test.sigma, targets=y_test),
        EvalBatch(mean=pred_val.mean, sigma=pred_val.sigma, targets=y_val),
        m_bins=bins)
    out = _out_dir(args)
    row = report.row("eval", Path(args.data).stem, 0)
    _write(out / "summary.csv", reports_to_csv([row]))
    _write(out / "report.json", json.dumps(row, indent=2) + "\n")
    print(f"test MAE={report.mae:.4f} UCE={report.uce:.4f} -> {out}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    dataset = load_dataset(args.data)
    config = _build_config(args)
    spec = _model_spec(args, dataset)
    results = harness.ablation_grid(dataset, config, spec)
    out = _out_dir(args)
    rows = []
    for cell in results:
        if cell["report"] is None:
            print(f"row {cell['row']!r} failed: {cell['error']}", file=sys.stderr)
            continue
        rep = cell["report"]
        rows.append(rep.metrics.row(cell["row"], rep.dataset_name,
                                    rep.config.seed))
    _write(out / "summary.csv", reports_to_csv(rows))
    _write(out / "report.json", json.dumps(
        [report_to_dict(c["report"]) if c["report"] else {"row": c["row"], "error": c["error"]}
         for c in results], indent=2) + "\n")
    print(f"{len(rows)}/{len(results)} ablation rows -> {out}")
    return EXIT_OK


def cmd_ood(args) -> int:
    dataset = load_dataset(args.data)
    config = _build_config(args)
    spec = _model_spec(args, dataset)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    from dataclasses import replace
    configs = [replace(config, method=m) for m in methods]
    rows = harness.ood_sweep(dataset, configs, seeds, spec)
    out = _out_dir(args)
    lines = ["method,level,mae,uce"]
    for r in rows:
        lines.append(f"{r['method']},{r['level']},{r['mae']!r},{r['uce']!r}")
    _write(out / "summary.csv", "\n".join(lines) + "\n")
    _write(out / "report.json", json.dumps(rows, indent=2) + "\n")
    print(f"{len(rows)} sweep rows -> {out}")
    return EXIT_OK


def cmd_report(args) -> int:
    reports = []
    for path in args.inputs:
        path = Path(path)
        if not path.exists():
            raise DataError(f"no such report: {path}")
        with open(path) as fh:
            record = json.load(fh)
        trace_path = path.with_name("trace.csv")
        trace = _load_trace(trace_path) if trace_path.exists() else TrainingTrace()
        reports.append(_report_from_dict(record, trace))
    out = _out_dir(args)
    files = emit_report(reports, args.format, out)
    print("wrote " + ", ".join(str(f) for f in files))
    return EXIT_OK


def _load_trace(path: Path) -> TrainingTrace:
    trace = TrainingTrace()
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        for line in fh:
            vals = dict(zip(header, line.strip().split(",")))
            trace.records.append(TraceRecord(
                epoch=int(vals["epoch"]), lr=float(vals["lr"]),
                t2=float(vals["t2"]), t3=float(vals["t3"]),
                train_loss=float(vals["train_loss"]),
                val_loss=float(vals["val_loss"]),
                val_mae=float(vals["val_mae"]),
                val_uce=float(vals["val_uce"]),
                val_ece=float(vals["val_ece"])))
    return trace


def _report_from_dict(record: dict, trace: TrainingTrace) -> ExperimentReport:
    from .metrics import MetricsReport
    config = config_from_dict(record["config"])
    metrics = MetricsReport(**record["metrics"])
    return ExperimentReport(config=config, dataset_name=record.get("dataset", "dataset"),
                            metrics=metrics, trace=trace,
                            epochs_to_converge=record.get("epochs-to-converge", 0),
                            wall_seconds=0.0)


# ---------------------------------------------------------------------------
# Emitters


def emit_report(reports: list[ExperimentReport], fmt: str, out_dir: Path) -> list[Path]:
    """Render experiment reports as csv/json/markdown tables or SVG curves.
    Pure function of the report list; repeated emission is byte-identical."""
    if not reports:
        raise UsageError("no reports to emit")
    out_dir = Path(out_dir)
    rows = [r.metrics.row(r.config.method, r.dataset_name, r.config.seed)
            for r in reports]
    if fmt == "csv":
        path = out_dir / "summary.csv"
        _write(path, reports_to_csv(rows))
        return [path]
    if fmt == "json":
        path = out_dir / "summary.json"
        _write(path, json.dumps([report_to_dict(r) for r in reports],
                                indent=2) + "\n")
        return [path]
    if fmt == "markdown":
        path = out_dir / "summary.md"
        _write(path, _markdown_table(rows))
        return [path]
    if fmt == "svg":
        loss_path = out_dir / "convergence_loss.svg"
        ece_path = out_dir / "convergence_ece.svg"
        _write(loss_path, _svg_chart(reports, "val_loss", "validation loss"))
        _write(ece_path, _svg_chart(reports, "val_ece", "validation ECE"))
        return [loss_path, ece_path]
    raise UsageError(f"unknown format {fmt!r}")


def _markdown_table(rows: list[dict]) -> str:
    from .metrics import SUMMARY_COLUMNS
    lines = ["| " + " | ".join(SUMMARY_COLUMNS) + " |",
             "|" + "---|" * len(SUMMARY_COLUMNS)]
    for row in rows:
        cells = [f"{row[c]:.6g}" if isinstance(row[c], float) else str(row[c])
                 for c in SUMMARY_COLUMNS]
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


_SVG_COLORS = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
               "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22")


def _svg_chart(reports: list[ExperimentReport], attr: str, title: str,
               width: int = 640, height: int = 400) -> str:
    """One polyline per method; linear axes, auto range, 10-tick grid."""
    margin = 60
    series = []
    for r in reports:
        ys = [getattr(rec, attr) for rec in r.trace.records]
        if ys:
            series.append((r.config.method, ys))
    all_y = [y for _, ys in series for y in ys if _finite(y)]
    max_x = max((len(ys) for _, ys in series), default=1)
    lo = min(all_y, default=0.0)
    hi = max(all_y, default=1.0)
    if hi == lo:
        hi = lo + 1.0
    plot_w = width - 2 * margin
    plot_h = height - 2 * margin

    def sx(i):
        return margin + plot_w * i / max(max_x - 1, 1)

    def sy(v):
        return height - margin - plot_h * (v - lo) / (hi - lo)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
             f'height="{height}" viewBox="0 0 {width} {height}">',
             f'<text x="{width / 2}" y="20" text-anchor="middle" '
             f'font-size="14">{title} vs epoch</text>']
    for k in range(11):
        gy = margin + plot_h * k / 10
        gx = margin + plot_w * k / 10
        parts.append(f'<line x1="{margin}" y1="{gy:.1f}" x2="{width - margin}" '
                     f'y2="{gy:.1f}" stroke="#ddd" stroke-width="1"/>')
        parts.append(f'<line x1="{gx:.1f}" y1="{margin}" x2="{gx:.1f}" '
                     f'y2="{height - margin}" stroke="#ddd" stroke-width="1"/>')
        tick_v = hi - (hi - lo) * k / 10
        parts.append(f'<text x="{margin - 6}" y="{gy + 4:.1f}" text-anchor="end" '
                     f'font-size="9">{tick_v:.3g}</text>')
        tick_e = (max_x - 1) * k / 10
        parts.append(f'<text x="{gx:.1f}" y="{height - margin + 14}" '
                     f'text-anchor="middle" font-size="9">{tick_e:.0f}</text>')
    for idx, (method, ys) in enumerate(series):
        color = _SVG_COLORS[idx % len(_SVG_COLORS)]
        points = " ".join(f"{sx(i):.2f},{sy(y):.2f}"
                          for i, y in enumerate(ys) if _finite(y))
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" '
                     f'points="{points}"/>')
        ly = margin + 16 * idx
        parts.append(f'<line x1="{width - margin + 5}" y1="{ly}" '
                     f'x2="{width - margin + 25}" y2="{ly}" stroke="{color}" '
                     f'stroke-width="2"/>')
        parts.append(f'<text x="{width - margin + 28}" y="{ly + 4}" '
                     f'font-size="10">{method}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _finite(v) -> bool:
    return v == v and abs(v) != float("inf")


# ---------------------------------------------------------------------------


_COMMANDS = {
    "gen-lorenz": cmd_gen_lorenz,
    "gen-synth": cmd_gen_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "ood": cmd_ood,
    "report": cmd_report,
}


def parse_and_dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.verb](args)
    except (UsageError, ValueError) as err:
        if isinstance(err, DataError):
            print(f"data error: {err}", file=sys.stderr)
            return EXIT_DATA
        print(f"usage error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except NumericFailure as err:
        print(f"numeric failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as err:
        print(f"data error: {err}", file=sys.stderr)
        return EXIT_DATA


def main() -> None:
    sys.exit(parse_and_dispatch())


if __name__ == "__main__":
    main()
