"""Command-line entry point.

Subcommands: gen-data, train, eval, flops, bench, plot.  Every command is
deterministic for a given --seed, prints a human-readable report to
stdout, and writes the same report as JSON next to its primary output.
Exit codes: 0 success, 1 configuration error, 2 I/O error, 3 numeric
failure; the reason goes to stderr as a single machine-parsable line.
"""

import argparse
import csv as csv_module
import json
import sys
from pathlib import Path

from .bench import append_csv, bench_forward, default_threads
from .config import load_config
from .data import CLASS_NAMES, gen_shapes
from .errors import ConfigError, DataError, NumericError
from .flops import compare, count_model, format_compare
from .models import build_model
from .svg import render_runs_svg
from .train import (
    TrainConfig, evaluate, load_checkpoint, restore_model, save_checkpoint,
    train_model,
)
from .vxg import load_dataset, save_dataset

EXIT_CONFIG = 1
EXIT_IO = 2
EXIT_NUMERIC = 3


def _write_json(path, payload) -> None:
    try:
        Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                              encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot write report {path}: {exc}") from None


def _parse_dims(text):
    parts = text.split(",") if "," in text else [text] * 3
    if len(parts) != 3:
        raise ConfigError(f"--dims expects D or Dx,Dy,Dz, got {text!r}")
    try:
        return tuple(int(p) for p in parts)
    except ValueError:
        raise ConfigError(f"--dims expects integers, got {text!r}") from None


def cmd_gen_data(args):
    dims = _parse_dims(args.dims)
    samples = gen_shapes(seed=args.seed, count=args.count, dims=dims,
                         task=args.task, occlusion=args.occlusion)
    out = Path(args.out)
    manifest = save_dataset(out, samples, task=args.task, dims=dims,
                            seed=args.seed,
                            meta={"occlusion": args.occlusion if args.task == "complete" else None,
                                  "classes": list(CLASS_NAMES)})
    report = {"command": "gen-data", "out": str(out), "count": len(samples),
              "dims": list(dims), "task": args.task, "seed": args.seed,
              "labels": {name: sum(1 for s in samples if s.label == i)
                         for i, name in enumerate(CLASS_NAMES)},
              "files": len(manifest["samples"])}
    _write_json(out / "report.json", report)
    print(f"wrote {len(samples)} {args.task} samples at {dims} to {out}")
    for name, n in report["labels"].items():
        print(f"  {name}: {n}")
    return 0


def _split_train_val(samples, val_fraction):
    n_val = max(1, int(round(len(samples) * val_fraction)))
    if n_val >= len(samples):
        raise ConfigError("validation split leaves no training samples")
    return samples[:-n_val], samples[-n_val:]


def cmd_train(args):
    cfg = load_config(args.config)
    train_set, manifest = load_dataset(args.data)
    if tuple(manifest["dims"]) != cfg.dims:
        raise ConfigError(f"dataset dims {manifest['dims']} do not match "
                          f"config dims {list(cfg.dims)}")
    if manifest["task"] != cfg.task:
        raise ConfigError(f"dataset task {manifest['task']!r} does not match "
                          f"config task {cfg.task!r}")
    if args.val_data:
        val_set, _ = load_dataset(args.val_data)
    else:
        train_set, val_set = _split_train_val(train_set, args.val_fraction)

    tcfg = TrainConfig(epochs=args.epochs, batch_size=args.batch_size,
                       lr=args.lr, seed=args.seed if args.seed is not None
                       else cfg.seed)
    try:
        tcfg.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = train_model(cfg, train_set, val_set, tcfg, log=print)

    ckpt_path = out / "checkpoint.tpck"
    save_checkpoint(ckpt_path, cfg, result.best_params,
                    meta={"best_metric": result.best_metric,
                          "best_epoch": result.best_epoch,
                          "train_seed": tcfg.seed})
    (out / "metrics.csv").write_text(result.history_csv(), encoding="utf-8")

    flops_total = count_model(cfg).total
    report = {"command": "train", "config": cfg.to_dict(),
              "train": {"epochs": tcfg.epochs, "batch_size": tcfg.batch_size,
                        "lr": tcfg.lr, "seed": tcfg.seed,
                        "train_samples": len(train_set),
                        "val_samples": len(val_set)},
              "best_metric": result.best_metric,
              "best_epoch": result.best_epoch,
              "metric_name": "accuracy" if cfg.task == "classify" else "iou",
              "flops_total": flops_total,
              "checkpoint": ckpt_path.name,
              "metrics_csv": "metrics.csv"}
    _write_json(out / "report.json", report)
    print(f"best {report['metric_name']}={result.best_metric:.4f} "
          f"at epoch {result.best_epoch}; checkpoint in {out}")
    return 0


def cmd_eval(args):
    cfg, params, meta = load_checkpoint(args.checkpoint)
    model = restore_model(cfg, params)
    samples, manifest = load_dataset(args.data)
    if tuple(manifest["dims"]) != cfg.dims:
        raise ConfigError(f"dataset dims {manifest['dims']} do not match "
                          f"checkpoint dims {list(cfg.dims)}")
    scores = evaluate(model, samples, cfg.task,
                      with_chamfer=cfg.task == "complete")
    out_path = Path(args.out) if args.out else \
        Path(args.checkpoint).with_suffix(".eval.json")
    report = {"command": "eval", "checkpoint": str(args.checkpoint),
              "data": str(args.data), "samples": len(samples),
              "task": cfg.task, "metrics": scores, "checkpoint_meta": meta}
    _write_json(out_path, report)
    print(f"evaluated {len(samples)} samples ({cfg.task})")
    for name, value in scores.items():
        print(f"  {name}: {value:.6f}" if isinstance(value, float)
              else f"  {name}: {value}")
    return 0


def cmd_flops(args):
    reports = [count_model(load_config(args.config),
                           label=Path(args.config).stem)]
    for extra in args.compare or []:
        reports.append(count_model(load_config(extra), label=Path(extra).stem))
    if len(reports) == 1:
        report = reports[0]
        payload = {"command": "flops", **report.to_dict()}
        print(report.table())
    else:
        table = compare(reports)
        payload = {"command": "flops", "reports": [r.to_dict() for r in reports],
                   "comparison": table}
        for r in reports:
            print(r.table())
            print()
        print(format_compare(table))
    out_path = Path(args.out) if args.out else \
        Path(args.config).with_suffix(".flops.json")
    _write_json(out_path, payload)
    return 0


def cmd_bench(args):
    cfg = load_config(args.config)
    result = bench_forward(cfg, iters=args.iters, warmup=args.warmup,
                           threads=args.threads,
                           concurrent=args.concurrent_streams,
                           label=Path(args.config).stem)
    csv_path = Path(args.csv)
    append_csv(csv_path, result)
    _write_json(csv_path.with_suffix(".json"), {"command": "bench",
                                                **result.to_dict()})
    print(f"{result.label}: mean={result.mean_ms:.3f} ms "
          f"median={result.median_ms:.3f} ms p95={result.p95_ms:.3f} ms "
          f"throughput={result.throughput_vps:.2f} vol/s "
          f"(iters={result.iters}, warmup={result.warmup}, "
          f"threads={result.threads or 'default'}, "
          f"concurrent={result.concurrent})")
    return 0


def _load_run(csv_path):
    csv_path = Path(csv_path)
    report_path = csv_path.parent / "report.json"
    if not report_path.exists():
        raise DataError(f"no report.json next to {csv_path}")
    report = json.loads(report_path.read_text(encoding="utf-8"))
    rows = []
    try:
        with open(csv_path, newline="", encoding="utf-8") as fh:
            for row in csv_module.DictReader(fh):
                rows.append(row)
    except OSError as exc:
        raise DataError(f"cannot read {csv_path}: {exc}") from None
    if not rows:
        raise DataError(f"{csv_path} holds no metric rows")
    metric = report.get("metric_name", "iou")
    curve = [(int(r["epoch"]), float(r["value"])) for r in rows
             if r["split"] == "val" and r["metric"] == metric]
    label = report.get("config", {}).get("variant", csv_path.parent.name)
    ratio = report.get("config", {}).get("vol", {}).get("ratio")
    if label == "hybrid" and ratio:
        label = f"hybrid(r={ratio:g})"
    return {"label": label, "metric": metric, "curve": curve,
            "gflops": report.get("flops_total", 0) / 1e9,
            "best": report.get("best_metric", 0.0)}


def cmd_plot(args):
    runs = [_load_run(p) for p in args.metrics]
    svg = render_runs_svg(runs)
    try:
        Path(args.out).write_text(svg, encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot write {args.out}: {exc}") from None
    payload = {"command": "plot", "out": str(args.out),
               "series": [{"label": r["label"], "metric": r["metric"],
                           "gflops": r["gflops"], "best": r["best"],
                           "points": len(r["curve"])} for r in runs]}
    _write_json(Path(args.out).with_suffix(".svg.json"), payload)
    print(f"plotted {len(runs)} series to {args.out}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="triplane",
        description="Tri-plane lifting for voxel reasoning: data, training, "
                    "FLOPs analysis, benchmarks, plots.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic shape dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--dims", default="32", help="D or Dx,Dy,Dz")
    p.add_argument("--task", choices=("classify", "complete"), default="classify")
    p.add_argument("--occlusion", type=float, default=0.4)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a model on a dataset directory")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--val-data", default=None)
    p.add_argument("--val-fraction", type=float, default=0.2)
    p.add_argument("--epochs", type=int, default=12)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=None,
                   help="training seed (defaults to the config seed)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("flops", help="analytic FLOPs report for config(s)")
    p.add_argument("--config", required=True)
    p.add_argument("--compare", nargs="*", default=[])
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_flops)

    p = sub.add_parser("bench", help="forward-pass latency benchmark")
    p.add_argument("--config", required=True)
    p.add_argument("--iters", type=int, default=30)
    p.add_argument("--warmup", type=int, default=5)
    p.add_argument("--threads", type=int, default=default_threads())
    p.add_argument("--concurrent-streams", action="store_true")
    p.add_argument("--csv", default="bench.csv")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("plot", help="metric curves and accuracy-vs-FLOPs scatter")
    p.add_argument("--metrics", nargs="+", required=True,
                   help="one or more metrics.csv files from train runs")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"error: code={EXIT_CONFIG} kind=config reason={exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError) as exc:
        print(f"error: code={EXIT_IO} kind=io reason={exc}", file=sys.stderr)
        return EXIT_IO
    except (NumericError, FloatingPointError) as exc:
        print(f"error: code={EXIT_NUMERIC} kind=numeric reason={exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
