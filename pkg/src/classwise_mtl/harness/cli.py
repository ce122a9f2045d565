"""Command line entry point: ``classwise-mtl <verb>``."""

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from ..synthlab import save_dataset
from ..trainer import MODES, swap_roles, train
from .bench import measure_overhead, timing_rows
from .config import ConfigError, MethodSpec, default_config, load_config
from .diagnostic import per_region_diagnostic
from .experiment import load_experiment_dataset, run_experiment
from .io import write_csv, write_json, write_trajectory

log = logging.getLogger("classwise_mtl")

EPOCH_HEADER = ["epoch", "lr", "steps", "train_main", "train_aux", "val_main", "val_aux"]


def _global_flags(parser, suppress):
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", default=default, help="experiment YAML file (default: built-in experiment)")
    parser.add_argument("--seed", type=int, default=default, help="overrides every seed in the config")
    parser.add_argument("--out", default=default, help="output directory")
    parser.add_argument("--workers", type=int, default=default, help="parallel runs for experiment")
    parser.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS if suppress else False)


def build_parser():
    parser = argparse.ArgumentParser(prog="classwise-mtl",
                                     description="Class-wise auxiliary loss weighting experiments.")
    _global_flags(parser, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)
    sub = parser.add_subparsers(dest="verb", required=True)

    sub.add_parser("generate", parents=[common], help="write the synthetic dataset to <out>/dataset.csv")
    p = sub.add_parser("train", parents=[common], help="train one method")
    p.add_argument("--method", default="arbiter", help="method name from the config or a bare mode")
    p.add_argument("--swap-roles", action="store_true", help="exchange main and auxiliary tasks")
    p.add_argument("--aux-bins", type=int, help="bins for a regression auxiliary task after a swap")
    sub.add_parser("experiment", parents=[common], help="run every configured method")
    sub.add_parser("diagnose", parents=[common], help="per-region main-task error report")
    sub.add_parser("bench", parents=[common], help="per-batch overhead of the arbiter")
    return parser


def _config(args):
    overrides = {k: getattr(args, k) for k in ("seed", "workers") if getattr(args, k) is not None}
    if args.out is not None:
        overrides["output_dir"] = args.out
    if args.config is None:
        return default_config(overrides)
    if not Path(args.config).is_file():
        raise ConfigError(f"{args.config}: no such config file")
    return load_config(Path(args.config), overrides)


def cmd_generate(cfg, args):
    ds = load_experiment_dataset(cfg)
    path = save_dataset(ds, Path(cfg.output_dir) / "dataset.csv")
    log.info("wrote %s (%d rows, %d classes)", path, len(ds.inputs), ds.n_classes)
    return 0


def cmd_train(cfg, args):
    try:
        method = cfg.method(args.method)
    except KeyError:
        if args.method not in MODES:
            raise ConfigError(f"--method: {args.method!r} is neither a configured method nor a mode") from None
        method = MethodSpec(args.method, args.method)
    tc = method.train_config(cfg.train)
    if args.swap_roles:
        if args.aux_bins is not None:
            tc = replace(tc, aux_bins=args.aux_bins)
        tc = swap_roles(tc)
    ds = load_experiment_dataset(cfg)
    report = train(None, ds, tc)
    out = Path(cfg.output_dir)
    write_json(out / "report.json", report.to_dict())
    write_trajectory(out / "weights.csv", report.trajectory)
    write_csv(out / "epochs.csv", EPOCH_HEADER, [[e[h] for h in EPOCH_HEADER] for e in report.epochs])
    t = report.timing()
    write_csv(out / "timings.csv", ["name", "mode", "n_batches", "median_s", "mean_s"],
              [[method.name, tc.mode, t["n"], t["median"], t["mean"]]])
    report.net.save(out / "net.npz")
    log.info("%s: val_main=%.6g val_aux=%.6g weights=%s", method.name, report.final_val_main,
             report.final_val_aux, [round(w, 4) for w in report.final_weights])
    return 0


def cmd_experiment(cfg, args):
    result = run_experiment(cfg)
    for row in result.summary["rows"]:
        log.info("%-16s %-8s val_main=%s", row["name"], row["status"], row.get("final_val_main"))
    if result.failed:
        log.error("failed runs: %s", ", ".join(result.failed))
    return result.exit_code


def cmd_diagnose(cfg, args):
    ds = load_experiment_dataset(cfg)
    names = cfg.diagnostic
    reports = {}
    for key in ("single", "multi", "arbiter"):
        try:
            method = cfg.method(names[key])
        except KeyError:
            method = MethodSpec(names[key], names[key])
        reports[key] = train(None, ds, method.train_config(cfg.train))
    diag = per_region_diagnostic(reports["single"].net, reports["multi"].net, ds,
                                 others={names["arbiter"]: reports["arbiter"].net}, config=cfg.train,
                                 weights={names[k]: reports[k].final_weights for k in ("multi", "arbiter")},
                                 names=(names["single"], names["multi"]))
    out = Path(cfg.output_dir)
    write_csv(out / "diagnostic.csv", diag.header(), diag.rows())
    write_json(out / "diagnostic.json", diag.to_dict())
    if diag.empty:
        log.warning("empty validation regions: %s", diag.empty)
    for row in diag.rows():
        log.info("%s", " ".join(str(v) for v in row))
    return 0


def cmd_bench(cfg, args):
    ds = load_experiment_dataset(cfg)
    tc = replace(cfg.train, epochs=cfg.bench["epochs"], warmup_epochs=0)
    result = measure_overhead(ds, tc, repeats=cfg.bench["repeats"], skip_batches=cfg.bench["skip_batches"])
    out = Path(cfg.output_dir)
    write_json(out / "bench.json", result)
    write_csv(out / "timings.csv", ["method", "repeat", "median_s"], timing_rows(result))
    log.info("arbiter/uniform_sum: median %.3f, mean %.3f", result["ratio_median"], result["ratio_mean"])
    return 0


COMMANDS = {"generate": cmd_generate, "train": cmd_train, "experiment": cmd_experiment,
            "diagnose": cmd_diagnose, "bench": cmd_bench}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    try:
        cfg = _config(args)
        return COMMANDS[args.verb](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
