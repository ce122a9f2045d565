"""Run every configured method on one dataset and write the artifact directory.

Layout::

    <out>/summary.json          one row per method, final losses and weights
    <out>/summary.csv
    <out>/dataset.csv           the exact data used
    <out>/runs/<name>/report.json
    <out>/runs/<name>/weights.csv   arbiter trajectory (header only for static modes)
    <out>/runs/<name>/surface.csv   grid oracle only
    <out>/diagnostic.csv, diagnostic.json
    <out>/timings.csv           wall-clock, not reproducible by design
"""

import itertools
import logging
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from ..synthlab import gen_conflict_dataset, load_dataset, save_dataset
from ..trainer import Problem, train
from .config import GRID_MODE
from .diagnostic import per_region_diagnostic
from .io import write_csv, write_json, write_trajectory

log = logging.getLogger(__name__)

SUMMARY_HEADER = ["name", "mode", "status", "final_val_main", "final_val_aux", "best_val_main", "final_weights"]


@dataclass
class ExperimentResult:
    out_dir: Path
    summary: dict
    reports: dict

    @property
    def failed(self):
        return [r["name"] for r in self.summary["rows"] if r["status"] != "ok"]

    @property
    def exit_code(self):
        return 1 if self.failed else 0


def load_experiment_dataset(config):
    if config.dataset_path is not None:
        return load_dataset(config.dataset_path)
    return gen_conflict_dataset(config.spec)


def _run(job):
    name, point, dataset, cfg = job
    try:
        return name, point, train(None, dataset, cfg), None
    except Exception as exc:  # recorded, the rest of the matrix continues
        log.debug("run %s failed", name, exc_info=True)
        return name, point, None, f"{type(exc).__name__}: {exc}\n{traceback.format_exc(limit=3)}"


def _jobs(config, dataset):
    k = Problem(dataset, config.train).n_groups
    for m in config.methods:
        if m.mode == GRID_MODE:
            for point in itertools.product(m.levels, repeat=k):
                yield m.name, point, dataset, m.train_config(config.train, point)
        else:
            yield m.name, None, dataset, m.train_config(config.train)


def run_experiment(config, dataset=None):
    """Execute ``config``; returns an :class:`ExperimentResult` (check ``exit_code``)."""
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    dataset = dataset if dataset is not None else load_experiment_dataset(config)
    save_dataset(dataset, out / "dataset.csv")

    jobs = list(_jobs(config, dataset))
    if config.workers > 1:
        with ProcessPoolExecutor(config.workers) as pool:
            results = list(pool.map(_run, jobs))
    else:
        results = [_run(j) for j in jobs]

    by_name = {}
    for name, point, report, error in results:
        by_name.setdefault(name, []).append((point, report, error))

    rows, reports, timings = [], {}, []
    for m in config.methods:
        entries = by_name[m.name]
        run_dir = out / "runs" / m.name
        errors = [e for _, _, e in entries if e is not None]
        if m.mode == GRID_MODE:
            ok = [(p, r) for p, r, e in entries if e is None]
            surface = [list(p) + [r.final_val_main] for p, r in ok]
            write_csv(run_dir / "surface.csv", [f"w{c}" for c in range(len(entries[0][0]))] + ["val_main"],
                      surface)
            report = min((r for _, r in ok), key=lambda r: r.final_val_main) if ok else None
        else:
            report = entries[0][1]
        for _, r, _ in entries:
            if r is not None:
                t = r.timing()
                timings.append([m.name, r.mode, t["n"], t["median"], t["mean"]])
        row = {"name": m.name, "mode": m.mode, "status": "ok" if not errors else "failed"}
        if errors:
            row["error"] = errors[0]
            write_json(run_dir / "error.json", {"errors": errors})
        if report is not None:
            reports[m.name] = report
            rep = report.to_dict()
            if m.mode == GRID_MODE:
                rep["grid"] = {"levels": list(m.levels), "points": len(entries), "failed": len(errors)}
            write_json(run_dir / "report.json", rep)
            write_trajectory(run_dir / "weights.csv", report.trajectory)
            row.update(final_val_main=report.final_val_main, final_val_aux=report.final_val_aux,
                       best_val_main=report.best_val_main, final_weights=report.final_weights)
        rows.append(row)
        log.info("%s: %s", m.name, row["status"])

    summary = {"seed": config.seed, "n_classes": int(dataset.n_classes),
               "dataset": config.spec.to_dict() if config.spec is not None else {"path": config.dataset_path},
               "rows": rows}
    diag = _diagnostic(config, dataset, reports)
    if diag is not None:
        summary["diagnostic"] = diag.to_dict()
    write_json(out / "summary.json", summary)
    write_csv(out / "summary.csv", SUMMARY_HEADER,
              [[r["name"], r["mode"], r["status"], r.get("final_val_main"), r.get("final_val_aux"),
                r.get("best_val_main"), " ".join("%.17g" % w for w in r.get("final_weights", []))] for r in rows])
    write_csv(out / "timings.csv", ["name", "mode", "n_batches", "median_s", "mean_s"], timings)
    return ExperimentResult(out, summary, reports)


def _diagnostic(config, dataset, reports):
    names = config.diagnostic
    single, multi = reports.get(names["single"]), reports.get(names["multi"])
    if single is None or multi is None:
        return None
    others = {}
    weights = {names["multi"]: multi.final_weights}
    arb = reports.get(names["arbiter"])
    if arb is not None and names["arbiter"] not in (names["single"], names["multi"]):
        others[names["arbiter"]] = arb.net
        weights[names["arbiter"]] = arb.final_weights
    report = per_region_diagnostic(single.net, multi.net, dataset, others=others, config=config.train,
                                   weights=weights, names=(names["single"], names["multi"]))
    out = Path(config.output_dir)
    write_csv(out / "diagnostic.csv", report.header(), report.rows())
    write_json(out / "diagnostic.json", report.to_dict())
    return report


def summary_matches_reports(out_dir):
    """True when every summary number equals the value in its per-run report."""
    from .io import read_json
    out = Path(out_dir)
    summary = read_json(out / "summary.json")
    for row in summary["rows"]:
        path = out / "runs" / row["name"] / "report.json"
        if row["status"] != "ok" and not path.exists():
            continue
        rep = read_json(path)
        for key in ("final_val_main", "final_val_aux", "final_weights"):
            if row.get(key) != rep[key]:
                return False
        if row.get("best_val_main") != min(e["val_main"] for e in rep["epochs"]):
            return False
    return True
