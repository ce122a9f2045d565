"""Per-batch wall time of the plain sum against the adaptive arbiter."""

from dataclasses import replace

import numpy as np

from ..trainer import train

METHODS = ("uniform_sum", "arbiter")


def measure_overhead(dataset, config, repeats=5, skip_batches=20, methods=METHODS):
    """Time identical runs of each method, interleaved to share machine drift.

    The first ``skip_batches`` batches of every run are dropped as warm-up.
    Returns per-method median/mean over all kept batches, the median of each
    repeat, and the arbiter/uniform ratios of medians and means.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    kept = {m: [] for m in methods}
    per_repeat = {m: [] for m in methods}
    for _ in range(repeats):
        for m in methods:
            report = train(None, dataset, replace(config, mode=m))
            t = np.asarray(report.batch_times[skip_batches:])
            if t.size == 0:
                raise ValueError(f"skip_batches={skip_batches} leaves no timed batches")
            kept[m].append(t)
            per_repeat[m].append(float(np.median(t)))
    result = {"repeats": repeats, "skip_batches": skip_batches, "methods": {}}
    for m in methods:
        t = np.concatenate(kept[m])
        meds = per_repeat[m]
        result["methods"][m] = {
            "median": float(np.median(t)), "mean": float(t.mean()), "n_batches": int(t.size),
            "repeat_medians": meds, "repeat_spread": max(meds) / min(meds) - 1.0,
        }
    if set(METHODS) <= set(methods):
        a, u = result["methods"]["arbiter"], result["methods"]["uniform_sum"]
        result["ratio_median"] = a["median"] / u["median"]
        result["ratio_mean"] = a["mean"] / u["mean"]
    return result


def timing_rows(result):
    rows = []
    for m, s in result["methods"].items():
        for i, med in enumerate(s["repeat_medians"]):
            rows.append([m, i, med])
        rows.append([m, "all", s["median"]])
    return rows
