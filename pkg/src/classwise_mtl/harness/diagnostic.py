"""Main-task error broken down by auxiliary-class region of the validation set."""

from dataclasses import dataclass, field

import numpy as np

from ..nn import forward
from ..trainer import Problem, TrainConfig


@dataclass
class DiagnosticReport:
    methods: list
    regions: list
    sizes: list
    errors: dict
    full: dict
    weights: dict = field(default_factory=dict)
    baseline: str = None

    @property
    def empty(self):
        return [r for r, n in zip(self.regions, self.sizes) if n == 0]

    def delta(self, method, against=None):
        """Per-region error of ``method`` minus ``against`` (default: the first method)."""
        base = self.errors[against or self.baseline or self.methods[0]]
        return [e - b for e, b in zip(self.errors[method], base)]

    def recombined(self, method):
        n = np.asarray(self.sizes, dtype=np.float64)
        e = np.asarray(self.errors[method])
        keep = n > 0
        return float(np.sum(n[keep] * e[keep]) / n.sum())

    def header(self):
        cols = ["region", "size", "empty"] + [f"err_{m}" for m in self.methods]
        return cols + [f"delta_{m}" for m in self.methods[1:]]

    def rows(self):
        base = self.methods[0]
        out = [["full", sum(self.sizes), False] + [self.full[m] for m in self.methods]
               + [self.full[m] - self.full[base] for m in self.methods[1:]]]
        deltas = {m: self.delta(m, base) for m in self.methods[1:]}
        for i, (r, n) in enumerate(zip(self.regions, self.sizes)):
            errs = [None if n == 0 else self.errors[m][i] for m in self.methods]
            out.append([r, n, n == 0] + errs + [None if n == 0 else deltas[m][i] for m in self.methods[1:]])
        return out

    def to_dict(self):
        return {"methods": self.methods, "regions": self.regions, "sizes": self.sizes, "empty": self.empty,
                "errors": self.errors, "full": self.full, "weights": self.weights,
                "deltas": {m: self.delta(m, self.methods[0]) for m in self.methods[1:]}}


def per_region_diagnostic(net_single, net_multi, dataset, others=None, config=None, weights=None,
                          names=("single_main", "multi")):
    """Compare main-task validation error region by region.

    ``others`` maps extra method names to nets (e.g. the arbiter run). Empty
    regions keep their slot with NaN errors and are listed in ``.empty``.
    """
    problem = Problem(dataset, config or TrainConfig())
    nets = {names[0]: net_single, names[1]: net_multi, **(others or {})}
    idx = dataset.val_idx
    groups = problem.groups[idx]
    regions = list(range(problem.n_groups))
    sizes = [int(np.sum(groups == r)) for r in regions]
    errors, full = {}, {}
    for name, net in nets.items():
        out, _, _ = forward(net, dataset.inputs[idx])
        pts = problem.main.point_loss(out, problem.main.targets[idx])
        full[name] = float(pts.mean())
        errors[name] = [float(pts[groups == r].mean()) if n else float("nan") for r, n in zip(regions, sizes)]
    return DiagnosticReport(list(nets), regions, sizes, errors, full, weights=dict(weights or {}),
                            baseline=names[0])
