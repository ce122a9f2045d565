"""Synthetic multi-task problems whose auxiliary classes have a designed effect on the main task.

Latent inputs are split into a *shared* block that drives the main target, a
*distractor* block unrelated to it, and nuisance dimensions. Auxiliary
labels come from three mechanisms:

helpful
    a quantile bin of the first shared coordinate. The main target contains
    a step on the same bins, so learning these labels teaches the trunk a
    feature the main head needs.
harmful
    stripes of a high-frequency function of the distractor block, with a
    fraction of the class membership decided by the main-target noise so
    that fitting it on the training set rewards memorizing noise.
neutral
    labels drawn independently of the input.
"""

import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import ndtr

from .discretize import BinLabeler, apply_edges, discretize

__all__ = [
    "TransferSpec", "MultiTaskDataset", "gen_conflict_dataset", "default_conflict_spec",
    "discretize", "apply_edges", "BinLabeler", "grid_search_oracle", "ablation_oracle",
    "save_dataset", "load_dataset",
]

POLARITIES = ("helpful", "harmful", "neutral")


@dataclass
class TransferSpec:
    polarities: tuple = ("helpful", "helpful", "harmful", "neutral")
    input_dim: int = 16
    n_train: int = 6400
    n_val: int = 1600
    noise: float = 0.5
    seed: int = 0
    n_shared: int = 4
    n_distractor: int = 4
    stripe_freq: int = 3
    contamination: float = 0.8

    def __post_init__(self):
        self.polarities = tuple(self.polarities)

    @property
    def n_classes(self):
        return len(self.polarities)

    def classes(self, polarity):
        return [c for c, p in enumerate(self.polarities) if p == polarity]

    def validate(self):
        if self.n_classes < 2:
            raise ValueError("need at least two classes")
        bad = [p for p in self.polarities if p not in POLARITIES]
        if bad:
            raise ValueError(f"unknown polarity {bad[0]!r}; expected one of {POLARITIES}")
        if self.input_dim < self.n_shared + self.n_distractor:
            raise ValueError(f"input_dim={self.input_dim} cannot hold {self.n_shared} shared "
                             f"and {self.n_distractor} distractor dimensions")
        if self.n_shared < 1 or (self.classes("harmful") and self.n_distractor < 2):
            raise ValueError("need one shared dimension and, for harmful classes, two distractor dimensions")
        if min(self.n_train, self.n_val) < self.n_classes:
            raise ValueError("each split needs at least one sample per class")
        if self.noise < 0 or not 0 <= self.contamination <= 1:
            raise ValueError("noise must be >= 0 and contamination within [0, 1]")

    def to_dict(self):
        d = asdict(self)
        d["polarities"] = list(self.polarities)
        return d


def default_conflict_spec(seed=0, **overrides):
    return TransferSpec(seed=seed, **overrides)


@dataclass
class MultiTaskDataset:
    inputs: np.ndarray
    main_targets: np.ndarray
    aux_labels: np.ndarray
    train_idx: np.ndarray
    val_idx: np.ndarray
    n_classes: int
    spec: TransferSpec = None
    extras: dict = field(default_factory=dict, repr=False)

    def split(self, which):
        idx = self.train_idx if which == "train" else self.val_idx
        return self.inputs[idx], self.main_targets[idx], self.aux_labels[idx]


def _step_value(bins, n_bins):
    return bins - 0.5 * (n_bins - 1)


def gen_conflict_dataset(spec):
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    n = spec.n_train + spec.n_val
    k = spec.n_classes
    z = rng.standard_normal((n, spec.input_dim))
    shared = z[:, :spec.n_shared]
    helpful, harmful, neutral = (spec.classes(p) for p in POLARITIES)

    # main target: steps on the helpful bins plus smooth shared structure
    n_steps = max(len(helpful), 2)
    u_shared = ndtr(shared[:, 0])
    bins = np.minimum((u_shared * n_steps).astype(np.int64), n_steps - 1)
    f = 1.5 * _step_value(bins, n_steps)
    if spec.n_shared > 1:
        f = f + 0.75 * np.sin(2.0 * shared[:, 1])
    if spec.n_shared > 3:
        f = f + 0.5 * shared[:, 2] * shared[:, 3]
    main_noise = rng.standard_normal(n)
    y = f + spec.noise * main_noise

    labels = np.full(n, -1, dtype=np.int64)
    u_neutral = rng.uniform(size=n)
    neutral_pick = rng.integers(0, max(len(neutral), 1), size=n)
    p_neutral = len(neutral) / k
    is_neutral = u_neutral < p_neutral
    if neutral:
        labels[is_neutral] = np.asarray(neutral)[neutral_pick[is_neutral]]

    if harmful:
        d = z[:, spec.n_shared:spec.n_shared + spec.n_distractor]
        stripe = np.mod(spec.stripe_freq * (ndtr(d[:, 0]) + ndtr(d[:, 1])), 1.0)
        # contaminated points use the (unobservable) main noise instead of the stripes
        contaminated = rng.uniform(size=n) < spec.contamination
        score = np.where(contaminated, ndtr(-main_noise), stripe)
        p_harm = len(harmful) / (k - len(neutral))
        take = (~is_neutral) & (score < p_harm)
        which = np.minimum((score / p_harm * len(harmful)).astype(np.int64), len(harmful) - 1)
        labels[take] = np.asarray(harmful)[which[take]]

    rest = labels < 0
    if helpful:
        h_bins = np.minimum((u_shared * len(helpful)).astype(np.int64), len(helpful) - 1)
        labels[rest] = np.asarray(helpful)[h_bins[rest]]
    elif rest.any():
        labels[rest] = rng.integers(0, k, size=int(rest.sum()))

    order = rng.permutation(n)
    return MultiTaskDataset(
        inputs=z,
        main_targets=y.reshape(-1, 1),
        aux_labels=labels,
        train_idx=np.sort(order[:spec.n_train]),
        val_idx=np.sort(order[spec.n_train:]),
        n_classes=k,
        spec=spec,
        extras={"clean_main": f.reshape(-1, 1)},
    )


def save_dataset(dataset, path):
    """Write a dataset as a JSON header line followed by comma-separated rows.

    Each row is ``split, x_0..x_{D-1}, y_0..y_{M-1}, aux_label`` with floats
    at 17 significant digits.
    """
    header = {
        "n_classes": dataset.n_classes,
        "input_dim": dataset.inputs.shape[1],
        "main_dim": dataset.main_targets.shape[1],
        "spec": dataset.spec.to_dict() if dataset.spec is not None else None,
    }
    in_train = np.zeros(len(dataset.inputs), dtype=bool)
    in_train[dataset.train_idx] = True
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for i in range(len(dataset.inputs)):
            cells = ["train" if in_train[i] else "val"]
            cells += ["%.17g" % v for v in dataset.inputs[i]]
            cells += ["%.17g" % v for v in dataset.main_targets[i]]
            cells.append(str(int(dataset.aux_labels[i])))
            fh.write(",".join(cells) + "\n")
    return path


def load_dataset(path):
    with open(path, encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        body = fh.read()
    d, m = header["input_dim"], header["main_dim"]
    split = np.loadtxt(io.StringIO(body), delimiter=",", usecols=0, dtype=str, ndmin=1)
    table = np.loadtxt(io.StringIO(body), delimiter=",", usecols=range(1, d + m + 2), ndmin=2)
    spec = TransferSpec(**header["spec"]) if header.get("spec") else None
    return MultiTaskDataset(
        inputs=table[:, :d],
        main_targets=table[:, d:d + m],
        aux_labels=table[:, d + m].astype(np.int64),
        train_idx=np.flatnonzero(split == "train"),
        val_idx=np.flatnonzero(split == "val"),
        n_classes=header["n_classes"],
        spec=spec,
    )


def grid_search_oracle(dataset, weight_grid, config, net_factory=None):
    """Train one fixed-class-weight run per grid vector; return the best by validation main loss.

    Returns ``(best_weights, best_main_loss, surface)`` with ``surface`` a list
    of ``(weights, main_val_loss)`` in grid order.
    """
    from dataclasses import replace

    from .trainer import train

    weight_grid = [np.asarray(w, dtype=np.float64) for w in weight_grid]
    if not weight_grid:
        raise ValueError("weight grid is empty")
    for w in weight_grid:
        if w.shape != (dataset.n_classes,):
            raise ValueError(f"grid vector {w} does not cover {dataset.n_classes} classes")
    surface = []
    for w in weight_grid:
        cfg = replace(config, mode="fixed_classwise", class_weights=tuple(float(v) for v in w))
        net = net_factory() if net_factory is not None else None
        report = train(net, dataset, cfg)
        surface.append((w, report.final_val_main))
    best = min(range(len(surface)), key=lambda i: surface[i][1])
    return surface[best][0], surface[best][1], surface


def ablation_oracle(dataset, config):
    """Main validation loss with each class's auxiliary term dropped, relative to keeping all.

    Returns ``{class: loss_without_class - loss_with_all}``; positive means the
    class was helping the main task.
    """
    k = dataset.n_classes
    grid = [np.ones(k)] + [np.where(np.arange(k) == c, 0.0, 1.0) for c in range(k)]
    _, _, surface = grid_search_oracle(dataset, grid, config)
    base = surface[0][1]
    return {c: surface[c + 1][1] - base for c in range(k)}
