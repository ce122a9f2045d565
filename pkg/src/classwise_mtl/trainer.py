"""Joint training of the two-head network, with or without the class-wise arbiter."""

import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import losses
from ._validation import NonFiniteError
from .arbiter import ClasswiseArbiter
from .discretize import BinLabeler
from .nn import DenseNet, ParamAdamState, adam_step, backward, forward, sgd_step

log = logging.getLogger(__name__)

MODES = ("single_main", "single_aux", "uniform_sum", "fixed_weighted", "fixed_classwise", "arbiter")
TASKS = ("regression", "classification")


class TrainingDiverged(NonFiniteError):
    pass


@dataclass
class TrainConfig:
    mode: str = "arbiter"
    epochs: int = 30
    batch_size: int = 32
    lr: float = 0.01
    lr_decay_epoch: int = 20
    lr_decayed: float = 0.001
    optimizer: str = "adam"
    hidden: tuple = (64, 64)
    seed: int = 0
    patience: int = None
    # arbiter
    warmup_epochs: int = 10
    alpha: float = 2e-4
    eps: float = 1e-8
    adam_eps: float = None
    window: int = None
    weight_cap: float = None
    eps_in_numerator: bool = True
    initial_class_weights: tuple = None
    # static weightings
    w_t1: float = 1.0
    w_t2: float = 1.0
    class_weights: tuple = None
    aux_normalization: str = "class"
    # task roles
    main_task: str = "regression"
    aux_bins: int = None
    bin_scheme: str = "quantile"

    def __post_init__(self):
        self.hidden = tuple(self.hidden)
        for name in ("class_weights", "initial_class_weights"):
            if getattr(self, name) is not None:
                setattr(self, name, tuple(float(v) for v in getattr(self, name)))
        self.validate()

    @property
    def batches_per_tick(self):
        return self.window if self.window is not None else math.ceil(16 / self.batch_size)

    @property
    def aux_task(self):
        return "classification" if self.main_task == "regression" else "regression"

    def validate(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.main_task not in TASKS:
            raise ValueError(f"main_task must be one of {TASKS}, got {self.main_task!r}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.mode == "arbiter" and not self.epochs > self.warmup_epochs >= 0:
            raise ValueError("arbiter mode needs epochs > warmup_epochs >= 0")
        if self.alpha < 0 or min(self.w_t1, self.w_t2) < 0:
            raise ValueError("alpha and task weights must be non-negative")
        if self.window is not None and self.window < 1:
            raise ValueError("window must be at least one batch")
        if self.mode == "fixed_classwise" and self.class_weights is None:
            raise ValueError("fixed_classwise mode needs class_weights")
        if self.class_weights is not None and min(self.class_weights) < 0:
            raise ValueError("class weights must be non-negative")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"optimizer must be 'adam' or 'sgd', got {self.optimizer!r}")
        if self.aux_normalization not in ("class", "batch"):
            raise ValueError("aux_normalization must be 'class' or 'batch'")
        if self.aux_task == "regression" and self.aux_bins is None:
            raise ValueError("a regression auxiliary task needs aux_bins to define its classes")

    def lr_at(self, epoch):
        return self.lr if epoch < self.lr_decay_epoch else self.lr_decayed

    def to_dict(self):
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown TrainConfig fields: {sorted(unknown)}")
        return cls(**d)


def swap_roles(config):
    """Exchange main and auxiliary tasks; applying it twice gives back ``config``."""
    new_main = "classification" if config.main_task == "regression" else "regression"
    if new_main == "classification" and config.aux_bins is None:
        raise ValueError("the regression target would become auxiliary but no discretizer (aux_bins) is configured")
    return replace(config, main_task=new_main)


@dataclass
class TrainReport:
    mode: str
    config: dict
    epochs: list
    final_weights: list
    trajectory: list
    batch_times: list = field(repr=False)
    steps: int = 0
    stopped_early: bool = False
    net: DenseNet = field(default=None, repr=False)
    groups: object = field(default=None, repr=False)

    @property
    def final_val_main(self):
        return self.epochs[-1]["val_main"]

    @property
    def final_val_aux(self):
        return self.epochs[-1]["val_aux"]

    @property
    def best_val_main(self):
        return min(e["val_main"] for e in self.epochs)

    def timing(self):
        t = np.asarray(self.batch_times)
        return {"mean": float(t.mean()), "median": float(np.median(t)), "n": int(t.size)}

    def to_dict(self):
        return {
            "mode": self.mode,
            "config": self.config,
            "epochs": self.epochs,
            "final_val_main": self.final_val_main,
            "final_val_aux": self.final_val_aux,
            "final_weights": self.final_weights,
            "steps": self.steps,
            "stopped_early": self.stopped_early,
        }


class _Task:
    def __init__(self, kind, targets):
        self.kind = kind
        self.targets = targets

    def point_loss(self, out, target):
        if self.kind == "regression":
            return losses.l1_per_point(out, target)
        return losses.cross_entropy_per_point(out, target)

    def point_grad(self, out, target):
        if self.kind == "regression":
            return losses.l1_grad(out, target)
        return losses.cross_entropy_grad(out, target)


class Problem:
    """A dataset resolved into main task, auxiliary task and class groups per the config roles."""

    def __init__(self, dataset, config):
        self.dataset = dataset
        labels = dataset.aux_labels
        if config.main_task == "regression":
            self.main = _Task("regression", dataset.main_targets)
            self.aux = _Task("classification", labels)
            self.groups = labels
            self.n_groups = dataset.n_classes
            self.labeler = None
        else:
            self.main = _Task("classification", labels)
            self.aux = _Task("regression", dataset.main_targets)
            self.labeler = BinLabeler(config.aux_bins, config.bin_scheme)
            self.labeler.fit(dataset.main_targets[dataset.train_idx])
            self.groups = self.labeler.transform(dataset.main_targets)
            self.n_groups = config.aux_bins

    @property
    def main_dim(self):
        return self.dataset.n_classes if self.main.kind == "classification" else self.main.targets.shape[1]

    @property
    def aux_dim(self):
        return self.dataset.n_classes if self.aux.kind == "classification" else self.aux.targets.shape[1]

    def build_net(self, config):
        return DenseNet(self.dataset.inputs.shape[1], config.hidden, self.main_dim, self.aux_dim,
                        seed=np.random.default_rng([config.seed, 0]))


def _static_weights(config, k):
    """(main scale, class weights) for the non-adaptive modes."""
    mode = config.mode
    if mode == "single_main":
        return 1.0, np.zeros(k)
    if mode == "single_aux":
        return 0.0, np.ones(k)
    if mode == "uniform_sum":
        return 1.0, np.ones(k)
    if mode == "fixed_weighted":
        return config.w_t1, config.w_t2 * np.ones(k)
    if mode == "fixed_classwise":
        w = np.asarray(config.class_weights, dtype=np.float64)
        if w.shape != (k,):
            raise ValueError(f"class_weights has {w.size} entries for {k} classes")
        return 1.0, w
    raise ValueError(mode)


def weighted_aux_grad(point_grad, groups, weights, per_class):
    """Gradient of the class-weighted auxiliary loss with respect to the aux head outputs.

    Each point carries ``w[c] / N_c`` (or ``w[c] / B`` under batch normalization),
    so a class with zero weight contributes exactly zero.
    """
    denom = per_class.counts[groups] if per_class.normalization == "class" else len(groups)
    return (np.asarray(weights)[groups] / denom)[:, None] * point_grad


def evaluate(net, problem, idx):
    """Unweighted mean main and auxiliary losses on the rows ``idx``."""
    main_out, aux_out, _ = forward(net, problem.dataset.inputs[idx])
    main_pts = problem.main.point_loss(main_out, problem.main.targets[idx])
    aux_pts = problem.aux.point_loss(aux_out, problem.aux.targets[idx])
    return float(main_pts.mean()), float(aux_pts.mean())


def train(net, dataset, config, arbiter_hook=None):
    """Train ``net`` on ``dataset`` under ``config``; builds a fresh net when ``net`` is None.

    ``arbiter_hook(arbiter)`` is called once after the arbiter is created,
    which tests use to pin or inspect weights.
    """
    problem = Problem(dataset, config)
    if net is None:
        net = problem.build_net(config)
    if (net.main_dim, net.aux_dim) != (problem.main_dim, problem.aux_dim):
        raise ValueError(f"net heads {(net.main_dim, net.aux_dim)} do not match tasks "
                         f"{(problem.main_dim, problem.aux_dim)}")
    k = problem.n_groups
    arbiter = None
    if config.mode == "arbiter":
        main_scale = 1.0
        arbiter = ClasswiseArbiter(k, config.alpha, config.eps, config.adam_eps, cap=config.weight_cap,
                                   eps_in_numerator=config.eps_in_numerator,
                                   initial_weights=config.initial_class_weights)
        if arbiter_hook is not None:
            arbiter_hook(arbiter)
    else:
        main_scale, static_w = _static_weights(config, k)

    rng = np.random.default_rng([config.seed, 1])
    opt = ParamAdamState()
    train_idx, val_idx = dataset.train_idx, dataset.val_idx
    inputs, groups = dataset.inputs, problem.groups
    main_t, aux_t = problem.main.targets, problem.aux.targets
    per_tick = config.batches_per_tick

    history, batch_times = [], []
    win_main = losses.PerClassLoss.empty(k, "class")
    win_aux = losses.PerClassLoss.empty(k, config.aux_normalization)
    win_batches = 0
    steps = 0
    best, stale, stopped = np.inf, 0, False

    for epoch in range(config.epochs):
        lr = config.lr_at(epoch)
        warm = epoch >= config.warmup_epochs
        order = train_idx[rng.permutation(train_idx.size)]
        sum_main = sum_aux = 0.0
        n_seen = 0
        epoch_steps = 0
        for start in range(0, order.size, config.batch_size):
            t0 = time.perf_counter()
            idx = order[start:start + config.batch_size]
            b = idx.size
            g = groups[idx]
            main_out, aux_out, cache = forward(net, inputs[idx])
            main_pts = problem.main.point_loss(main_out, main_t[idx])
            aux_pts = problem.aux.point_loss(aux_out, aux_t[idx])
            pc_main = losses.partition_by_class(main_pts, g, k, "class")
            pc_aux = losses.partition_by_class(aux_pts, g, k, config.aux_normalization)

            w = arbiter.weights.w if arbiter is not None else static_w
            l_main = float(main_pts.mean())
            l_aux = losses.weighted_aux_loss(pc_aux, w)
            try:
                losses.total_loss(l_aux, main_scale * l_main)
            except NonFiniteError as exc:
                raise TrainingDiverged(f"epoch {epoch} step {steps}: {exc}; last window "
                                       f"main={win_main.as_dict()} aux={win_aux.as_dict()}") from exc

            d_main = (main_scale / b) * problem.main.point_grad(main_out, main_t[idx])
            d_aux = weighted_aux_grad(problem.aux.point_grad(aux_out, aux_t[idx]), g, w, pc_aux)
            grads = backward(net, cache, d_main, d_aux)
            if config.optimizer == "adam":
                adam_step(net.params, grads, opt, lr)
            else:
                sgd_step(net.params, grads, lr)
            steps += 1
            epoch_steps += 1

            if arbiter is not None:
                win_main = win_main + pc_main
                win_aux = win_aux + pc_aux
                win_batches += 1
                if win_batches == per_tick:
                    arbiter.tick(win_main, win_aux, warm)
                    win_main = losses.PerClassLoss.empty(k, "class")
                    win_aux = losses.PerClassLoss.empty(k, config.aux_normalization)
                    win_batches = 0

            sum_main += l_main * b
            sum_aux += float(aux_pts.mean()) * b
            n_seen += b
            batch_times.append(time.perf_counter() - t0)

        val_main, val_aux = evaluate(net, problem, val_idx)
        if not (np.isfinite(val_main) and np.isfinite(val_aux)):
            raise TrainingDiverged(f"non-finite validation loss at epoch {epoch}")
        history.append({
            "epoch": epoch, "lr": lr, "steps": epoch_steps,
            "train_main": sum_main / n_seen, "train_aux": sum_aux / n_seen,
            "val_main": val_main, "val_aux": val_aux,
        })
        log.debug("epoch %d lr=%g val_main=%.5f val_aux=%.5f", epoch, lr, val_main, val_aux)
        if config.patience is not None:
            if val_main < best:
                best, stale = val_main, 0
            else:
                stale += 1
                if stale >= config.patience:
                    stopped = True
                    break

    final_w = arbiter.weights.w if arbiter is not None else static_w
    return TrainReport(
        mode=config.mode,
        config=config.to_dict(),
        epochs=history,
        final_weights=[float(v) for v in final_w],
        trajectory=arbiter.trajectory if arbiter is not None else [],
        batch_times=batch_times,
        steps=steps,
        stopped_early=stopped,
        net=net,
        groups=problem.groups,
    )


def fixed_weighted_baseline(net, dataset, w_t1, w_t2, config):
    """Static ``w_t1 * L_main + w_t2 * L_aux`` training."""
    if min(w_t1, w_t2) < 0:
        raise ValueError("task weights must be non-negative")
    return train(net, dataset, replace(config, mode="fixed_weighted", w_t1=w_t1, w_t2=w_t2))
