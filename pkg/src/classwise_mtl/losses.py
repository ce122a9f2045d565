"""Per-point task losses and their partition by auxiliary class."""

from dataclasses import dataclass

import numpy as np

from ._validation import NonFiniteError, as_labels, as_matrix


def log_softmax(logits):
    logits = as_matrix(logits, "logits")
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def cross_entropy_per_point(logits, labels):
    """``-log softmax(logits)[label]`` for each row."""
    logits = as_matrix(logits, "logits")
    labels = as_labels(labels, logits.shape[1], length=logits.shape[0])
    return -log_softmax(logits)[np.arange(labels.size), labels]


def cross_entropy_grad(logits, labels):
    """Row-wise gradient of :func:`cross_entropy_per_point`: softmax minus one-hot."""
    logits = as_matrix(logits, "logits")
    labels = as_labels(labels, logits.shape[1], length=logits.shape[0])
    grad = np.exp(log_softmax(logits))
    grad[np.arange(labels.size), labels] -= 1.0
    return grad


def l1_per_point(pred, target):
    """Mean absolute error over the output dimension, one value per row."""
    pred = as_matrix(pred, "pred")
    target = as_matrix(target, "target")
    if pred.shape != target.shape:
        raise ValueError(f"pred shape {pred.shape} != target shape {target.shape}")
    return np.abs(pred - target).mean(axis=1)


def l1_grad(pred, target):
    pred = as_matrix(pred, "pred")
    target = as_matrix(target, "target")
    return np.sign(pred - target) / pred.shape[1]


@dataclass
class PerClassLoss:
    """Per-class loss totals for one batch or one accumulation window.

    ``values[c]`` is NaN for a class with no points; use :attr:`present`
    rather than testing for zero.

    ``normalization="class"`` divides each class sum by that class's count,
    ``"batch"`` divides by the total number of points.
    """

    sums: np.ndarray
    counts: np.ndarray
    total: int
    normalization: str = "class"

    @property
    def n_classes(self):
        return self.sums.shape[0]

    @property
    def present(self):
        return self.counts > 0

    @property
    def values(self):
        out = np.full(self.n_classes, np.nan)
        mask = self.present
        denom = self.counts[mask] if self.normalization == "class" else self.total
        out[mask] = self.sums[mask] / denom
        return out

    def as_dict(self):
        vals = self.values
        return {int(c): float(vals[c]) for c in np.flatnonzero(self.present)}

    def __add__(self, other):
        if other.normalization != self.normalization or other.n_classes != self.n_classes:
            raise ValueError("cannot merge per-class losses with different layouts")
        return PerClassLoss(self.sums + other.sums, self.counts + other.counts,
                            self.total + other.total, self.normalization)

    @classmethod
    def empty(cls, n_classes, normalization="class"):
        return cls(np.zeros(n_classes), np.zeros(n_classes, dtype=np.int64), 0, normalization)

    @classmethod
    def from_values(cls, values, n_classes, counts=None):
        """Build a class-normalized record from ``{class: mean}``; counts default to 1."""
        counts = counts or {}
        sums = np.zeros(n_classes)
        cnt = np.zeros(n_classes, dtype=np.int64)
        for c, v in values.items():
            cnt[c] = counts.get(c, 1)
            sums[c] = v * cnt[c]
        return cls(sums, cnt, int(cnt.sum()))


def partition_by_class(distances, labels, n_classes, normalization="class"):
    """Group per-point distances by auxiliary class label."""
    if normalization not in ("class", "batch"):
        raise ValueError(f"unknown normalization {normalization!r}")
    distances = np.asarray(distances, dtype=np.float64)
    labels = as_labels(labels, n_classes, length=distances.shape[0])
    sums = np.bincount(labels, weights=distances, minlength=n_classes)
    counts = np.bincount(labels, minlength=n_classes).astype(np.int64)
    return PerClassLoss(sums, counts, int(distances.shape[0]), normalization)


def _weight_vector(weights, n_classes):
    w = getattr(weights, "w", weights)
    if isinstance(w, dict):
        out = np.full(n_classes, np.nan)
        for c, value in w.items():
            out[int(c)] = value
        return out
    w = np.asarray(w, dtype=np.float64)
    if w.shape[0] < n_classes:
        w = np.concatenate([w, np.full(n_classes - w.shape[0], np.nan)])
    return w


def weighted_aux_loss(per_class, weights):
    """Sum over present classes of ``w[c] * values[c]``.

    ``weights`` may be a :class:`~classwise_mtl.arbiter.ClassWeights`, an
    array indexed by class, or a ``{class: weight}`` dict.
    """
    w = _weight_vector(weights, per_class.n_classes)
    mask = per_class.present
    missing = np.flatnonzero(mask & ~np.isfinite(w[:per_class.n_classes]))
    if missing.size:
        raise KeyError(f"no weight for present class {int(missing[0])}")
    return float(np.dot(w[:per_class.n_classes][mask], per_class.values[mask]))


def total_loss(aux_weighted, main):
    if not (np.isfinite(aux_weighted) and np.isfinite(main)):
        raise NonFiniteError(f"non-finite loss term (aux={aux_weighted}, main={main})")
    return float(aux_weighted) + float(main)
