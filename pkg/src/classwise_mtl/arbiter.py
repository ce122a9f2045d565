"""Online class-wise weights on the auxiliary loss.

Each tick records per-class main and auxiliary losses. Once two
post-warm-up observations of a class exist, the main-loss sensitivity to
that class's weight is estimated as::

    g = (dL_main / L_main0 + eps) / (dL_aux / L_aux0 + eps) * aux_mean

where ``d`` is the change since the class's previous observation and the
``0`` values are the class's first post-warm-up observation. ``g`` drives a
per-class Adam step, and the result is clamped at zero.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np


@dataclass
class ClassWeights:
    w: np.ndarray

    @classmethod
    def ones(cls, n_classes):
        return cls(np.ones(n_classes))

    @property
    def n_classes(self):
        return self.w.shape[0]

    def __getitem__(self, c):
        return float(self.w[c])

    def copy(self):
        return ClassWeights(self.w.copy())

    def as_dict(self):
        return {c: float(v) for c, v in enumerate(self.w)}


@dataclass
class LossLedger:
    """History of per-class losses, one entry per tick in which the class appeared."""

    n_classes: int
    main: dict = field(default_factory=dict)
    aux: dict = field(default_factory=dict)
    ticks: dict = field(default_factory=dict)
    main0: dict = field(default_factory=dict)
    aux0: dict = field(default_factory=dict)
    origin: dict = field(default_factory=dict)
    t: int = 0

    def n_entries(self, c):
        return len(self.main.get(c, ()))

    def n_since_origin(self, c):
        """Entries recorded since (and including) the normalizing observation."""
        if c not in self.origin:
            return 0
        return self.n_entries(c) - self.origin[c]

    def delta(self, c):
        if self.n_entries(c) < 2:
            raise ValueError(f"class {c} has {self.n_entries(c)} entries; two are needed for a difference")
        return self.main[c][-1] - self.main[c][-2], self.aux[c][-1] - self.aux[c][-2]


def record(ledger, per_class_main, per_class_aux, armed=True):
    """Append this tick's losses for every class present in both records.

    With ``armed`` true, a class seen for the first time since arming gets its
    normalizers fixed to the values recorded now. The tick counter always
    advances.
    """
    main_vals, aux_vals = per_class_main.values, per_class_aux.values
    both = per_class_main.present & per_class_aux.present
    for c in map(int, np.flatnonzero(both)):
        ledger.main.setdefault(c, []).append(float(main_vals[c]))
        ledger.aux.setdefault(c, []).append(float(aux_vals[c]))
        ledger.ticks.setdefault(c, []).append(ledger.t)
        if armed and c not in ledger.main0:
            ledger.main0[c] = float(main_vals[c])
            ledger.aux0[c] = float(aux_vals[c])
            ledger.origin[c] = ledger.n_entries(c) - 1
    ledger.t += 1
    return ledger


def naive_gradient(ledger, c, aux_mean_c):
    """Unstabilized ratio-of-differences estimate; may be infinite or NaN."""
    d_main, d_aux = ledger.delta(c)
    with np.errstate(divide="ignore", invalid="ignore"):
        return float(np.float64(d_main) / np.float64(d_aux) * aux_mean_c)


def stabilized_gradient(ledger, c, aux_mean_c, eps=1e-8, eps_in_numerator=True):
    """Normalized, eps-shifted estimate of the main-loss sensitivity to ``w[c]``.

    Returns ``None`` when the shifted denominator is exactly zero, meaning
    the class should not be updated this tick.
    """
    d_main, d_aux = ledger.delta(c)
    if c not in ledger.main0:
        raise ValueError(f"class {c} has no normalizing observation yet")
    main0, aux0 = ledger.main0[c], ledger.aux0[c]
    if main0 == 0 or aux0 == 0:
        warnings.warn(f"class {c}: zero initial loss (main0={main0}, aux0={aux0}); using eps as normalizer",
                      RuntimeWarning, stacklevel=2)
        main0 = main0 or eps
        aux0 = aux0 or eps
    num = d_main / main0 + (eps if eps_in_numerator else 0.0)
    den = d_aux / aux0 + eps
    if den == 0:
        return None
    return num / den * aux_mean_c


@dataclass
class WeightAdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: dict = field(default_factory=dict)


def adam_weight_step(weights, grads, state, alpha, cap=None):
    """Per-class Adam step followed by a clamp at zero.

    Classes missing from ``grads`` keep their weight and moments. A
    non-finite gradient skips its class with a warning.
    """
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    out = weights.copy()
    b1, b2 = state.beta1, state.beta2
    for c, g in grads.items():
        if not np.isfinite(g):
            warnings.warn(f"class {c}: non-finite weight gradient {g}; skipped", RuntimeWarning, stacklevel=2)
            continue
        t = state.step[c] = state.step.get(c, 0) + 1
        m = state.m[c] = b1 * state.m.get(c, 0.0) + (1.0 - b1) * g
        v = state.v[c] = b2 * state.v.get(c, 0.0) + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        w = out.w[c] - alpha * m_hat / (np.sqrt(v_hat) + state.adam_eps)
        w = w if w > 0 else 0.0
        if cap is not None and w > cap:
            w = cap
        out.w[c] = w
    return out


def _tick(weights, ledger, state, per_class_main, per_class_aux, alpha, eps,
          warmup_done, eps_in_numerator=True, cap=None):
    record(ledger, per_class_main, per_class_aux, armed=warmup_done)
    if not warmup_done:
        return weights, {}
    aux_vals = per_class_aux.values
    grads = {}
    both = per_class_main.present & per_class_aux.present
    for c in map(int, np.flatnonzero(both)):
        if ledger.n_since_origin(c) < 2:
            continue
        g = stabilized_gradient(ledger, c, float(aux_vals[c]), eps, eps_in_numerator)
        if g is not None:
            grads[c] = g
    return adam_weight_step(weights, grads, state, alpha, cap), grads


def arbiter_tick(weights, ledger, state, per_class_main, per_class_aux, alpha, eps, warmup_done):
    """Record one tick and, after warm-up, update every eligible class weight."""
    weights, _ = _tick(weights, ledger, state, per_class_main, per_class_aux, alpha, eps, warmup_done)
    return weights, ledger, state


class ClasswiseArbiter:
    """Stateful owner of the class weights, loss ledger and weight optimizer.

    ``trajectory`` collects one row per class per tick:
    ``(tick, class_id, w, g, L_main_c, L_aux_c)`` with ``g`` None when the
    class was not updated.
    """

    def __init__(self, n_classes, alpha=2e-4, eps=1e-8, adam_eps=None, beta1=0.9, beta2=0.999,
                 cap=None, eps_in_numerator=True, initial_weights=None):
        self.n_classes = n_classes
        self.alpha = alpha
        self.eps = eps
        self.cap = cap
        self.eps_in_numerator = eps_in_numerator
        if initial_weights is None:
            self.weights = ClassWeights.ones(n_classes)
        else:
            self.weights = ClassWeights(np.array(initial_weights, dtype=np.float64))
        self.ledger = LossLedger(n_classes)
        self.state = WeightAdamState(beta1, beta2, eps if adam_eps is None else adam_eps)
        self.trajectory = []

    def tick(self, per_class_main, per_class_aux, warmup_done):
        tick = self.ledger.t
        self.weights, grads = _tick(self.weights, self.ledger, self.state, per_class_main, per_class_aux,
                                    self.alpha, self.eps, warmup_done, self.eps_in_numerator, self.cap)
        main_vals, aux_vals = per_class_main.values, per_class_aux.values
        for c in map(int, np.flatnonzero(per_class_main.present & per_class_aux.present)):
            self.trajectory.append((tick, c, float(self.weights.w[c]), grads.get(c),
                                    float(main_vals[c]), float(aux_vals[c])))
        return grads
