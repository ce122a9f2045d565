"""Acceptance gate: one test and one PASS/FAIL line per criterion, at the pinned tolerances.

Run alone with ``pytest tests/test_acceptance.py -v``; the verdict lines are
printed in the terminal summary. Criterion 6 trains 3 x (81 + 2) networks
and dominates the runtime.
"""

import math
import time
from itertools import product

import numpy as np
import pytest

from classwise_mtl.arbiter import (ClassWeights, LossLedger, WeightAdamState, adam_weight_step,
                                   naive_gradient, record, stabilized_gradient)
from classwise_mtl.harness import measure_overhead, per_region_diagnostic
from classwise_mtl.losses import PerClassLoss, cross_entropy_grad, cross_entropy_per_point, partition_by_class
from classwise_mtl.nn import DenseNet, backward, finite_diff_grad, forward
from classwise_mtl.synthlab import default_conflict_spec, gen_conflict_dataset, grid_search_oracle
from classwise_mtl.trainer import TrainConfig, swap_roles, train, weighted_aux_grad
from conftest import VERDICTS

SEEDS = (0, 1, 2)


def verdict(n, ok, detail, elapsed):
    VERDICTS.append(f"criterion {n}: {'PASS' if ok else 'FAIL'} ({elapsed:.1f}s) {detail}")
    assert ok, detail


_datasets = {}
_runs = {}


def dataset(seed):
    if seed not in _datasets:
        _datasets[seed] = gen_conflict_dataset(default_conflict_spec(seed))
    return _datasets[seed]


def run(seed, mode, **kw):
    key = (seed, mode, tuple(sorted(kw.items())))
    if key not in _runs:
        _runs[key] = train(None, dataset(seed), TrainConfig(mode=mode, seed=seed, **kw))
    return _runs[key]


def test_criterion_1_backprop_matches_central_differences():
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        hidden = tuple(int(h) for h in rng.integers(2, 9, size=rng.integers(0, 3)))
        d, m, k, b = (int(v) for v in rng.integers(1, 6, size=4))
        k += 1
        net = DenseNet(d, hidden, m, k, seed=seed)
        for key in net.params:
            net.params[key] = net.params[key] + rng.normal(scale=0.1, size=net.params[key].shape)
        X, T, labels = rng.normal(size=(b, d)), rng.normal(size=(b, m)), rng.integers(0, k, size=b)

        def loss(n, _):
            main, aux, _ = forward(n, X)
            return 0.5 * np.sum((main - T) ** 2) / b + cross_entropy_per_point(aux, labels).mean()

        main, aux, cache = forward(net, X)
        analytic = backward(net, cache, (main - T) / b, cross_entropy_grad(aux, labels) / b)
        numeric = finite_diff_grad(net, None, loss, h=1e-5)
        for key in analytic:
            scale = np.maximum(np.maximum(np.abs(analytic[key]), np.abs(numeric[key])), 1e-6)
            worst = max(worst, float(np.max(np.abs(analytic[key] - numeric[key]) / scale)))
    verdict(1, worst <= 1e-4, f"max relative error {worst:.3e} over 20 nets (limit 1e-4)", time.perf_counter() - t0)


def test_criterion_2_zero_alpha_is_bitwise_uniform_sum():
    t0 = time.perf_counter()
    same = []
    for seed in SEEDS:
        arb = train(None, dataset(seed), TrainConfig(mode="arbiter", alpha=0.0, seed=seed))
        uni = run(seed, "uniform_sum")
        same.append(all(arb.net.params[k].tobytes() == uni.net.params[k].tobytes() for k in uni.net.params))
    verdict(2, all(same), f"bitwise identical parameters per seed {same}", time.perf_counter() - t0)


def two_tick_ledger(m_prev, m_now, a_prev, a_now):
    led = LossLedger(1)
    record(led, PerClassLoss.from_values({0: m_prev}, 1), PerClassLoss.from_values({0: a_prev}, 1))
    record(led, PerClassLoss.from_values({0: m_now}, 1), PerClassLoss.from_values({0: a_now}, 1))
    led.main0[0] = led.aux0[0] = 1.0
    return led


def test_criterion_3_stabilized_gradient_reduces_to_naive_form():
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    worst, n = 0.0, 0
    while n < 1000:
        m_prev, m_now, a_prev, a_now = rng.uniform(0.01, 5.0, size=4)
        if a_now == a_prev:
            continue
        aux_mean = rng.uniform(0.0, 5.0)
        led = two_tick_ledger(m_prev, m_now, a_prev, a_now)
        g = stabilized_gradient(led, 0, aux_mean, eps=0.0)
        ref = naive_gradient(led, 0, aux_mean)
        worst = max(worst, abs(g - ref) / max(abs(ref), 1.0))
        n += 1
    verdict(3, worst <= 1e-12, f"max deviation {worst:.3e} on 1000 pairs (limit 1e-12)", time.perf_counter() - t0)


def test_criterion_4_weights_stay_nonnegative():
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    violations = 0
    for _ in range(10_000):
        alpha = float(rng.choice([0.0, 1e-4, 1e-2, 0.5, 5.0]))
        w, state = ClassWeights(rng.uniform(0, 2, size=1)), WeightAdamState()
        # heavy-tailed stream, like ratios of small loss differences
        for g in rng.standard_cauchy(size=int(rng.integers(1, 30))) * 10 ** rng.uniform(-3, 3):
            w = adam_weight_step(w, {0: float(g)}, state, alpha)
            violations += int(w.w[0] < 0)
    verdict(4, violations == 0, f"{violations} negative weights across 10000 streams", time.perf_counter() - t0)


def test_criterion_5_zero_weight_class_is_gated():
    t0 = time.perf_counter()
    ds = dataset(0)
    net = DenseNet(16, (64, 64), 1, 4, seed=5)
    worst = 0.0
    rng = np.random.default_rng(5)
    for c in range(4):
        w = np.ones(4)
        w[c] = 0.0
        for _ in range(10):
            idx = rng.choice(ds.train_idx, size=32, replace=False)
            labels = ds.aux_labels[idx]
            _, aux, cache = forward(net, ds.inputs[idx])
            pc = partition_by_class(cross_entropy_per_point(aux, labels), labels, 4)
            d_aux = weighted_aux_grad(cross_entropy_grad(aux, labels), labels, w, pc)
            d_aux = np.where((labels == c)[:, None], d_aux, 0.0)
            grads = backward(net, cache, np.zeros((32, 1)), d_aux)
            worst = max(worst, max(float(np.abs(grads[k]).max()) for k in net.trunk_keys()))
    verdict(5, worst <= 1e-12, f"max trunk gradient from zero-weight class points {worst:.3e}",
            time.perf_counter() - t0)


def grid_minimum(seed):
    key = (seed, "grid")
    if key not in _runs:
        grid = [np.array(p) for p in product((0.0, 0.5, 1.0), repeat=4)]
        _runs[key] = grid_search_oracle(dataset(seed), grid, TrainConfig(seed=seed))
    return _runs[key]


@pytest.mark.slow
def test_criterion_6_conflict_experiment():
    t0 = time.perf_counter()
    spec = default_conflict_spec(0)
    helpful, harmful = spec.classes("helpful"), spec.classes("harmful")
    a_ok, b_ok, c_ok, lines = [], [], [], []
    for seed in SEEDS:
        arb, uni = run(seed, "arbiter"), run(seed, "uniform_sum")
        best_w, best, _ = grid_minimum(seed)
        w = arb.final_weights
        a_ok.append(all(w[h] < 0.5 * w[g] for h in harmful for g in helpful))
        b_ok.append(arb.final_val_main <= uni.final_val_main)
        c_ok.append(arb.final_val_main <= 1.05 * best)
        lines.append(f"seed {seed}: w={[round(v, 3) for v in w]} arbiter={arb.final_val_main:.4f} "
                     f"uniform={uni.final_val_main:.4f} grid_min={best:.4f} at {best_w.tolist()}")
    ok = all(a_ok) and all(b_ok) and all(c_ok)
    detail = f"(a) {a_ok} (b) {b_ok} (c) {c_ok}; " + "; ".join(lines)
    verdict(6, ok, detail, time.perf_counter() - t0)


@pytest.mark.slow
def test_criterion_7_per_region_diagnostic():
    t0 = time.perf_counter()
    spec = default_conflict_spec(0)
    helpful, harmful = spec.classes("helpful"), spec.classes("harmful")
    ok, parts = True, []
    for seed in SEEDS:
        single, uni, arb = run(seed, "single_main"), run(seed, "uniform_sum"), run(seed, "arbiter")
        report = per_region_diagnostic(single.net, uni.net, dataset(seed), others={"arbiter": arb.net},
                                       names=("single_main", "uniform_sum"))
        e = report.errors
        help_ok = all(e["arbiter"][c] <= e["single_main"][c] for c in helpful)
        harm_ok = all(e["arbiter"][c] <= e["uniform_sum"][c] for c in harmful)
        ok &= help_ok and harm_ok
        parts.append(f"seed {seed}: helpful {help_ok} harmful {harm_ok}")
    verdict(7, ok, "; ".join(parts), time.perf_counter() - t0)


def test_criterion_8_arbiter_overhead():
    t0 = time.perf_counter()
    cfg = TrainConfig(epochs=2, warmup_epochs=0, seed=0)
    result = measure_overhead(dataset(0), cfg, repeats=5, skip_batches=20)
    ratio = result["ratio_median"]
    spread = {m: round(s["repeat_spread"], 3) for m, s in result["methods"].items()}
    verdict(8, ratio <= 2.5, f"median per-batch ratio {ratio:.3f} (mean ratio {result['ratio_mean']:.3f}, "
            f"repeat spread {spread}; limit 2.5)", time.perf_counter() - t0)


def test_criterion_9_role_swap_with_ten_quantile_bins():
    t0 = time.perf_counter()
    cfg = swap_roles(TrainConfig(mode="arbiter", aux_bins=10, seed=0))
    report = train(None, dataset(0), cfg)
    finite = all(math.isfinite(e[k]) for e in report.epochs for k in ("train_main", "train_aux", "val_main", "val_aux"))
    w = report.final_weights
    ok = finite and len(w) == 10 and all(v >= 0 for v in w)
    verdict(9, ok, f"finite={finite} weights={[round(v, 3) for v in w]}", time.perf_counter() - t0)

