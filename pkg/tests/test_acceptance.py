"""End-to-end acceptance suite.

Every test here checks one contract of the package at its stated
tolerance and prints a single pass/fail line; run with

    pytest tests/test_acceptance.py -v -s

The heavy benchmarks (the averaged-iterate bound and the paired
convergence comparison) take a couple of minutes combined.
"""

import math
import time

import numpy as np
import pytest

import sketchcond as sc
from sketchcond import rng
from sketchcond.losses import batch_loss_grads, dataset_eval
from sketchcond.neural import backward, forward, init_tiny_net
from sketchcond.optimizer import _INDEX_STREAM


def _report(num: int, name: str, ok: bool, detail: str = "") -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] criterion {num:>2}: {name} {detail}".rstrip())
    assert ok, f"criterion {num} failed: {name} {detail}"


# ---------------------------------------------------------------------------
# 1. low-rank conditioner inverse identity
# ---------------------------------------------------------------------------

def test_01_lowrank_inverse_identity():
    g = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        n = int(g.integers(2, 65))
        k = int(g.integers(1, min(8, n - 1) + 1))
        q, _ = np.linalg.qr(g.standard_normal((n, k)))
        m = g.standard_normal((k, k))
        b = m @ m.T + 0.1 * np.eye(k)
        cond = sc.LowRankConditioner(q=q, b=b, b_inv=np.linalg.inv(b),
                                     a=float(g.uniform(0.05, 10.0)))
        err = np.max(np.abs(cond.materialize() @ cond.explicit_inverse() - np.eye(n)))
        worst = max(worst, err)
    elapsed = time.perf_counter() - t0
    _report(1, "low-rank inverse identity", worst < 1e-9 and elapsed < 5.0,
            f"(max error {worst:.2e}, {elapsed:.1f}s)")


# ---------------------------------------------------------------------------
# 2. PSD square root accuracy
# ---------------------------------------------------------------------------

def test_02_psd_square_root():
    g = np.random.default_rng(202)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        n = int(g.integers(2, 129))
        a = g.standard_normal((n, n + 4))
        c = a @ a.T / n
        s, _ = sc.psd_sqrt_pair(c)
        worst = max(worst, np.linalg.norm(s @ s - c) / np.linalg.norm(c))
    elapsed = time.perf_counter() - t0
    _report(2, "PSD square root", worst < 1e-8 and elapsed < 10.0,
            f"(max rel error {worst:.2e}, {elapsed:.1f}s)")


# ---------------------------------------------------------------------------
# 3 + 4. sketch quality on a fast-decay matrix, 200 seeds
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def sketch_trials():
    g = np.random.default_rng(303)
    n, m, k = 32, 500, 4
    u, _ = np.linalg.qr(g.standard_normal((n, n)))
    v, _ = np.linalg.qr(g.standard_normal((m, n)))
    s = np.arange(1, n + 1, dtype=np.float64) ** -3.0
    x = (u * s) @ v.T

    sv = np.linalg.svd(x, compute_uv=False)
    best_residual = float(np.sqrt(np.sum(sv[k:] ** 2)))
    trace_c = float(np.vdot(x, x) / m)
    trace_ck = float(np.sum(sv[:k] ** 2) / m)

    t0 = time.perf_counter()
    residuals, trace_gaps = [], []
    for seed in range(200):
        q = sc.randomized_range_finder(x, sc.SketchConfig(k=k, r=8, seed=seed))
        residuals.append(float(np.linalg.norm(x - q @ (q.T @ x))))
        trace_gaps.append(trace_c - float(np.vdot(q.T @ x, q.T @ x) / m))
    elapsed = time.perf_counter() - t0
    return {
        "best_residual": best_residual,
        "residuals": np.array(residuals),
        "trace_gaps": np.array(trace_gaps),
        "best_trace_gap": trace_c - trace_ck,
        "elapsed": elapsed,
    }


def test_03_sketch_projection_quality(sketch_trials):
    mean = sketch_trials["residuals"].mean()
    limit = 2.1 * sketch_trials["best_residual"]
    ok = mean <= limit and sketch_trials["elapsed"] < 30.0
    _report(3, "sketch projection quality",
            ok, f"(mean residual {mean:.4f} <= {limit:.4f}, {sketch_trials['elapsed']:.1f}s)")


def test_04_sketch_trace_inequality(sketch_trials):
    mean = sketch_trials["trace_gaps"].mean()
    limit = 4.2 * sketch_trials["best_trace_gap"]
    violations = int(np.sum(sketch_trials["trace_gaps"] > limit))
    if violations:
        print(f"    note: {violations} per-trial excursions above the mean bound")
    _report(4, "captured-trace inequality", mean <= limit,
            f"(mean gap {mean:.3e} <= {limit:.3e})")


# ---------------------------------------------------------------------------
# 5. captured trace never beats the best rank-k trace, any orthonormal Q
# ---------------------------------------------------------------------------

def test_05_captured_trace_below_best_rank_k():
    g = np.random.default_rng(505)
    n, k = 32, 5
    violations = 0
    worst_excess = -np.inf
    for _ in range(100):
        a = g.standard_normal((n, n))
        c = a @ a.T / n
        q, _ = np.linalg.qr(g.standard_normal((n, k)))
        captured = np.trace(q.T @ c @ q)
        top_k = np.sort(np.linalg.eigvalsh(c))[::-1][:k].sum()
        worst_excess = max(worst_excess, captured - top_k)
        if captured > top_k + 1e-10:
            violations += 1
    _report(5, "captured trace below best rank-k", violations == 0,
            f"(worst excess {worst_excess:.2e}, violations {violations})")


# ---------------------------------------------------------------------------
# 6. trace-inverse minimizer optimality
# ---------------------------------------------------------------------------

def test_06_trace_inverse_minimizer():
    g = np.random.default_rng(606)
    worst_eq = 0.0
    beaten = 0
    for _ in range(50):
        a = g.standard_normal((5, 5))
        c = a @ a.T / 5 + 0.1 * np.eye(5)
        m_star, value = sc.trace_inverse_minimizer(c)
        attained = np.trace(np.linalg.inv(m_star) @ c)
        worst_eq = max(worst_eq, abs(attained - value) / max(value, 1.0))
        for _ in range(500):
            r = g.standard_normal((5, 5))
            m = r @ r.T + 0.01 * np.eye(5)
            m /= np.trace(m)
            if np.trace(np.linalg.inv(m) @ c) < value - 1e-9:
                beaten += 1
        for _ in range(500):
            r = g.standard_normal((5, 5))
            spd = r @ r.T + 0.01 * np.eye(5)
            if np.trace(spd) * np.trace(np.linalg.inv(spd) @ c) < value - 1e-9:
                beaten += 1
    _report(6, "trace-inverse minimizer", worst_eq <= 1e-9 and beaten == 0,
            f"(worst equality error {worst_eq:.2e}, better points found {beaten})")


# ---------------------------------------------------------------------------
# 7. identity conditioner reduces to plain SGD, bitwise
# ---------------------------------------------------------------------------

def _plain_sgd_reference(data, cfg, rho):
    p, n = data.num_classes, data.n
    w = np.zeros((p, n))
    w_sum = np.zeros((p, n))
    idx = rng.integers(rng.split(cfg.seed, _INDEX_STREAM), cfg.iterations, data.m)
    for t in range(cfg.iterations):
        x = data.x[:, idx[t]]
        y = data.y[idx[t]]
        s = w @ x
        e = np.exp(s - s.max())
        grad = e / e.sum()
        grad[y] -= 1.0
        if cfg.step_size_mode == "fixed":
            eta = cfg.eta
        elif cfg.step_size_mode == "theory":
            eta = cfg.sigma / (rho * math.sqrt(cfg.iterations))
        else:
            eta = cfg.eta0 * (1.0 + cfg.gamma * t) ** (-cfg.power)
        w_sum += w
        w = w - eta * np.outer(grad, x)
    return w, w_sum / cfg.iterations


def test_07_identity_reduction_bitwise():
    fixtures = [
        (sc.SyntheticSpec(n=6, m=80, p=3, decay_power=1.0, noise=0.3, seed=71),
         sc.TrainConfig(iterations=1000, step_size_mode="fixed", eta=0.3, seed=171,
                        checkpoint_every=500)),
        (sc.SyntheticSpec(n=12, m=150, p=2, decay_power=2.0, noise=0.1, seed=72),
         sc.TrainConfig(iterations=1000, step_size_mode="schedule", eta0=0.05,
                        gamma=1e-3, power=0.75, seed=172, checkpoint_every=500)),
        (sc.SyntheticSpec(n=9, m=60, p=4, decay_power=0.5, noise=0.5, seed=73),
         sc.TrainConfig(iterations=1000, step_size_mode="theory", sigma=2.0, seed=173,
                        checkpoint_every=500)),
    ]
    identical = True
    for spec, cfg in fixtures:
        data, _ = sc.generate_synthetic(spec)
        state, _ = sc.train(data, sc.build_identity(data.n), cfg)
        w_ref, w_avg_ref = _plain_sgd_reference(data, cfg, sc.LossModel(data.num_classes).lipschitz_rho)
        identical &= np.array_equal(state.w, w_ref)
        identical &= np.array_equal(state.w_avg, w_avg_ref)
    _report(7, "identity reduction is bitwise plain SGD", identical,
            "(3 fixtures, 1000 iterations each)")


# ---------------------------------------------------------------------------
# 8. gradient checks against central finite differences
# ---------------------------------------------------------------------------

def test_08_gradient_checks():
    g = np.random.default_rng(808)
    worst_logistic = 0.0
    for _ in range(100):
        p = int(g.integers(2, 11))
        model = sc.LossModel(p)
        a = g.standard_normal(p) * 3.0
        y = int(g.integers(p))
        grad = sc.loss_grad(model, a, y)
        fd = np.zeros(p)
        h = 1e-6
        for j in range(p):
            e = np.zeros(p)
            e[j] = h
            fd[j] = (sc.loss_value(model, a + e, y) - sc.loss_value(model, a - e, y)) / (2 * h)
        worst_logistic = max(worst_logistic,
                             np.linalg.norm(fd - grad) / max(np.linalg.norm(grad), 1e-3))

    model = sc.LossModel(3)
    worst_net = 0.0
    h = 1e-5
    for trial in range(20):
        net = init_tiny_net(6, 4, 3, seed=900 + trial)
        x = g.standard_normal(6)
        y = int(g.integers(3))
        _, cache = forward(net, x)
        grads = backward(net, cache, y, model)

        def loss_at():
            scores, _ = forward(net, x)
            s = scores - scores.max()
            return float(np.log(np.sum(np.exp(s))) - s[y])

        for attr, analytic in (("w1", grads.g_w1), ("b1", grads.g_b1),
                               ("w2", grads.g_w2), ("b2", grads.g_b2)):
            param = getattr(net, attr)
            fd = np.zeros_like(param)
            it = np.nditer(param, flags=["multi_index"])
            for _ in it:
                i = it.multi_index
                param[i] += h
                up = loss_at()
                param[i] -= 2 * h
                dn = loss_at()
                param[i] += h
                fd[i] = (up - dn) / (2 * h)
            worst_net = max(worst_net,
                            np.linalg.norm(fd - analytic) / max(np.linalg.norm(analytic), 1e-6))

    ok = worst_logistic <= 1e-6 and worst_net <= 1e-5
    _report(8, "gradients match finite differences", ok,
            f"(logistic {worst_logistic:.2e} <= 1e-6, net {worst_net:.2e} <= 1e-5)")


# ---------------------------------------------------------------------------
# 9. averaged-iterate sub-optimality bound, measured
# ---------------------------------------------------------------------------

def test_09_averaged_iterate_bound():
    t_start = time.perf_counter()
    data, planted = sc.generate_synthetic(
        sc.SyntheticSpec(n=32, m=2000, p=4, decay_power=2.0, noise=0.3, seed=2024))
    model = sc.LossModel(4)
    rho = model.lipschitz_rho
    c = sc.second_moment(data.x)
    # the spectral norm of the unregularized optimum exceeds the planted
    # norm; scale it up and verify validity against the reference below
    sigma = 10.0 * np.linalg.norm(planted, 2)
    iterations = 10_000

    # full-batch Nesterov reference for the optimal loss
    lam_max = float(np.linalg.eigvalsh(c).max())
    eta_ref = 2.0 / lam_max
    w_ref = np.zeros((4, 32))
    vel = np.zeros_like(w_ref)
    for _ in range(500):
        look = w_ref + 0.9 * vel
        grad = batch_loss_grads(model, look @ data.x, data.y) @ data.x.T / data.m
        vel = 0.9 * vel - eta_ref * grad
        w_ref = w_ref + vel
    loss_ref, _ = dataset_eval(model, w_ref, data.x, data.y)
    assert np.linalg.norm(w_ref, 2) <= sigma, "fixture invalid: sigma below the optimum norm"

    results = {}
    ok = True
    for name, cond in (("identity", sc.build_identity(32)), ("full", sc.build_full(c))):
        trace_a = float(np.trace(cond.materialize()))
        trace_ainv_c = float(np.trace(cond.explicit_inverse() @ c))
        bound = sigma * rho / math.sqrt(iterations) * (trace_a + trace_ainv_c)
        gaps = []
        for seed in range(20):
            cfg = sc.TrainConfig(iterations=iterations, step_size_mode="theory",
                                 sigma=sigma, seed=seed, checkpoint_every=iterations)
            state, _ = sc.train(data, cond, cfg, model=model)
            loss_avg, _ = dataset_eval(model, state.w_avg, data.x, data.y)
            gaps.append(loss_avg - loss_ref)
        mean_gap = float(np.mean(gaps))
        results[name] = (mean_gap, bound)
        ok &= mean_gap <= 1.1 * bound
    elapsed = time.perf_counter() - t_start
    ok &= elapsed < 300.0
    detail = ", ".join(f"{n}: gap {g:.4f} <= 1.1 x {b:.4f}" for n, (g, b) in results.items())
    _report(9, "averaged-iterate bound", ok, f"({detail}, {elapsed:.0f}s)")


# ---------------------------------------------------------------------------
# 10. paired convergence speedup on fast-decay data
# ---------------------------------------------------------------------------

def test_10_convergence_speedup():
    t_start = time.perf_counter()
    iterations = 20_000
    iters = {"sgd": [], "csgd": [], "scsgd": []}
    for seed in range(5):
        data, _ = sc.generate_synthetic(
            sc.SyntheticSpec(n=256, m=5000, p=10, decay_power=2.0, noise=0.1,
                             seed=3000 + seed))
        arms = [
            sc.ArmSpec(name="sgd", kind="identity"),
            sc.ArmSpec(name="csgd", kind="full"),
            sc.ArmSpec(name="scsgd", kind="sketched", k=16, r=32, seed=seed),
        ]
        cfg = sc.TrainConfig(iterations=iterations, step_size_mode="theory", sigma=1.0,
                             seed=seed, checkpoint_every=200)
        report = sc.compare(data, arms, cfg)
        traces = {a.name: a.trace for a in report.arms}
        best = {n: min(c.train_loss for c in t.checkpoints) for n, t in traces.items()}
        slower = max(best, key=lambda n: best[n])
        target = 1.05 * best[slower]
        for name, trace in traces.items():
            first = next((c.iteration for c in trace.checkpoints if c.train_loss <= target),
                         iterations + 1)
            iters[name].append(first)
    med = {n: float(np.median(v)) for n, v in iters.items()}
    elapsed = time.perf_counter() - t_start
    ok = med["scsgd"] < med["sgd"] and med["scsgd"] <= 1.3 * med["csgd"] and elapsed < 600.0
    _report(10, "paired convergence speedup", ok,
            f"(median iters to target: sgd {med['sgd']:.0f}, csgd {med['csgd']:.0f}, "
            f"scsgd {med['scsgd']:.0f}; {elapsed:.0f}s)")


# ---------------------------------------------------------------------------
# 11. iteration ratio stays in its provable range
# ---------------------------------------------------------------------------

def test_11_iteration_ratio_range():
    g = np.random.default_rng(1111)
    ok = True
    for _ in range(1000):
        n = int(g.integers(2, 13))
        p = int(g.integers(2, 13))
        delta = g.standard_normal((p, n)) * float(g.uniform(0.1, 10.0))
        gram_ev = np.clip(np.linalg.eigvalsh(delta.T @ delta), 0.0, None)
        a = g.standard_normal((n, n))
        c_ev = np.clip(np.linalg.eigvalsh(a @ a.T / n + 0.01 * np.eye(n)), 0.0, None)
        ratio = sc.iteration_ratio(float(gram_ev.sum()), float(gram_ev.max()),
                                   float(c_ev.sum()), float(np.sqrt(c_ev).sum()))
        ok &= (1.0 / n - 1e-12) <= ratio <= (min(n, p) + 1e-12)
    _report(11, "iteration ratio range", ok, "(1000 random draws)")


# ---------------------------------------------------------------------------
# 12. preprocessing cost at scale: no square buffer, bounded wall time
# ---------------------------------------------------------------------------

def test_12_preprocessing_scale():
    n, m = 2048, 20_000
    g = rng.gaussian_matrix(rng.split(1212, 1), n, m)
    scales = np.arange(1, n + 1, dtype=np.float64) ** -0.75
    x = g * scales[:, None]
    t0 = time.perf_counter()
    cond, report = sc.sketched_preprocessing(x, sc.SketchConfig(k=16, r=32, seed=5))
    elapsed = time.perf_counter() - t0
    square_buffers = [name for name, shape in report.stage_shapes.items()
                      if shape[0] >= n and shape[-1] >= n]
    ok = not square_buffers and elapsed < 60.0 and cond.rank == 16
    _report(12, "preprocessing cost at scale", ok,
            f"(no {n}x{n} buffers, {elapsed:.1f}s for n={n}, m={m})")
