import numpy as np
import pytest

import prefix_moe as pm


def random_head(rng, d=6, dh=3):
    return [rng.uniform(-0.5, 0.5, size=(d, dh)) for _ in range(3)]


def numpy_head(x, w_q, w_k, w_v):
    s = (x @ w_q) @ (x @ w_k).T / np.sqrt(w_k.shape[1])
    s -= s.max(axis=1, keepdims=True)
    p = np.exp(s)
    p /= p.sum(axis=1, keepdims=True)
    return p @ (x @ w_v)


def test_head_matches_numpy_and_moe_rows():
    rng = np.random.default_rng(0)
    x = rng.uniform(-1, 1, size=(5, 6))
    w = random_head(rng)
    out = pm.head_forward(x, *w)
    np.testing.assert_allclose(out, numpy_head(x, *w), atol=1e-12)
    for i in range(5):
        np.testing.assert_allclose(pm.moe_head_row(x, *w, i), out[i], atol=1e-12)


def test_gate_weights_sum_to_one():
    rng = np.random.default_rng(1)
    x = rng.uniform(-1, 1, size=(4, 6))
    p_k, p_v = rng.uniform(-1, 1, size=(2, 2, 6))
    g = pm.gate_weights(x, *random_head(rng), p_k, p_v, 0)
    assert len(g) == 6
    assert abs(sum(g) - 1.0) < 1e-12


def test_zero_alpha_norga_is_prefix_tuning():
    rng = np.random.default_rng(2)
    x = rng.uniform(-1, 1, size=(4, 6))
    w = random_head(rng)
    p_k, p_v = rng.uniform(-1, 1, size=(2, 3, 6))
    a = pm.norga_head_forward(x, *w, p_k, p_v, alpha=0.0)
    w_q, w_k, w_v = w
    s = (x @ w_q) @ np.vstack([p_k @ w_k, x @ w_k]).T / np.sqrt(3)
    s -= s.max(axis=1, keepdims=True)
    p = np.exp(s)
    p /= p.sum(axis=1, keepdims=True)
    np.testing.assert_allclose(a, p @ np.vstack([p_v @ w_v, x @ w_v]), atol=1e-12)


def test_verify_suite_passes():
    results = pm.verify(trials=10, grad_trials=3, seed=5)
    assert len(results) >= 6
    assert all(r["passed"] for r in results)


def test_metrics_hand_example():
    m = pm.cl_metrics(np.array([[90.0, 80.0], [np.nan, 85.0]]))
    assert (m["FA"], m["CA"], m["FM"]) == (82.5, 86.25, 10.0)


def test_degenerate_ratio_shrinks():
    curve = pm.degenerate_curve([4, 64], mc_points=5000)
    assert curve[1]["ratio"] < 0.5 * curve[0]["ratio"]
    assert abs(curve[0]["loss"] - curve[0]["closed_form"]) < 1e-12


def test_small_rate_run_and_cl_run():
    res = pm.rate_experiment(gate="linear", ns=[100, 200], trials=2, extra_atoms=1, mc_points=500, restarts=2)
    assert res["fitted_atoms"] == 3
    assert len(res["records"]) == 4
    run = pm.run_cl(tasks=2, epochs=2)
    assert run["S"].shape == (2, 2)
    assert run["isolation_ok"]


def test_errors_map_to_python():
    rng = np.random.default_rng(3)
    with pytest.raises(pm.DimensionError):
        pm.head_forward(rng.uniform(size=(3, 5)), *random_head(rng))
    with pytest.raises(pm.ConfigError):
        pm.run_cl(tasks=0)
    with pytest.raises(ValueError):
        pm.rate_experiment(gate="quadratic")
