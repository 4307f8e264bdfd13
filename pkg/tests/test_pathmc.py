import math

import numpy as np
import pytest

from polaronlab import pathmc
from polaronlab.model import eval_W_discrete


def path_cfg(**kw):
    base = dict(t=4.0, dt=0.1, T_minus=1.0, T_plus=1.0, boundary="free-both")
    base.update(kw)
    return pathmc.PathConfig(**base)


def brute_action(path, model):
    q = path.q
    n = len(q)
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    W = eval_W_discrete(model, q[i] - q[j], (i - j) * path.cfg.dt)
    np.fill_diagonal(W, 0.0)
    return -model.alpha / 2 * path.cfg.dt**2 * W.sum()


def test_action_methods_agree(model_1d, rng):
    p = pathmc.brownian_path(path_cfg(), 1, rng)
    ref = pathmc.interaction_action(p, model_1d, method="reference")
    blk = pathmc.interaction_action(p, model_1d, method="blocked", block=7)
    fac = pathmc.interaction_action(p, model_1d, method="factorized")
    assert ref == blk
    assert fac == pytest.approx(ref, rel=1e-12)
    assert ref == pytest.approx(brute_action(p, model_1d), rel=1e-12)
    assert pathmc.interaction_action(p, model_1d.with_alpha(0.0)) == 0.0
    assert abs(ref) <= pathmc.action_bound(model_1d, p.cfg)


def test_continuum_reference_equals_blocked(model_1d, rng):
    p = pathmc.brownian_path(path_cfg(t=2.0), 1, rng)
    a = pathmc.interaction_action(p, model_1d, kernel="continuum", method="reference")
    b = pathmc.interaction_action(p, model_1d, kernel="continuum", method="blocked")
    assert a == b < 0


def test_bridge_statistics(rng):
    n, dt = 10, 0.2
    draws = np.array([pathmc.bridge(np.zeros(1), np.ones(1), n, dt, 1, rng)[:, 0] for _ in range(20000)])
    j = np.arange(1, n) / n
    np.testing.assert_allclose(draws.mean(axis=0), j, atol=0.02)
    np.testing.assert_allclose(draws.var(axis=0), n * dt * j * (1 - j), rtol=0.06)


def test_propose_keeps_outside_points(rng):
    cfg = path_cfg()
    p = pathmc.brownian_path(cfg, 2, rng)
    new = pathmc.propose(p, "bridge-regenerate", rng, (5, 15))
    np.testing.assert_array_equal(new.q[:6], p.q[:6])
    np.testing.assert_array_equal(new.q[15:], p.q[15:])
    assert not np.array_equal(new.q[6:15], p.q[6:15])
    tail = pathmc.propose(p, "endpoint-extend", rng, (40, cfg.N))
    np.testing.assert_array_equal(tail.q[:41], p.q[:41])
    moved = pathmc.propose(tail, "global-translate", rng)
    np.testing.assert_array_equal(moved.q[cfg.i0], 0.0)


def test_acceptance_probability():
    assert pathmc.acceptance_probability(1.0, 0.5) == 1.0
    assert pathmc.acceptance_probability(0.0, 2.0) == pytest.approx(math.exp(-2.0))
    assert pathmc.acceptance_probability(0.0, 0.0, 0.0) == 0.0


def test_config_validation():
    with pytest.raises(ValueError):
        pathmc.PathConfig(t=1.05, dt=0.1)
    with pytest.raises(ValueError):
        pathmc.PathConfig(t=1.0, dt=0.1, T_minus=1.0)
    with pytest.raises(ValueError):
        pathmc.lag_steps([5.0], pathmc.PathConfig(t=4.0, dt=0.1))


def test_wls_weights_exact_on_lines():
    lags = [0.5, 1.0, 2.0, 4.0, 8.0]
    a, b = pathmc.wls_slope_weights(lags)
    y = 0.7 * np.array(lags) + 0.3
    assert a @ y == pytest.approx(0.7)
    assert b @ y == pytest.approx(0.3)


def test_free_sampling_diffusion(model_1d):
    cfg = pathmc.PathConfig(t=1.0, dt=0.1, boundary="free-both")
    run = pathmc.MCConfig(sweeps=100000, burn_in=0, seed=3, lags=tuple(0.1 * j for j in range(1, 11)))
    est = pathmc.estimate_sigma2(run, cfg, model_1d.with_alpha(0.0))
    assert abs(est.sigma2.mean - 1.0) < 4 * est.sigma2.stderr
    assert est.sigma2.stderr < 0.005
    cf = pathmc.estimate_charfn(run, cfg, model_1d.with_alpha(0.0), [1.0])
    assert cf.real.mean == pytest.approx(math.exp(-0.5), abs=4 * cf.real.stderr)


def test_needs_five_lags(model_1d):
    run = pathmc.MCConfig(sweeps=10, lags=(0.1, 0.2))
    with pytest.raises(ValueError):
        pathmc.estimate_sigma2(run, path_cfg(), model_1d)


def test_chains_independent_of_threads(model_1d):
    cfg = path_cfg(t=2.0, T_minus=0.5, T_plus=0.5)
    run = pathmc.MCConfig(sweeps=60, burn_in=20, chains=3, seed=99, lags=(0.2, 0.4, 0.6, 0.8, 1.0))
    a = pathmc.run_chains(model_1d, cfg, run, threads=1)
    b = pathmc.run_chains(model_1d, cfg, run, threads=3)
    for ra, rb in zip(a, b):
        np.testing.assert_array_equal(ra.msd, rb.msd)
        np.testing.assert_array_equal(ra.S, rb.S)
    assert not np.array_equal(a[0].msd, a[1].msd)


def test_weight_sign_changes_measure(model_1d):
    cfg = path_cfg(t=2.0, T_minus=0.5, T_plus=0.5)
    base = dict(sweeps=200, burn_in=50, chains=1, seed=5, lags=(0.2, 0.4, 0.6, 0.8, 1.0))
    a = pathmc.run_chains(model_1d, cfg, pathmc.MCConfig(**base))[0]
    b = pathmc.run_chains(model_1d, cfg, pathmc.MCConfig(weight_sign=-1.0, **base))[0]
    assert np.mean(a.S) < 0 < np.mean(b.S)
