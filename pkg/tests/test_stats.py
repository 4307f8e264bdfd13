import math

import numpy as np
import pytest

from polaronlab.stats import blocking_estimate, blocking_levels, combine, combined_sigma


def test_iid_stderr(rng):
    x = rng.standard_normal(2**15)
    est = blocking_estimate(x)
    assert est.stderr == pytest.approx(1 / math.sqrt(len(x)), rel=0.15)
    assert est.tau_int == pytest.approx(0.5, rel=0.3)
    assert est.plateau


def test_ar1_autocorrelation(rng):
    phi, n = 0.9, 2**17
    e = rng.standard_normal(n)
    x = np.empty(n)
    x[0] = e[0]
    for i in range(1, n):
        x[i] = phi * x[i - 1] + e[i]
    est = blocking_estimate(x)
    assert est.tau_int == pytest.approx((1 + phi) / (2 * (1 - phi)), rel=0.3)


def test_levels_and_degenerate():
    lv = blocking_levels(np.arange(16.0))
    assert [s for s, _, _ in lv] == [1, 2, 4]
    assert blocking_estimate(np.ones(64)).stderr == 0.0
    assert "too few samples for blocking" in blocking_estimate([1.0, 2.0]).flags


def test_combine():
    from polaronlab.stats import MCEstimate
    c = combine([MCEstimate(1.0, 0.2, 1.0, 100), MCEstimate(3.0, 0.2, 2.0, 100)])
    assert c.mean == 2.0
    assert c.stderr == pytest.approx(0.1 * math.sqrt(2))
    assert combined_sigma(3.0, 4.0) == 5.0
