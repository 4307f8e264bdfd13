import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
import scipy.linalg
from scipy import integrate

from polaronlab import cltlab
from polaronlab.cltlab import ToyFiberModel

EPS = [0.1 / 2**j for j in range(7)]


def test_toy_profile():
    toy = ToyFiberModel(1, ((0.0, 2, 0.5), (1.5, 2, 0.8)))
    assert toy.E_r(0.0) == 0.0 and toy.E_r(1.5) == 0.0
    assert toy.curvature(0.0) == pytest.approx(1.0)
    assert toy.curvature(1.5) == pytest.approx(1.6)
    assert np.all(toy.E_r(np.linspace(0, 4, 50)) >= 0)


@pytest.mark.parametrize("minima", [((0.0, 1, 1.0),), ((1.0, 3, 1.0),), ((0.0, 2, 0.0),), ((1.0, 2, 1.0), (1.0, 4, 1.0))])
def test_toy_validation(minima):
    with pytest.raises(ValueError):
        ToyFiberModel(2, minima)


@pytest.mark.parametrize("d,minima,case", [
    (3, ((0.0, 2, 0.5),), "one-minimum"),
    (3, ((0.0, 2, 0.5), (1.5, 2, 0.5)), "a"),
    (1, ((0.0, 2, 0.5), (1.5, 2, 0.5)), "b"),
    (2, ((0.0, 4, 0.5), (1.5, 2, 0.5)), "b"),
    (1, ((0.0, 4, 0.5), (1.5, 2, 0.5)), "c"),
    (3, ((1.0, 2, 0.5),), "off-zero"),
])
def test_case_classification(d, minima, case):
    assert cltlab.classify(ToyFiberModel(d, minima)) == case


def test_gT_trivial_values():
    toy = ToyFiberModel(3, ((0.0, 2, 0.5), (1.5, 2, 0.5)), theta1=0.2)
    assert cltlab.gT_exact(toy, [0.5, 0, 0], 0.0, 10.0) == 1.0
    assert cltlab.gT_exact(toy, [0, 0, 0], 0.3, 10.0) == pytest.approx(1.0, abs=1e-13)


def two_level_H(toy, P):
    th = float(toy.theta(np.atleast_2d(P))[0])
    E = float(toy.E(np.atleast_2d(P))[0])
    psi = np.array([math.cos(th), math.sin(th)])
    return E * np.eye(2) + toy.gap * (np.eye(2) - np.outer(psi, psi))


def test_gT_d1_against_matrix_quadrature():
    # vacuum is the fixed vector e1; propagate it with explicit 2x2 exponentials
    toy = ToyFiberModel(1, ((0.0, 2, 0.5), (1.5, 2, 0.8)), theta0=0.3, theta1=0.2)
    k, t, T = 0.5, 0.3, 2.0
    e1 = np.array([1.0, 0.0])

    def integrand(P, kk):
        u = scipy.linalg.expm(-T * two_level_H(toy, [P])) @ e1
        phi2 = float(toy.phi_hat(np.array([[P]]))[0]) ** 2
        return phi2 * u @ scipy.linalg.expm(-t * two_level_H(toy, [P + kk])) @ u

    opts = dict(limit=400, epsabs=1e-14, epsrel=1e-12, points=[0.0, 1.5, -1.5])
    num = integrate.quad(integrand, -9, 9, args=(k,), **opts)[0]
    den = integrate.quad(integrand, -9, 9, args=(0.0,), **opts)[0]
    assert cltlab.gT_exact(toy, [k], t, T) == pytest.approx(num / den, rel=1e-8)


@settings(max_examples=20, deadline=None)
@given(k=st.floats(0.0, 2.0), t=st.floats(0.0, 2.0), T=st.sampled_from([0.0, 1.0, 10.0]))
def test_gT_normalized(k, t, T):
    toy = ToyFiberModel(1, ((0.0, 2, 0.5), (1.5, 2, 0.8)), theta0=0.3, theta1=0.2)
    g = cltlab.gT_exact(toy, [k], t, T)
    assert 0.0 < g <= 1.0 + 1e-12


def test_one_minimum_limit_is_zero_fiber_value():
    toy = ToyFiberModel(3, ((0.0, 2, 0.5),), theta0=0.3, theta1=0.2)
    res = cltlab.gT_limit_formula(toy, [0.5, 0, 0], 0.05)
    assert res.limit == pytest.approx(float(toy.h(np.zeros((1, 3)), [0.5, 0, 0], 0.05)[0]))


def test_case_a_drops_zero_minimum():
    toy = ToyFiberModel(3, ((0.0, 2, 0.5), (1.5, 2, 0.5)))
    res = cltlab.gT_limit_formula(toy, [0.5, 0, 0], 0.05)
    assert set(res.weights) == {1.5}
    res_b = cltlab.gT_limit_formula(ToyFiberModel(1, ((0.0, 2, 0.5), (1.5, 2, 0.5))), [0.5], 0.05)
    assert set(res_b.weights) == {0.0, 1.5}


def test_case_c_correction_rate():
    # the off-zero competition decays like tau^(-1/4) for a quartic zero in d = 1
    toy = ToyFiberModel(1, ((0.0, 4, 0.5), (1.5, 2, 0.5)), theta0=0.3, theta1=0.2)
    res = cltlab.pinned_limit_study(toy, [0.5], 0.05, (80, 160, 320))
    e = res.rel_errors
    rates = [math.log2(a / b) for a, b in zip(e, e[1:])]
    assert 0.15 < rates[0] < rates[1] < 0.3


def test_epsilon_limits():
    one = ToyFiberModel(3, ((0.0, 2, 0.5),), theta0=0.3, theta1=0.2)
    r = cltlab.epsilon_limit(one, [1.0, 0, 0], 2.0, EPS)
    assert r.limit == pytest.approx(math.exp(-1), abs=1e-9)
    assert r.converged
    off = ToyFiberModel(3, ((1.0, 2, 0.5), (2.0, 2, 0.5)), theta1=0.2)
    perp = cltlab.epsilon_limit(off, [0, 1.0, 0], 1.0, EPS, Q=2.0, direction=[1, 0, 0])
    assert perp.limit == pytest.approx(1.0, abs=1e-9)
    quartic = ToyFiberModel(1, ((0.0, 4, 0.5), (1.5, 2, 0.5)))
    with pytest.raises(ValueError):
        cltlab.epsilon_limit(quartic, [1.0], 1.0, EPS, Q=0.0)


def test_clt_verdicts():
    ks = [[0.5, 0, 0], [1.0, 0, 0], [0, 1.5, 0], [1, 1, 1]]
    g = cltlab.clt_classify(ToyFiberModel(3, ((0.0, 2, 0.6),)), ks, 1.0, EPS)
    assert g.verdict == "gaussian" and g.sigma2 == pytest.approx(1.2, abs=1e-6)
    ng = cltlab.clt_classify(ToyFiberModel(3, ((1.0, 2, 0.5),)), ks, 1.0, EPS)
    assert ng.verdict == "non-gaussian"
    dg = cltlab.clt_classify(ToyFiberModel(2, ((0.0, 6, 0.5), (1.5, 2, 0.5))), [k[:2] for k in ks], 1.0, EPS)
    assert dg.verdict == "degenerate"
