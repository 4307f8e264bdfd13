import math

import numpy as np
import pytest
import scipy.linalg
from scipy import integrate

from polaronlab import spectral
from polaronlab.fock import FiberFamily, enumerate_basis
from polaronlab.model import DispersionSpec, FormFactorSpec, KGridSpec, ModelSpec


def dense_energy(model, N_max, P):
    fam = FiberFamily(model, enumerate_basis(model.grid, N_max))
    return scipy.linalg.eigh(fam.hamiltonian(P).toarray(), eigvals_only=True)[0]


def test_ground_state_matches_dense(model_1d):
    fam = FiberFamily(model_1d, enumerate_basis(model_1d.grid, 3))
    H = fam.hamiltonian(0.35)
    res = spectral.ground_state(H)
    w, v = scipy.linalg.eigh(H.toarray())
    assert res.E == pytest.approx(w[0], abs=1e-11)
    assert res.gap == pytest.approx(w[1] - w[0], abs=1e-7)
    assert res.psi[0] >= 0
    assert res.overlap == pytest.approx(abs(v[0, 0]), abs=1e-10)


@pytest.mark.parametrize("P", [0.0, 0.4, [0.3, -0.2, 0.5]])
def test_free_energy(P):
    d = 1 if np.ndim(P) == 0 else 3
    m = ModelSpec(d, DispersionSpec("constant", 1.0), FormFactorSpec("gaussian", 0.5, 1.0), 0.0,
                  KGridSpec(1.0, 1.5, d))
    E = spectral.FiberSolver(m, 2).energy(P)
    assert E == pytest.approx(0.5 * float(np.dot(P, P)), abs=1e-12)


def test_energy_bounds_and_minimum_at_zero(model_1d):
    solver = spectral.FiberSolver(model_1d, 3)
    Ps = [0.0, 0.1, 0.25, -0.5, 0.9, 1.3]
    results, flags = spectral.energy_curve(model_1d, Ps, solver=solver)
    assert not flags
    lb = model_1d.energy_lower_bound()
    assert all(r.E >= lb for r in results)
    assert [r.P[0] for r in results] == Ps


def test_richardson_and_neville_exact_on_polynomials():
    hs = [0.4 / 2**j for j in range(3)]
    tab = spectral.richardson_table([2 + h**2 - 3 * h**4 for h in hs])
    assert tab[-1][-1] == pytest.approx(2.0, abs=1e-13)
    xs = [0.5, 0.3, 0.2, 0.1]
    val, err = spectral.neville(xs, [1 - 2 * x + x**3 for x in xs])
    assert val == pytest.approx(1.0, abs=1e-13)
    val, err = spectral.neville(xs, [1 - 2 * x + x**2 for x in xs])
    assert val == pytest.approx(1.0, abs=1e-13)
    assert err < 1e-12


def test_effective_mass_against_dense_fit(model_1d):
    mass = spectral.effective_mass(model_1d, N_max=2)
    hs = np.array([-0.15, -0.1, -0.05, 0.0, 0.05, 0.1, 0.15])
    E = np.array([dense_energy(model_1d, 2, h) for h in hs])
    coef = np.polynomial.polynomial.polyfit(hs, E, 6)
    assert mass.m_eff_inverse == pytest.approx(2 * coef[2], rel=1e-6)
    assert mass.error < 1e-7
    free = spectral.effective_mass(model_1d.with_alpha(0.0), N_max=2)
    assert free.m_eff_inverse == pytest.approx(1.0, abs=1e-8)


def test_perturbative_slope_against_dense(model_1d):
    a = 1e-4
    slope = (dense_energy(model_1d.with_alpha(a), 1, 0.0) - 0.0) / a
    assert slope == pytest.approx(spectral.perturbative_slope(model_1d), rel=1e-3)


def test_char_fn_trivial_and_free(model_1d):
    assert spectral.char_fn_spectral(model_1d, 0.0, 3.0, N_max=2).value == 1.0
    assert spectral.char_fn_spectral(model_1d, 0.7, 0.0, N_max=2).value == 1.0
    free = model_1d.with_alpha(0.0)
    for b in ("one-sided", "relaxed"):
        r = spectral.char_fn_spectral(free, 0.75, 2.0, boundary=b, N_max=2)
        assert r.value == pytest.approx(math.exp(-0.75**2), abs=1e-12)


def test_char_fn_one_sided_and_relaxed_against_expm(model_1d):
    fam = FiberFamily(model_1d, enumerate_basis(model_1d.grid, 2))
    k, t = 0.5, 1.7
    Hk, H0 = fam.hamiltonian(k).toarray(), fam.hamiltonian(0.0).toarray()
    w, v = scipy.linalg.eigh(H0)
    e0, psi = w[0], v[:, 0] * np.sign(v[0, 0])
    Uk = scipy.linalg.expm(-t * (Hk - e0 * np.eye(len(Hk))))
    U0 = scipy.linalg.expm(-t * (H0 - e0 * np.eye(len(H0))))
    want_one = Uk[0, 0] / U0[0, 0]
    want_rel = (Uk @ psi)[0] / psi[0]
    got_one = spectral.char_fn_spectral(model_1d, k, t, "one-sided", N_max=2).value
    got_rel = spectral.char_fn_spectral(model_1d, k, t, "relaxed", N_max=2).value
    assert got_one == pytest.approx(want_one, rel=1e-9)
    assert got_rel == pytest.approx(want_rel, rel=1e-9)


def test_char_fn_two_sided_free():
    m = ModelSpec(1, DispersionSpec("constant", 1.0), FormFactorSpec("gaussian", 0.5, 1.0), 0.0,
                  KGridSpec(0.5, 1.0, 1))
    k, t, w = 0.6, 1.2, 0.8
    f = lambda P, kk: math.exp(-P * P / w**2 - t * (P + kk) ** 2 / 2)
    want = integrate.quad(f, -np.inf, np.inf, args=(k,))[0] / integrate.quad(f, -np.inf, np.inf, args=(0,))[0]
    got = spectral.char_fn_spectral(m, k, t, "two-sided", N_max=1, phi_width=w, nodes=48).value
    assert got == pytest.approx(want, rel=1e-9)


def test_essential_edge_constant_omega(model_1d):
    solver = spectral.FiberSolver(model_1d, 2)
    e0 = solver.energy(0.0)
    edge = spectral.essential_edge(model_1d, 0.5, n_max=2, solver=solver)
    assert edge.E_ess == pytest.approx(e0 + 1.0, abs=1e-12)
    assert edge.n_star == 1
    assert edge.thresholds[1] >= edge.thresholds[0]
    assert solver.energy(0.5) < edge.E_ess


def test_sigma_from_scaling(model_1d):
    free = spectral.sigma_from_scaling(model_1d.with_alpha(0.0), [1.0], 2.0, [0.4, 0.2], N_max=1)
    assert free.sigma2 == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        spectral.sigma_from_scaling(model_1d, [1.0], 2.0, [0.2, 0.4])
