import numpy as np
import pytest
import scipy.linalg

from polaronlab.linalg import expv, lanczos_lowest


def random_symmetric(n, rng):
    A = rng.standard_normal((n, n))
    return (A + A.T) / 2


@pytest.mark.parametrize("n", [1, 5, 40, 150])
def test_lanczos_lowest_matches_eigh(n, rng):
    A = random_symmetric(n, rng)
    pair = lanczos_lowest(A.dot, n, rng.standard_normal(n), tol=1e-12, krylov_dim=30)
    w, v = scipy.linalg.eigh(A)
    assert pair.converged
    assert pair.value == pytest.approx(w[0], abs=1e-10)
    assert abs(abs(pair.vector @ v[:, 0]) - 1) < 1e-10


def test_lanczos_locked_gives_second(rng):
    A = random_symmetric(60, rng)
    w, v = scipy.linalg.eigh(A)
    pair = lanczos_lowest(A.dot, 60, rng.standard_normal(60), locked=v[:, :1].T)
    assert pair.value == pytest.approx(w[1], abs=1e-9)


@pytest.mark.parametrize("tau", [0.0, 0.3, 5.0, 40.0])
def test_expv_matches_expm(tau, rng):
    n = 80
    A = random_symmetric(n, rng) + 3 * np.eye(n)
    v = rng.standard_normal(n)
    shift = scipy.linalg.eigh(A, eigvals_only=True)[0]
    want = scipy.linalg.expm(-tau * (A - shift * np.eye(n))) @ v
    got = expv(A.dot, v, tau, shift=shift, tol=1e-12)
    np.testing.assert_allclose(got.vector, want, rtol=1e-9, atol=1e-10 * np.linalg.norm(want))
