"""Lanczos eigensolver and Krylov propagation for real symmetric operators.

Both work on a plain ``matvec`` callable so they serve sparse fiber
Hamiltonians and dense test matrices alike.  Everything is sequential with a
fixed operation order, hence bit-reproducible for a fixed start vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal


class ConvergenceError(RuntimeError):
    def __init__(self, message, best_residual=None):
        super().__init__(message)
        self.best_residual = best_residual


def _tridiag_eig(a, b, select=None):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if len(a) == 1:
        return a.copy(), np.ones((1, 1))
    if select is None:
        return eigh_tridiagonal(a, b)
    return eigh_tridiagonal(a, b, select="i", select_range=select)


def _orthogonalize(w, basis, locked):
    # two passes of classical Gram-Schmidt
    for _ in range(2):
        if locked is not None and len(locked):
            w -= locked.T @ (locked @ w)
        if len(basis):
            w -= basis.T @ (basis @ w)
    return w


def lanczos_basis(matvec, v, m, locked=None):
    """Build an orthonormal Krylov basis of dimension <= m starting from v.

    Returns (V, alpha, beta, breakdown).  ``breakdown`` means the Krylov space
    is invariant, so Ritz quantities are exact.
    """
    n = len(v)
    V = np.zeros((m, n))
    alpha = np.zeros(m)
    beta = np.zeros(m)
    q = v / np.linalg.norm(v)
    scale = 0.0
    for j in range(m):
        V[j] = q
        w = matvec(q)
        alpha[j] = q @ w
        scale = max(scale, abs(alpha[j]), np.linalg.norm(w))
        w = _orthogonalize(w, V[: j + 1], locked)
        b = np.linalg.norm(w)
        beta[j] = b
        if b <= 1e-13 * max(scale, 1.0):
            return V[: j + 1], alpha[: j + 1], beta[:j], True
        q = w / b
    return V, alpha, beta[: m - 1], False


@dataclass
class EigenPair:
    value: float
    vector: np.ndarray
    residual: float
    iterations: int
    converged: bool


def lanczos_lowest(matvec, n, v0, tol=1e-12, max_iter=5000, krylov_dim=60, locked=None) -> EigenPair:
    """Lowest eigenpair of a symmetric operator, orthogonal to ``locked`` rows.

    Thick restarts are replaced by restarting from the current Ritz vector,
    which keeps memory at ``krylov_dim`` vectors.  Convergence means
    ||A x - theta x|| <= tol (|theta| + 1).
    """
    nfree = n - (0 if locked is None else len(locked))
    if nfree <= 0:
        raise ValueError("no directions left after locking")
    m = max(1, min(krylov_dim, nfree))
    v = np.array(v0, dtype=float)
    if locked is not None and len(locked):
        v = _orthogonalize(v, np.zeros((0, n)), locked)
    if np.linalg.norm(v) == 0:
        raise ValueError("start vector vanishes after locking")
    iters = 0
    best = math.inf
    best_pair = None
    while iters < max_iter:
        V, a, b, breakdown = lanczos_basis(matvec, v, min(m, max_iter - iters + 1), locked)
        iters += len(a)
        theta, Y = _tridiag_eig(a, b, select=(0, 0))
        x = Y[:, 0] @ V
        x /= np.linalg.norm(x)
        if locked is not None and len(locked):
            x = _orthogonalize(x, np.zeros((0, n)), locked)
            x /= np.linalg.norm(x)
        r = matvec(x)
        th = float(x @ r)
        res = float(np.linalg.norm(r - th * x))
        iters += 1
        if res < best:
            best, best_pair = res, (th, x)
        if res <= tol * (abs(th) + 1.0):
            return EigenPair(th, x, res, iters, True)
        if breakdown and len(a) == nfree and res <= 1e3 * tol * (abs(th) + 1.0):
            return EigenPair(th, x, res, iters, True)
        v = x
    th, x = best_pair
    return EigenPair(th, x, best, iters, False)


@dataclass
class Propagation:
    vector: np.ndarray
    error: float
    steps: int


def _exp_krylov(V, a, b, tau, norm):
    theta, Y = _tridiag_eig(a, b)
    coef = Y @ (np.exp(-tau * theta) * Y[0])
    return norm * (coef @ V)


def expv(matvec, v, tau, shift=0.0, tol=1e-10, krylov_dim=30, max_steps=100000) -> Propagation:
    """exp(-tau (A - shift)) v with step-doubling error control.

    Each step compares one full step against two half steps and accepts the
    half-step result when their relative difference is below ``tol``.
    ``error`` is the accumulated relative error estimate.
    """
    v = np.array(v, dtype=float)
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    if tau == 0:
        return Propagation(v.copy(), 0.0, 0)
    shifted = lambda x: matvec(x) - shift * x
    m = max(1, min(krylov_dim, len(v)))
    done = 0.0
    h = tau
    err_total = 0.0
    steps = 0
    while done < tau:
        if steps >= max_steps:
            raise ConvergenceError("Krylov propagation exceeded max_steps", err_total)
        h = min(h, tau - done)
        nv = np.linalg.norm(v)
        if nv == 0:
            return Propagation(v, err_total, steps)
        V, a, b, breakdown = lanczos_basis(shifted, v, m)
        if breakdown:
            v = _exp_krylov(V, a, b, tau - done, nv)
            steps += 1
            break
        spread = float(np.max(a) - np.min(a)) + abs(b).max(initial=0.0)
        if h * spread > 40.0:
            h = 40.0 / spread
        while True:
            full = _exp_krylov(V, a, b, h, nv)
            half = _exp_krylov(V, a, b, 0.5 * h, nv)
            V2, a2, b2, _ = lanczos_basis(shifted, half, m)
            two = _exp_krylov(V2, a2, b2, 0.5 * h, np.linalg.norm(half))
            scale = np.linalg.norm(two)
            err = np.linalg.norm(full - two) / scale if scale > 0 else 0.0
            if err <= tol:
                break
            h *= 0.5
            if h < tau * 1e-12:
                raise ConvergenceError("Krylov step size underflow", err)
        v = two
        done += h
        err_total += err
        steps += 1
        if err < tol / 64:
            h *= 2.0
    return Propagation(v, err_total, steps)
