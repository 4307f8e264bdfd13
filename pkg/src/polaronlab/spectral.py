"""Ground states, energy-momentum curves, effective mass, thresholds and
semigroup matrix elements of the truncated fiber Hamiltonians."""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .fock import FiberFamily, SparseOperator, enumerate_basis, DEFAULT_SIZE_LIMIT
from .linalg import ConvergenceError, expv, lanczos_lowest
from .model import ModelSpec

BOUNDARY_KINDS = ("one-sided", "relaxed", "two-sided")


@dataclass
class SpectralResult:
    P: np.ndarray
    E: float
    psi: np.ndarray
    overlap: float
    gap: float
    iterations: int
    residual: float
    flags: list = field(default_factory=list)

    def row(self):
        return {
            "P_axis": float(self.P[0]),
            "E": self.E,
            "gap": self.gap,
            "overlap": self.overlap,
            "residual": self.residual,
        }


@dataclass
class MassResult:
    m_eff_inverse: float
    h: float
    raw: list
    extrapolated: float
    error: float
    table: list
    warnings: list = field(default_factory=list)

    def rows(self):
        return [
            {"h": h, "raw": r, "extrapolated": self.table[j][-1], "error": self.error if j == len(self.raw) - 1 else math.nan}
            for j, (h, r) in enumerate(self.raw)
        ]


@dataclass
class CharFnResult:
    k: np.ndarray
    t: float
    boundary: str
    value: float
    error: float
    T: float = 0.0


@dataclass
class EdgeResult:
    P: np.ndarray
    thresholds: list
    argmins: list
    E_ess: float
    n_star: int
    flags: list = field(default_factory=list)


@dataclass
class SigmaResult:
    eps: list
    G: list
    sigma2_seq: list
    sigma2: float
    error: float
    converged: bool
    usable_eps: list
    flags: list = field(default_factory=list)

    def rows(self):
        return [{"eps": e, "G": g, "sigma2_est": s} for e, g, s in zip(self.eps, self.G, self.sigma2_seq)]


def ground_state(H: SparseOperator, tol=1e-12, max_iter=5000, seed=0, krylov_dim=60, gap_tol=1e-8,
                 P=None) -> SpectralResult:
    """Lowest eigenpair of H by Lanczos; the gap comes from a second run locked
    against the converged ground vector.  The sign is fixed by <Omega, psi> >= 0."""
    if not H.symmetric:
        raise ValueError("operator is not symmetric")
    n = H.dim
    mv = H.matrix.dot
    rng = np.random.default_rng(seed)
    v0 = rng.standard_normal(n)
    pair = lanczos_lowest(mv, n, v0, tol=tol, max_iter=max_iter, krylov_dim=krylov_dim)
    if not pair.converged:
        raise ConvergenceError(f"Lanczos did not converge in {max_iter} iterations", pair.residual)
    psi = pair.vector
    if psi[0] < 0:
        psi = -psi
    iters = pair.iterations
    gap = math.inf
    if n > 1:
        second = lanczos_lowest(mv, n, rng.standard_normal(n), tol=gap_tol, max_iter=max_iter,
                                krylov_dim=krylov_dim, locked=psi[None, :])
        gap = second.value - pair.value
        iters += second.iterations
    overlap = min(1.0, abs(float(psi[0])))
    res = SpectralResult(np.zeros(1) if P is None else np.atleast_1d(np.asarray(P, dtype=float)),
                         pair.value, psi, overlap, gap, iters, pair.residual)
    if gap < 10 * pair.residual:
        res.flags.append("near-degenerate ground state: overlap and mass unreliable")
    elif overlap <= 1e-12:
        res.flags.append("vanishing vacuum overlap in the gapped regime")
    return res


class FiberSolver:
    """Shared assembly context for one model and truncation; caches solves by P."""

    def __init__(self, model: ModelSpec, N_max: int, tol=1e-12, seed=0, krylov_dim=60,
                 max_iter=5000, limit=DEFAULT_SIZE_LIMIT, threads=1):
        self.model = model
        self.N_max = N_max
        self.tol = tol
        self.seed = seed
        self.krylov_dim = krylov_dim
        self.max_iter = max_iter
        self.threads = max(1, int(threads))
        self.basis = enumerate_basis(model.grid, N_max, limit=limit)
        self.family = FiberFamily(model, self.basis)
        self._cache = {}

    def _vec(self, P):
        return np.broadcast_to(np.asarray(P, dtype=float), (self.model.d,)).copy()

    def hamiltonian(self, P) -> SparseOperator:
        return self.family.hamiltonian(self._vec(P))

    def solve(self, P) -> SpectralResult:
        P = self._vec(P)
        key = tuple(P.tolist())
        hit = self._cache.get(key)
        if hit is None:
            hit = ground_state(self.hamiltonian(P), tol=self.tol, max_iter=self.max_iter, seed=self.seed,
                               krylov_dim=self.krylov_dim, P=P)
            self._cache[key] = hit
        return hit

    def solve_many(self, P_list) -> list:
        P_list = [self._vec(P) for P in P_list]
        if self.threads == 1:
            return [self.solve(P) for P in P_list]
        with ThreadPoolExecutor(self.threads) as pool:
            return list(pool.map(self.solve, P_list))

    def energy(self, P) -> float:
        return self.solve(P).E


def energy_curve(model: ModelSpec, P_list, N_max=2, solver: FiberSolver | None = None, tol=1e-10, **kw):
    """Ground states in input order.  Returns (results, flags); a flag is raised
    when some E(P) lies below E(0) by more than ``tol``."""
    solver = solver or FiberSolver(model, N_max, **kw)
    results = solver.solve_many(P_list)
    e0 = solver.energy(np.zeros(model.d))
    flags = []
    for r in results:
        if r.E < e0 - tol:
            flags.append(f"E(P) < E(0) at P={r.P.tolist()}: {r.E:.17g} < {e0:.17g}")
    return results, flags


def richardson_table(values, ratio=4.0):
    """Richardson table for a sequence whose error is a series in h^2 with h
    halved at each step."""
    table = []
    for j, v in enumerate(values):
        row = [float(v)]
        for i in range(1, j + 1):
            f = ratio**i
            row.append(row[i - 1] + (row[i - 1] - table[j - 1][i - 1]) / (f - 1.0))
        table.append(row)
    return table


def effective_mass(model: ModelSpec, h=None, levels=2, N_max=2, solver: FiberSolver | None = None,
                   axis=0, **kw) -> MassResult:
    """Central second difference of E along one axis with Richardson extrapolation."""
    solver = solver or FiberSolver(model, N_max, **kw)
    h0 = model.grid.dk / 4 if h is None else float(h)
    if not h0 > 0:
        raise ValueError("h must be positive")
    e = np.zeros(model.d)
    e[axis] = 1.0
    ground = solver.solve(np.zeros(model.d))
    raw = []
    warnings = []
    for j in range(levels + 1):
        hj = h0 / 2**j
        rp, rm = solver.solve(hj * e), solver.solve(-hj * e)
        raw.append((hj, (rp.E - 2.0 * ground.E + rm.E) / hj**2))
        floor = 100 * max(rp.residual, rm.residual, ground.residual)
        if abs(rp.E - ground.E) < floor:
            warnings.append(f"loss of precision at h={hj:.3g}: energy difference below 100x solver residual")
    for r in (ground,):
        warnings.extend(r.flags)
    table = richardson_table([r for _, r in raw])
    best = table[-1][-1]
    err = abs(table[-1][-1] - table[-1][-2]) if levels > 0 else math.nan
    return MassResult(best, h0, raw, best, err, table, warnings)


def perturbative_slope(model: ModelSpec) -> float:
    """Second-order coefficient: -sum_i dk^d g_i^2 / (omega_i + |k_i|^2 / 2)."""
    k2 = np.sum(model.modes**2, axis=1)
    return -float(np.sum(model.coupling**2 / (model.omega + 0.5 * k2)))


def essential_edge(model: ModelSpec, P, n_max=2, N_max=2, solver: FiberSolver | None = None,
                   tie_tol=1e-12, **kw) -> EdgeResult:
    """n-boson thresholds E^(n)(P) = min over grid modes of E(P - k_1 - ... - k_n) + sum omega(k_i).

    Each level is an exact branch and bound over multisets of modes, with
    E(Q) >= -alpha sum c^2/omega as the pruning bound.  E at lattice points is memoized by the solver.
    """
    solver = solver or FiberSolver(model, N_max, **kw)
    P = np.broadcast_to(np.asarray(P, dtype=float), (model.d,))
    modes = model.modes
    om = model.omega
    lat = model.grid.lattice
    lb = model.energy_lower_bound()
    order = np.lexsort(lat.T[::-1])  # lexicographic in k

    thresholds, argmins = [], []
    for n in range(1, n_max + 1):
        best = math.inf
        arg = None
        for combo in itertools.combinations_with_replacement(order, n):
            w = float(np.sum(om[list(combo)]))
            if lb + w > best + tie_tol:
                continue
            Q = P - modes[list(combo)].sum(axis=0)
            val = solver.energy(Q) + w
            if val < best - tie_tol:
                best, arg = val, combo
        thresholds.append(best)
        argmins.append(tuple(int(i) for i in arg))
    n_star = 1 + int(np.argmin(thresholds))
    flags = []
    arg = argmins[n_star - 1]
    if arg is not None and np.any(model.grid.boundary_mask[list(arg)]):
        flags.append("argmin on grid boundary: grid too small to bracket the minimizer")
    if any(b < a - tie_tol for a, b in zip(thresholds, thresholds[1:])):
        flags.append("thresholds not monotone in n")
    return EdgeResult(P.copy(), thresholds, argmins, float(thresholds[n_star - 1]), n_star, flags)


def _vacuum(n):
    v = np.zeros(n)
    v[0] = 1.0
    return v


def char_fn_spectral(model: ModelSpec, k, t, boundary="one-sided", N_max=2, solver: FiberSolver | None = None,
                     tol=1e-10, T=0.0, phi_width=1.0, phi_center=0.0, P_max=None, nodes=16, **kw) -> CharFnResult:
    """Normalized characteristic function from the semigroup.

    one-sided: <Omega, e^{-tH(k)} Omega> / <Omega, e^{-tH(0)} Omega>
    relaxed:   <Omega, e^{-t(H(k) - E(0))} psi_0> / <Omega, psi_0>
    two-sided: ratio of P-integrals of <u_P, e^{-tH(P+k)} u_P> with
               u_P = phi(P) e^{-T H(P)} Omega and a gaussian phi(P).
    """
    if boundary not in BOUNDARY_KINDS:
        raise ValueError(f"unknown boundary kind {boundary!r}")
    if t < 0:
        raise ValueError("t must be nonnegative")
    solver = solver or FiberSolver(model, N_max, **kw)
    d = model.d
    k = np.broadcast_to(np.asarray(k, dtype=float), (d,)).copy()
    if t == 0 or not np.any(k):
        return CharFnResult(k, float(t), boundary, 1.0, 0.0, T)
    ground = solver.solve(np.zeros(d))
    e0 = ground.E
    n = solver.basis.size
    omega_vac = _vacuum(n)

    def prop(P, v, tau):
        H = solver.hamiltonian(P)
        return expv(H.matrix.dot, v, tau, shift=e0, tol=tol)

    if boundary == "one-sided":
        num = prop(k, omega_vac, t)
        den = prop(np.zeros(d), omega_vac, t)
        value = num.vector[0] / den.vector[0]
        err = num.error + den.error
    elif boundary == "relaxed":
        if ground.overlap <= 0:
            raise ConvergenceError("ground state has no vacuum component")
        num = prop(k, ground.psi, t)
        value = num.vector[0] / ground.psi[0]
        err = num.error
    else:
        pmax = (P_max if P_max is not None else phi_width * 6.0)
        x, w = np.polynomial.legendre.leggauss(nodes)
        x, w = pmax * x, pmax * w
        grids = np.meshgrid(*([x] * d), indexing="ij")
        wts = np.prod(np.meshgrid(*([w] * d), indexing="ij"), axis=0).ravel()
        pts = np.stack([g.ravel() for g in grids], axis=1)
        c = np.broadcast_to(np.asarray(phi_center, dtype=float), (d,))
        num = den = 0.0
        err = 0.0
        for Pq, wq in zip(pts, wts):
            phi2 = math.exp(-np.sum((Pq - c) ** 2) / phi_width**2)
            u = prop(Pq, omega_vac, T) if T > 0 else None
            u_vec = u.vector if u is not None else omega_vac
            a = prop(Pq + k, u_vec, t)
            b = prop(Pq, u_vec, t)
            num += wq * phi2 * float(u_vec @ a.vector)
            den += wq * phi2 * float(u_vec @ b.vector)
            err += a.error + b.error + (u.error if u is not None else 0.0)
        value = num / den
    if not value > 0 and boundary != "two-sided":
        raise ConvergenceError("vanishing or negative characteristic function")
    return CharFnResult(k, float(t), boundary, float(value), float(err), T)


def neville(xs, ys, x0=0.0):
    """Value at x0 of the interpolating polynomial, with the difference of the
    last two diagonal entries as error estimate."""
    xs = [float(v) for v in xs]
    p = [float(v) for v in ys]
    n = len(xs)
    diag = [p[0]]
    for m in range(1, n):
        for i in range(n - m):
            p[i] = ((x0 - xs[i + m]) * p[i] + (xs[i] - x0) * p[i + 1]) / (xs[i] - xs[i + m])
        diag.append(p[0])
    value = p[0]
    err = abs(diag[-1] - diag[-2]) if n > 1 else math.inf
    return value, err


def sigma_from_scaling(model: ModelSpec, khat, t, eps_list, boundary="one-sided", N_max=2,
                       solver: FiberSolver | None = None, rtol=1e-6, **kw) -> SigmaResult:
    """sigma^2_eps = -2 ln G(eps khat, t/eps^2) / (|khat|^2 t), extrapolated to eps -> 0.

    For a gapped ground state the corrections are a series in eps^2 plus terms
    of order exp(-gap t / eps^2), so the ladder is extrapolated polynomially
    in eps^2.
    """
    eps_list = [float(e) for e in eps_list]
    if any(e <= 0 for e in eps_list) or any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be positive and decreasing")
    solver = solver or FiberSolver(model, N_max, **kw)
    khat = np.broadcast_to(np.asarray(khat, dtype=float), (model.d,))
    k2 = float(khat @ khat)
    Gs, seq, usable = [], [], []
    flags = []
    for e in eps_list:
        r = char_fn_spectral(model, e * khat, t / e**2, boundary=boundary, solver=solver)
        if not (r.value > 1e-300):
            flags.append(f"G underflow at eps={e:g}; usable eps: {usable}")
            break
        Gs.append(r.value)
        seq.append(-2.0 * math.log(r.value) / (k2 * t))
        usable.append(e)
    if not seq:
        raise FloatingPointError("characteristic function underflows on the whole eps ladder")
    sig, err = neville([e * e for e in usable], seq)
    converged = err <= rtol * max(abs(sig), 1e-300) or (len(seq) > 1 and max(seq) - min(seq) == 0.0)
    if not converged:
        flags.append("eps ladder not converged")
    return SigmaResult(usable, Gs, seq, float(sig), float(err), bool(converged), usable, flags)
