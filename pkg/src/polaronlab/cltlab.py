"""Two-sided pinned characteristic functions for synthetic fiber families.

A toy family has a radial energy E_r with prescribed zero minima and a
two-level fiber

    H(P) = E(P) |psi_P><psi_P| + (E(P) + gap) (1 - |psi_P><psi_P|),
    psi_P = (cos theta(P), sin theta(P)),  theta(P) = theta0 + theta1 |P|^2,

with boundary vectors phi_P = phi_hat(P) Omega, Omega = (1, 0), so every
matrix element is available in closed form and G_T reduces to a P integral.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import lebedev_rule
from scipy.special import gamma

from .spectral import neville

CASES = ("one-minimum", "a", "b", "c", "off-zero")


class QuadratureFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class Minimum:
    Q: float
    n: int
    a: float


@dataclass(frozen=True)
class ToyFiberModel:
    d: int
    minima: tuple
    theta0: float = 0.0
    theta1: float = 0.0
    gap: float = 1.0
    phi_width: float = 1.0
    phi_center: tuple = ()
    angular_order: int = 41
    angular_points_2d: int = 128

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ValueError("toy dimension must be 1, 2 or 3")
        mins = tuple(m if isinstance(m, Minimum) else Minimum(float(m[0]), int(m[1]), float(m[2]))
                     for m in self.minima)
        mins = tuple(sorted(mins, key=lambda m: m.Q))
        object.__setattr__(self, "minima", mins)
        if not mins:
            raise ValueError("toy needs at least one minimum")
        for m in mins:
            if m.n < 2 or m.a <= 0 or m.Q < 0:
                raise ValueError(f"invalid minimum {m}: need n >= 2, a > 0, Q >= 0")
            if m.Q > 0 and m.n % 2:
                raise ValueError(f"minimum at Q={m.Q} needs an even order so that E_r >= 0 on both sides")
        qs = [m.Q for m in mins]
        if len(set(qs)) != len(qs):
            raise ValueError("minima positions must be distinct")
        if not self.gap > 0:
            raise ValueError("gap must be positive")
        if not self.phi_width > 0:
            raise ValueError("phi_width must be positive")
        c = tuple(float(v) for v in self.phi_center) if len(self.phi_center) else (0.0,) * self.d
        if len(c) != self.d:
            raise ValueError("phi_center has the wrong dimension")
        object.__setattr__(self, "phi_center", c)

    # profiles --------------------------------------------------------------

    def E_r(self, r):
        """1 / sum_l 1 / (a_l (r - Q_l)^n_l): zero exactly at each Q_l and
        equal to a_l (r - Q_l)^n_l up to relative O((r - Q_l)^n_l) nearby."""
        r = np.asarray(r, dtype=float)
        terms = np.stack([m.a * (r - m.Q) ** m.n for m in self.minima])
        with np.errstate(divide="ignore"):
            inv = np.sum(1.0 / terms, axis=0)
        zero = np.any(terms == 0, axis=0)
        return np.where(zero, 0.0, 1.0 / np.where(zero, 1.0, inv))

    def E(self, P):
        return self.E_r(np.linalg.norm(np.atleast_2d(P), axis=-1))

    def theta(self, P):
        P = np.atleast_2d(P)
        return self.theta0 + self.theta1 * np.sum(P * P, axis=-1)

    def phi_hat(self, P):
        P = np.atleast_2d(P)
        diff = P - np.asarray(self.phi_center)
        return np.exp(-np.sum(diff * diff, axis=-1) / (2.0 * self.phi_width**2))

    def overlap2(self, P):
        """f(P) = |<phi_P, psi_P>|^2."""
        return self.phi_hat(P) ** 2 * np.cos(self.theta(P)) ** 2

    def curvature(self, Q):
        m = self._minimum(Q)
        return 2.0 * m.a if m.n == 2 else 0.0

    def _minimum(self, Q):
        for m in self.minima:
            if math.isclose(m.Q, Q, abs_tol=1e-14):
                return m
        raise ValueError(f"{Q} is not a listed minimum")

    def h(self, P, k, t):
        """<psi_P, e^{-t H(P+k)} psi_P> for rows of P."""
        P = np.atleast_2d(P)
        Pk = P + np.asarray(k, dtype=float)
        c = np.cos(self.theta(Pk) - self.theta(P))
        return np.exp(-t * self.E(Pk)) * (c * c + math.exp(-t * self.gap) * (1.0 - c * c))

    # angular rules ---------------------------------------------------------

    def angular_rule(self):
        if self.d == 1:
            return np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
        if self.d == 2:
            n = self.angular_points_2d
            phi = 2.0 * math.pi * np.arange(n) / n
            return np.stack([np.cos(phi), np.sin(phi)], axis=1), np.full(n, 2.0 * math.pi / n)
        x, w = lebedev_rule(self.angular_order)
        return x.T.copy(), w


def sphere_area(d):
    return 2.0 * math.pi ** (d / 2.0) / gamma(d / 2.0)


# finite-T integral ---------------------------------------------------------

def _radial_breaks(toy: ToyFiberModel, tau):
    c = float(np.linalg.norm(toy.phi_center))
    rmax = c + 9.0 * toy.phi_width
    pts = {0.0}
    for m in toy.minima:
        w = (max(tau, 1e-300) * m.a) ** (-1.0 / m.n)
        # past 9 boundary widths phi^2 is below e^-81 of its value at Q
        rmax = max(rmax, m.Q + min(40.0 * w, 9.0 * toy.phi_width))
        s = 0.125
        while s * w < rmax:
            pts.add(m.Q + s * w)
            if m.Q - s * w > 0:
                pts.add(m.Q - s * w)
            s *= 2.0
        pts.add(m.Q)
    br = np.array(sorted(p for p in pts if p <= rmax) + [rmax])
    # cap panel length relative to the boundary weight scale
    out = [br[0]]
    step = 0.5 * toy.phi_width
    for b in br[1:]:
        a = out[-1]
        if b - a > step:
            out.extend(np.linspace(a, b, int(math.ceil((b - a) / step)) + 1)[1:])
        else:
            out.append(b)
    return np.unique(np.array(out))


def _radial_nodes(breaks, n):
    x, w = np.polynomial.legendre.leggauss(n)
    a, b = breaks[:-1, None], breaks[1:, None]
    r = 0.5 * (b - a) * x + 0.5 * (b + a)
    wr = 0.5 * (b - a) * w
    return r.ravel(), wr.ravel()


def _integrals(toy: ToyFiberModel, k, t, T, n_nodes):
    dirs, wa = toy.angular_rule()
    breaks = _radial_breaks(toy, 2 * T + t)
    r, wr = _radial_nodes(breaks, n_nodes)
    P = (r[:, None, None] * dirs[None, :, :]).reshape(-1, toy.d)
    w = (wr[:, None] * r[:, None] ** (toy.d - 1) * wa[None, :]).ravel()
    k = np.broadcast_to(np.asarray(k, dtype=float), (toy.d,))
    phi = toy.phi_hat(P)
    th = toy.theta(P)
    EP = toy.E(P)
    # Omega = cos(th) psi - sin(th) psi_perp; e^{-T H} damps psi_perp by e^{-T gap}
    cu, su = np.cos(th), -math.exp(-T * toy.gap) * np.sin(th)
    den_b = cu * cu + math.exp(-t * toy.gap) * su * su
    Pk = P + k
    dth = toy.theta(Pk) - th
    # components of u in the (psi_{P+k}, psi_perp_{P+k}) frame
    c1 = cu * np.cos(dth) + su * np.sin(dth)
    c2 = -cu * np.sin(dth) + su * np.cos(dth)
    num_b = c1 * c1 + math.exp(-t * toy.gap) * c2 * c2
    wt = w * phi * phi
    num = np.sum(wt * np.exp(-2.0 * T * EP - t * toy.E(Pk)) * num_b)
    den = np.sum(wt * np.exp(-(2.0 * T + t) * EP) * den_b)
    return num, den


def gT_exact(toy: ToyFiberModel, k, t, T, rtol=1e-9, n_nodes=24, return_error=False):
    """G_T(k, t) by radial Gauss-Legendre panels times an angular rule.

    The panel layout follows the Laplace widths (tau a_l)^(-1/n_l) around every
    minimum; the error estimate compares n and 2n nodes per panel.
    """
    if T < 0 or t < 0:
        raise ValueError("T and t must be nonnegative")
    k = np.broadcast_to(np.asarray(k, dtype=float), (toy.d,))
    if t == 0 or not np.any(k):
        return (1.0, 0.0) if return_error else 1.0
    n = n_nodes
    prev = None
    for _ in range(4):
        num, den = _integrals(toy, k, t, T, n)
        if not (den > 0 and np.isfinite(den)):
            raise FloatingPointError(f"normalization underflows at T={T}; reduce T")
        val = num / den
        if prev is not None:
            err = abs(val - prev) / abs(val)
            if err <= rtol:
                return (float(val), float(err)) if return_error else float(val)
        prev = val
        n *= 2
    raise QuadratureFailure(f"radial quadrature did not reach rtol={rtol} (last change {err:.2e})")


# T -> infinity formulas -------------------------------------------------------

@dataclass
class PinnedLimitResult:
    k: np.ndarray
    t: float
    case: str
    limit: float
    T_ladder: list = field(default_factory=list)
    finite_T: list = field(default_factory=list)
    weights: dict = field(default_factory=dict)

    @property
    def rel_errors(self):
        return [abs(v - self.limit) / abs(self.limit) for v in self.finite_T]


def classify(toy: ToyFiberModel) -> str:
    """Which T -> infinity regime applies, by integer comparison of n d with n0."""
    mins = toy.minima
    if mins[0].Q > 0:
        return "off-zero"
    if len(mins) == 1:
        return "one-minimum"
    n0 = mins[0].n
    n = max(m.n for m in mins[1:])
    if n * toy.d > n0:
        return "a"
    if n * toy.d == n0:
        return "b"
    return "c"


def zero_weight(toy: ToyFiberModel) -> float:
    """c_0 = |S^{d-1}| f(0) Gamma(d/n0) / (n0 a0^{d/n0}): the coefficient of
    tau^{-d/n0} in the weight of the zero minimum."""
    m = toy.minima[0]
    f0 = float(toy.overlap2(np.zeros((1, toy.d)))[0])
    return sphere_area(toy.d) * f0 * gamma(toy.d / m.n) / (m.n * m.a ** (toy.d / m.n))


def shell_weight(toy: ToyFiberModel, m: Minimum) -> float:
    """C_l = Q^{d-1} 2 Gamma(1/n) / (n a^{1/n}): the two-sided radial Laplace
    integral around an off-zero minimum, without the angular factor."""
    return m.Q ** (toy.d - 1) * 2.0 * gamma(1.0 / m.n) / (m.n * m.a ** (1.0 / m.n))


def _shell_integrals(toy, m, k, t):
    dirs, wa = toy.angular_rule()
    P = m.Q * dirs
    f = toy.overlap2(P)
    return float(np.sum(wa * f * toy.h(P, k, t))), float(np.sum(wa * f))


def gT_limit_formula(toy: ToyFiberModel, k, t) -> PinnedLimitResult:
    k = np.broadcast_to(np.asarray(k, dtype=float), (toy.d,)).copy()
    case = classify(toy)
    zero_h = lambda: float(toy.h(np.zeros((1, toy.d)), k, t)[0])
    if case in ("one-minimum", "c"):
        return PinnedLimitResult(k, t, case, zero_h())
    if case == "off-zero":
        nbar = max(m.n for m in toy.minima)
        shells = [m for m in toy.minima if m.n == nbar]
    else:
        n = max(m.n for m in toy.minima[1:])
        shells = [m for m in toy.minima[1:] if m.n == n]
    num = den = 0.0
    weights = {}
    for m in shells:
        a, b = _shell_integrals(toy, m, k, t)
        C = shell_weight(toy, m)
        num += C * a
        den += C * b
        weights[m.Q] = C * b
    if case == "b":
        c0 = zero_weight(toy)
        num += c0 * zero_h()
        den += c0
        weights[0.0] = c0
    return PinnedLimitResult(k, t, case, num / den, weights=weights)


def pinned_limit_study(toy: ToyFiberModel, k, t, T_ladder=(10, 20, 40, 80, 160), rtol=1e-9) -> PinnedLimitResult:
    res = gT_limit_formula(toy, k, t)
    res.T_ladder = [float(T) for T in T_ladder]
    res.finite_T = [gT_exact(toy, k, t, T, rtol=rtol) for T in T_ladder]
    return res


# eps limits ------------------------------------------------------------------

@dataclass
class EpsilonLimitResult:
    eps: list
    values: list
    limit: float
    error: float
    closed_form: float
    converged: bool
    flags: list = field(default_factory=list)


def epsilon_limit(toy: ToyFiberModel, k, t, eps_list, Q=0.0, direction=None, tol=1e-6) -> EpsilonLimitResult:
    """<psi_{Q Phat}, e^{-(t/eps^2) H(Q Phat + eps k)} psi_{Q Phat}> on an eps
    ladder, extrapolated to eps = 0 and compared with the Gaussian closed form."""
    m = toy._minimum(Q)
    if m.n != 2:
        raise ValueError(f"minimum at Q={Q} has order {m.n}; the eps limit needs a quadratic minimum")
    k = np.broadcast_to(np.asarray(k, dtype=float), (toy.d,))
    if direction is None:
        direction = np.eye(toy.d)[0]
    phat = np.asarray(direction, dtype=float)
    phat = phat / np.linalg.norm(phat)
    base = Q * phat
    vals = [float(toy.h(base[None, :], e * k, t / e**2)[0]) for e in eps_list]
    lim, err = neville(eps_list, vals)
    curv = toy.curvature(Q)
    proj2 = float(k @ k) if Q == 0 else float(phat @ k) ** 2
    closed = math.exp(-0.5 * t * curv * proj2)
    converged = err <= tol
    flags = [] if converged else ["eps ladder not converged"]
    return EpsilonLimitResult(list(map(float, eps_list)), vals, float(lim), float(err), closed, converged, flags)


# CLT classification --------------------------------------------------------------

@dataclass
class CLTVerdict:
    verdict: str
    sigma2: float
    residual: float
    y: list
    x: list
    case: str


def clt_classify(toy: ToyFiberModel, k_list, t, eps_ladder, rtol=1e-6) -> CLTVerdict:
    """Fit -ln G_inf(eps k, t/eps^2), extrapolated to eps = 0, against
    sigma^2 |k|^2 t / 2 across the k list.

    The limit counts as identically 1 (degenerate) when every extrapolated
    value is below rtol times the largest |k|^2 t / 2.
    """
    ys, xs = [], []
    for k in k_list:
        k = np.broadcast_to(np.asarray(k, dtype=float), (toy.d,))
        seq = [-math.log(gT_limit_formula(toy, e * k, t / e**2).limit) for e in eps_ladder]
        y, _ = neville(eps_ladder, seq)
        ys.append(float(y))
        xs.append(0.5 * float(k @ k) * t)
    ys_a, xs_a = np.array(ys), np.array(xs)
    case = classify(toy)
    if np.all(np.abs(ys_a) < rtol * np.max(xs_a)):
        return CLTVerdict("degenerate", 0.0, 0.0, ys, xs, case)
    s2 = float(ys_a @ xs_a / (xs_a @ xs_a))
    resid = float(np.max(np.abs(ys_a - s2 * xs_a)) / np.max(np.abs(ys_a)))
    verdict = "gaussian" if resid < rtol else "non-gaussian"
    return CLTVerdict(verdict, s2, resid, ys, xs, case)
