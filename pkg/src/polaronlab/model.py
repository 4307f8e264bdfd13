"""Dispersion relations, form factors and the two-time kernel W.

The continuum model is replaced by a finite set of momentum modes on a
symmetric cubic lattice (k = 0 excluded).  Every quantity that the spectral
and the path-integral routes share is derived from :class:`ModelSpec`, so the
two routes describe the same finite model.

Units: bare electron mass 1, hbar 1.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import integrate, special

SQRT2_PI = math.sqrt(2.0) * math.pi

DISPERSION_KINDS = ("constant", "massive-quadratic", "tabulated")
FORM_FACTOR_KINDS = ("gaussian", "froehlich-sharp", "froehlich-exp")


class QuadratureError(RuntimeError):
    """Adaptive quadrature did not reach the requested tolerance."""

    def __init__(self, message, value, abserr):
        super().__init__(f"{message} (value={value!r}, achieved abserr={abserr:.3e})")
        self.value = value
        self.abserr = abserr


@dataclass(frozen=True)
class DispersionSpec:
    """Boson dispersion omega(|k|).

    ``tabulated`` takes ``table`` as ((|k|, omega), ...) pairs sorted by |k|;
    values are linearly interpolated and held constant past the last entry.
    """

    kind: str = "constant"
    c0: float = 1.0
    a: float = 0.0
    table: tuple = ()

    def __post_init__(self):
        if self.kind not in DISPERSION_KINDS:
            raise ValueError(f"unknown dispersion kind {self.kind!r}")
        if self.kind == "tabulated":
            if len(self.table) < 2:
                raise ValueError("tabulated dispersion needs at least two (|k|, omega) rows")
            ks = [row[0] for row in self.table]
            if any(b <= a for a, b in zip(ks, ks[1:])):
                raise ValueError("tabulated dispersion |k| column must be strictly increasing")

    def radial(self, kabs):
        kabs = np.asarray(kabs, dtype=float)
        if self.kind == "constant":
            return np.full_like(kabs, self.c0)
        if self.kind == "massive-quadratic":
            return self.c0 + self.a * kabs**2
        tab = np.asarray(self.table, dtype=float)
        return np.interp(kabs, tab[:, 0], tab[:, 1])


@dataclass(frozen=True)
class FormFactorSpec:
    """Coupling function g(|k|).

    ``froehlich-sharp`` is chi_[0,kappa](|k|) / (sqrt2 pi |k|).
    ``froehlich-exp`` is exp(-|k| / (2 kappa)) / (sqrt2 pi |k|), whose kernel is
    the arctan form |x|^-1 (2/pi) arctan(kappa |x|) e^-|t|.
    """

    kind: str = "gaussian"
    g0: float = 1.0
    width: float = 1.0
    kappa: float = math.inf

    def __post_init__(self):
        if self.kind not in FORM_FACTOR_KINDS:
            raise ValueError(f"unknown form factor kind {self.kind!r}")
        if self.kind == "gaussian" and not self.width > 0:
            raise ValueError("gaussian form factor needs width > 0")
        if self.kind != "gaussian" and not self.kappa > 0:
            raise ValueError("froehlich form factor needs kappa > 0")

    @property
    def singular(self):
        return self.kind != "gaussian"

    def radial(self, kabs):
        kabs = np.asarray(kabs, dtype=float)
        if self.kind == "gaussian":
            return self.g0 * np.exp(-(kabs**2) / (2.0 * self.width**2))
        if np.any(kabs == 0):
            raise ValueError("froehlich form factor is singular at k = 0")
        if self.kind == "froehlich-sharp":
            return np.where(kabs <= self.kappa, 1.0 / (SQRT2_PI * kabs), 0.0)
        return np.exp(-kabs / (2.0 * self.kappa)) / (SQRT2_PI * kabs)


@dataclass(frozen=True)
class KGridSpec:
    """Symmetric cubic lattice of spacing ``dk`` inside |k| <= kmax, k = 0 removed."""

    dk: float
    kmax: float
    d: int = 1

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ValueError("dimension must be 1, 2 or 3")
        if not (self.dk > 0 and self.kmax >= self.dk):
            raise ValueError("grid needs dk > 0 and kmax >= dk")

    @cached_property
    def lattice(self) -> np.ndarray:
        """Integer coordinates of the modes, lexicographically ordered."""
        nmax = int(math.floor(self.kmax / self.dk + 1e-9))
        r2 = (self.kmax / self.dk) ** 2 * (1 + 1e-12)
        pts = [
            n
            for n in itertools.product(range(-nmax, nmax + 1), repeat=self.d)
            if 0 < sum(c * c for c in n) <= r2
        ]
        return np.array(pts, dtype=np.int64).reshape(-1, self.d)

    @cached_property
    def modes(self) -> np.ndarray:
        return self.lattice * self.dk

    @property
    def size(self) -> int:
        return len(self.lattice)

    @property
    def weight(self) -> float:
        """Riemann-sum measure dk^d."""
        return self.dk**self.d

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        """Modes with a lattice neighbour outside the ball."""
        lat = self.lattice
        r2 = (self.kmax / self.dk) ** 2 * (1 + 1e-12)
        mask = np.zeros(len(lat), dtype=bool)
        for ax in range(self.d):
            for s in (-1, 1):
                nb = lat.copy()
                nb[:, ax] += s
                mask |= (nb**2).sum(axis=1) > r2
        return mask

    def is_symmetric(self) -> bool:
        keys = {tuple(n) for n in self.lattice}
        return all(tuple(-n) in keys for n in self.lattice)


@dataclass(frozen=True)
class ModelSpec:
    d: int
    dispersion: DispersionSpec = field(default_factory=DispersionSpec)
    form_factor: FormFactorSpec = field(default_factory=FormFactorSpec)
    alpha: float = 0.0
    grid: KGridSpec = None

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.grid is None:
            object.__setattr__(self, "grid", KGridSpec(1.0, 1.0, self.d))
        if self.grid.d != self.d:
            raise ValueError("grid dimension does not match model dimension")

    def with_alpha(self, alpha: float) -> "ModelSpec":
        return ModelSpec(self.d, self.dispersion, self.form_factor, float(alpha), self.grid)

    @cached_property
    def modes(self) -> np.ndarray:
        return self.grid.modes

    @cached_property
    def omega(self) -> np.ndarray:
        return eval_omega(self, self.modes)

    @cached_property
    def g(self) -> np.ndarray:
        return eval_g(self, self.modes)

    @cached_property
    def coupling(self) -> np.ndarray:
        """Per-mode amplitude sqrt(dk^d) g(k_i) (without sqrt(alpha))."""
        return math.sqrt(self.grid.weight) * self.g

    @property
    def g_norm2(self) -> float:
        """Discrete ||g||^2 = sum_i dk^d g(k_i)^2 = W_disc(0, 0)."""
        return float(np.sum(self.coupling**2))

    @property
    def c0(self) -> float:
        return float(np.min(self.omega))

    def energy_lower_bound(self) -> float:
        """-alpha sum c_i^2 / omega_i, a P-independent lower bound on E(P)."""
        return -self.alpha * float(np.sum(self.coupling**2 / self.omega))

    def to_dict(self) -> dict:
        disp = {"kind": self.dispersion.kind}
        if self.dispersion.kind == "tabulated":
            disp["table"] = [list(map(float, row)) for row in self.dispersion.table]
        else:
            disp["c0"] = self.dispersion.c0
            if self.dispersion.kind == "massive-quadratic":
                disp["a"] = self.dispersion.a
        ff = {"kind": self.form_factor.kind}
        if self.form_factor.kind == "gaussian":
            ff.update(g0=self.form_factor.g0, width=self.form_factor.width)
        else:
            ff["kappa"] = self.form_factor.kappa
        return {
            "dimension": self.d,
            "alpha": self.alpha,
            "dispersion": disp,
            "form_factor": ff,
            "grid": {"dk": self.grid.dk, "kmax": self.grid.kmax},
        }


def _norm(k) -> np.ndarray:
    k = np.asarray(k, dtype=float)
    if k.ndim == 0:
        return np.abs(k)
    return np.sqrt(np.sum(k * k, axis=-1))


def eval_omega(model: ModelSpec, k):
    """omega(k) for wavevector(s) ``k`` of shape (..., d)."""
    return model.dispersion.radial(_norm(k))


def eval_g(model: ModelSpec, k):
    return model.form_factor.radial(_norm(k))


def _closed_form_W(model: ModelSpec, r, t):
    ff, disp = model.form_factor, model.dispersion
    if model.d != 3 or not ff.singular or disp.kind != "constant":
        return None
    decay = np.exp(-disp.c0 * np.abs(t))
    kappa = ff.kappa
    if r == 0:
        if math.isinf(kappa):
            raise ValueError("Froehlich kernel is singular at x = 0")
        return 2.0 * kappa / math.pi * decay
    if math.isinf(kappa):
        return decay / r
    if ff.kind == "froehlich-exp":
        return 2.0 / (math.pi * r) * math.atan(kappa * r) * decay
    return 2.0 / (math.pi * r) * special.sici(kappa * r)[0] * decay


def eval_W_continuum(model: ModelSpec, x, t, epsrel=1e-8, epsabs=1e-12):
    """W(x,t) = int dk |g(k)|^2 e^{ikx} e^{-omega(k)|t|} in the continuum.

    Closed forms are used for the Froehlich kinds with constant omega in
    d = 3; everything else goes through radial adaptive quadrature.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    r = float(np.sqrt(np.sum(x * x)))
    t = float(t)
    closed = _closed_form_W(model, r, t)
    if closed is not None:
        return float(closed)

    ff, disp = model.form_factor, model.dispersion
    d = model.d
    upper = ff.kappa if ff.singular else np.inf
    if ff.kind == "froehlich-exp":
        upper = np.inf

    def radial(k):
        return ff.radial(k) ** 2 * np.exp(-disp.radial(k) * abs(t))

    opts = dict(epsrel=epsrel, epsabs=epsabs, limit=500, full_output=1)
    if d == 1:
        f = lambda k: 2.0 * radial(k)
        if ff.singular:
            raise ValueError("1d Froehlich form factor is not square integrable")
        res = integrate.quad(f, 0.0, upper, weight="cos", wvar=r, **opts) if r > 0 else integrate.quad(f, 0.0, upper, **opts)
    elif d == 2:
        f = lambda k: 2.0 * math.pi * k * radial(k) * special.j0(k * r)
        if ff.singular:
            raise ValueError("2d Froehlich form factor is not square integrable")
        hi = upper if np.isfinite(upper) else ff.width * 40.0
        res = integrate.quad(f, 0.0, hi, **opts)
    else:
        if r > 0:
            f = lambda k: 4.0 * math.pi * k * radial(k) / r
            res = integrate.quad(f, 1e-300 if ff.singular else 0.0, upper, weight="sin", wvar=r, **opts)
        else:
            f = lambda k: 4.0 * math.pi * k * k * radial(k)
            res = integrate.quad(f, 0.0, upper, **opts)
    value, abserr = res[0], res[1]
    if abserr > max(epsabs, epsrel * abs(value)) * 10 or (len(res) > 3 and res[2] and "ier" in res[2] and res[2]["ier"] not in (0,)):
        raise QuadratureError("W quadrature did not converge", value, abserr)
    return float(value)


def kernel_kappa(x, t, kappa):
    """Exponential-cutoff Froehlich kernel |x|^-1 (2/pi) arctan(kappa|x|) e^-|t|."""
    r = float(np.sqrt(np.sum(np.square(x))))
    if math.isinf(kappa):
        return math.exp(-abs(t)) / r
    return 2.0 / (math.pi * r) * math.atan(kappa * r) * math.exp(-abs(t))


def eval_W_discrete(model: ModelSpec, x, t):
    """Kernel of the finite model: sum_i dk^d g_i^2 cos(k_i . x) e^{-omega_i |t|}.

    ``x`` has shape (..., d) and ``t`` broadcasts against x[..., 0].
    """
    x = np.asarray(x, dtype=float)
    if model.d == 1 and x.ndim == 0:
        x = x[None]
    phase = x @ model.modes.T
    decay = np.exp(-np.multiply.outer(np.abs(np.asarray(t, dtype=float)), model.omega))
    out = np.sum(model.coupling**2 * np.cos(phase) * decay, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


@dataclass
class ConditionReport:
    entries: list = field(default_factory=list)

    def add(self, name, passed, detail=""):
        self.entries.append({"check": name, "passed": bool(passed), "detail": detail})

    @property
    def passed(self) -> bool:
        return all(e["passed"] for e in self.entries)

    def __getitem__(self, name):
        for e in self.entries:
            if e["check"] == name:
                return e
        raise KeyError(name)


def _grid_symmetries(d):
    for perm in itertools.permutations(range(d)):
        for signs in itertools.product((1, -1), repeat=d):
            yield perm, np.array(signs)


def check_condition_C(model: ModelSpec, samples: int = 200, seed: int = 0) -> ConditionReport:
    """Check massiveness, sub-additivity and symmetry requirements on the grid.

    Failures are report entries, never exceptions.
    """
    rep = ConditionReport()
    modes = model.modes
    g = model.g
    om = model.omega

    rep.add("grid symmetric under k -> -k", model.grid.is_symmetric())

    sym_ok_g = sym_ok_w = True
    for perm, signs in _grid_symmetries(model.d):
        img = modes[:, perm] * signs
        sym_ok_g &= bool(np.array_equal(eval_g(model, img), g))
        sym_ok_w &= bool(np.array_equal(eval_omega(model, img), om))
    rep.add("g real and rotation invariant", sym_ok_g and np.isrealobj(g), "grid-preserving symmetries")
    n2 = model.g_norm2
    rep.add("discrete ||g||^2 finite", math.isfinite(n2), f"||g||^2 = {n2:.17g}")
    rep.add("omega rotation invariant", sym_ok_w, "grid-preserving symmetries")
    c0 = float(np.min(om))
    rep.add("omega >= c0 > 0", c0 > 0, f"min omega on grid = {c0:.17g}")

    rng = np.random.default_rng(seed)
    i = rng.integers(0, len(modes), size=samples)
    j = rng.integers(0, len(modes), size=samples)
    lhs = eval_omega(model, modes[i] + modes[j])
    rhs = om[i] + om[j]
    viol = int(np.sum(lhs > rhs * (1 + 1e-14)))
    rep.add("omega sub-additive", viol == 0, f"{viol} violations in {samples} sampled pairs")
    return rep
