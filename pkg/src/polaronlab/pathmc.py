"""Path-integral Monte Carlo for the Gibbs-weighted Brownian path measure.

A path is a Brownian walk on a dt lattice weighted by exp(-S_int) with

    S_int = -(alpha / 2) dt^2 sum_{i != j} W(q_i - q_j, t_i - t_j).

Proposals are exact draws from the Wiener reference measure (Brownian bridge
inside, free walk at free ends), so the Metropolis ratio is exp(-dS_int).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

from .model import ModelSpec
from .stats import MCEstimate, blocking_estimate, combine, combined_sigma

BOUNDARIES = ("delta-start-free-end", "free-both", "two-sided-pinned")
MOVES = ("bridge-regenerate", "endpoint-extend", "global-translate")
ACTION_METHODS = ("factorized", "blocked", "reference")
X_MIN = 1e-8


def _steps(x, dt, name):
    n = x / dt
    r = round(n)
    if x < 0 or abs(n - r) > 1e-9 * max(1.0, n):
        raise ValueError(f"{name}={x!r} is not a nonnegative multiple of dt={dt!r}")
    return int(r)


@dataclass(frozen=True)
class PathConfig:
    t: float
    dt: float
    T_minus: float = 0.0
    T_plus: float = 0.0
    boundary: str = "delta-start-free-end"
    phi_table: tuple = ()

    def __post_init__(self):
        if self.boundary not in BOUNDARIES:
            raise ValueError(f"unknown boundary kind {self.boundary!r}")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.boundary == "delta-start-free-end" and self.T_minus != 0:
            raise ValueError("delta-start boundary has T_minus = 0")
        if self.boundary == "two-sided-pinned" and len(self.phi_table) < 2:
            raise ValueError("two-sided-pinned boundary needs a phi table of (|x|, phi) rows")
        for name in ("t", "T_minus", "T_plus"):
            _steps(getattr(self, name), self.dt, name)

    @property
    def i0(self) -> int:
        return _steps(self.T_minus, self.dt, "T_minus")

    @property
    def i1(self) -> int:
        return self.i0 + _steps(self.t, self.dt, "t")

    @property
    def N(self) -> int:
        return _steps(self.T_minus + self.t + self.T_plus, self.dt, "total time")

    @property
    def left_free(self) -> bool:
        return self.boundary == "free-both"

    def end_weight(self, x) -> float:
        """phi_+ at the final point; 1 for free ends."""
        if self.boundary != "two-sided-pinned":
            return 1.0
        tab = np.asarray(self.phi_table, dtype=float)
        return float(np.interp(np.linalg.norm(x), tab[:, 0], tab[:, 1], right=tab[-1, 1]))


@dataclass
class Path:
    q: np.ndarray
    cfg: PathConfig
    S: float = math.nan

    @property
    def N(self) -> int:
        return len(self.q) - 1

    @property
    def times(self) -> np.ndarray:
        return -self.cfg.T_minus + self.cfg.dt * np.arange(len(self.q))

    def copy(self) -> "Path":
        return Path(self.q.copy(), self.cfg, self.S)

    @property
    def displacement(self) -> np.ndarray:
        return self.q[self.cfg.i1] - self.q[self.cfg.i0]


def brownian_path(cfg: PathConfig, d: int, rng) -> Path:
    """Exact draw from the reference measure, anchored at q(0) = 0."""
    inc = rng.normal(scale=math.sqrt(cfg.dt), size=(cfg.N, d))
    q = np.vstack([np.zeros((1, d)), np.cumsum(inc, axis=0)])
    q -= q[cfg.i0]
    return Path(q, cfg)


# kernels ------------------------------------------------------------------

def _phase(x, modes):
    # fixed-order dot product so every caller gets identical bits
    out = x[..., 0:1] * modes[:, 0]
    for a in range(1, modes.shape[1]):
        out = out + x[..., a : a + 1] * modes[:, a]
    return out


def _row_W_discrete(model, dx, dtau):
    """W_disc for an array of displacements dx (..., d) and time gaps dtau (...)."""
    ph = _phase(dx, model.modes)
    decay = np.exp(-np.abs(dtau)[..., None] * model.omega)
    return np.sum(model.coupling**2 * np.cos(ph) * decay, axis=-1)


def continuum_kernel(model: ModelSpec):
    """Vectorized closed-form continuum kernel W(r, tau) and its singular flag."""
    ff, disp = model.form_factor, model.dispersion
    if disp.kind != "constant":
        raise NotImplementedError("continuum path kernel needs constant omega")
    c0 = disp.c0
    if ff.kind == "gaussian":
        amp = ff.g0**2 * (math.sqrt(math.pi) * ff.width) ** model.d
        return (lambda r, tau: amp * np.exp(-(ff.width * r) ** 2 / 4.0) * np.exp(-c0 * np.abs(tau))), False
    if model.d != 3:
        raise NotImplementedError("Froehlich continuum kernel is defined in d = 3")
    kappa = ff.kappa
    if math.isinf(kappa):
        return (lambda r, tau: np.exp(-c0 * np.abs(tau)) / r), True
    if ff.kind == "froehlich-exp":
        return (lambda r, tau: 2.0 / (math.pi * r) * np.arctan(kappa * r) * np.exp(-c0 * np.abs(tau))), True
    from scipy.special import sici
    return (lambda r, tau: 2.0 / (math.pi * r) * sici(kappa * r)[0] * np.exp(-c0 * np.abs(tau))), True


@dataclass
class ActionCounters:
    capped: int = 0


def _rows_continuum(model, q, rows, dt, counters):
    fn, singular = continuum_kernel(model)
    idx = np.arange(len(q))
    dx = q[rows][:, None, :] - q[None, :, :]
    r = np.sqrt(np.sum(dx * dx, axis=-1))
    dtau = (rows[:, None] - idx[None, :]) * dt
    if singular:
        small = (r < X_MIN) & (rows[:, None] != idx[None, :])
        if counters is not None:
            counters.capped += int(np.sum(small))
        r = np.maximum(r, X_MIN)
    W = fn(r, dtau)
    W[np.arange(len(rows)), rows] = 0.0
    return np.sum(W, axis=1)


def _rows_discrete(model, q, rows, dt):
    idx = np.arange(len(q))
    dx = q[rows][:, None, :] - q[None, :, :]
    dtau = (rows[:, None] - idx[None, :]) * dt
    W = _row_W_discrete(model, dx, dtau)
    W[np.arange(len(rows)), rows] = 0.0
    return np.sum(W, axis=1)


def _action_rows(path, model, kernel, block, counters):
    q = np.asarray(path.q, dtype=float)
    n = len(q)
    sums = np.empty(n)
    for start in range(0, n, block):
        rows = np.arange(start, min(n, start + block))
        if kernel == "discrete":
            sums[rows] = _rows_discrete(model, q, rows, path.cfg.dt)
        else:
            sums[rows] = _rows_continuum(model, q, rows, path.cfg.dt, counters)
    return -(model.alpha / 2.0) * path.cfg.dt**2 * float(np.sum(sums))


def _mode_groups(model):
    """Half of the +-k pairs, grouped by omega; each carries weight 2 c^2."""
    lat = model.grid.lattice
    first = np.array([next((v for v in row if v != 0), 0) for row in lat])
    keep = first > 0
    modes = model.modes[keep]
    w = 2.0 * model.coupling[keep] ** 2
    om = model.omega[keep]
    groups = []
    for val in np.unique(om):
        sel = om == val
        groups.append((float(val), modes[sel], w[sel]))
    return groups


def _action_factorized(path, model):
    """O(N M) evaluation: for each mode, sum_{i != j} cos(k.(q_i - q_j)) r^|i-j|
    = 2 Re sum_i conj(z_i) F_i - 2 N with F the causal filter of z = e^{ik.q}."""
    q = np.asarray(path.q, dtype=float)
    n = len(q)
    dt = path.cfg.dt
    total = 0.0
    for om, modes, w in _mode_groups(model):
        z = np.exp(1j * (q @ modes.T)).T
        F = lfilter([1.0], [1.0, -math.exp(-om * dt)], z, axis=1)
        pair = 2.0 * np.real(np.sum(np.conj(z) * F, axis=1)) - 2.0 * n
        total += float(np.sum(w * pair))
    return -(model.alpha / 2.0) * dt**2 * total


def interaction_action(path: Path, model: ModelSpec, kernel="discrete", method="factorized",
                       block=64, counters: ActionCounters | None = None) -> float:
    """S_int of a path.  ``reference`` and ``blocked`` are the O(N^2) double sum
    with identical reduction order; ``factorized`` is the O(N M) filter form
    (discrete kernel only)."""
    if model.alpha == 0:
        return 0.0
    if kernel not in ("discrete", "continuum"):
        raise ValueError(f"unknown kernel {kernel!r}")
    if method == "reference":
        return _action_rows(path, model, kernel, 1, counters)
    if method == "blocked":
        return _action_rows(path, model, kernel, block, counters)
    if method != "factorized":
        raise ValueError(f"unknown action method {method!r}")
    if kernel == "continuum":
        return _action_rows(path, model, kernel, block, counters)
    if not model.grid.is_symmetric():
        raise ValueError("factorized action needs a symmetric grid")
    return _action_factorized(path, model)


def action_bound(model: ModelSpec, cfg: PathConfig) -> float:
    """(alpha/2) (T_- + t + T_+)^2 W_disc(0, 0)."""
    total = cfg.T_minus + cfg.t + cfg.T_plus
    return 0.5 * model.alpha * total**2 * model.g_norm2


# moves ---------------------------------------------------------------------

def bridge(qa, qb, n, dt, d, rng):
    """Interior points of a Brownian bridge from qa to qb in n steps."""
    W = np.cumsum(rng.normal(scale=math.sqrt(dt), size=(n, d)), axis=0)
    j = (np.arange(1, n + 1) / n)[:, None]
    br = qa + W - j * (W[-1] - (qb - qa))
    return br[:-1]


def acceptance_probability(S_old, S_new, weight_ratio=1.0) -> float:
    if weight_ratio <= 0:
        return 0.0
    x = -(S_new - S_old) + math.log(weight_ratio)
    return 1.0 if x >= 0 else math.exp(x)


def propose(path: Path, move: str, rng, segment=None) -> Path:
    """Draw a proposal from the Wiener reference measure conditioned on the
    points outside the regenerated segment."""
    cfg = path.cfg
    n_pts = path.N
    d = path.q.shape[1]
    new = path.copy()
    q = new.q
    if move == "global-translate":
        if not cfg.left_free:
            raise ValueError("global-translate needs the free-both boundary")
        q -= q[cfg.i0]
        return new
    a, b = segment if segment is not None else (0, n_pts)
    if not cfg.left_free:
        a = max(a, 0)
    if move == "bridge-regenerate":
        if not (0 <= a < b <= n_pts) or b - a < 2:
            raise ValueError("bridge needs 0 <= a < b - 1 <= N - 1")
        q[a + 1 : b] = bridge(q[a], q[b], b - a, cfg.dt, d, rng)
        return new
    if move != "endpoint-extend":
        raise ValueError(f"unknown move {move!r}")
    sd = math.sqrt(cfg.dt)
    if a <= 0 and b >= n_pts:
        inc = rng.normal(scale=sd, size=(n_pts, d))
        fresh = np.vstack([np.zeros((1, d)), np.cumsum(inc, axis=0)])
        if cfg.left_free:
            q[:] = fresh + q[cfg.i0] - fresh[cfg.i0]
        else:
            q[:] = fresh + q[0]
    elif b >= n_pts:
        q[a + 1 :] = q[a] + np.cumsum(rng.normal(scale=sd, size=(n_pts - a, d)), axis=0)
    elif a <= 0 and cfg.left_free:
        q[:b] = q[b] - np.cumsum(rng.normal(scale=sd, size=(b, d)), axis=0)[::-1]
    else:
        raise ValueError("endpoint-extend needs a segment touching a free end")
    return new


def propose_and_accept(path: Path, model: ModelSpec, move: str, rng, segment=None, kernel="discrete",
                       method="factorized", counters=None, sign=1.0):
    """One Metropolis step.  Returns (path, accepted).

    ``sign`` multiplies S_int; -1 is only used to check that the
    verification suite detects a flipped path weight.
    """
    if move not in MOVES:
        raise ValueError(f"unknown move {move!r}")
    cand = propose(path, move, rng, segment)
    if move == "global-translate":
        return cand, True
    ratio = path.cfg.end_weight(cand.q[-1]) / path.cfg.end_weight(path.q[-1]) \
        if path.cfg.boundary == "two-sided-pinned" else 1.0
    if model.alpha == 0 and ratio == 1.0:
        cand.S = 0.0
        return cand, True
    if math.isnan(path.S):
        path.S = sign * interaction_action(path, model, kernel, method, counters=counters)
    cand.S = sign * interaction_action(cand, model, kernel, method, counters=counters)
    p = acceptance_probability(path.S, cand.S, ratio)
    if p >= 1.0 or rng.random() < p:
        return cand, True
    return path, False


def _segment_move(cfg: PathConfig, rng, m):
    """Random segment of length m and the matching move kind."""
    n = cfg.N
    lo = -m + 1 if cfg.left_free else 0
    a = int(rng.integers(lo, n))
    b = a + m
    if not cfg.left_free:
        a = max(a, 0)
    if b >= n or (a <= 0 and cfg.left_free):
        return "endpoint-extend", (a, min(b, n))
    if b - a < 2:
        b = a + 2
        if b > n:
            return "endpoint-extend", (a, n)
    return "bridge-regenerate", (a, b)


# configuration and chains ---------------------------------------------------

@dataclass(frozen=True)
class MCConfig:
    sweeps: int = 10000
    burn_in: int = 1000
    chains: int = 1
    thin: int = 1
    seed: int = 0
    kernel: str = "discrete"
    action_method: str = "factorized"
    segment: int = 0
    tune: bool = True
    tune_interval: int = 50
    target_acceptance: float = 0.5
    lags: tuple = ()
    k_alt: float = 0.3
    batch: int = 4096
    weight_sign: float = 1.0

    def __post_init__(self):
        if self.kernel not in ("discrete", "continuum"):
            raise ValueError(f"unknown kernel {self.kernel!r}")
        if self.action_method not in ACTION_METHODS:
            raise ValueError(f"unknown action method {self.action_method!r}")
        if self.sweeps < 1 or self.chains < 1 or self.thin < 1 or self.burn_in < 0:
            raise ValueError("sweeps, chains and thin must be >= 1 and burn_in >= 0")


@dataclass
class ChainRecord:
    """Per-recorded-sweep observables of one chain."""

    chain: int
    S: np.ndarray
    dq: np.ndarray
    msd: np.ndarray
    cos_lo: np.ndarray
    cos_hi: np.ndarray
    acceptance: float
    segment: int
    capped: int = 0


def lag_steps(lags, cfg: PathConfig):
    steps = [_steps(l, cfg.dt, "lag") for l in lags]
    if any(s < 1 for s in steps):
        raise ValueError("lags must be positive")
    if steps and max(steps) > cfg.i1 - cfg.i0:
        raise ValueError("largest lag exceeds the observation window t")
    return steps


def _observables(q, cfg, steps, k_alt):
    """Time-averaged MSD per dimension inside [0, t] at each lag and the
    mean cosines at the smallest and largest lags."""
    d = q.shape[-1]
    win = q[..., cfg.i0 : cfg.i1 + 1, :]
    msd = np.empty(q.shape[:-2] + (len(steps),))
    cos_lo = cos_hi = None
    for j, s in enumerate(steps):
        diff = win[..., s:, :] - win[..., :-s, :]
        msd[..., j] = np.mean(np.sum(diff * diff, axis=-1), axis=-1) / d
        if j == 0 or j == len(steps) - 1:
            c = np.mean(np.cos(k_alt * diff[..., 0]), axis=-1)
            if j == 0:
                cos_lo = c
            if j == len(steps) - 1:
                cos_hi = c
    if not steps:
        z = np.zeros(q.shape[:-2])
        return msd, z + 1.0, z + 1.0
    return msd, cos_lo, cos_hi


def _run_exact(model, cfg, run, rng, chain, steps):
    """alpha = 0 with a free final point: every sweep is an independent exact
    draw of the whole path, generated in batches."""
    d = model.d
    total = run.burn_in + run.sweeps
    recorded = []
    done = 0
    while done < total:
        nb = min(run.batch, total - done)
        inc = rng.normal(scale=math.sqrt(cfg.dt), size=(nb, cfg.N, d))
        q = np.concatenate([np.zeros((nb, 1, d)), np.cumsum(inc, axis=1)], axis=1)
        q -= q[:, cfg.i0 : cfg.i0 + 1, :]
        sweep_ids = np.arange(done, done + nb)
        keep = (sweep_ids >= run.burn_in) & ((sweep_ids - run.burn_in) % run.thin == 0)
        if np.any(keep):
            qk = q[keep]
            msd, clo, chi = _observables(qk, cfg, steps, run.k_alt)
            recorded.append((qk[:, cfg.i1] - qk[:, cfg.i0], msd, clo, chi))
        done += nb
    dq = np.concatenate([r[0] for r in recorded])
    return ChainRecord(chain, np.zeros(len(dq)), dq, np.concatenate([r[1] for r in recorded]),
                       np.concatenate([r[2] for r in recorded]), np.concatenate([r[3] for r in recorded]),
                       1.0, cfg.N)


def run_chain(model: ModelSpec, cfg: PathConfig, run: MCConfig, chain: int, seed_seq) -> ChainRecord:
    rng = np.random.Generator(np.random.Philox(seed_seq))
    steps = lag_steps(run.lags, cfg)
    if model.alpha == 0 and cfg.boundary != "two-sided-pinned":
        return _run_exact(model, cfg, run, rng, chain, steps)
    counters = ActionCounters()
    path = brownian_path(cfg, model.d, rng)
    path.S = run.weight_sign * interaction_action(path, model, run.kernel, run.action_method, counters=counters)
    n = cfg.N
    m = run.segment if run.segment > 0 else max(2, n // 4)
    m = min(m, n)
    acc_window = tot_window = 0
    acc = tot = 0
    S_rec, buf, parts = [], [], []

    def flush():
        qa = np.array(buf)
        parts.append((qa[:, cfg.i1] - qa[:, cfg.i0],) + _observables(qa, cfg, steps, run.k_alt))
        buf.clear()

    for sweep in range(run.burn_in + run.sweeps):
        for _ in range(max(1, n // m)):
            move, seg = _segment_move(cfg, rng, m)
            path, ok = propose_and_accept(path, model, move, rng, seg, run.kernel, run.action_method, counters,
                                          run.weight_sign)
            tot_window += 1
            acc_window += ok
            if sweep >= run.burn_in:
                tot += 1
                acc += ok
        if cfg.left_free:
            path, _ = propose_and_accept(path, model, "global-translate", rng)
        if run.tune and sweep < run.burn_in and (sweep + 1) % run.tune_interval == 0:
            rate = acc_window / tot_window
            if rate > run.target_acceptance + 0.1 and m < n:
                m = min(n, int(math.ceil(m * 1.25)))
            elif rate < run.target_acceptance - 0.1 and m > 2:
                m = max(2, int(m / 1.25))
            acc_window = tot_window = 0
        if sweep >= run.burn_in and (sweep - run.burn_in) % run.thin == 0:
            S_rec.append(path.S)
            buf.append(path.q.copy())
            if len(buf) == 1024:
                flush()
    if buf:
        flush()
    dq, msd, clo, chi = (np.concatenate([p[i] for p in parts]) for i in range(4))
    return ChainRecord(chain, np.array(S_rec), dq, msd, clo, chi, acc / max(tot, 1), m, counters.capped)


def run_chains(model: ModelSpec, cfg: PathConfig, run: MCConfig, threads=1) -> list:
    """Independent chains, one Philox stream each from SeedSequence(seed).spawn;
    results are returned in chain order whatever the thread count."""
    seqs = np.random.SeedSequence(run.seed).spawn(run.chains)
    jobs = [(model, cfg, run, c, s) for c, s in enumerate(seqs)]
    if threads <= 1 or run.chains == 1:
        return [run_chain(*j) for j in jobs]
    with ThreadPoolExecutor(threads) as pool:
        return list(pool.map(lambda j: run_chain(*j), jobs))


# estimators ----------------------------------------------------------------

@dataclass
class CharFnEstimate:
    real: MCEstimate
    imag: MCEstimate
    flags: list = field(default_factory=list)


def estimate_charfn(run: MCConfig, path_cfg: PathConfig, model: ModelSpec, k, t=None, threads=1,
                    records=None) -> CharFnEstimate:
    """E[cos(k.(q(t) - q(0)))] under the normalized weighted measure.

    ``t`` must equal the configured window; it is accepted to mirror the
    mathematical signature.
    """
    if t is not None and not math.isclose(t, path_cfg.t, rel_tol=1e-12):
        raise ValueError("t must match the path window")
    k = np.broadcast_to(np.asarray(k, dtype=float), (model.d,))
    records = records if records is not None else run_chains(model, path_cfg, run, threads)
    re_ests, im_ests = [], []
    for rec in records:
        ph = rec.dq @ k
        re_ests.append(blocking_estimate(np.cos(ph), run.seed))
        im_ests.append(blocking_estimate(np.sin(ph), run.seed))
    re = combine(re_ests, run.seed)
    im = combine(im_ests, run.seed)
    flags = list(dict.fromkeys(re.flags))
    if im.stderr > 0 and abs(im.mean) > 3 * im.stderr:
        flags.append("imaginary part not consistent with zero at 3 stderr")
    return CharFnEstimate(re, im, flags)


def wls_slope_weights(lags):
    """Linear functional giving the weighted least-squares slope of y(lag) =
    slope lag + intercept with variance proportional to lag^2."""
    x = np.asarray(lags, dtype=float)
    X = np.vstack([x, np.ones_like(x)]).T
    Wt = np.diag(1.0 / x**2)
    A = np.linalg.solve(X.T @ Wt @ X, X.T @ Wt)
    return A[0], A[1]


@dataclass
class Sigma2Estimate:
    sigma2: MCEstimate
    intercept: float
    chi2_dof: float
    alt: MCEstimate
    discrepancy: bool
    acceptance: float
    flags: list = field(default_factory=list)


def estimate_sigma2(run: MCConfig, path_cfg: PathConfig, model: ModelSpec, threads=1, records=None) -> Sigma2Estimate:
    """Slope of Var(q(s + tau) - q(s)) / d against tau by weighted least squares
    over the configured lags, error bars by blocking the per-sweep slope.

    The alternative estimator -2 d ln Re G(k_alt, tau) / (k_alt^2 d tau) between
    the smallest and largest lags is reported alongside.
    """
    lags = tuple(run.lags)
    if len(lags) < 5:
        raise ValueError("fit window needs at least 5 lags")
    flags = []
    if max(lags) / min(lags) < 10:
        flags.append("lag window spans less than one decade")
    records = records if records is not None else run_chains(model, path_cfg, run, threads)
    a_slope, a_icpt = wls_slope_weights(lags)
    ests, alts = [], []
    msd_all = []
    lo, hi = min(lags), max(lags)
    for rec in records:
        ests.append(blocking_estimate(rec.msd @ a_slope, run.seed))
        msd_all.append(rec.msd)
        A = float(np.mean(rec.cos_lo))
        B = float(np.mean(rec.cos_hi))
        lin = -2.0 / (run.k_alt**2 * (hi - lo)) * (rec.cos_hi / B - rec.cos_lo / A)
        e = blocking_estimate(lin, run.seed)
        val = -2.0 * (math.log(B) - math.log(A)) / (run.k_alt**2 * (hi - lo)) if A > 0 and B > 0 else math.nan
        alts.append(MCEstimate(val, e.stderr, e.tau_int, e.n, run.seed, e.plateau, e.flags))
    sig = combine(ests, run.seed)
    alt = combine(alts, run.seed)
    msd = np.concatenate(msd_all)
    mean = msd.mean(axis=0)
    icpt = float(mean @ a_icpt)
    resid = mean - (sig.mean * np.asarray(lags) + icpt)
    se = msd.std(axis=0, ddof=1) / math.sqrt(len(msd))
    chi2 = float(np.sum((resid / np.where(se > 0, se, 1.0)) ** 2) / max(len(lags) - 2, 1))
    disc = abs(sig.mean - alt.mean) > 3 * combined_sigma(sig.stderr, alt.stderr)
    if disc:
        flags.append("slope and characteristic-function estimators disagree beyond 3 combined stderr")
    flags.extend(dict.fromkeys(sig.flags))
    acc = float(np.mean([r.acceptance for r in records]))
    return Sigma2Estimate(sig, icpt, chi2, alt, bool(disc), acc, flags)

