"""Acceptance suite shared by ``polaronlab verify`` and the test-suite.

Each criterion returns a :class:`CriterionReport` listing the tolerances it
used and the numbers it compared.
"""

from __future__ import annotations

import contextlib
import io
import math
import os
import tempfile
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import cltlab, pathmc, spectral
from .fock import FiberFamily, enumerate_basis
from .model import DispersionSpec, FormFactorSpec, KGridSpec, ModelSpec, kernel_kappa
from .stats import combined_sigma


@dataclass
class CriterionReport:
    number: int
    name: str
    passed: bool
    summary: str
    tolerances: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        return f"criterion {self.number} [{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.summary}"

    def as_dict(self, timing=False):
        d = {"number": self.number, "name": self.name, "passed": self.passed, "summary": self.summary,
             "tolerances": self.tolerances, "details": self.details}
        if timing:
            d["seconds"] = self.seconds
        return d


# fixtures --------------------------------------------------------------------

def weak_coupling_model(alpha=0.25) -> ModelSpec:
    """d = 1, omega = 1, gaussian g on 12 modes (dk = 1/4, |k| <= 3/2)."""
    return ModelSpec(1, DispersionSpec("constant", 1.0), FormFactorSpec("gaussian", 0.6, 1.0),
                     alpha, KGridSpec(0.25, 1.5, 1))


def free_model_3d() -> ModelSpec:
    """d = 3, alpha = 0, 56 modes (unit lattice inside |k| <= 2.3)."""
    return ModelSpec(3, DispersionSpec("constant", 1.0), FormFactorSpec("gaussian", 0.5, 1.0),
                     0.0, KGridSpec(1.0, 2.3, 3))


def oracle_models():
    """(model, N_max, P list) with basis sizes at most 500."""
    return [
        (weak_coupling_model(0.5), 2, [0.0, 0.3, -0.7]),
        (weak_coupling_model(1.0), 3, [0.0, 0.55]),
        (ModelSpec(3, DispersionSpec("constant", 1.0), FormFactorSpec("gaussian", 0.8, 1.2), 0.7,
                   KGridSpec(1.0, 1.0, 3)), 4, [[0, 0, 0], [0.2, -0.1, 0.4]]),
        (ModelSpec(2, DispersionSpec("massive-quadratic", 1.0, 0.5), FormFactorSpec("gaussian", 0.7, 1.0), 0.4,
                   KGridSpec(1.0, 1.5, 2)), 3, [[0, 0], [0.3, 0.6]]),
        (ModelSpec(3, DispersionSpec("constant", 1.0), FormFactorSpec("froehlich-sharp", kappa=2.0), 1.5,
                   KGridSpec(1.0, 2.0, 3)), 1, [[0, 0, 0], [0.5, 0.0, 0.0]]),
        (ModelSpec(1, DispersionSpec("tabulated", table=((0, 1.2), (1, 1.4), (2, 1.9))),
                   FormFactorSpec("gaussian", 1.0, 0.8), 2.0, KGridSpec(0.5, 2.0, 1)), 2, [0.0, 1.1]),
    ]


def toy_fixtures():
    """Name -> (toy, k, t) for the five limit regimes."""
    return {
        "one-minimum": (cltlab.ToyFiberModel(3, ((0.0, 2, 0.5),), theta0=0.3, theta1=0.2), [0.5, 0.0, 0.0], 0.05),
        "a": (cltlab.ToyFiberModel(3, ((0.0, 2, 0.5), (1.5, 2, 0.5)), theta0=0.3, theta1=0.2),
              [0.5, 0.0, 0.0], 0.05),
        "b": (cltlab.ToyFiberModel(1, ((0.0, 2, 0.5), (1.5, 2, 0.8)), theta0=0.3, theta1=0.2), [0.5], 0.05),
        "c": (cltlab.ToyFiberModel(1, ((0.0, 4, 0.5), (3.0, 2, 0.5)), theta0=0.3, theta1=0.2, phi_width=0.6),
              [0.5], 0.004),
        "off-zero": (cltlab.ToyFiberModel(3, ((1.0, 2, 0.5), (2.0, 2, 0.5)), theta0=0.3, theta1=0.2,
                                          phi_center=(0.3, 0.0, 0.0)), [0.5, 0.0, 0.0], 0.05),
    }


EPS_LADDER = [0.1 / 2**j for j in range(7)]
T_LADDER = (10, 20, 40, 80, 160)


# criteria ----------------------------------------------------------------------

def criterion_1(mc_sweeps=1_000_000, seed=2024, threads=1) -> CriterionReport:
    t0 = time.perf_counter()
    model = free_model_3d()
    solver = spectral.FiberSolver(model, 2)
    Ps = [[0, 0, 0], [0.3, 0, 0], [0.2, -0.5, 0.4], [0, 0, 1.0]]
    e_err = max(abs(solver.energy(P) - 0.5 * float(np.dot(P, P))) for P in Ps)
    mass = spectral.effective_mass(model, solver=solver)
    m_err = abs(mass.m_eff_inverse - 1.0)
    g_err = 0.0
    for k, t in [([0.5, 0, 0], 1.0), ([0.3, 0.4, 0], 3.0), ([1.0, 1.0, 0.0], 0.7)]:
        r = spectral.char_fn_spectral(model, k, t, solver=solver)
        g_err = max(g_err, abs(r.value - math.exp(-0.5 * float(np.dot(k, k)) * t)))
    cfg = pathmc.PathConfig(t=1.0, dt=0.1, boundary="free-both")
    run = pathmc.MCConfig(sweeps=mc_sweeps, burn_in=0, chains=1, seed=seed,
                          lags=tuple(0.1 * j for j in range(1, 11)))
    t_mc = time.perf_counter()
    est = pathmc.estimate_sigma2(run, cfg, model, threads=threads)
    mc_secs = time.perf_counter() - t_mc
    z = abs(est.sigma2.mean - 1.0) / est.sigma2.stderr
    ok = e_err <= 1e-10 and m_err <= 1e-8 and g_err <= 1e-9 and z <= 3 and mc_secs < 120
    summary = (f"max|E-P^2/2|={e_err:.1e}, |1/m-1|={m_err:.1e}, max|G-exp|={g_err:.1e}, "
               f"MC sigma2={est.sigma2.mean:.5f}+-{est.sigma2.stderr:.5f} ({z:.2f} stderr, {mc_sweeps} sweeps)")
    return CriterionReport(1, "free-model exactness", bool(ok), summary,
                           {"energy": 1e-10, "mass": 1e-8, "charfn": 1e-9, "mc_stderr": 3, "mc_seconds": 120},
                           {"energy_err": e_err, "mass_err": m_err, "charfn_err": g_err,
                            "mc_sigma2": est.sigma2.mean, "mc_stderr": est.sigma2.stderr, "M": model.grid.size},
                           time.perf_counter() - t0)


def dense_ground(H):
    w, v = scipy.linalg.eigh(H.toarray())
    return w[0], v[:, 0]


def criterion_2() -> CriterionReport:
    t0 = time.perf_counter()
    worst_e = worst_v = 0.0
    count = 0
    for model, N_max, Ps in oracle_models():
        basis = enumerate_basis(model.grid, N_max)
        assert basis.size <= 500
        fam = FiberFamily(model, basis)
        for P in Ps:
            H = fam.hamiltonian(np.broadcast_to(np.asarray(P, dtype=float), (model.d,)))
            res = spectral.ground_state(H)
            e, v = dense_ground(H)
            worst_e = max(worst_e, abs(res.E - e))
            worst_v = max(worst_v, 1.0 - abs(float(v @ res.psi)))
            count += 1
    secs = time.perf_counter() - t0
    ok = worst_e <= 1e-10 and worst_v <= 1e-10 and secs < 10
    return CriterionReport(2, "Lanczos matches dense diagonalization", bool(ok),
                           f"{count} operators, max|dE|={worst_e:.1e}, max(1-|<psi,psi_dense>|)={worst_v:.1e}, {secs:.1f}s",
                           {"energy": 1e-10, "vector": 1e-10, "seconds": 10},
                           {"operators": count, "max_dE": worst_e, "max_dvec": worst_v}, secs)


def identity_check(alpha, mc_sweeps=20000, mc_chains=3, seed=7, threads=1, weight_sign=1.0):
    """Spectral sigma^2, 1/m_eff and MC sigma^2 for the weak-coupling fixture."""
    model = weak_coupling_model(alpha)
    solver = spectral.FiberSolver(model, 4)
    mass = spectral.effective_mass(model, solver=solver)
    sig = spectral.sigma_from_scaling(model, [1.0], 4.0, [0.4, 0.3, 0.2, 0.15, 0.1], solver=solver)
    cfg = pathmc.PathConfig(t=40.0, dt=0.1, T_minus=4.0, T_plus=4.0, boundary="free-both")
    run = pathmc.MCConfig(sweeps=mc_sweeps, burn_in=1000, chains=mc_chains, seed=seed,
                          lags=tuple(float(l) for l in range(2, 21, 2)), weight_sign=weight_sign)
    mc = pathmc.estimate_sigma2(run, cfg, model, threads=threads)
    values = {
        "mass": (mass.m_eff_inverse, mass.error),
        "scaling": (sig.sigma2, sig.error),
        "mc": (mc.sigma2.mean, mc.sigma2.stderr),
    }
    pairs = {}
    ok = True
    for a, b in (("mass", "scaling"), ("mass", "mc"), ("scaling", "mc")):
        (va, ea), (vb, eb) = values[a], values[b]
        tol = max(1e-3 * abs(va), 3 * combined_sigma(ea, eb))
        diff = abs(va - vb)
        pairs[f"{a}-{b}"] = {"diff": diff, "tol": tol}
        ok &= diff <= tol
    return bool(ok), values, pairs, mc


def criterion_3(alphas=(0.1, 0.25, 0.5), mc_sweeps=20000, mc_chains=3, seed=7, threads=1,
                weight_sign=1.0) -> CriterionReport:
    t0 = time.perf_counter()
    ok_all = True
    parts, details = [], {}
    for a in alphas:
        ok, values, pairs, _ = identity_check(a, mc_sweeps, mc_chains, seed, threads, weight_sign)
        ok_all &= ok
        details[str(a)] = {"values": values, "pairs": pairs}
        parts.append(f"alpha={a}: 1/m={values['mass'][0]:.6f} scaling={values['scaling'][0]:.6f} "
                     f"mc={values['mc'][0]:.4f}+-{values['mc'][1]:.4f}")
    return CriterionReport(3, "inverse mass equals diffusion constant", bool(ok_all), "; ".join(parts),
                           {"relative": 1e-3, "stderr": 3}, details, time.perf_counter() - t0)


def criterion_4(alpha=1e-3) -> CriterionReport:
    t0 = time.perf_counter()
    model = weak_coupling_model(alpha)
    e0 = spectral.FiberSolver(model, 2).energy(0.0)
    e_free = spectral.FiberSolver(model.with_alpha(0.0), 2).energy(0.0)
    slope = (e0 - e_free) / alpha
    ref = spectral.perturbative_slope(model)
    rel = abs(slope - ref) / abs(ref)
    return CriterionReport(4, "second-order perturbative slope", rel < 1e-3,
                           f"slope={slope:.9f}, sum formula={ref:.9f}, rel err={rel:.2e} at alpha={alpha}",
                           {"relative": 1e-3}, {"slope": slope, "reference": ref, "rel": rel},
                           time.perf_counter() - t0)


def criterion_5() -> CriterionReport:
    t0 = time.perf_counter()
    model = weak_coupling_model(0.5)
    solver = spectral.FiberSolver(model, 3)
    e0 = solver.energy(0.0)
    worst = 0.0
    mono = True
    flags = []
    for P in (0.25, 0.5, 0.75, 1.0, -0.5):
        edge = spectral.essential_edge(model, P, n_max=3, solver=solver)
        worst = max(worst, abs(edge.E_ess - (e0 + 1.0)))
        mono &= all(b >= a - 1e-12 for a, b in zip(edge.thresholds, edge.thresholds[1:]))
        flags += edge.flags
    ok = worst <= 1e-8 and mono
    return CriterionReport(5, "essential edge E(0)+1", bool(ok),
                           f"max|E_ess-E(0)-1|={worst:.1e}, thresholds monotone: {mono}",
                           {"edge": 1e-8}, {"max_err": worst, "monotone": mono, "flags": flags},
                           time.perf_counter() - t0)


def criterion_6(seed=11) -> CriterionReport:
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    kappas = [2.0**j for j in range(9)]
    mono = True
    worst = 0.0
    for _ in range(100):
        direction = rng.normal(size=3)
        x = direction / np.linalg.norm(direction) * rng.uniform(0.5, 5.0)
        t = rng.uniform(-3.0, 3.0)
        col = [kernel_kappa(x, t, k) for k in kappas]
        mono &= all(b >= a for a, b in zip(col, col[1:]))
        fr = kernel_kappa(x, t, math.inf)
        worst = max(worst, abs(col[-1] - fr) / fr)
    ok = mono and worst <= 1e-2
    return CriterionReport(6, "kernel monotone in the cutoff", bool(ok),
                           f"100 points nondecreasing: {mono}, max rel dev at kappa=256: {worst:.2e}",
                           {"limit_relative": 1e-2}, {"monotone": mono, "max_rel": worst},
                           time.perf_counter() - t0)


def criterion_7() -> CriterionReport:
    t0 = time.perf_counter()
    ok = True
    parts, details = [], {}
    for name, (toy, k, t) in toy_fixtures().items():
        res = cltlab.pinned_limit_study(toy, k, t, T_LADDER)
        last = res.rel_errors[-1]
        good = res.case == name and last <= 1e-4
        ok &= good
        parts.append(f"{name}: {last:.1e}")
        details[name] = {"case": res.case, "limit": res.limit, "finite_T": res.finite_T, "rel": res.rel_errors}
    eps_worst = 0.0
    one = toy_fixtures()["one-minimum"][0]
    off = toy_fixtures()["off-zero"][0]
    for toy, k, Q in ((one, [1.0, 0.0, 0.0], 0.0), (one, [0.6, 0.0, 0.8], 0.0),
                      (off, [0.6, 0.8, 0.0], 1.0), (off, [0.0, 1.0, 0.0], 2.0), (off, [1.0, 0.5, 0.0], 2.0)):
        r = cltlab.epsilon_limit(toy, k, 2.0, EPS_LADDER, Q=Q)
        eps_worst = max(eps_worst, abs(r.limit - r.closed_form))
    ok &= eps_worst <= 1e-6
    parts.append(f"eps ladders max dev {eps_worst:.1e}")
    return CriterionReport(7, "pinned T-limit formulas", bool(ok), ", ".join(parts),
                           {"T_limit_relative": 1e-4, "eps_limit": 1e-6}, details, time.perf_counter() - t0)


def clt_battery():
    """(name, toy, expected verdict, expected sigma2 or None)."""
    T = cltlab.ToyFiberModel
    return [
        ("zero d=2", T(2, ((0.0, 2, 0.7),), theta1=0.3), "gaussian", 1.4),
        ("zero d=3", T(3, ((0.0, 2, 0.5),), theta0=0.3, theta1=0.2), "gaussian", 1.0),
        ("zero d=3 off-centre phi", T(3, ((0.0, 2, 0.4),), theta1=0.1, phi_center=(0.5, 0.2, 0.0)), "gaussian", 0.8),
        ("off-zero d=2", T(2, ((1.0, 2, 0.5),)), "non-gaussian", None),
        ("off-zero d=3 two shells", T(3, ((1.0, 2, 0.5), (2.0, 2, 0.5)), theta1=0.2), "non-gaussian", None),
        ("off-zero d=3 unequal", T(3, ((0.8, 2, 0.3), (1.6, 2, 0.9)), phi_center=(0.2, 0.0, 0.1)), "non-gaussian", None),
        ("case a d=3", T(3, ((0.0, 2, 0.5), (1.5, 2, 0.5))), "non-gaussian", None),
        ("case b d=2", T(2, ((0.0, 4, 0.5), (1.5, 2, 0.5))), "non-gaussian", None),
        ("case c d=2", T(2, ((0.0, 6, 0.5), (1.5, 2, 0.5))), "degenerate", None),
        ("d=1 two minima equal curvature", T(1, ((1.0, 2, 0.5), (2.5, 2, 0.5)), theta1=0.2, phi_center=(0.4,)),
         "gaussian", 1.0),
    ]


def criterion_8() -> CriterionReport:
    t0 = time.perf_counter()
    ok = True
    parts, details = [], {}
    base = [[0.5, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.5, 0.0], [1.0, 1.0, 1.0]]
    for name, toy, want, s2 in clt_battery():
        ks = [k[: toy.d] for k in base] if toy.d > 1 else [[0.5], [1.0], [2.0]]
        v = cltlab.clt_classify(toy, ks, 1.0, EPS_LADDER)
        good = v.verdict == want
        if toy.d >= 2 and v.verdict == "gaussian":
            good &= toy.minima[0].Q == 0.0
        if s2 is not None:
            good &= abs(v.sigma2 - s2) <= 1e-6
        ok &= good
        details[name] = {"verdict": v.verdict, "sigma2": v.sigma2, "residual": v.residual, "case": v.case}
        parts.append(f"{name}: {v.verdict}" + (f" sigma2={v.sigma2:.9f}" if v.verdict == "gaussian" else ""))
    return CriterionReport(8, "CLT minimum logic", bool(ok), "; ".join(parts),
                           {"fit_residual": 1e-6, "sigma2": 1e-6}, details, time.perf_counter() - t0)


def determinism_configs():
    """Small per-subcommand configurations for the repeatability check."""
    small_mc = {"sweeps": 300, "burn_in": 50, "chains": 3, "t": 4.0, "T_minus": 1.0, "T_plus": 1.0,
                "lags": [0.4, 0.8, 1.2, 1.6, 2.0, 2.4, 2.8, 3.2, 3.6, 4.0], "write_chains": True}
    base = {"alpha": 0.3, "solver": {"N_max": 2}}
    return {
        "kernel": dict(base),
        "spectrum": dict(base),
        "mass": dict(base),
        "mc": dict(base, mc=small_mc),
        "clt-toy": dict(base),
        "verify": dict(base, verify={"criteria": [4, 6]}),
    }


def criterion_9(threads=(1, 3), seed=123) -> CriterionReport:
    from . import cli

    t0 = time.perf_counter()
    mismatches = []
    checked = 0
    with tempfile.TemporaryDirectory() as tmp:
        for sub, cfg in determinism_configs().items():
            cpath = os.path.join(tmp, f"{sub}.toml")
            with open(cpath, "w") as fh:
                fh.write(cli.to_toml(cfg))
            outs = []
            for j, th in enumerate((threads[0], threads[0], threads[1])):
                od = os.path.join(tmp, f"{sub}-{j}")
                with contextlib.redirect_stdout(io.StringIO()), contextlib.redirect_stderr(io.StringIO()):
                    cli.main([sub, "--config", cpath, "--out", od, "--seed", str(seed), "--threads", str(th),
                              "--format", "csv"])
                files = sorted(os.listdir(od))
                outs.append({f: open(os.path.join(od, f), "rb").read() for f in files})
            for o in outs[1:]:
                checked += 1
                if o != outs[0]:
                    mismatches.append(sub)
    ok = not mismatches and checked > 0
    return CriterionReport(9, "bit-identical repeated runs", ok,
                           f"{checked} repeat comparisons over 6 subcommands, threads {threads}; mismatches: {mismatches or 'none'}",
                           {"bytes": "identical"}, {"mismatches": mismatches}, time.perf_counter() - t0)


CRITERIA = {1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5,
            6: criterion_6, 7: criterion_7, 8: criterion_8, 9: criterion_9}
