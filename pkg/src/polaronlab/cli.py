"""Command-line entry point: ``polaronlab <subcommand> [flags]``."""

from __future__ import annotations

import argparse
import math
import sys
import time

import numpy as np

from . import cltlab, pathmc, spectral
from .config import ConfigError, load, model_from_config, resolve
from .model import eval_W_continuum, eval_W_discrete, kernel_kappa, QuadratureError
from .results import RunResult, write

SUBCOMMANDS = ("kernel", "spectrum", "mass", "mc", "clt-toy", "verify")


# toml output (used to write configs for repeat runs) ------------------------

def _toml_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise TypeError(f"cannot write {type(v).__name__} to TOML")


def to_toml(cfg: dict) -> str:
    lines = [f"{k} = {_toml_value(v)}" for k, v in cfg.items() if not isinstance(v, dict)]
    for k, v in cfg.items():
        if isinstance(v, dict):
            lines.append(f"\n[{k}]")
            lines += [f"{kk} = {_toml_value(vv)}" for kk, vv in v.items()]
    return "\n".join(lines) + "\n"


# subcommands ------------------------------------------------------------------

def _solver(cfg, model, threads):
    s = cfg["solver"]
    return spectral.FiberSolver(model, int(s["N_max"]), tol=float(s["tol"]), seed=int(cfg["seed"]),
                                krylov_dim=int(s["krylov_dim"]), max_iter=int(s["max_iter"]),
                                limit=int(s["size_limit"]), threads=threads)


def _axis_point(d, axis, value):
    P = np.zeros(d)
    P[axis] = value
    return P


def cmd_kernel(cfg, threads=1):
    model = model_from_config(cfg)
    kc = cfg["kernel"]
    if kc["cutoff"] != "froehlich-exp":
        raise ConfigError("kernel.cutoff must be 'froehlich-exp'")
    ladder = []
    warnings = []
    for kappa in sorted(float(k) for k in kc["kappas"]):
        for r in sorted(float(x) for x in kc["radii"]):
            for t in sorted(float(x) for x in kc["times"]):
                ladder.append({"kappa": kappa, "x": r, "t": t, "W": kernel_kappa([r, 0.0, 0.0], t, kappa),
                               "W_limit": kernel_kappa([r, 0.0, 0.0], t, math.inf), "tolerance": 0.0})
    for r in sorted(float(x) for x in kc["radii"]):
        for t in sorted(float(x) for x in kc["times"]):
            col = [row["W"] for row in ladder if row["x"] == r and row["t"] == t]
            if any(b < a for a, b in zip(col, col[1:])):
                warnings.append(f"kappa ladder not monotone at |x|={r}, t={t}")
    discrete = []
    for r in sorted(float(x) for x in kc["model_radii"]):
        for t in sorted(float(x) for x in kc["times"]):
            x = _axis_point(model.d, 0, r)
            wd = eval_W_discrete(model, x, t)
            try:
                wc = eval_W_continuum(model, x, t)
            except (QuadratureError, ValueError) as exc:
                wc = math.nan
                warnings.append(f"continuum W at |x|={r}, t={t}: {exc}")
            discrete.append({"x": r, "t": t, "W_discrete": wd, "W_continuum": wc, "tolerance": 1e-8})
    outputs = {"kappa_ladder": ladder, "model_kernel": discrete, "g_norm2": model.g_norm2, "model": model.to_dict()}
    return outputs, warnings


def cmd_spectrum(cfg, threads=1):
    model = model_from_config(cfg)
    solver = _solver(cfg, model, threads)
    sp = cfg["spectrum"]
    axis = int(sp["axis"])
    Ps = [_axis_point(model.d, axis, float(p)) for p in sp["P_axis"]]
    results, warnings = spectral.energy_curve(model, Ps, solver=solver)
    rows = []
    for r in results:
        row = r.row()
        row["P_axis"] = float(r.P[axis])
        row["tolerance"] = solver.tol
        rows.append(row)
        warnings += r.flags
    edges = []
    for p in sp["edge_P"]:
        e = spectral.essential_edge(model, _axis_point(model.d, axis, float(p)), n_max=int(sp["edge_n_max"]),
                                    solver=solver)
        warnings += e.flags
        for n, (thr, arg) in enumerate(zip(e.thresholds, e.argmins), start=1):
            edges.append({"P_axis": float(p), "n": n, "threshold": thr, "argmin": list(arg),
                          "E_ess": e.E_ess, "n_star": e.n_star})
    outputs = {"energies": rows, "edge": edges, "basis_size": solver.basis.size, "model": model.to_dict()}
    return outputs, list(dict.fromkeys(warnings))


def cmd_mass(cfg, threads=1):
    model = model_from_config(cfg)
    solver = _solver(cfg, model, threads)
    mc = cfg["mass"]
    mass = spectral.effective_mass(model, h=float(mc["h"]), levels=int(mc["levels"]), solver=solver,
                                   axis=int(mc["axis"]))
    sc = cfg["scaling"]
    khat = list(sc["khat"]) + [0.0] * (model.d - len(sc["khat"]))
    sig = spectral.sigma_from_scaling(model, khat[: model.d], float(sc["t"]), sc["eps"], boundary=sc["boundary"],
                                      solver=solver)
    warnings = list(mass.warnings) + list(sig.flags)
    outputs = {
        "m_eff_inverse": {"value": mass.m_eff_inverse, "error": mass.error, "h": mass.h},
        "sigma2_scaling": {"value": sig.sigma2, "error": sig.error, "converged": sig.converged},
        "perturbative_slope": spectral.perturbative_slope(model),
        "richardson": mass.rows(),
        "scaling": sig.rows(),
        "model": model.to_dict(),
    }
    return outputs, warnings


def mc_configs(cfg):
    m = cfg["mc"]
    path_cfg = pathmc.PathConfig(t=float(m["t"]), dt=float(m["dt"]), T_minus=float(m["T_minus"]),
                                 T_plus=float(m["T_plus"]), boundary=m["boundary"],
                                 phi_table=tuple(tuple(float(x) for x in r) for r in m["phi_table"]))
    run = pathmc.MCConfig(sweeps=int(m["sweeps"]), burn_in=int(m["burn_in"]), chains=int(m["chains"]),
                          thin=int(m["thin"]), seed=int(cfg["seed"]), kernel=m["kernel"],
                          action_method=m["action_method"], segment=int(m["segment"]), tune=bool(m["tune"]),
                          tune_interval=int(m["tune_interval"]), target_acceptance=float(m["target_acceptance"]),
                          lags=tuple(float(x) for x in m["lags"]), k_alt=float(m["k_alt"]))
    return path_cfg, run


def cmd_mc(cfg, threads=1):
    model = model_from_config(cfg)
    path_cfg, run = mc_configs(cfg)
    records = pathmc.run_chains(model, path_cfg, run, threads)
    est = pathmc.estimate_sigma2(run, path_cfg, model, records=records)
    warnings = list(est.flags)
    msd = np.concatenate([r.msd for r in records])
    lag_rows = [{"lag": float(l), "msd_per_dim": float(v), "stderr": float(s)}
                for l, v, s in zip(run.lags, msd.mean(axis=0), msd.std(axis=0, ddof=1) / math.sqrt(len(msd)))]
    cf_rows = []
    for k in cfg["mc"]["k_list"]:
        kk = (list(k) + [0.0] * model.d)[: model.d]
        cf = pathmc.estimate_charfn(run, path_cfg, model, kk, records=records)
        warnings += cf.flags
        cf_rows.append({"k": [float(x) for x in kk], "t": path_cfg.t, "re": cf.real.mean, "re_stderr": cf.real.stderr,
                        "im": cf.imag.mean, "im_stderr": cf.imag.stderr})
    outputs = {
        "sigma2": est.sigma2.as_dict(),
        "sigma2_alt": est.alt.as_dict(),
        "intercept": est.intercept,
        "chi2_dof": est.chi2_dof,
        "discrepancy": est.discrepancy,
        "acceptance": est.acceptance,
        "lags": lag_rows,
        "charfn": cf_rows,
        "model": model.to_dict(),
    }
    if cfg["mc"]["write_chains"]:
        outputs["chains"] = [{"chain": r.chain, "samples": len(r.dq), "acceptance": r.acceptance,
                              "segment": r.segment, "capped": r.capped, "mean_S": float(np.mean(r.S))}
                             for r in records]
    return outputs, list(dict.fromkeys(warnings))


def toy_from_config(cfg):
    tc = cfg["toy"]
    d = int(tc["dimension"])
    center = tuple(float(x) for x in tc["phi_center"])
    return cltlab.ToyFiberModel(d, tuple((float(q), int(n), float(a)) for q, n, a in tc["minima"]),
                                theta0=float(tc["theta0"]), theta1=float(tc["theta1"]), gap=float(tc["gap"]),
                                phi_width=float(tc["phi_width"]), phi_center=center,
                                angular_order=int(tc["angular_order"]),
                                angular_points_2d=int(tc["angular_points_2d"]))


def cmd_clt_toy(cfg, threads=1):
    toy = toy_from_config(cfg)
    tc = cfg["toy"]
    d = toy.d
    k = (list(tc["k"]) + [0.0] * d)[:d]
    study = cltlab.pinned_limit_study(toy, k, float(tc["t"]), tuple(tc["T_ladder"]))
    ladder = [{"T": T, "gT": v, "limit": study.limit, "rel_error": e, "tolerance": 1e-9}
              for T, v, e in zip(study.T_ladder, study.finite_T, study.rel_errors)]
    warnings = []
    eps_rows = []
    for m in toy.minima:
        if m.n != 2:
            continue
        r = cltlab.epsilon_limit(toy, k, float(tc["t"]), tc["eps"], Q=m.Q)
        warnings += [f"Q={m.Q}: {f}" for f in r.flags]
        eps_rows.append({"Q": m.Q, "limit": r.limit, "error": r.error, "closed_form": r.closed_form,
                         "converged": r.converged})
    k_list = [(list(kk) + [0.0] * d)[:d] for kk in tc["k_list"]]
    v = cltlab.clt_classify(toy, k_list, float(tc["clt_t"]), tc["eps"])
    outputs = {
        "classification": study.case,
        "limit": study.limit,
        "weights": {str(q): w for q, w in sorted(study.weights.items())},
        "ladder": ladder,
        "eps_limits": eps_rows,
        "verdict": {"verdict": v.verdict, "sigma2": v.sigma2, "residual": v.residual, "tolerance": 1e-6},
        "clt_fit": [{"x": x, "y": y} for x, y in zip(v.x, v.y)],
    }
    return outputs, warnings


def cmd_verify(cfg, threads=1, timing=False, stream=None):
    from . import acceptance

    stream = stream or sys.stdout
    vc = cfg["verify"]
    inject = vc["inject"]
    if inject not in ("none", "sign-flip"):
        raise ConfigError("verify.inject must be 'none' or 'sign-flip'")
    reports = []
    for n in vc["criteria"]:
        n = int(n)
        if n not in acceptance.CRITERIA:
            raise ConfigError(f"unknown criterion {n}")
        if n == 3:
            rep = acceptance.criterion_3(mc_sweeps=int(vc["mc_sweeps"]), mc_chains=int(vc["mc_chains"]),
                                         seed=int(cfg["seed"]), threads=threads,
                                         weight_sign=-1.0 if inject == "sign-flip" else 1.0)
        elif n == 1:
            rep = acceptance.criterion_1(seed=int(cfg["seed"]), threads=threads)
        else:
            rep = acceptance.CRITERIA[n]()
        print(rep.line(), file=stream, flush=True)
        reports.append(rep)
    passed = all(r.passed for r in reports)
    outputs = {
        "passed": passed,
        "inject": inject,
        "criteria": [{"number": r.number, "name": r.name, "passed": r.passed, "summary": r.summary}
                     for r in reports],
        "reports": [r.as_dict(timing) for r in reports],
    }
    return outputs, [f"criterion {r.number} failed" for r in reports if not r.passed]


COMMANDS = {"kernel": cmd_kernel, "spectrum": cmd_spectrum, "mass": cmd_mass, "mc": cmd_mc,
            "clt-toy": cmd_clt_toy, "verify": cmd_verify}


def build_parser():
    p = argparse.ArgumentParser(prog="polaronlab", description="Polaron effective mass and diffusion toolkit.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="TOML configuration file")
        s.add_argument("--out", default=".", help="output directory")
        s.add_argument("--seed", type=int, help="master seed (overrides the config)")
        s.add_argument("--threads", type=int, default=1, help="worker threads; results do not depend on it")
        s.add_argument("--format", choices=("csv", "json"), default="json")
        s.add_argument("--timing", action="store_true", help="record wall-clock time in the output")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        raw = load(args.config) if args.config else {}
        cfg = resolve(raw)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("--seed must be an unsigned 64-bit integer")
            cfg["seed"] = args.seed
    except (ConfigError, OSError, ValueError) as exc:
        print(f"polaronlab: {exc}", file=sys.stderr)
        return 2
    if args.threads < 1:
        print("polaronlab: --threads must be >= 1", file=sys.stderr)
        return 2
    t0 = time.perf_counter()
    try:
        if args.command == "verify":
            outputs, warnings = cmd_verify(cfg, args.threads, args.timing)
        else:
            outputs, warnings = COMMANDS[args.command](cfg, args.threads)
    except ConfigError as exc:
        print(f"polaronlab: {exc}", file=sys.stderr)
        return 2
    seeds = {"seed": cfg["seed"], "streams": "Philox per chain from SeedSequence(seed).spawn(chains)"}
    result = RunResult(args.command, cfg, seeds, outputs, warnings,
                       time.perf_counter() - t0 if args.timing else None)
    write(result, args.out, args.format)
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    if args.command == "verify":
        return 0 if outputs["passed"] else 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
