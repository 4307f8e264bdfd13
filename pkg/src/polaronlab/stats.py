"""Blocking analysis of correlated Monte Carlo series."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class MCEstimate:
    mean: float
    stderr: float
    tau_int: float
    n: int
    seed: int | None = None
    plateau: bool = True
    flags: list = field(default_factory=list)

    def as_dict(self):
        return {
            "mean": self.mean,
            "stderr": self.stderr,
            "tau_int": self.tau_int,
            "n": self.n,
            "seed": self.seed,
            "plateau": self.plateau,
            "flags": list(self.flags),
        }


def blocking_levels(x):
    """Standard-error estimates of the mean at successive pair-averaging levels.

    Returns a list of (block_size, stderr, stderr_uncertainty).
    """
    x = np.asarray(x, dtype=float)
    out = []
    size = 1
    while len(x) >= 4:
        n = len(x)
        var = np.var(x, ddof=1)
        se = math.sqrt(var / n)
        out.append((size, se, se / math.sqrt(2.0 * (n - 1))))
        x = 0.5 * (x[: n - n % 2 : 2] + x[1 : n - n % 2 : 2])
        size *= 2
    return out


def blocking_estimate(x, seed=None) -> MCEstimate:
    """Mean and blocked standard error of a correlated series.

    The block size is the smallest B with B^3 > 2 N (se_B / se_1)^4, the optimal
    block-size criterion; when no level satisfies it the
    estimate is flagged and the largest-level error is reported.
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    mean = float(np.mean(x)) if n else math.nan
    if n < 4:
        return MCEstimate(mean, math.nan, math.nan, n, seed, False, ["too few samples for blocking"])
    levels = blocking_levels(x)
    se1 = levels[0][1]
    if se1 == 0.0:
        return MCEstimate(mean, 0.0, 0.5, n, seed, True, [])
    chosen = None
    for size, se, _ in levels:
        if size**3 > 2.0 * n * (se / se1) ** 4:
            chosen = (size, se)
            break
    flags = []
    plateau = chosen is not None
    if chosen is None:
        chosen = max(((s, e) for s, e, _ in levels), key=lambda p: p[1])
        flags.append("no blocking plateau: chain may be unequilibrated")
    se = chosen[1]
    var = float(np.var(x, ddof=1))
    tau = n * se * se / (2.0 * var) if var > 0 else 0.5
    return MCEstimate(mean, float(se), float(tau), n, seed, plateau, flags)


def combine(estimates, seed=None) -> MCEstimate:
    """Merge independent equal-weight chain estimates in the given order."""
    ests = list(estimates)
    ns = np.array([e.n for e in ests], dtype=float)
    w = ns / ns.sum()
    mean = float(np.sum(w * np.array([e.mean for e in ests])))
    se = float(math.sqrt(np.sum((w * np.array([e.stderr for e in ests])) ** 2)))
    tau = float(np.sum(w * np.array([e.tau_int for e in ests])))
    flags = [f for e in ests for f in e.flags]
    return MCEstimate(mean, se, tau, int(ns.sum()), seed, all(e.plateau for e in ests), flags)


def combined_sigma(*errors):
    return math.sqrt(sum(e * e for e in errors))
