"""Greedy oracle selection of the per-task ridge levels.

At step t the levels of earlier tasks are frozen and the current level
minimizes the prefix-t average theoretical risk.  Each one-dimensional
minimization runs a coarse logarithmic grid to bracket the best region,
then golden-section refinement inside the bracket; a multimodality flag
records when the coarse grid sees more than one local minimum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .regime import CovarianceScenario, Regime
from .theory import prefix_risk

GOLDEN = 2.0 / (1.0 + math.sqrt(5.0))

SEARCH_LO = 1e-4
SEARCH_HI = 1e3
COARSE_POINTS = 33
REL_TOL = 1e-6


@dataclass(frozen=True)
class TuneTrace:
    """Greedy tuning record.

    ``lambda_star[t-1]`` minimizes the prefix-t average risk given the
    earlier entries; ``objective`` holds the achieved minima,
    ``brackets`` the refined search intervals, ``evaluations`` the
    objective-call counts, and the flag vectors mark steps whose coarse
    minimum sat on the search boundary or whose coarse grid was
    multimodal.
    """

    lambda_star: tuple[float, ...]
    objective: tuple[float, ...]
    brackets: tuple[tuple[float, float], ...]
    evaluations: tuple[int, ...]
    boundary_hit: tuple[bool, ...]
    multimodal: tuple[bool, ...]


def _golden_section(f, lo, hi, rel_tol):
    """Golden-section minimum of ``f`` on [lo, hi]; returns (x, f(x), calls)."""
    x1 = hi - GOLDEN * (hi - lo)
    x2 = lo + GOLDEN * (hi - lo)
    f1, f2 = f(x1), f(x2)
    calls = 2
    while hi - lo > rel_tol * max(abs(lo), abs(hi)):
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - GOLDEN * (hi - lo)
            f1 = f(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + GOLDEN * (hi - lo)
            f2 = f(x2)
        calls += 1
    x = 0.5 * (lo + hi)
    return x, f(x), calls + 1


def greedy_lambda(scenario: CovarianceScenario, T, gamma, sigma2=1.0, r2=1.0,
                  search_lo=SEARCH_LO, search_hi=SEARCH_HI,
                  coarse_points=COARSE_POINTS, rel_tol=REL_TOL):
    """Sequentially tuned ridge levels minimizing each step's average risk.

    Parameters
    ----------
    scenario : CovarianceScenario
    T : int
        Number of steps to tune (at most ``scenario.T``).
    gamma : float or sequence
        Aspect ratio(s); a scalar is shared by all tasks.
    sigma2, r2 : float
        Noise variance and limiting signal strength.
    search_lo, search_hi : float
        Search interval for every step.
    coarse_points : int
        Size of the bracketing logarithmic grid.
    rel_tol : float
        Relative golden-section tolerance on the minimizer.

    Returns
    -------
    TuneTrace
    """
    if not 1 <= T <= scenario.T:
        raise ValueError(f"T must lie in 1..{scenario.T}")
    gam = (float(gamma),) * T if np.isscalar(gamma) else tuple(gamma)
    grid = np.geomspace(search_lo, search_hi, coarse_points)

    chosen: list[float] = []
    objectives: list[float] = []
    brackets: list[tuple[float, float]] = []
    eval_counts: list[int] = []
    boundary: list[bool] = []
    multimodal: list[bool] = []

    for t in range(1, T + 1):
        regime = Regime(T=t, gamma=gam[:t], lam=(*chosen, 1.0), sigma2=sigma2, r2=r2)
        calls = 0

        def objective(lam_t, _t=t, _regime=regime):
            nonlocal calls
            calls += 1
            lam = (*chosen, lam_t)
            return float(np.mean([
                prefix_risk(_regime, scenario, _t, s, lam=lam) for s in range(1, _t + 1)
            ]))

        values = np.array([objective(x) for x in grid])
        best = int(np.argmin(values))
        interior = values[1:-1]
        n_local_minima = int(np.sum((interior < values[:-2]) & (interior < values[2:])))
        multimodal.append(n_local_minima > 1)
        boundary.append(best in (0, len(grid) - 1))
        lo = grid[max(best - 1, 0)]
        hi = grid[min(best + 1, len(grid) - 1)]
        x, fx, gcalls = _golden_section(objective, lo, hi, rel_tol)
        chosen.append(float(x))
        objectives.append(float(fx))
        brackets.append((float(lo), float(hi)))
        eval_counts.append(calls)

    return TuneTrace(lambda_star=tuple(chosen), objective=tuple(objectives),
                     brackets=tuple(brackets), evaluations=tuple(eval_counts),
                     boundary_hit=tuple(boundary), multimodal=tuple(multimodal))


def scale_lambda(trace, factor):
    """Elementwise rescaling of tuned levels; accepts a trace or a sequence."""
    if factor <= 0:
        raise ValueError("factor must be positive")
    lam = trace.lambda_star if isinstance(trace, TuneTrace) else tuple(trace)
    return tuple(v * factor for v in lam)
