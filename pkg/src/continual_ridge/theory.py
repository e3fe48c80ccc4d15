"""Exact asymptotic bias, variance and risk of the continual ridge estimator.

The general engine (:func:`asymptotic_risk`) evaluates the limiting risk
for any finitely atomic joint spectrum through three trace recursions; the
identity-covariance case additionally has a closed form
(:func:`identity_risk_closed_form`) used as an independent cross-check.
:func:`risk_table` assembles the per-prefix risk matrix the generalization
metrics consume.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .regime import CovarianceScenario, Regime
from .spectral import (
    JointSpectrum,
    MomentTable,
    companion_stieltjes,
    moment_tables,
    mp_stieltjes,
    mp_stieltjes_prime,
    scenario_spectrum,
)


@dataclass(frozen=True)
class RiskTableau:
    """Every intermediate of one asymptotic risk evaluation.

    ``rho`` solves the backward recursion feeding the bias; ``rho1`` and
    ``rho2`` are the upper-triangular forward recursions of the variance
    trace chains (diagonally 0 and ``c_pair[s, s]`` respectively); ``l1``
    and ``l2`` are the resulting per-task trace limits.  ``risk`` is
    exactly ``bias + variance``.
    """

    tilde_m: np.ndarray
    mu: np.ndarray
    moments: MomentTable
    rho: np.ndarray
    rho1: np.ndarray
    rho2: np.ndarray
    l1: np.ndarray
    l2: np.ndarray
    bias: float
    variance: float
    risk: float


def asymptotic_risk(regime: Regime, H: JointSpectrum, G: JointSpectrum | None = None):
    """Limiting risk of the estimator after all ``regime.T`` tasks.

    Parameters
    ----------
    regime : Regime
    H : JointSpectrum
        Joint spectrum of the task covariances plus the test covariance.
    G : JointSpectrum, optional
        Coefficient-weighted spectrum; defaults to ``H`` (equally
        distributed coefficients).

    Returns
    -------
    RiskTableau
    """
    T = regime.T
    if H.n_tasks != T:
        raise ValueError(f"spectrum has {H.n_tasks} task slots, regime has {T}")
    gam = np.asarray(regime.gamma)
    lam = np.asarray(regime.lam)

    tilde_m = np.array([
        companion_stieltjes(*H.marginal(t), gam[t], lam[t]).value for t in range(T)
    ])
    mom = moment_tables(H, H if G is None else G, tilde_m, regime)
    mu, a, b, c = mom.mu, mom.a, mom.b, mom.c
    gmu = gam * mu

    rho = np.zeros(T)
    rho[T - 1] = a[T - 1]
    for t in range(T - 2, -1, -1):
        acc = a[t]
        for j in range(t + 1, T):
            acc += gmu[j] * mom.a_pair[t, j] * rho[j]
        rho[t] = acc

    rho1 = np.zeros((T, T))
    rho2 = np.zeros((T, T))
    for s in range(T):
        rho2[s, s] = mom.c_pair[s, s]
        for t in range(s + 1, T):
            acc1 = mom.b_pair[s, t]
            acc2 = mom.c_pair[s, t]
            for j in range(s, t):
                acc1 += gmu[j] * mom.a_pair[j, t] * rho1[s, j]
                acc2 += gmu[j] * mom.a_pair[j, t] * rho2[s, j]
            rho1[s, t] = acc1
            rho2[s, t] = acc2

    l1 = np.zeros(T)
    l2 = np.zeros(T)
    for t in range(T):
        acc1, acc2 = b[t], c[t]
        for j in range(t, T):
            acc1 += gmu[j] * a[j] * rho1[t, j]
            acc2 += gmu[j] * a[j] * rho2[t, j]
        l1[t] = acc1
        l2[t] = acc2

    lam_sq = lam * lam
    bias = regime.r2 * float(np.prod(lam_sq)) * (
        mom.g[0] + float(np.dot(gmu * rho, mom.g_pair[0, :])))
    # Suffix products prod_{s > t} lam_s**2, empty product = 1 at t = T.
    suffix = np.ones(T)
    if T > 1:
        suffix[:-1] = np.cumprod(lam_sq[::-1])[::-1][1:]
    variance = regime.sigma2 * float(np.dot(gam * suffix, l1 - lam * l2))
    return RiskTableau(tilde_m=tilde_m, mu=mu, moments=mom, rho=rho, rho1=rho1,
                       rho2=rho2, l1=l1, l2=l2, bias=bias, variance=variance,
                       risk=bias + variance)


def identity_risk_closed_form(regime: Regime):
    """Closed-form limiting (bias, variance, risk) for identity covariances.

    With ``m_t`` and ``m_t'`` the Marchenko-Pastur transform and its
    derivative at ``-lam_t``:

        bias     = r2 * prod_t lam_t**2 * m_t'
        variance = sigma2 * sum_t gamma_t * (m_t - lam_t * m_t')
                   * prod_{s > t} lam_s**2 * m_s'

    The per-task variance factor ``m_t - lam_t * m_t'`` equals
    ``int x / (x + lam_t)**2`` under the Marchenko-Pastur law, matching
    the single-task ridge variance.
    """
    gam = np.asarray(regime.gamma)
    lam = np.asarray(regime.lam)
    m = np.array([mp_stieltjes(g, v) for g, v in zip(gam, lam)])
    mp = np.array([mp_stieltjes_prime(g, v) for g, v in zip(gam, lam)])
    d = lam * lam * mp
    ups = m - lam * mp
    T = regime.T
    suffix = np.ones(T)
    if T > 1:
        suffix[:-1] = np.cumprod(d[::-1])[::-1][1:]
    bias = regime.r2 * float(np.prod(d))
    variance = regime.sigma2 * float(np.dot(gam * ups, suffix))
    return bias, variance, bias + variance


@dataclass(frozen=True)
class RiskTable:
    """Per-prefix risk matrix plus the single-task ridge baseline.

    ``values[k-1, t-1]`` is the limiting risk of the estimator after
    tasks ``1..k`` evaluated on task ``t``'s covariance, defined for
    ``t <= k`` (NaN above the diagonal).  ``ridge[t-1]`` is the risk of a
    plain ridge fit of task ``t`` alone at the same ridge level.
    """

    values: np.ndarray
    ridge: np.ndarray


def prefix_risk(regime: Regime, scenario: CovarianceScenario, k, test, lam=None):
    """Limiting risk of the prefix-``k`` estimator on task ``test``'s covariance.

    ``lam`` optionally overrides the first ``k`` ridge levels (used by the
    greedy tuner while scanning the current level).
    """
    sub = regime.prefix(k)
    if lam is not None:
        sub = sub.with_lam(tuple(lam[:k]))
    H = scenario_spectrum(scenario, range(1, k + 1), test)
    return asymptotic_risk(sub, H).risk


def ridge_baseline(regime: Regime, scenario: CovarianceScenario, t):
    """Single-task ridge risk for task ``t``: train and test on its covariance."""
    H = scenario_spectrum(scenario, (t,), t)
    return asymptotic_risk(regime.single(t), H).risk


def risk_table(regime: Regime, scenario: CovarianceScenario):
    """All prefix risks and ridge baselines needed by the metrics."""
    T = regime.T
    if scenario.T != T:
        raise ValueError(f"scenario has {scenario.T} tasks, regime has {T}")
    values = np.full((T, T), np.nan)
    for k in range(1, T + 1):
        for t in range(1, k + 1):
            values[k - 1, t - 1] = prefix_risk(regime, scenario, k, t)
    ridge = np.array([ridge_baseline(regime, scenario, t) for t in range(1, T + 1)])
    return RiskTable(values=values, ridge=ridge)
