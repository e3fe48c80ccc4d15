"""Finite-sample simulation of the continual ridge estimator.

Risks are computed exactly, conditional on the realized designs, from the
bias and variance identities of the estimator: sampled noise is used only
to exhibit realized estimator trajectories, never for the risk values, so
replications average over design randomness alone.  Per-replication seeds
derive from the master seed through SHA-256 over ``"{seed}:{index}"``,
making any subset of replications independently reproducible.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .metrics import MetricCurves, compute_curves
from .regime import CovarianceScenario, MetricWeights, default_weights
from .spectral import mp_stieltjes, mp_stieltjes_prime

ENTRY_LAWS = ("gaussian", "rademacher")


@dataclass(frozen=True)
class SimConfig:
    """Finite-sample counterpart of a regime.

    ``p`` is the ambient dimension (typically ``floor(n * gamma)``);
    ``lam`` holds the per-task ridge levels; ``entry_law`` selects the
    standardized design-entry distribution.
    """

    n: int
    p: int
    T: int
    lam: tuple[float, ...]
    sigma2: float
    r2: float
    seed: int
    replications: int
    entry_law: str = "gaussian"

    def __post_init__(self):
        object.__setattr__(self, "lam", tuple(float(v) for v in self.lam))
        if self.n < 2 or self.p < 1 or self.replications < 1 or self.T < 1:
            raise ValueError("need n >= 2, p >= 1, T >= 1, replications >= 1")
        if len(self.lam) != self.T or any(v <= 0 for v in self.lam):
            raise ValueError("one positive ridge level per task required")
        if self.sigma2 <= 0 or self.r2 <= 0:
            raise ValueError("sigma2 and r2 must be positive")
        if self.entry_law not in ENTRY_LAWS:
            raise ValueError(f"entry_law must be one of {ENTRY_LAWS}")


@dataclass(frozen=True)
class SimRun:
    """One seeded realization: coefficients, trajectory and exact risks.

    ``risk_table_emp[k-1, t-1]`` is the conditional risk of the prefix-k
    estimator on task t's covariance (NaN for t > k); the bias and
    variance parts are stored alongside.  ``estimator_path[k-1]`` is the
    realized estimator after task k with sampled noise.
    """

    beta: np.ndarray
    estimator_path: np.ndarray
    risk_table_emp: np.ndarray
    bias_table_emp: np.ndarray
    var_table_emp: np.ndarray
    ridge_risk_emp: np.ndarray


@dataclass(frozen=True)
class ReplicationSummary:
    """Replication means and standard errors of the three metric curves.

    Standard errors are sample standard deviations over replications
    divided by ``sqrt(B)``; with ``B = 1`` they are reported as zero and
    ``se_degenerate`` is set.
    """

    avg_mean: np.ndarray
    avg_se: np.ndarray
    bwt_mean: np.ndarray
    bwt_se: np.ndarray
    fwt_mean: np.ndarray
    fwt_se: np.ndarray
    per_rep_avg: np.ndarray
    per_rep_bwt: np.ndarray
    per_rep_fwt: np.ndarray
    B: int
    se_degenerate: bool


def replication_seed(master_seed, index):
    """Derived 64-bit seed for one replication (SHA-256 of ``"{seed}:{index}"``)."""
    digest = hashlib.sha256(f"{master_seed}:{index}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def sample_beta(p, r2, rng):
    """Coefficient vector with independent sign entries and exact squared norm ``r2``."""
    if p < 1 or r2 <= 0:
        raise ValueError("p >= 1 and r2 > 0 required")
    return rng.choice([-1.0, 1.0], size=p) * np.sqrt(r2 / p)


def make_design(n, eigenvalues, rng, entry_law="gaussian"):
    """Design matrix with rows of covariance ``diag(eigenvalues)``."""
    p = len(eigenvalues)
    if entry_law == "gaussian":
        Z = rng.standard_normal((n, p))
    elif entry_law == "rademacher":
        Z = rng.choice([-1.0, 1.0], size=(n, p))
    else:
        raise ValueError(f"entry_law must be one of {ENTRY_LAWS}")
    return Z * np.sqrt(np.asarray(eigenvalues))[None, :]


def ridge_estimate(X, y, lam):
    """Plain ridge estimator of one dataset."""
    n, p = X.shape
    S = X.T @ X / n
    return np.linalg.solve(S + lam * np.eye(p), X.T @ y / n)


def continual_update(prev, X, y, lam):
    """One continual ridge step: fit the new data, shrunk toward ``prev``.

    Minimizes ``||X b - y||**2 / n + lam * ||b - prev||**2``; equals the
    plain ridge estimator plus ``lam * (S + lam I)^{-1} prev``.
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    n, p = X.shape
    S = X.T @ X / n
    return np.linalg.solve(S + lam * np.eye(p), X.T @ y / n + lam * prev)


def shrinkage_matrices(designs, lams):
    """Per-task shrinkage operators ``A_t = lam_t (S_t + lam_t I)^{-1}``."""
    out = []
    for X, lam in zip(designs, lams):
        n, p = X.shape
        S = X.T @ X / n
        out.append(lam * np.linalg.inv(S + lam * np.eye(p)))
    return out


def exact_conditional_risk(designs, beta, test_cov_diag, lams, sigma2):
    """Exact conditional (bias, variance) of the estimator after ``len(designs)`` tasks.

    With ``A_t`` the per-task shrinkage operators, the bias is the
    quadratic form of ``A_k ... A_1 beta`` under the test covariance and
    the variance sums ``sigma2 / (lam_t n_t) * Tr[A_k ... (A_t - A_t^2)
    ... A_k Sigma_0]`` over tasks; no test points or noise are sampled.
    """
    test = np.asarray(test_cov_diag, dtype=float)
    p = len(beta)
    if any(X.shape[1] != p for X in designs) or len(test) != p:
        raise ValueError("designs, beta and test covariance must share the dimension")
    if len(designs) != len(lams):
        raise ValueError("one ridge level per design required")
    A = shrinkage_matrices(designs, lams)
    v = np.asarray(beta, dtype=float)
    for Ak in A:
        v = Ak @ v
    bias = float(np.dot(v * v, test))
    variance = 0.0
    for t, (X, lam) in enumerate(zip(designs, lams)):
        M = A[t] - A[t] @ A[t]
        for Ak in A[t + 1:]:
            M = Ak @ M @ Ak
        variance += sigma2 / (lam * X.shape[0]) * float(np.dot(np.diagonal(M), test))
    return bias, variance


def _risk_tables(A, beta, test_eigs, lams, n, sigma2):
    """Exact conditional bias/variance tables for every (prefix, test) pair.

    ``test_eigs[t-1]`` is the diagonal test covariance of task t.  Both
    returned tables are (T, T) with NaN above the diagonal.
    """
    T = len(A)
    p = len(beta)
    bias = np.full((T, T), np.nan)
    var = np.full((T, T), np.nan)
    test = np.asarray(test_eigs)
    v = np.asarray(beta, dtype=float)
    prods = []                      # A_k ... A_s (A_s - A_s^2) A_s ... A_k per s
    coeff = np.array([sigma2 / (lam * n) for lam in lams])
    for k in range(T):
        Ak = A[k]
        v = Ak @ v
        for i in range(k):
            prods[i] = Ak @ prods[i] @ Ak
        prods.append(Ak - Ak @ Ak)
        weighted_diag = np.zeros(p)
        for s in range(k + 1):
            weighted_diag += coeff[s] * np.diagonal(prods[s])
        vv = v * v
        bias[k, :k + 1] = test[:k + 1] @ vv
        var[k, :k + 1] = test[:k + 1] @ weighted_diag
    return bias, var


def _ridge_risks(A, beta, test_eigs, lams, n, sigma2):
    """Single-task ridge risk per task, exact conditional on the designs."""
    T = len(A)
    out = np.empty(T)
    for t in range(T):
        w = A[t] @ beta
        bias = float(np.dot(w * w, test_eigs[t]))
        M = A[t] - A[t] @ A[t]
        out[t] = bias + sigma2 / (lams[t] * n) * float(np.dot(np.diagonal(M), test_eigs[t]))
    return out


def simulate_run(config: SimConfig, scenario: CovarianceScenario, rng=None):
    """One seeded realization with estimator trajectory and exact risk tables."""
    if scenario.T != config.T:
        raise ValueError("scenario and config disagree on the task count")
    if rng is None:
        rng = np.random.default_rng(config.seed)
    n, p, T = config.n, config.p, config.T
    beta = sample_beta(p, config.r2, rng)
    test_eigs = np.array([scenario.task_eigenvalues(t, p) for t in range(1, T + 1)])
    designs = [make_design(n, test_eigs[t], rng, config.entry_law) for t in range(T)]
    noises = [np.sqrt(config.sigma2) * rng.standard_normal(n) for _ in range(T)]

    A = shrinkage_matrices(designs, config.lam)
    path = np.empty((T, p))
    prev = np.zeros(p)
    for t in range(T):
        y = designs[t] @ beta + noises[t]
        prev = continual_update(prev, designs[t], y, config.lam[t])
        path[t] = prev

    bias, var = _risk_tables(A, beta, test_eigs, config.lam, n, config.sigma2)
    ridge = _ridge_risks(A, beta, test_eigs, config.lam, n, config.sigma2)
    return SimRun(beta=beta, estimator_path=path, risk_table_emp=bias + var,
                  bias_table_emp=bias, var_table_emp=var, ridge_risk_emp=ridge)


def _replication_curves(config, scenario, weights, index):
    """Metric curves of replication ``index`` (risk tables only, no noise draws)."""
    rng = np.random.default_rng(replication_seed(config.seed, index))
    n, p, T = config.n, config.p, config.T
    try:
        beta = sample_beta(p, config.r2, rng)
        test_eigs = np.array([scenario.task_eigenvalues(t, p) for t in range(1, T + 1)])
        designs = [make_design(n, test_eigs[t], rng, config.entry_law) for t in range(T)]
        A = shrinkage_matrices(designs, config.lam)
        bias, var = _risk_tables(A, beta, test_eigs, config.lam, n, config.sigma2)
        ridge = _ridge_risks(A, beta, test_eigs, config.lam, n, config.sigma2)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError(f"replication {index} failed: {exc}") from exc
    return compute_curves(bias + var, ridge, weights)


def _init_worker():
    # Keep worker BLAS single-threaded: the fan-out already owns the cores.
    global _WORKER_LIMITER
    from threadpoolctl import threadpool_limits
    _WORKER_LIMITER = threadpool_limits(limits=1)


def _pool_worker(args):
    config, scenario, weights, index = args
    return index, _replication_curves(config, scenario, weights, index)


def run_replications(config: SimConfig, scenario: CovarianceScenario, lam=None,
                     weights: MetricWeights | None = None, workers=1, progress=None):
    """Replicated simulation: metric means and standard errors per prefix.

    Parameters
    ----------
    config : SimConfig
        ``config.replications`` independent runs are derived from
        ``config.seed``.
    scenario : CovarianceScenario
    lam : sequence, optional
        Overrides ``config.lam``.
    weights : MetricWeights, optional
        Defaults to uniform.
    workers : int
        Process count for replication fan-out; results are aggregated by
        replication index, so the output is independent of scheduling.
    progress : callable, optional
        Called as ``progress(done, total)`` after each replication.

    Returns
    -------
    ReplicationSummary
    """
    if lam is not None:
        config = SimConfig(n=config.n, p=config.p, T=config.T, lam=tuple(lam),
                           sigma2=config.sigma2, r2=config.r2, seed=config.seed,
                           replications=config.replications, entry_law=config.entry_law)
    if weights is None:
        weights = default_weights(config.T)
    B = config.replications
    curves: list[MetricCurves | None] = [None] * B
    if workers > 1:
        import concurrent.futures as cf
        import multiprocessing as mp

        ctx = mp.get_context("spawn")
        jobs = [(config, scenario, weights, b) for b in range(B)]
        done = 0
        with cf.ProcessPoolExecutor(max_workers=workers, mp_context=ctx,
                                    initializer=_init_worker) as pool:
            for index, c in pool.map(_pool_worker, jobs):
                curves[index] = c
                done += 1
                if progress is not None:
                    progress(done, B)
    else:
        for b in range(B):
            curves[b] = _replication_curves(config, scenario, weights, b)
            if progress is not None:
                progress(b + 1, B)

    per_avg = np.stack([c.avg_risk for c in curves])
    per_bwt = np.stack([c.bwt for c in curves])
    per_fwt = np.stack([c.fwt for c in curves])

    def mean_se(x):
        if B == 1:
            return x[0].copy(), np.zeros(x.shape[1])
        return x.mean(axis=0), x.std(axis=0, ddof=1) / np.sqrt(B)

    avg_mean, avg_se = mean_se(per_avg)
    bwt_mean, bwt_se = mean_se(per_bwt)
    fwt_mean, fwt_se = mean_se(per_fwt)
    return ReplicationSummary(avg_mean=avg_mean, avg_se=avg_se, bwt_mean=bwt_mean,
                              bwt_se=bwt_se, fwt_mean=fwt_mean, fwt_se=fwt_se,
                              per_rep_avg=per_avg, per_rep_bwt=per_bwt,
                              per_rep_fwt=per_fwt, B=B, se_degenerate=(B == 1))


@dataclass(frozen=True)
class ResolventReport:
    """Worst observed deviations of resolvent statistics from their limits.

    ``trace_dev`` is the largest ``|tr(Q)/p - m|`` over trials and
    ``quad_dev`` the largest ``|beta' Q^2 beta - r2 * m'|``, for the
    resolvent ``Q = (S + lam I)^{-1}`` of an identity-covariance sample
    covariance matrix.
    """

    n: int
    p: int
    gamma: float
    lam: float
    trials: int
    trace_dev: float
    quad_dev: float
    m_limit: float
    m_prime_limit: float


def resolvent_deviation_report(n, gamma, lam, trials=5, seed=0, r2=1.0):
    """Monte Carlo check of the identity-covariance resolvent limits."""
    if n < 50:
        raise ValueError("n >= 50 required for a meaningful check")
    rng = np.random.default_rng(seed)
    p = int(np.floor(n * gamma))
    m = mp_stieltjes(gamma, lam)
    mp_ = mp_stieltjes_prime(gamma, lam)
    trace_dev = 0.0
    quad_dev = 0.0
    for _ in range(trials):
        Z = rng.standard_normal((n, p))
        S = Z.T @ Z / n
        beta = sample_beta(p, r2, rng)
        R = S + lam * np.eye(p)
        Q = np.linalg.inv(R)
        trace_dev = max(trace_dev, abs(np.trace(Q) / p - m))
        q = Q @ beta
        quad_dev = max(quad_dev, abs(float(q @ q) - r2 * mp_))
    return ResolventReport(n=n, p=p, gamma=gamma, lam=lam, trials=trials,
                           trace_dev=trace_dev, quad_dev=quad_dev,
                           m_limit=m, m_prime_limit=mp_)


def resolvent_convergence(n_list, gamma, lam, trials=5, seed=0):
    """Deviation reports over an n-grid plus fitted log-log decay slopes."""
    reports = [resolvent_deviation_report(n, gamma, lam, trials=trials, seed=seed + i)
               for i, n in enumerate(n_list)]
    logs_n = np.log([r.n for r in reports])
    slope_trace = float(np.polyfit(logs_n, np.log([r.trace_dev for r in reports]), 1)[0])
    slope_quad = float(np.polyfit(logs_n, np.log([r.quad_dev for r in reports]), 1)[0])
    return reports, slope_trace, slope_quad
