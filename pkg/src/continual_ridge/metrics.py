"""Generalization metrics computed from a per-prefix risk table.

The same function serves the theoretical table and each simulated one:
average risk over seen tasks, backward transfer (influence of later tasks
on earlier ones) and forward transfer (value of history when starting a
new task, against a from-scratch ridge baseline).  Metrics at prefix
length k renormalize the weight sequences over the tasks actually seen;
backward and forward transfer are undefined at k = 1 and not emitted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .regime import MetricWeights


@dataclass(frozen=True)
class MetricCurves:
    """Metric values indexed by prefix length.

    ``avg_risk[k-1]`` covers k = 1..T; ``bwt[k-2]`` and ``fwt[k-2]``
    cover k = 2..T and are empty when T = 1.
    """

    avg_risk: np.ndarray
    bwt: np.ndarray
    fwt: np.ndarray

    @property
    def T(self):
        return len(self.avg_risk)


def compute_curves(risk, ridge_baseline, weights: MetricWeights):
    """Metric curves from a lower-triangular risk table.

    Parameters
    ----------
    risk : (T, T) array
        ``risk[k-1, t-1]`` is the risk of the prefix-k estimator on task
        t, defined for t <= k; entries above the diagonal are ignored.
    ridge_baseline : (T,) array
        Single-task ridge risk per task.
    weights : MetricWeights
        Weight sequences over the full horizon; each prefix renormalizes
        the leading entries.

    Returns
    -------
    MetricCurves
    """
    risk = np.asarray(risk, dtype=float)
    ridge_baseline = np.asarray(ridge_baseline, dtype=float)
    T = len(weights.omega)
    if risk.shape != (T, T) or ridge_baseline.shape != (T,):
        raise ValueError(f"risk table and baseline must match T={T}")
    omega = np.asarray(weights.omega)
    w_bwt = np.asarray(weights.omega_bwt)
    w_fwt = np.asarray(weights.omega_fwt)
    diag = np.diagonal(risk)

    avg = np.empty(T)
    for k in range(1, T + 1):
        w = omega[:k] / omega[:k].sum()
        avg[k - 1] = float(np.dot(w, risk[k - 1, :k]))

    bwt = np.empty(max(T - 1, 0))
    fwt = np.empty(max(T - 1, 0))
    for k in range(2, T + 1):
        wb = w_bwt[:k - 1] / w_bwt[:k - 1].sum()
        bwt[k - 2] = float(np.dot(wb, risk[k - 1, :k - 1] - diag[:k - 1]))
        wf = w_fwt[:k - 1] / w_fwt[:k - 1].sum()
        fwt[k - 2] = float(np.dot(wf, diag[1:k] - ridge_baseline[1:k]))
    return MetricCurves(avg_risk=avg, bwt=bwt, fwt=fwt)
