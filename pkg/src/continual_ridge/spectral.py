"""Stieltjes-transform machinery over discrete joint eigenvalue spectra.

All covariance scenarios handled here are finitely atomic, so a joint
spectrum is a weighted list of eigenvalue vectors and every integral below
is an exact finite sum.  The central object is the companion Stieltjes
transform at a negative argument ``z = -lam``, obtained as the fixed point
of

    x  ->  1 / (lam + gamma * sum_k w_k s_k / (1 + x s_k)),

which is a contraction on ``(0, 1/lam)`` for positive eigenvalues.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .regime import CovarianceScenario, Regime

FIXED_POINT_TOL = 1e-12
FIXED_POINT_MAX_ITER = 10_000


class FixedPointError(RuntimeError):
    """Companion-transform iteration failed to reach the requested tolerance."""


@dataclass(frozen=True)
class FixedPointResult:
    """Solved companion transform value with convergence diagnostics.

    ``value`` lies in (0, 1/lam); ``residual`` is the defect
    ``|value - map(value)|`` at the returned point.
    """

    value: float
    residual: float
    iterations: int


class JointSpectrum:
    """Discrete joint eigenvalue distribution over tasks plus a test slot.

    ``atoms`` has shape (m, T+1): column ``j < T`` holds task ``j+1``
    eigenvalues, the last column holds the test-covariance eigenvalue.
    Weights are nonnegative and sum to one; zero-weight atoms are legal and
    preserved.  ``is_weighted`` distinguishes the coefficient-weighted
    variant of the spectrum from the plain one.
    """

    __slots__ = ("atoms", "weights", "is_weighted")

    def __init__(self, atoms, weights, is_weighted=False):
        atoms = np.array(atoms, dtype=float)
        weights = np.array(weights, dtype=float)
        if atoms.ndim != 2 or atoms.shape[1] < 2:
            raise ValueError("atoms must be (m, T+1) with T >= 1")
        if weights.shape != (atoms.shape[0],):
            raise ValueError("one weight per atom required")
        if np.any(atoms <= 0):
            raise ValueError("eigenvalue coordinates must be positive")
        if np.any(weights < 0):
            raise ValueError("weights must be nonnegative")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1, got {weights.sum()!r}")
        atoms.flags.writeable = False
        weights.flags.writeable = False
        self.atoms = atoms
        self.weights = weights
        self.is_weighted = bool(is_weighted)

    @property
    def n_tasks(self):
        return self.atoms.shape[1] - 1

    def marginal(self, coord):
        """(values, weights) of one coordinate; ``coord=-1`` is the test slot."""
        return self.atoms[:, coord].copy(), self.weights.copy()

    def __eq__(self, other):
        return (isinstance(other, JointSpectrum)
                and self.is_weighted == other.is_weighted
                and self.atoms.shape == other.atoms.shape
                and bool(np.all(self.atoms == other.atoms))
                and bool(np.all(self.weights == other.weights)))

    def __repr__(self):
        return (f"JointSpectrum(n_atoms={self.atoms.shape[0]}, "
                f"n_tasks={self.n_tasks}, is_weighted={self.is_weighted})")


def fixed_point_map(x, values, weights, gamma, lam):
    """One application of the companion-transform iteration map."""
    s = np.asarray(values, dtype=float)
    w = np.asarray(weights, dtype=float)
    return 1.0 / (lam + gamma * float(np.dot(w, s / (1.0 + x * s))))


@lru_cache(maxsize=65536)
def _solve_companion_cached(values, weights, gamma, lam, tol, max_iter):
    s = np.array(values, dtype=float)
    w = np.array(weights, dtype=float)
    x = 1.0 / (lam + gamma * float(np.dot(w, s)))
    for it in range(1, max_iter + 1):
        fx = 1.0 / (lam + gamma * float(np.dot(w, s / (1.0 + x * s))))
        if abs(fx - x) <= tol:
            residual = abs(1.0 / (lam + gamma * float(np.dot(w, s / (1.0 + fx * s)))) - fx)
            return FixedPointResult(value=fx, residual=residual, iterations=it)
        x = fx
    raise FixedPointError(
        f"no convergence after {max_iter} iterations "
        f"(gamma={gamma}, lam={lam}, last increment {abs(fx - x):.3e})")


def companion_stieltjes(values, weights, gamma, lam, tol=FIXED_POINT_TOL,
                        max_iter=FIXED_POINT_MAX_ITER):
    """Companion Stieltjes transform of a discrete spectrum at ``z = -lam``.

    Parameters
    ----------
    values, weights : array-like
        Atoms of the marginal eigenvalue distribution of one task.
    gamma : float
        Aspect ratio of the task.
    lam : float
        Positive ridge level; the transform is evaluated at ``-lam``.

    Returns
    -------
    FixedPointResult
        ``value`` in (0, 1/lam) with defect at most ``tol``.
    """
    if gamma <= 0 or lam <= 0:
        raise ValueError("gamma and lam must be positive")
    if tol <= 0:
        raise ValueError("tol must be positive")
    out = _solve_companion_cached(tuple(np.asarray(values, dtype=float).tolist()),
                                  tuple(np.asarray(weights, dtype=float).tolist()),
                                  float(gamma), float(lam), float(tol), int(max_iter))
    if not 0.0 < out.value < 1.0 / lam:
        raise FixedPointError(f"solution {out.value!r} escaped (0, 1/lam)")
    return out


def primal_from_companion(tilde_m, gamma, lam):
    """Invert ``tilde_m = gamma * m + (1 - gamma) / lam`` for the primal transform."""
    return (tilde_m - (1.0 - gamma) / lam) / gamma


def mp_stieltjes(gamma, lam):
    """Stieltjes transform of the Marchenko-Pastur law at ``z = -lam``.

    Root of ``lam * gamma * m**2 + (1 - gamma + lam) * m - 1 = 0`` chosen
    positive; evaluated in whichever algebraic form avoids cancellation.
    """
    if gamma <= 0 or lam <= 0:
        raise ValueError("gamma and lam must be positive")
    b = 1.0 - gamma + lam
    disc = math.sqrt(b * b + 4.0 * gamma * lam)
    if b >= 0:
        return 2.0 / (disc + b)
    return (disc - b) / (2.0 * gamma * lam)


def mp_stieltjes_prime(gamma, lam):
    """Derivative of the Marchenko-Pastur transform at ``z = -lam``.

    Implicit differentiation of the defining quadratic gives
    ``m' = m**2 / (1 - gamma * m**2 / (1 + gamma * m)**2)``.
    """
    m = mp_stieltjes(gamma, lam)
    gm = gamma * m
    return m * m / (1.0 - gamma * m * m / ((1.0 + gm) * (1.0 + gm)))


def scaled_identity_stieltjes(delta, gamma, lam):
    """Primal and companion transforms when the covariance is ``delta * I``.

    Returns ``(m, tilde_m)``; ``m`` is the positive root of
    ``gamma * delta * lam * m**2 + (delta * (1 - gamma) + lam) * m - 1 = 0``
    and ``tilde_m = gamma * m + (1 - gamma) / lam``.
    """
    if delta <= 0 or gamma <= 0 or lam <= 0:
        raise ValueError("delta, gamma and lam must be positive")
    b = delta * (1.0 - gamma) + lam
    disc = math.sqrt(b * b + 4.0 * delta * gamma * lam)
    if b >= 0:
        m = 2.0 / (disc + b)
    else:
        m = (disc - b) / (2.0 * gamma * delta * lam)
    return m, gamma * m + (1.0 - gamma) / lam


def stieltjes_prime_fd(values, weights, gamma, lam, h=None):
    """Central-difference derivative of the primal transform at ``z = -lam``.

    Used as an independent check of closed-form derivatives; ``h`` defaults
    to ``1e-6 * max(1, lam)``.
    """
    if h is None:
        h = 1e-6 * max(1.0, lam)
    lo = primal_from_companion(
        companion_stieltjes(values, weights, gamma, lam + h).value, gamma, lam + h)
    hi = primal_from_companion(
        companion_stieltjes(values, weights, gamma, lam - h).value, gamma, lam - h)
    return (hi - lo) / (2.0 * h)


def scenario_spectrum(scenario: CovarianceScenario, tasks, test_index):
    """Joint spectrum of selected tasks plus a test coordinate.

    Parameters
    ----------
    scenario : CovarianceScenario
    tasks : sequence of int
        1-based task indices forming the training coordinates, in order.
    test_index : int
        1-based task whose covariance fills the test slot.

    Returns
    -------
    JointSpectrum
        Point mass for identity/isotropic scenarios; the nested two-block
        construction for two-block scenarios (``len(tasks) + 2`` atoms,
        some possibly zero-weight); one atom per dimension for explicit
        diagonals.
    """
    tasks = tuple(int(t) for t in tasks)
    if not tasks:
        raise ValueError("at least one task coordinate required")
    for t in (*tasks, test_index):
        if not 1 <= t <= scenario.T:
            raise ValueError(f"task index {t} outside 1..{scenario.T}")
    k = len(tasks)
    if scenario.kind == "identity":
        return JointSpectrum(np.ones((1, k + 1)), np.ones(1))
    if scenario.kind == "isotropic":
        coords = [scenario.delta[t - 1] for t in tasks] + [scenario.delta[test_index - 1]]
        return JointSpectrum(np.array([coords]), np.ones(1))
    if scenario.kind == "two-block":
        pis = np.array([scenario.pi[t - 1] for t in tasks]
                       + [scenario.pi[test_index - 1]])
        return _two_block_atoms(pis, scenario.block_scale)
    cols = [np.asarray(scenario.diag[t - 1], dtype=float) for t in tasks]
    cols.append(np.asarray(scenario.diag[test_index - 1], dtype=float))
    atoms = np.column_stack(cols)
    p = atoms.shape[0]
    return JointSpectrum(atoms, np.full(p, 1.0 / p))


def _two_block_atoms(pis, block_scale):
    """Nested joint spectrum of two-block covariances with fractions ``pis``.

    Coordinate j carries the large eigenvalue on the leading ``pis[j]``
    share of the common eigenbasis, so sorting the fractions splits [0, 1]
    into len(pis)+1 cells; each cell is one atom whose coordinates drop to
    1 in increasing-fraction order.
    """
    d = len(pis)
    order = np.argsort(pis, kind="stable")
    cuts = np.concatenate(([0.0], pis[order], [1.0]))
    atoms = np.full((d + 1, d), block_scale)
    for t in range(1, d + 1):
        atoms[t:, order[t - 1]] = 1.0
    weights = np.diff(cuts)
    return JointSpectrum(atoms, weights)


def two_block_spectrum(scenario: CovarianceScenario, test_index):
    """Joint spectrum of all tasks of a two-block scenario plus a test slot."""
    if scenario.kind != "two-block":
        raise ValueError("two-block scenario required")
    return scenario_spectrum(scenario, range(1, scenario.T + 1), test_index)


@dataclass(frozen=True)
class MomentTable:
    """Exact atom-sum integrals entering the asymptotic risk.

    With ``e_j(s) = lam_j * (1 + tilde_m_j * s_j)`` and denominator
    ``P(t, l) = prod_{j=t..l} e_j(s)**2``, the per-task vectors integrate
    against the plain spectrum H (``a, b, c``) or the weighted one G
    (``g``) with the product running to the last task and the test
    eigenvalue ``s0`` in the numerator:

        a_t = int s_t * s0 / P(t, T),   b_t = int e_t(s) * s0 / P(t, T),
        c_t = int s0 / P(t, T),         g_t = like c_t under G,

    while the (t, l) pair tables, defined for t <= l, stop the product at
    ``l`` and use ``s_l`` as numerator weight:

        a_pair[t, l] = int s_t * s_l / P(t, l),
        b_pair[t, l] = int e_t(s) * s_l / P(t, l),
        c_pair[t, l] = int s_l / P(t, l),
        g_pair[t, l] = like c_pair under G.

    ``mu`` is the per-task second-order correction
    ``1 / ((1 + int gamma_t s / (lam_t (1 + tilde_m_t s)) dH_t)**2
    - int gamma_t s**2 / (lam_t (1 + tilde_m_t s))**2 dH_t)``.

    Arrays are indexed 0-based; pair tables are upper-triangular with
    zeros below the diagonal.
    """

    mu: np.ndarray
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    g: np.ndarray
    a_pair: np.ndarray
    b_pair: np.ndarray
    c_pair: np.ndarray
    g_pair: np.ndarray


def _pair_products(atoms, tilde_m, lam):
    """e-factors and suffix-product ratios for one spectrum.

    Returns ``(E, inv_prod)`` where ``E[m, j] = lam_j * (1 + tilde_m_j *
    s_j)`` and ``inv_prod[m, t, l] = 1 / prod_{j=t..l} E[m, j]**2`` for
    ``t <= l`` (zero elsewhere).
    """
    m_atoms, T = atoms.shape[0], len(lam)
    E = np.asarray(lam)[None, :] * (1.0 + atoms[:, :T] * np.asarray(tilde_m)[None, :])
    F = E * E
    inv_prod = np.zeros((m_atoms, T, T))
    for t in range(T):
        run = np.cumprod(F[:, t:], axis=1)
        if not np.all(np.isfinite(run)):
            raise OverflowError("eigenvalue product overflow; ridge levels too large "
                                "for a direct evaluation at this task count")
        inv_prod[:, t, t:] = 1.0 / run
    return E, inv_prod


def moment_tables(H: JointSpectrum, G: JointSpectrum, tilde_m, regime: Regime):
    """All moment integrals of the risk tableau, as exact weighted sums.

    ``tilde_m`` holds the solved companion transforms, one per task.  H
    and G must share the coordinate dimension ``regime.T + 1``.
    """
    T = regime.T
    if H.n_tasks != T or G.n_tasks != T:
        raise ValueError(f"spectra have {H.n_tasks}/{G.n_tasks} task slots, regime has {T}")
    tilde_m = np.asarray(tilde_m, dtype=float)
    if tilde_m.shape != (T,):
        raise ValueError("one companion transform per task required")
    lam = np.asarray(regime.lam)
    gam = np.asarray(regime.gamma)

    S, w = H.atoms, H.weights
    E, inv_prod = _pair_products(S, tilde_m, lam)
    s_task, s_test = S[:, :T], S[:, T]

    # mu_t from the marginal of H along task t.
    i1 = gam * ((w[:, None] * (s_task / E)).sum(axis=0))
    i2 = gam * ((w[:, None] * (s_task / E) ** 2).sum(axis=0))
    denom = (1.0 + i1) ** 2 - i2
    if np.any(denom <= 0):
        raise FixedPointError("second-order correction is not positive; "
                              "spectrum/ridge combination outside the valid regime")
    mu = 1.0 / denom

    tail = inv_prod[:, :, T - 1]                     # 1 / P(t, T) per atom
    a = np.einsum("m,mt,m,mt->t", w, s_task, s_test, tail)
    b = np.einsum("m,mt,m,mt->t", w, E, s_test, tail)
    c = np.einsum("m,m,mt->t", w, s_test, tail)
    a_pair = np.einsum("m,mt,ml,mtl->tl", w, s_task, s_task, inv_prod)
    b_pair = np.einsum("m,mt,ml,mtl->tl", w, E, s_task, inv_prod)
    c_pair = np.einsum("m,ml,mtl->tl", w, s_task, inv_prod)

    same_atoms = G is H or (G.atoms.shape == H.atoms.shape
                            and np.array_equal(G.atoms, H.atoms)
                            and np.array_equal(G.weights, H.weights))
    if same_atoms:
        g, g_pair = c.copy(), c_pair.copy()
    else:
        SG, wg = G.atoms, G.weights
        EG, inv_prod_g = _pair_products(SG, tilde_m, lam)
        g = np.einsum("m,m,mt->t", wg, SG[:, T], inv_prod_g[:, :, T - 1])
        g_pair = np.einsum("m,ml,mtl->tl", wg, SG[:, :T], inv_prod_g)

    return MomentTable(mu=mu, a=a, b=b, c=c, g=g,
                       a_pair=a_pair, b_pair=b_pair, c_pair=c_pair, g_pair=g_pair)
