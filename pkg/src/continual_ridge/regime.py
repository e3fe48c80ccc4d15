"""Experiment-wide configuration shared by the theory and simulation engines.

A :class:`Regime` fixes the asymptotic problem (task count, aspect ratios,
ridge levels, noise and signal strength).  A :class:`CovarianceScenario`
fixes the task covariance structure; all supported scenarios are diagonal
in a common eigenbasis, so a scenario is fully described by per-task
eigenvalue data.  :class:`MetricWeights` carries the weight sequences used
by the three generalization metrics.

Scenario presets are deterministic functions of ``(name, T, seed)``:
random presets draw once and freeze the draws in the scenario record, so
the theory and simulation engines condition on the same realized
covariances.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

PRESET_NAMES = (
    "identity",
    "iso-random",
    "iso-increasing",
    "block-random",
    "block-increasing",
)

LAMBDA_MODES = ("greedy", "fixed", "scaled")

# Two-block presets use a large-block eigenvalue of 5, giving eigenvalue
# bounds [1, 5] for every two-block scenario.
BLOCK_SCALE = 5.0

# Block fractions live in the open interval (0, 1); preset values on the
# boundary are clipped inward by this amount before use.
PI_CLIP = 1e-9

CONFIG_DEFAULTS: dict[str, object] = {
    "scenario": "identity",
    "T": 20,
    "n": 100,
    "gamma": 1.2,
    "sigma2": 1.0,
    "r2": 1.0,
    "lambda_mode": "greedy",
    "lambda_scale": 1.0,
    "seed": 0,
    "replications": 100,
}


class ConfigError(ValueError):
    """Raised for malformed configuration files or option combinations."""


def _block_count(pi, p):
    """Number of large-block eigenvalues for fraction ``pi`` in dimension ``p``.

    Floor semantics, made robust to representation error so that the
    snapped fraction ``m / p`` reproduces the count ``m`` exactly.
    """
    raw = pi * p
    m = int(np.floor(raw))
    if m + 1 - raw < 1e-9:
        m += 1
    return m


@dataclass(frozen=True)
class Regime:
    """Asymptotic description of a continual regression problem.

    Attributes
    ----------
    T : int
        Number of tasks, observed sequentially.
    gamma : tuple of float
        Per-task aspect ratios (dimension over sample size limits).
    lam : tuple of float
        Per-task ridge levels, all positive.
    sigma2 : float
        Noise variance.
    r2 : float
        Limiting squared norm of the true coefficient vector.
    """

    T: int
    gamma: tuple[float, ...]
    lam: tuple[float, ...]
    sigma2: float
    r2: float

    def __post_init__(self):
        if self.T < 1:
            raise ValueError(f"task count must be >= 1, got {self.T}")
        object.__setattr__(self, "gamma", tuple(float(g) for g in self.gamma))
        object.__setattr__(self, "lam", tuple(float(v) for v in self.lam))
        if len(self.gamma) != self.T or len(self.lam) != self.T:
            raise ValueError("gamma and lam must each have one entry per task")
        if any(g <= 0 for g in self.gamma):
            raise ValueError("all aspect ratios must be positive")
        if any(v <= 0 for v in self.lam):
            raise ValueError("all ridge levels must be positive")
        if self.sigma2 <= 0 or self.r2 <= 0:
            raise ValueError("sigma2 and r2 must be positive")

    @classmethod
    def uniform(cls, T, gamma, lam, sigma2=1.0, r2=1.0):
        """Equal aspect ratio and (optionally scalar) ridge level across tasks."""
        lam = (float(lam),) * T if np.isscalar(lam) else tuple(lam)
        return cls(T=T, gamma=(float(gamma),) * T, lam=lam, sigma2=sigma2, r2=r2)

    def prefix(self, k):
        """The regime restricted to the first ``k`` tasks."""
        return Regime(k, self.gamma[:k], self.lam[:k], self.sigma2, self.r2)

    def single(self, t):
        """One-task regime for task ``t`` (1-based), used by ridge baselines."""
        return Regime(1, (self.gamma[t - 1],), (self.lam[t - 1],), self.sigma2, self.r2)

    def with_lam(self, lam):
        return Regime(self.T, self.gamma, tuple(lam), self.sigma2, self.r2)


@dataclass(frozen=True)
class CovarianceScenario:
    """Per-task covariance structure, diagonal in a shared eigenbasis.

    ``kind`` selects the parameterization:

    - ``identity``: every covariance is the identity.
    - ``isotropic``: task t has covariance ``delta[t-1] * I``.
    - ``two-block``: task t has a fraction ``pi[t-1]`` of eigenvalues equal
      to ``block_scale`` and the rest equal to 1.
    - ``explicit-diagonal``: finite-p eigenvalue vectors given directly.
    """

    kind: str
    T: int
    delta: tuple[float, ...] = ()
    pi: tuple[float, ...] = ()
    block_scale: float = BLOCK_SCALE
    diag: tuple[tuple[float, ...], ...] = ()

    def __post_init__(self):
        if self.kind not in ("identity", "isotropic", "two-block", "explicit-diagonal"):
            raise ValueError(f"unknown scenario kind {self.kind!r}")
        if self.T < 1:
            raise ValueError("scenario needs at least one task")
        if self.kind == "isotropic":
            if len(self.delta) != self.T or any(d <= 0 for d in self.delta):
                raise ValueError("isotropic scenario needs T positive scales")
        if self.kind == "two-block":
            if len(self.pi) != self.T:
                raise ValueError("two-block scenario needs T block fractions")
            # Presets draw fractions strictly inside (0, 1); snapping to a
            # finite-dimension grid may land exactly on 0 (empty block).
            if any(not 0.0 <= x < 1.0 for x in self.pi):
                raise ValueError("block fractions must lie in [0, 1)")
            if self.block_scale <= 0 or self.block_scale == 1.0:
                raise ValueError("block eigenvalue must be positive and != 1")
        if self.kind == "explicit-diagonal":
            if len(self.diag) != self.T:
                raise ValueError("explicit scenario needs T eigenvalue vectors")
            lengths = {len(d) for d in self.diag}
            if len(lengths) != 1:
                raise ValueError("all eigenvalue vectors must share the dimension")
            if any(v <= 0 for d in self.diag for v in d):
                raise ValueError("eigenvalues must be positive")

    def eigenvalue_bounds(self):
        """Interval [c, C] containing every task eigenvalue."""
        if self.kind == "identity":
            return 1.0, 1.0
        if self.kind == "isotropic":
            return min(self.delta), max(self.delta)
        if self.kind == "two-block":
            return min(1.0, self.block_scale), max(1.0, self.block_scale)
        lo = min(min(d) for d in self.diag)
        hi = max(max(d) for d in self.diag)
        return lo, hi

    def task_eigenvalues(self, t, p):
        """Finite-p eigenvalue vector of task ``t`` (1-based).

        Two-block scenarios place ``floor(pi_t * p)`` eigenvalues equal to
        the block scale ahead of the unit eigenvalues, so nested blocks
        share leading coordinates across tasks.
        """
        if not 1 <= t <= self.T:
            raise ValueError(f"task index {t} outside 1..{self.T}")
        if self.kind == "identity":
            return np.ones(p)
        if self.kind == "isotropic":
            return np.full(p, self.delta[t - 1])
        if self.kind == "two-block":
            m = _block_count(self.pi[t - 1], p)
            out = np.ones(p)
            out[:m] = self.block_scale
            return out
        d = np.asarray(self.diag[t - 1], dtype=float)
        if len(d) != p:
            raise ValueError(f"scenario stores p={len(d)} eigenvalues, requested p={p}")
        return d.copy()

    def at_dimension(self, p):
        """Scenario as realized in dimension ``p``.

        Identity and isotropic covariances realize their parameters at any
        dimension, but a two-block fraction is only realizable on the grid
        ``m / p``; this returns a scenario whose fractions are snapped to
        that grid (the same counts :meth:`task_eigenvalues` produces), so
        asymptotic evaluations condition on exactly the covariances a
        dimension-``p`` simulation uses.
        """
        if self.kind != "two-block":
            return self
        if p < 1:
            raise ValueError("p must be >= 1")
        pi = tuple(_block_count(x, p) / p for x in self.pi)
        return CovarianceScenario(kind=self.kind, T=self.T, pi=pi,
                                  block_scale=self.block_scale)


@dataclass(frozen=True)
class MetricWeights:
    """Weight sequences for average risk, backward and forward transfer.

    ``omega`` weights the T test tasks of the average risk; ``omega_bwt``
    weights tasks 1..T-1 of backward transfer and ``omega_fwt`` weights
    tasks 2..T of forward transfer.  Each nonempty sequence sums to one.
    """

    omega: tuple[float, ...]
    omega_bwt: tuple[float, ...]
    omega_fwt: tuple[float, ...]

    def __post_init__(self):
        for name, w in (("omega", self.omega), ("omega_bwt", self.omega_bwt),
                        ("omega_fwt", self.omega_fwt)):
            if any(x < 0 for x in w):
                raise ValueError(f"{name} has negative entries")
            if w and abs(sum(w) - 1.0) > 1e-12:
                raise ValueError(f"{name} must sum to 1, got {sum(w)!r}")
        if len(self.omega_bwt) != max(len(self.omega) - 1, 0):
            raise ValueError("omega_bwt must have T-1 entries")
        if len(self.omega_fwt) != max(len(self.omega) - 1, 0):
            raise ValueError("omega_fwt must have T-1 entries")


def default_weights(T):
    """Uniform metric weights for equal per-task sample sizes."""
    if T < 1:
        raise ValueError("T must be >= 1")
    omega = (1.0 / T,) * T
    tail = (1.0 / (T - 1),) * (T - 1) if T >= 2 else ()
    return MetricWeights(omega=omega, omega_bwt=tail, omega_fwt=tail)


def scenario_preset(name, T, seed=0):
    """Materialize a named covariance scenario.

    Parameters
    ----------
    name : str
        One of ``identity``, ``iso-random``, ``iso-increasing``,
        ``block-random``, ``block-increasing``.
    T : int
        Task count.
    seed : int
        Consumed only by the random presets; regenerating with the same
        seed is bit-identical.

    Returns
    -------
    (CovarianceScenario, str)
        The scenario and a short provenance note recording how its
        parameters were produced.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    if name == "identity":
        return CovarianceScenario(kind="identity", T=T), "all task covariances identity"
    if name == "iso-random":
        rng = np.random.default_rng(seed)
        delta = tuple(rng.uniform(0.5, 3.5, size=T).tolist())
        note = f"isotropic scales drawn i.i.d. uniform(0.5, 3.5), seed={seed}"
        return CovarianceScenario(kind="isotropic", T=T, delta=delta), note
    if name == "iso-increasing":
        delta = tuple(4.0 * t / (T + 1) for t in range(1, T + 1))
        return CovarianceScenario(kind="isotropic", T=T, delta=delta), \
            "isotropic scales 4t/(T+1), deterministic"
    if name == "block-random":
        rng = np.random.default_rng(seed)
        pi = tuple(np.clip(rng.uniform(0.0, 1.0, size=T), PI_CLIP, 1.0 - PI_CLIP).tolist())
        note = f"block fractions drawn i.i.d. uniform(0, 1), seed={seed}, block eigenvalue 5"
        return CovarianceScenario(kind="two-block", T=T, pi=pi), note
    if name == "block-increasing":
        pi = tuple(float(np.clip(t / T, PI_CLIP, 1.0 - PI_CLIP)) for t in range(1, T + 1))
        note = "block fractions t/T clipped inside (0, 1), block eigenvalue 5"
        return CovarianceScenario(kind="two-block", T=T, pi=pi), note
    raise ValueError(f"unknown preset {name!r}; known presets: {', '.join(PRESET_NAMES)}")


def validate_config(cfg):
    """Apply defaults and validate a configuration mapping.

    Unknown keys are rejected.  Returns a new dict holding exactly the
    contract keys with normalized value types.
    """
    unknown = set(cfg) - set(CONFIG_DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    out = dict(CONFIG_DEFAULTS)
    out.update(cfg)
    for key in ("T", "n", "seed", "replications"):
        v = out[key]
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError(f"config key {key!r} must be an integer, got {v!r}")
    for key in ("gamma", "sigma2", "r2", "lambda_scale"):
        v = out[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"config key {key!r} must be a number, got {v!r}")
        out[key] = float(v)
    if out["scenario"] not in PRESET_NAMES:
        raise ConfigError(f"unknown scenario {out['scenario']!r}")
    if out["lambda_mode"] not in LAMBDA_MODES:
        raise ConfigError(f"unknown lambda_mode {out['lambda_mode']!r}")
    if out["T"] < 1 or out["n"] < 2 or out["replications"] < 1:
        raise ConfigError("T >= 1, n >= 2 and replications >= 1 required")
    if out["gamma"] <= 0 or out["sigma2"] <= 0 or out["r2"] <= 0:
        raise ConfigError("gamma, sigma2 and r2 must be positive")
    if out["lambda_scale"] <= 0:
        raise ConfigError("lambda_scale must be positive")
    return out


def load_config(path):
    """Load and validate a JSON configuration file."""
    with open(path, encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top-level JSON object expected")
    return validate_config(raw)
