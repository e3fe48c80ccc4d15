"""Continual ridge regression in proportionally high dimensions.

Exact asymptotic generalization metrics (average risk, backward and
forward transfer) from random-matrix fixed points, validated against
seeded finite-sample simulation with exact conditional risks.
"""

from .metrics import MetricCurves, compute_curves
from .regime import (
    CovarianceScenario,
    MetricWeights,
    Regime,
    default_weights,
    load_config,
    scenario_preset,
)
from .simulate import (
    ReplicationSummary,
    SimConfig,
    SimRun,
    continual_update,
    exact_conditional_risk,
    resolvent_deviation_report,
    run_replications,
    sample_beta,
    simulate_run,
)
from .spectral import (
    JointSpectrum,
    companion_stieltjes,
    moment_tables,
    mp_stieltjes,
    mp_stieltjes_prime,
    primal_from_companion,
    scaled_identity_stieltjes,
    scenario_spectrum,
    two_block_spectrum,
)
from .theory import (
    RiskTable,
    RiskTableau,
    asymptotic_risk,
    identity_risk_closed_form,
    risk_table,
)
from .tuning import TuneTrace, greedy_lambda, scale_lambda

__version__ = "0.1.0"

__all__ = [
    "CovarianceScenario", "JointSpectrum", "MetricCurves", "MetricWeights",
    "Regime", "ReplicationSummary", "RiskTable", "RiskTableau", "SimConfig",
    "SimRun", "TuneTrace", "asymptotic_risk", "companion_stieltjes",
    "compute_curves", "continual_update", "default_weights",
    "exact_conditional_risk", "greedy_lambda", "identity_risk_closed_form",
    "load_config", "moment_tables", "mp_stieltjes", "mp_stieltjes_prime",
    "primal_from_companion", "resolvent_deviation_report", "risk_table",
    "run_replications", "sample_beta", "scale_lambda",
    "scaled_identity_stieltjes", "scenario_preset", "scenario_spectrum",
    "simulate_run", "two_block_spectrum",
]
