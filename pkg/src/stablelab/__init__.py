"""Matrix Stable Lab: stable limits of products of random positive matrices.

Simulates norm cocycles of products of heavy-tailed positive matrices, tabulates
the stable limit law and its second-order corrections, and checks first-order
rates of convergence against their theoretical profiles.
"""

from stablelab.ensemble import (
    DirectionSpec,
    EnsembleSpec,
    RadialFKEnsemble,
    check_conditions,
    make_ensemble,
    sample_walk,
    sample_walks,
)
from stablelab.errors import (
    ConditionViolation,
    ContractViolation,
    ExcludedCaseError,
    GapWindowError,
    QuadratureError,
    UsageError,
)
from stablelab.executors import AnyExecutorConfig, Serial, Threads
from stablelab.geometry import DirectionVector, PositiveMatrix, cocycle, hilbert_dist, projective_action
from stablelab.heavy_tail import SecondOrderTail, aux_A, norming_a, norming_b
from stablelab.session import ExperimentSession, current_session
from stablelab.stable_law import (
    StableLawParams,
    char_fn,
    correction_M,
    correction_N,
    stable_cdf,
    stable_density,
)
from stablelab.verification import (
    ExperimentConfig,
    Probe,
    joint_cf_gap,
    ks_to_stable,
    llt_check,
    operator_expansion_check,
    operator_suite,
    rate_profile,
)

__all__ = [
    # Geometry
    "PositiveMatrix",
    "DirectionVector",
    "projective_action",
    "cocycle",
    "hilbert_dist",
    # Radial laws
    "SecondOrderTail",
    "aux_A",
    "norming_a",
    "norming_b",
    # Ensembles and walks
    "DirectionSpec",
    "EnsembleSpec",
    "RadialFKEnsemble",
    "make_ensemble",
    "check_conditions",
    "sample_walk",
    "sample_walks",
    # Limit law
    "StableLawParams",
    "char_fn",
    "stable_density",
    "stable_cdf",
    "correction_M",
    "correction_N",
    # Experiments
    "ExperimentConfig",
    "Probe",
    "joint_cf_gap",
    "ks_to_stable",
    "llt_check",
    "rate_profile",
    "operator_expansion_check",
    "operator_suite",
    # Execution
    "ExperimentSession",
    "current_session",
    "AnyExecutorConfig",
    "Serial",
    "Threads",
    # Errors
    "ConditionViolation",
    "ExcludedCaseError",
    "ContractViolation",
    "QuadratureError",
    "GapWindowError",
    "UsageError",
]
