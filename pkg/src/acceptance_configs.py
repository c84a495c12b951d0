"""Experiment configurations for the acceptance suite.

Kept separate from the pytest module so the same configurations can be run
from the CLI or a notebook with only the production dependencies installed.
"""

from stablelab.ensemble import DirectionSpec, EnsembleSpec
from stablelab.heavy_tail import SecondOrderTail
from stablelab.transfer import OperatorConfig
from stablelab.verification import ExperimentConfig, KernelSpec, Probe

# alpha < 1 with a slowly vanishing second-order term; the 1-d oracle family.
ORACLE_TAIL = SecondOrderTail(alpha=0.75, rho=-0.25, p=0.7, c=1.0, beta=1.0, t0=4.0)

# 1 < alpha < 2 inside the first B_rho branch, so the rate profile has a nonzero M.
RATE_TAIL = SecondOrderTail(alpha=1.5, rho=-0.25, p=0.7, c=1.0, beta=1.0, t0=2.0)

# rho < -alpha < 0: the second-order correction runs through delta(f).
STEEP_TAIL = SecondOrderTail(alpha=0.5, rho=-1.0, p=0.7, c=1.0, beta=1.0, t0=4.0)

B1 = [[0.75, 0.25], [0.25, 0.5]]
B2 = [[0.5, 0.3], [0.5, 0.3]]

# Large radial steps favour B2, so Q differs from P and delta(f) does not vanish.
SWITCHING = DirectionSpec(matrices=[B1, B2], weights=[0.5, 0.5], tail_weights=[0.1, 0.9], switch_threshold=4.0)

JOINT_PROBES = (Probe.parse("one"), Probe.parse("coord:1"), Probe.parse("bump:0.5,0.5:0.25"))

OPERATOR_PROBES = (
    Probe.parse("one"),
    Probe.parse("coord:1"),
    Probe.parse("coord:2"),
    Probe.parse("product:1:1"),
    Probe.parse("product:1:2"),
    Probe.parse("product:2:2"),
    Probe.parse("bump:0.5,0.5:0.25"),
    Probe.parse("bump:0.2,0.8:0.25"),
    Probe.parse("bump:0.8,0.2:0.25"),
    Probe.parse("bump:0.35,0.65:0.1"),
)

LADDER = (64, 256, 1024, 4096)

ONE_D_ORACLE = ExperimentConfig(
    ensemble=EnsembleSpec(dim=1, radial=ORACLE_TAIL),
    n_list=LADDER,
    replicas=100_000,
    seed=1,
)

JOINT_2D = ExperimentConfig(
    ensemble=EnsembleSpec(dim=2, radial=ORACLE_TAIL),
    n_list=(128, 512, 2048),
    replicas=100_000,
    probes=JOINT_PROBES,
    t_list=(0.5, 1.0, 2.0),
    seed=2,
)

LLT_2D = ExperimentConfig(
    ensemble=EnsembleSpec(dim=2, radial=ORACLE_TAIL),
    n_list=(1024, 4096),
    replicas=1_000_000,
    probes=(Probe.parse("one"), Probe.parse("coord:1")),
    kernel=KernelSpec(kind="gaussian", width=1.0),
    y_grid=(-2.0, -1.0, 0.0, 1.0, 2.0),
    seed=3,
)

RATE_1D = ExperimentConfig(
    ensemble=EnsembleSpec(dim=1, radial=RATE_TAIL),
    n_list=(256, 1024, 4096),
    replicas=100_000,
    seed=4,
)

OPERATOR_2D = ExperimentConfig(
    ensemble=EnsembleSpec(dim=2, radial=STEEP_TAIL, directions=SWITCHING),
    n_list=(64, 256),
    replicas=1_000,
    probes=OPERATOR_PROBES,
    operator=OperatorConfig(resolution=64, method="factorized"),
    seed=5,
)

EXPANSION_2D = OPERATOR_2D.model_copy(update={"probes": JOINT_PROBES[1:] + (Probe.parse("product:1:2"),)})
