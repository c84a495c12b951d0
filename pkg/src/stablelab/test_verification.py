"""Experiments on small budgets: probes, trends, CF gaps, KS, LLT, rates, and operator checks."""

import math

import numpy as np
import pytest
from scipy.stats import kstwobign

from stablelab.ensemble import DirectionSpec, EnsembleSpec
from stablelab.errors import ExcludedCaseError
from stablelab.heavy_tail import SecondOrderTail
from stablelab.session import ExperimentSession
from stablelab.stable_law import char_fn
from stablelab.transfer import STATIONARY_TOL, OperatorConfig
from stablelab.verification import (
    MIN_REPLICAS,
    ExperimentConfig,
    KernelSpec,
    Probe,
    centered_sums,
    ensemble_for,
    isotonic_trend,
    joint_cf_gap,
    ks_null_calibration,
    ks_to_stable,
    limit_law,
    llt_check,
    operator_expansion_check,
    operator_suite,
    rate_profile,
    require_llt_alpha,
)

FINITE_MEAN = SecondOrderTail(alpha=1.5, rho=-0.5, p=0.7, c=1.0, beta=0.5, t0=2.0)
STEEP = SecondOrderTail(alpha=0.75, rho=-1.0, p=0.7, c=1.0, beta=1.0, t0=4.0)
B1 = [[0.75, 0.25], [0.25, 0.5]]
B2 = [[0.5, 0.3], [0.5, 0.3]]


def _config(radial: SecondOrderTail = FINITE_MEAN, dim: int = 1, **overrides) -> ExperimentConfig:
    directions = DirectionSpec(matrices=[B1, B2]) if dim == 2 else DirectionSpec()
    settings = dict(
        ensemble=EnsembleSpec(dim=dim, radial=radial, directions=directions, drift_samples=5000),
        n_list=(16, 64),
        replicas=MIN_REPLICAS,
        t_list=(0.5,),
        s_grid=(-2.0, -1.0, 0.0, 1.0, 2.0),
        operator=OperatorConfig(resolution=16),
        seed=3,
    )
    return ExperimentConfig(**(settings | overrides))


# --- Probes and kernels --------------------------------------------------------


@pytest.mark.parametrize(
    "text, name, lipschitz",
    [
        ("one", "one", 0.0),
        ("const:2.5", "const:2.5", 0.0),
        ("coord:2", "coord:2", 1.0),
        ("product:1:2", "product:1:2", 1.0),
        ("bump:0.5,0.5:0.25", "bump:0.5,0.5:0.25", 1.0 / (0.25 * math.sqrt(math.e))),
    ],
)
def test_probe_parse(text, name, lipschitz):
    probe = Probe.parse(text)
    assert probe.name == name
    assert probe.lipschitz == pytest.approx(lipschitz, rel=1e-15)


def test_probe_values():
    xs = np.array([[0.25, 0.75], [1.0, 0.0]])
    np.testing.assert_allclose(Probe.parse("coord:2")(xs), [0.75, 0.0])
    np.testing.assert_allclose(Probe.parse("product:1:2")(xs), [0.1875, 0.0])
    np.testing.assert_allclose(Probe.parse("const:2")(xs), [2.0, 2.0])
    np.testing.assert_allclose(Probe.parse("bump:0.25,0.75:0.5")(xs)[0], 1.0)


@pytest.mark.parametrize("text", ["coord", "coord:x", "product:1", "bump:0.5:0", "coord:0", "wave:1"])
def test_malformed_probes_are_rejected(text):
    with pytest.raises(ValueError):
        Probe.parse(text)


def test_probe_must_fit_the_dimension():
    with pytest.raises(ValueError):
        _config(probes=(Probe.parse("coord:2"),))


def test_kernel_integrals_and_support():
    gaussian = KernelSpec(width=0.5)
    assert gaussian.integral == pytest.approx(0.5 * math.sqrt(2 * math.pi))
    assert gaussian.support == 6.0
    assert KernelSpec(kind="triangle", width=2.0).integral == 2.0
    assert KernelSpec(kind="zero").integral == 0.0
    with pytest.raises(ValueError):
        KernelSpec(width=0.0)


# --- Configuration -------------------------------------------------------------


def test_config_enforces_budgets():
    with pytest.raises(ValueError, match="replicas"):
        _config(replicas=MIN_REPLICAS - 1)
    with pytest.raises(ValueError, match="increasing"):
        _config(n_list=(64, 16))
    with pytest.raises(ValueError):
        _config(n_list=())
    with pytest.raises(ValueError):
        _config(s_grid=(1.0, 0.0))
    with pytest.raises(ValueError):
        _config(x0=(0.5, 0.5))


def test_config_start_defaults_to_the_barycenter():
    assert np.allclose(_config(dim=2).start.coords, [0.5, 0.5])
    assert np.allclose(_config(dim=2, x0=(1.0, 3.0)).start.coords, [0.25, 0.75])


# --- Trends --------------------------------------------------------------------


def test_isotonic_trend_accepts_noisy_decrease():
    check = isotonic_trend([1.0, 0.5, 0.52, 0.2], [0.05, 0.05, 0.05, 0.05])
    assert check.ok


def test_isotonic_trend_flags_a_real_increase():
    check = isotonic_trend([0.1, 0.5, 1.0], [0.01, 0.01, 0.01])
    assert not check.ok
    assert check.max_excess > 0.0


def test_isotonic_trend_handles_zero_stderr():
    assert isotonic_trend([3.0, 2.0, 1.0], [0.0, 0.0, 0.0]).ok
    assert isotonic_trend([1.0], [0.0]).ok
    with pytest.raises(ValueError):
        isotonic_trend([1.0, 2.0], [0.1])


# --- Joint CF gap and KS -------------------------------------------------------


def test_joint_cf_gap_compares_walks_with_the_limit():
    cfg = _config()
    with ExperimentSession() as session:
        gap = joint_cf_gap(cfg)
        e = ensemble_for(cfg)
        S, _ = session.walks(e, cfg.start, cfg.n_list, cfg.replicas, cfg.seed).at(64)
    assert gap.oracle_mode
    assert len(gap.rows) == 2
    row = gap.series(0.5, "one")[-1]
    expected = complex(np.exp(0.5j * centered_sums(e, S, 64)).mean())
    assert row.estimate_re == pytest.approx(expected.real, abs=1e-12)
    assert row.estimate_im == pytest.approx(expected.imag, abs=1e-12)
    predicted = complex(char_fn(limit_law(e), 0.5))
    assert row.predicted_re == pytest.approx(predicted.real, abs=1e-12)
    assert row.tolerance == STATIONARY_TOL
    assert gap.passes(64, threshold=0.2)


def test_experiments_in_one_session_share_walks():
    cfg = _config()
    with ExperimentSession() as session:
        joint_cf_gap(cfg)
        ks_to_stable(cfg)
        assert session.cached_batches == 1


def test_ks_table_reports_stderr():
    cfg = _config()
    with ExperimentSession():
        table = ks_to_stable(cfg)
    assert [r.n for r in table.rows] == [16, 64]
    for row in table.rows:
        assert 0.0 < row.statistic < 1.0
        assert row.stderr == pytest.approx(kstwobign.std() / math.sqrt(MIN_REPLICAS), rel=1e-12)
    assert table.alpha == 1.5


def test_ks_null_calibration_is_small():
    cfg = _config()
    table = ks_null_calibration(cfg)
    assert table.null
    for row in table.rows:
        assert row.statistic <= 2.5 / math.sqrt(MIN_REPLICAS) + row.quadrature_tolerance


def test_ks_table_csv(tmp_path):
    cfg = _config()
    table = ks_null_calibration(cfg)
    lines = table.to_csv(tmp_path / "ks.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == "n,statistic,stderr,quadrature_tolerance,p_value"
    assert len(lines) == 3


# --- Local limit theorem -------------------------------------------------------


def test_llt_with_the_zero_kernel_is_exactly_zero():
    cfg = _config(kernel=KernelSpec(kind="zero"), y_grid=(0.0, 1.0))
    table = llt_check(cfg)
    assert len(table.rows) == 4
    assert all(r.estimate == 0.0 and r.predicted == 0.0 for r in table.rows)
    assert table.relative_error(64) == 0.0


def test_llt_predictions_use_the_kernel_mass():
    cfg = _config(y_grid=(0.0,))
    table = llt_check(cfg, kernel=KernelSpec(width=0.5))
    for row in table.rows:
        assert row.predicted > 0.0
        assert row.estimate >= 0.0
        assert row.difference == pytest.approx(abs(row.estimate - row.predicted), abs=1e-15)


def test_llt_excludes_alpha_two():
    with pytest.raises(ExcludedCaseError):
        require_llt_alpha(2.0)
    require_llt_alpha(1.5)


# --- Rates ---------------------------------------------------------------------


def test_rate_profile_for_rho_above_minus_alpha(tmp_path):
    cfg = _config()
    profile = rate_profile(cfg, "rho_gt")
    assert profile.branch == "rho_gt"
    assert len(profile.predicted) == len(cfg.s_grid)
    assert len(profile.empirical) == len(cfg.n_list)
    assert profile.delta_f == 0.0
    assert all(np.isfinite(profile.z_scores[-1]))
    assert profile.underpowered == (profile.replicas < profile.required_replicas)
    assert min(min(row) for row in profile.stderr) > 0.0
    lines = profile.to_csv(tmp_path / "rate.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == "n,s,scale,deviation,stderr,predicted,z"
    assert len(lines) == 1 + len(cfg.n_list) * len(cfg.s_grid)


def test_rate_profile_for_rho_below_minus_alpha():
    cfg = _config(STEEP)
    profile = rate_profile(cfg, "rho_lt")
    assert profile.scale == [1 / 16, 1 / 64]
    assert profile.nu_f == pytest.approx(1.0, abs=1e-12)


def test_rate_profile_rejects_the_wrong_branch():
    with pytest.raises(ValueError, match="rho_lt"):
        rate_profile(_config(), "rho_lt")


def test_rate_profile_excludes_rho_equal_to_minus_alpha():
    boundary = SecondOrderTail(alpha=0.75, rho=-0.75, p=0.7, c=1.0, t0=4.0)
    with pytest.raises(ExcludedCaseError):
        rate_profile(_config(boundary), "rho_gt")


def test_rate_profile_needs_a_second_order_term():
    pure = SecondOrderTail(alpha=1.5, rho=0.0, p=0.7, c=1.0, t0=2.0)
    with pytest.raises(ValueError, match="identically 0"):
        rate_profile(_config(pure), "rho_gt")


# --- Operator checks -----------------------------------------------------------


def test_operator_suite_holds_on_a_coarse_grid():
    cfg = _config(STEEP, dim=2, probes=(Probe.parse("one"), Probe.parse("coord:1")))
    suite = operator_suite(cfg, m=4, n_max=10)
    assert suite.delta_one <= 1e-10
    assert suite.lambda_zero_defect <= 1e-10
    assert len(suite.two_formula) == 2
    assert suite.ok


def test_operator_expansion_is_hermitian():
    cfg = _config(STEEP, dim=2, n_list=(16,), probes=(Probe.parse("coord:1"),))
    check = operator_expansion_check(cfg, ks=range(1, 4))
    assert len(check.rows) == 3
    assert len(check.bootstrap) == 1
    assert check.zero_residual < 1e-8
    assert check.max_conjugate_defect < 1e-8
    assert len(check.scaled("coord:1")) == 3


def test_operator_expansion_needs_the_steep_branch():
    with pytest.raises(ValueError):
        operator_expansion_check(_config(dim=2), ks=range(1, 2))
