"""Ensembles, walks, and their determinism across executors."""

import math

import numpy as np
import pytest

from stablelab.ensemble import (
    DirectionSpec,
    EnsembleSpec,
    Condition5Check,
    check_conditions,
    condition5_shrinks,
    default_directions,
    direction_chain,
    draw_steps,
    make_ensemble,
    sample_matrix,
    sample_walk,
    sample_walks,
    stationary_sample,
)
from stablelab.errors import ConditionViolation
from stablelab.executors import Serial, Threads
from stablelab.geometry import DirectionVector, PositiveMatrix, fk_ratio, hilbert_dist_many, op_norm
from stablelab.heavy_tail import SecondOrderTail, tail_mass_beyond
from stablelab.session import ExperimentSession, current_session

RADIAL = SecondOrderTail(alpha=0.75, rho=-0.5, p=0.7, c=1.0, beta=1.0, t0=4.0)
FINITE_MEAN = SecondOrderTail(alpha=1.5, rho=-0.5, p=0.7, c=1.0, beta=0.5, t0=2.0)

# Norm-one directions with unequal column sums (so log|Bx| varies); B2 has rank one.
B1 = [[0.75, 0.25], [0.25, 0.5]]
B2 = [[0.5, 0.3], [0.5, 0.3]]


def _ensemble(radial: SecondOrderTail = RADIAL, **spec):
    return make_ensemble(2, DirectionSpec(matrices=[B1, B2], **spec), radial, 8.0, drift_samples=20_000, seed=1)


# --- Validation ----------------------------------------------------------------


def test_default_directions_are_norm_one_and_bounded():
    for m in default_directions(3, count=5, K_prime=4.0, seed=2):
        assert op_norm(m) == pytest.approx(1.0, abs=1e-15)
        assert fk_ratio(m) <= 4.0 + 1e-12


def test_default_directions_are_seeded():
    a = default_directions(2, seed=3)
    b = default_directions(2, seed=3)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


def test_zero_entry_direction_violates_condition_3():
    with pytest.raises(ConditionViolation) as excinfo:
        make_ensemble(2, DirectionSpec(matrices=[[[1.0, 0.0], [0.0, 1.0]]]), RADIAL, 8.0, drift_samples=10)
    assert excinfo.value.condition == 3


def test_entry_ratio_above_K_violates_condition_3():
    steep = [[0.5, 0.05], [0.5, 0.95]]
    with pytest.raises(ConditionViolation) as excinfo:
        make_ensemble(2, DirectionSpec(matrices=[steep]), RADIAL, 8.0, drift_samples=10)
    assert excinfo.value.condition == 3


def test_direction_must_have_norm_one():
    with pytest.raises(ConditionViolation, match="operator norm 1.5") as excinfo:
        make_ensemble(2, DirectionSpec(matrices=[[[1.0, 0.5], [0.5, 1.0]]]), RADIAL, 8.0, drift_samples=10)
    assert excinfo.value.condition == 3


def test_switching_needs_both_fields():
    with pytest.raises(ValueError):
        DirectionSpec(tail_weights=[0.5, 0.5])


def test_switch_threshold_below_t0_is_rejected():
    with pytest.raises(ConditionViolation):
        _ensemble(tail_weights=[0.0, 1.0], switch_threshold=1.0)


def test_weights_must_be_a_probability_vector():
    with pytest.raises(ValueError):
        _ensemble(weights=[0.7, 0.7])
    with pytest.raises(ValueError):
        _ensemble(weights=[1.0])


def test_fingerprint_tracks_the_definition():
    assert _ensemble().fingerprint == _ensemble().fingerprint
    assert _ensemble().fingerprint != _ensemble(weights=[0.25, 0.75]).fingerprint


def test_spec_builds_the_same_ensemble():
    spec = EnsembleSpec(dim=2, radial=RADIAL, directions=DirectionSpec(matrices=[B1, B2]), drift_samples=20_000)
    assert spec.build(seed=1).fingerprint == _ensemble().fingerprint


# --- Drift and centering -------------------------------------------------------


def test_one_dimensional_ensemble_has_no_drift():
    e = make_ensemble(1, DirectionSpec(), RADIAL, 8.0, drift_samples=100)
    assert e.direction_drift == 0.0
    np.testing.assert_allclose(e.directions, [[[1.0]]] * e.count)


def test_finite_mean_radial_offsets_the_direction_drift():
    e = _ensemble(FINITE_MEAN)
    assert e.direction_drift < 0.0
    assert e.radial.offset == pytest.approx(-e.direction_drift, abs=1e-15)


def test_drift_matches_an_independent_stationary_sample():
    e = _ensemble()
    xs = stationary_sample(e, 50_000, seed=9)
    per_draw = np.log(np.einsum("mij,rj->mr", e.directions, xs))
    assert float(e.weights @ per_draw.mean(axis=1)) == pytest.approx(e.direction_drift, abs=5e-3)


# --- Steps and switching -------------------------------------------------------


def test_switching_uses_tail_weights_beyond_the_threshold():
    e = _ensemble(tail_weights=[0.0, 1.0], switch_threshold=10.0)
    z, idx = draw_steps(e, 50_000, np.random.default_rng(4))
    far = np.abs(z - e.radial.center) > 10.0
    assert far.any()
    assert np.all(idx[far] == 1)
    assert set(np.unique(idx[~far])) == {0, 1}


def test_effective_weights_mix_body_and_tail_laws():
    e = _ensemble(tail_weights=[0.0, 1.0], switch_threshold=10.0)
    q = tail_mass_beyond(RADIAL, 10.0)
    np.testing.assert_allclose(e.effective_weights, [0.5 * (1 - q), 0.5 * (1 - q) + q])
    assert e.switch_probability == q


def test_sample_matrix_is_radial_times_direction():
    e = _ensemble(FINITE_MEAN)
    a = sample_matrix(e, seed=5)
    assert isinstance(a, PositiveMatrix)
    assert fk_ratio(a) <= 3.0 + 1e-12


# --- Walks ---------------------------------------------------------------------


def test_walk_splits_into_radial_and_direction_parts():
    e = _ensemble(FINITE_MEAN)
    x0 = DirectionVector([0.3, 0.7])
    walk = sample_walk(e, x0, 12, seed=6, record=True)
    product = np.eye(2)
    for k in walk.index_path:
        product = e.directions[k] @ product
    assert walk.radial_part == pytest.approx(float(walk.z_path.sum()), abs=1e-12)
    assert walk.direction_part == pytest.approx(math.log((product @ x0.coords).sum()), abs=1e-12)
    assert walk.S == pytest.approx(walk.radial_part + walk.direction_part, abs=1e-12)
    np.testing.assert_allclose(walk.X.coords, product @ x0.coords / (product @ x0.coords).sum(), atol=1e-14)


def test_walk_rejects_a_mismatched_start():
    with pytest.raises(ValueError):
        sample_walk(_ensemble(), DirectionVector([1.0, 1.0, 1.0]), 3, seed=0)


def test_one_dimensional_walk_is_a_sum_of_radial_steps():
    e = make_ensemble(1, DirectionSpec(), RADIAL, 8.0, drift_samples=100)
    walk = sample_walk(e, DirectionVector([1.0]), 20, seed=7, record=True)
    assert walk.S == pytest.approx(float(walk.z_path.sum()), abs=1e-12)


def test_walk_batches_snapshot_every_requested_n():
    e = _ensemble()
    batch = sample_walks(e, DirectionVector.barycenter(2), [4, 0, 2, 4], 300, seed=8, batch_size=64)
    assert batch.n_list == (0, 2, 4)
    assert batch.S.shape == (3, 300)
    assert batch.X.shape == (3, 300, 2)
    S0, X0 = batch.at(0)
    assert np.all(S0 == 0.0)
    np.testing.assert_allclose(X0, 0.5)
    np.testing.assert_allclose(batch.X.sum(axis=-1), 1.0, atol=1e-12)


def test_walks_are_identical_for_any_executor():
    e = _ensemble()
    x0 = DirectionVector([0.2, 0.8])
    serial = sample_walks(e, x0, [1, 5, 9], 1000, seed=10, batch_size=128, executor=Serial())
    threaded = sample_walks(e, x0, [1, 5, 9], 1000, seed=10, batch_size=128, executor=Threads(workers=3))
    np.testing.assert_array_equal(serial.S, threaded.S)
    np.testing.assert_array_equal(serial.X, threaded.X)


def test_walks_reject_empty_or_negative_inputs():
    e = _ensemble()
    with pytest.raises(ValueError):
        sample_walks(e, DirectionVector.barycenter(2), [], 10, seed=0)
    with pytest.raises(ValueError):
        sample_walks(e, DirectionVector.barycenter(2), [3], 0, seed=0)


def test_trajectory_csv_has_one_row_per_replica_and_n(tmp_path):
    e = _ensemble()
    batch = sample_walks(e, DirectionVector.barycenter(2), [1, 3], 5, seed=11)
    lines = batch.to_csv(tmp_path / "trajectories.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == "replica,n,S,X_1,X_2,seed"
    assert len(lines) == 1 + 2 * 5


def test_direction_chains_couple():
    e = _ensemble()
    starts = np.array([[1.0, 0.0], [0.0, 1.0]])
    path = direction_chain(e, starts, 80, seed=12)
    distances = hilbert_dist_many(path[:, 0], path[:, 1])
    assert distances[0] == 1.0
    assert np.all(np.diff(distances) <= 1e-15)
    assert distances[-1] < 1e-8


# --- Sessions ------------------------------------------------------------------


def test_session_caches_walks():
    e = _ensemble()
    x0 = DirectionVector.barycenter(2)
    with ExperimentSession() as session:
        assert current_session() is session
        first = session.walks(e, x0, [2, 4], 200, seed=13)
        second = session.walks(e, x0, [4, 2], 200, seed=13)
        assert first is second
        assert session.cached_batches == 1
        session.walks(e, x0, [2, 4], 200, seed=14)
        assert session.cached_batches == 2
    assert current_session() is None


def test_session_memo_builds_once():
    calls = []
    session = ExperimentSession()
    assert session.memo("key", lambda: calls.append(1) or 42) == 42
    assert session.memo("key", lambda: calls.append(1) or 43) == 42
    assert calls == [1]


def test_nested_sessions_restore_the_outer_one():
    outer, inner = ExperimentSession(), ExperimentSession()
    with outer:
        with inner:
            assert current_session() is inner
        assert current_session() is outer


# --- Conditions ----------------------------------------------------------------


def test_condition_report_on_a_valid_ensemble():
    e = _ensemble()
    report = check_conditions(e, 20_000, seed=15)
    assert report.allowable and report.fk_ok
    assert report.max_fk_ratio == pytest.approx(3.0, rel=1e-12)
    assert report.distinct_directions == 2
    assert 0.0 < report.contraction < 1.0
    for check in report.tail_checks:
        assert check.c_plus_exact == pytest.approx(check.t**0.75 * 0.7 * float(RADIAL.s(check.t)), rel=1e-12)
    assert all(c.exact_tv_upper == 0.0 for c in report.condition5)


def test_condition_report_measures_switching_distance():
    e = _ensemble(weights=[0.9, 0.1], tail_weights=[0.1, 0.9], switch_threshold=5.0)
    report = check_conditions(e, 20_000, seed=16, thresholds=(5.0, 20.0))
    # Beyond the switching threshold every large step already uses the tail law.
    assert all(c.exact_tv_upper == pytest.approx(0.0, abs=1e-15) for c in report.condition5)


@pytest.fixture(scope="module")
def switching_report():
    e = _ensemble(weights=[0.9, 0.1], tail_weights=[0.1, 0.9], switch_threshold=10.0)
    return check_conditions(e, 20_000, seed=17, thresholds=(5.0, 20.0))


def test_switching_residual_shrinks_with_the_threshold(switching_report):
    near, far = switching_report.condition5
    assert near.residual > 0.0
    assert far.residual == pytest.approx(0.0, abs=1e-15)
    assert condition5_shrinks(switching_report.condition5)
    assert all(c.within_band for c in switching_report.condition5)
    assert switching_report.iota_tail_hat <= switching_report.iota_tail_bound + switching_report.iota_tail_band
    assert not [f for f in switching_report.flags if "Condition 5" in f or "iota" in f]


def test_contraction_at_one_is_flagged(switching_report):
    report = switching_report.model_copy(update={"contraction": 1.0})
    assert not report.ok
    assert any("projective contraction" in f for f in report.flags)


def test_iota_tail_above_its_bound_is_flagged(switching_report):
    excess = switching_report.iota_tail_bound + switching_report.iota_tail_band + 0.1
    report = switching_report.model_copy(update={"iota_tail_hat": excess})
    assert any("iota tail" in f for f in report.flags)


def test_conditional_direction_law_off_the_tail_law_is_flagged(switching_report):
    near, far = switching_report.condition5
    drifted = near.model_copy(update={"empirical_tv_upper": near.exact_tv_upper + near.band + 0.05})
    report = switching_report.model_copy(update={"condition5": [drifted, far]})
    assert any("threshold 5.0" in f for f in report.flags)


def _residual(threshold: float, tv: float) -> Condition5Check:
    return Condition5Check(
        threshold=threshold,
        exact_tv_upper=tv,
        exact_tv_lower=0.0,
        empirical_tv_upper=None,
        conditioned_samples=0,
    )


@pytest.mark.parametrize(
    ("residuals", "shrinks"),
    [
        ([(5.0, 0.2), (20.0, 0.1)], True),
        ([(20.0, 0.1), (5.0, 0.2)], True),
        ([(5.0, 0.0), (20.0, 0.0)], True),
        ([(5.0, 0.3)], True),
        ([(5.0, 0.1), (20.0, 0.2)], False),
        ([(5.0, 0.2), (20.0, 0.2)], False),
    ],
)
def test_condition5_residuals_must_shrink(residuals, shrinks):
    checks = [_residual(t, tv) for t, tv in residuals]
    assert condition5_shrinks(checks) is shrinks


def test_non_shrinking_residual_is_flagged(switching_report):
    report = switching_report.model_copy(update={"condition5": [_residual(5.0, 0.1), _residual(20.0, 0.2)]})
    assert "Condition 5: tail direction residual does not shrink as the threshold grows" in report.flags
