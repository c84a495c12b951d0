"""
Invariant suites run by `stablelab selftest`.

Importing this module registers every check. Each check is deterministic and
small enough that the whole suite runs in a few minutes.
"""

import math

import numpy as np

from stablelab.ensemble import (
    DirectionSpec,
    EnsembleSpec,
    RadialFKEnsemble,
    check_conditions,
    make_ensemble,
)
from stablelab.errors import ConditionViolation, ExcludedCaseError
from stablelab.geometry import act_many, hilbert_dist_many
from stablelab.heavy_tail import SecondOrderTail, quantile, self_test, tail_cdf, tail_sf, tail_total
from stablelab.quadrature import integrate
from stablelab.selfcheck import selfcheck
from stablelab.session import ExperimentSession
from stablelab.stable_law import (
    StableLawParams,
    StepCDF,
    char_fn,
    corr_J,
    d_const,
    esseen_gap,
    h_l1_bound,
    stable_cdf,
    stable_density,
    stable_table,
)
from stablelab.transfer import (
    Q_matrix,
    SimplexGrid,
    build_Pt,
    delta_functional,
    dominant_eig,
    stationary_measure,
)
from stablelab.verification import ExperimentConfig, isotonic_trend, joint_cf_gap

# A representative family on the rho > -alpha side with a nonzero second-order term.
REFERENCE_TAIL = SecondOrderTail(alpha=0.75, rho=-0.5, p=0.7, c=1.0, beta=1.0, t0=4.0)


def _random_positive(rng: np.random.Generator, n: int, dim: int, K: float) -> np.ndarray:
    return rng.uniform(1.0 / K, 1.0, size=(n, dim, dim))


def _simplex_points(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    return rng.dirichlet(np.ones(dim), size=n)


@selfcheck(module="geometry")
def cocycle_is_additive() -> str:
    rng = np.random.default_rng(11)
    g1 = _random_positive(rng, 10_000, 3, 10.0)
    g2 = _random_positive(rng, 10_000, 3, 10.0)
    x = _simplex_points(rng, 10_000, 3)
    s1, gx = act_many(g1, x)
    s2, _ = act_many(g2, gx)
    s12, _ = act_many(np.einsum("nij,njk->nik", g2, g1), x)
    worst = float(np.abs(s12 - (s1 + s2)).max())
    assert worst <= 1e-12, f"worst defect {worst:.2e}"
    return f"worst defect {worst:.2e}"


@selfcheck(module="geometry")
def projective_action_is_non_expansive() -> str:
    rng = np.random.default_rng(12)
    g = _random_positive(rng, 100_000, 3, 10.0)
    x = _simplex_points(rng, 100_000, 3)
    y = _simplex_points(rng, 100_000, 3)
    _, gx = act_many(g, x)
    _, gy = act_many(g, y)
    before = hilbert_dist_many(x, y)
    after = hilbert_dist_many(gx, gy)
    violations = int(np.sum(after > before * (1 + 1e-12) + 1e-15))
    assert violations == 0, f"{violations} violation(s)"
    return "0 violations on 100000 pairs"


@selfcheck(module="geometry")
def l1_distance_is_bounded_by_hilbert() -> str:
    rng = np.random.default_rng(13)
    x = _simplex_points(rng, 100_000, 3)
    y = _simplex_points(rng, 100_000, 3)
    violations = int(np.sum(np.abs(x - y).sum(axis=1) > 2 * hilbert_dist_many(x, y) + 1e-12))
    assert violations == 0, f"{violations} violation(s)"
    return "0 violations on 100000 pairs"


@selfcheck(module="geometry")
def cocycle_is_within_log_K_of_norm() -> str:
    K = 8.0
    rng = np.random.default_rng(14)
    g = _random_positive(rng, 100_000, 3, K)
    x = _simplex_points(rng, 100_000, 3)
    sigma, _ = act_many(g, x)
    log_norm = np.log(g.sum(axis=1).max(axis=1))
    violations = int(np.sum(np.abs(sigma - log_norm) > math.log(K) + 1e-12))
    assert violations == 0, f"{violations} violation(s)"
    return "0 violations on 100000 draws"


@selfcheck(module="heavy_tail")
def second_order_limit_is_exact() -> str:
    report = self_test(REFERENCE_TAIL)
    assert report.max_relative_residual <= 1e-9, f"residual {report.max_relative_residual:.2e}"
    assert report.A_sign == -1
    return f"residual {report.max_relative_residual:.2e}"


@selfcheck(module="heavy_tail")
def tail_balance_is_p() -> str:
    ts = np.array([4.0, 10.0, 1e3, 1e6])
    ratio = np.asarray(tail_sf(REFERENCE_TAIL, ts)) / np.asarray(tail_total(REFERENCE_TAIL, ts))
    worst = float(np.abs(ratio - REFERENCE_TAIL.p).max())
    assert worst <= 1e-12, f"worst {worst:.2e}"
    return f"worst {worst:.2e}"


@selfcheck(module="heavy_tail")
def quantile_inverts_cdf() -> str:
    u = np.array([1e-9, 1e-4, 0.05, 0.3, 0.5, 0.7, 0.95, 1 - 1e-4])
    worst = float(np.abs(np.asarray(tail_cdf(REFERENCE_TAIL, quantile(REFERENCE_TAIL, u))) - u).max())
    assert worst <= 1e-10, f"worst {worst:.2e}"
    return f"worst {worst:.2e}"


@selfcheck(module="stable_law")
def density_integrates_to_one() -> str:
    worst = 0.0
    for alpha in (0.5, 1.0, 1.5):
        for p in (0.0, 0.5, 1.0):
            params = StableLawParams(alpha=alpha, p=p)
            L = 30 * params.scale
            inner, _ = integrate(lambda s: stable_density(params, s), -L, L, tol=1e-9)
            total = inner + stable_cdf(params, -L) + 1 - stable_cdf(params, L)
            worst = max(worst, abs(total - 1))
    assert worst <= 1e-6, f"worst {worst:.2e}"
    return f"9 laws, worst {worst:.2e}"


@selfcheck(module="stable_law")
def cauchy_matches_closed_form() -> str:
    params = StableLawParams(alpha=1.0, p=0.5, c=1.0)
    gamma = math.pi / 2
    worst = 0.0
    for s in (-7.0, -1.0, 0.0, 0.5, 3.0):
        density = gamma / (math.pi * (gamma**2 + s**2))
        cdf = 0.5 + math.atan(s / gamma) / math.pi
        worst = max(worst, abs(stable_density(params, s) - density), abs(stable_cdf(params, s) - cdf))
    assert worst <= 1e-8, f"worst {worst:.2e}"
    return f"worst {worst:.2e}"


@selfcheck(module="stable_law")
def char_fn_is_hermitian() -> str:
    t = np.linspace(0.01, 20, 400)
    worst = 0.0
    for alpha, p in ((0.5, 0.9), (1.0, 0.2), (1.5, 0.7)):
        params = StableLawParams(alpha=alpha, p=p)
        worst = max(worst, float(np.abs(char_fn(params, -t) - np.conj(char_fn(params, t))).max()))
    assert worst <= 1e-15, f"worst {worst:.2e}"
    return f"worst {worst:.2e}"


@selfcheck(module="stable_law")
def d_const_matches_quadrature() -> str:
    worst = 0.0
    for a in (0.3, 0.5, 0.8):
        head, _ = integrate(lambda x: x**-a * math.sin(x), 0.0, 1.0, tol=1e-13)
        tail, _ = integrate(lambda x: x**-a, 1.0, np.inf, weight="sin", wvar=1.0, tol=1e-13)
        worst = max(worst, abs(head + tail - d_const(a)))
    assert worst <= 1e-6, f"worst {worst:.2e}"
    return f"worst {worst:.2e}"


@selfcheck(module="stable_law")
def empirical_cdf_obeys_smoothing_inequality() -> str:
    params = StableLawParams(alpha=1.5, p=0.7)
    table = stable_table(params)
    F1 = StepCDF.from_samples(table.sample(2000, seed=5))
    gap = esseen_gap(
        F1, F1.char_fn, table.cdf, lambda t: char_fn(params, t), 40.0, derivative_bound=h_l1_bound(params)
    )
    assert gap.lhs <= gap.rhs, f"sup gap {gap.lhs:.3g} above bound {gap.rhs:.3g}"
    return f"sup gap {gap.lhs:.3g} <= {gap.rhs:.3g}"


@selfcheck(module="stable_law")
def excluded_boundary_is_rejected() -> None:
    params = StableLawParams(alpha=0.75, p=0.5, rho=-0.75)
    try:
        corr_J(params, 1.0)
    except ExcludedCaseError:
        return None
    raise AssertionError("rho = -alpha was accepted")


def _reference_ensemble() -> RadialFKEnsemble:
    return make_ensemble(2, DirectionSpec(), REFERENCE_TAIL, 8.0, drift_samples=20_000, seed=1)


@selfcheck(module="ensemble")
def fk_violation_is_rejected() -> None:
    spec = DirectionSpec(matrices=[[[0.5, 0.0], [0.5, 1.0]]])
    try:
        make_ensemble(2, spec, REFERENCE_TAIL, 8.0, drift_samples=100)
    except ConditionViolation as e:
        assert e.condition == 3, f"named Condition {e.condition}"
        return None
    raise AssertionError("a zero-entry direction was accepted")


@selfcheck(module="ensemble")
def default_ensemble_is_contracting() -> str:
    report = check_conditions(_reference_ensemble(), 20_000, seed=2)
    assert report.allowable and report.fk_ok, "Condition 1 or 3 fails on the default directions"
    assert report.contraction < 1, f"contraction {report.contraction:.4f}"
    return f"max FK ratio {report.max_fk_ratio:.3g}, contraction {report.contraction:.3f}"


@selfcheck(module="transfer")
def stationary_operator_structure() -> str:
    e = _reference_ensemble()
    grid = SimplexGrid(2, 32)
    P0 = build_Pt(e, grid, 0.0, 100, seed=3, method="factorized")
    rows = float(np.abs(P0.matrix.sum(axis=1) - 1).max())
    assert rows <= 1e-12, f"row sums off by {rows:.2e}"
    nu = stationary_measure(P0)
    lam_defect = abs(dominant_eig(P0, nu=nu).lam - 1)
    delta_one = abs(delta_functional(P0, Q_matrix(e, grid), nu, np.ones(grid.size)).delta)
    assert lam_defect <= 1e-10, f"|lambda(0) - 1| = {lam_defect:.2e}"
    assert delta_one <= 1e-10, f"|delta(1)| = {delta_one:.2e}"
    return f"|lambda(0)-1|={lam_defect:.1e}, |delta(1)|={delta_one:.1e}"


@selfcheck(module="verification")
def trend_check_has_power() -> None:
    assert isotonic_trend([0.5, 0.3, 0.31, 0.1], [0.01] * 4).ok
    assert not isotonic_trend([0.1, 0.2, 0.3, 0.4], [0.01] * 4).ok


@selfcheck(module="verification")
def trivial_cf_gap_is_zero() -> None:
    cfg = ExperimentConfig(
        ensemble=EnsembleSpec(dim=1, radial=REFERENCE_TAIL),
        n_list=(1, 8),
        replicas=1_000,
        t_list=(0.0,),
    )
    with ExperimentSession():
        gap = joint_cf_gap(cfg)
    assert all(r.gap == 0.0 for r in gap.rows), "gap at t = 0, f = 1 is not exactly 0"
