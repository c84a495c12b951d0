"""
Radial/direction ensembles A_1 = e^{Z'} B of nonnegative matrices.

Z' has a `SecondOrderTail` law and B is drawn from a finite set of strictly
positive, norm-one directions satisfying the Furstenberg-Kesten bound
max B <= K min B. Optionally the direction law switches to `tail_weights`
whenever the radial variable leaves [-tau, tau] around its center; the tail
direction law is then the limit law of A_1/|A_1| given a large |log |A_1||,
which makes the tail operator Q differ from the one-step operator P.

Walks never form the product G_n: they iterate (S, X) <- (S + sigma(A, X), A.X),
which only accumulates logarithms.
"""

from dataclasses import dataclass, field
from logging import getLogger
from pathlib import Path
from typing import Self, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from stablelab.errors import ConditionViolation
from stablelab.executors import AnyExecutorConfig, batch_bounds
from stablelab.executors._common import content_id, stream
from stablelab.geometry import (
    DirectionVector,
    PositiveMatrix,
    act_many,
    contraction_coeff_est,
    fk_ratio,
    op_norm,
)
from stablelab.heavy_tail import SecondOrderTail, quantile, tail_cdf, tail_mass_beyond, tail_sf
from stablelab.runtime import run_batches

logger = getLogger(__name__)

NORM_TOL = 1e-12

# Burn-in for the direction chain when estimating stationary quantities; the
# chain contracts at least geometrically, so 64 steps is far below the noise.
DEFAULT_BURN_IN = 64


class DirectionSpec(BaseModel):
    """How the direction matrices B are chosen: explicit matrices, or a seeded default set."""

    model_config = ConfigDict(frozen=True)

    matrices: list[list[list[float]]] = Field(
        default_factory=list,
        description="Explicit d x d direction matrices (row-major). Empty selects default_directions.",
    )
    weights: list[float] | None = Field(
        default=None, description="Direction probabilities; uniform when omitted."
    )
    tail_weights: list[float] | None = Field(
        default=None,
        description="Direction probabilities used when |Z' - center| > switch_threshold.",
    )
    switch_threshold: float | None = Field(
        default=None, description="Radial threshold at which tail_weights take over."
    )
    count: int = Field(default=3, description="Number of default directions.")
    K_prime: float = Field(default=4.0, description="Entry-ratio bound of default directions.")
    seed: int = Field(default=0, description="Seed for default directions.")

    @model_validator(mode="after")
    def _validate_switching(self) -> Self:
        if (self.tail_weights is None) != (self.switch_threshold is None):
            raise ValueError("tail_weights and switch_threshold must be given together.")
        if self.count < 1:
            raise ValueError(f"count must be >= 1, got {self.count}.")
        if self.K_prime < 1:
            raise ValueError(f"K_prime must be >= 1, got {self.K_prime}.")
        return self


@dataclass(frozen=True, eq=False)
class RadialFKEnsemble:
    """A validated ensemble; all arrays are read-only."""

    dim: int
    directions: np.ndarray = field(repr=False)  # (m, d, d)
    weights: np.ndarray
    radial: SecondOrderTail
    K: float
    tail_weights: np.ndarray | None = None
    switch_threshold: float | None = None
    direction_drift: float = 0.0
    fingerprint: str = ""

    @property
    def count(self) -> int:
        return self.directions.shape[0]

    @property
    def switch_probability(self) -> float:
        """P[|Z' - center| > switch_threshold]; 0 without switching."""
        if self.switch_threshold is None:
            return 0.0
        return tail_mass_beyond(self.radial, self.switch_threshold)

    @property
    def tilde_weights(self) -> np.ndarray:
        """Weights of the tail direction law (the measure defining Q)."""
        return self.weights if self.tail_weights is None else self.tail_weights

    @property
    def effective_weights(self) -> np.ndarray:
        """Marginal law of B."""
        if self.tail_weights is None:
            return self.weights
        q = self.switch_probability
        return (1 - q) * self.weights + q * self.tail_weights


def default_directions(dim: int, count: int = 3, K_prime: float = 4.0, seed: int = 0) -> list[np.ndarray]:
    """`count` random matrices with entries uniform on [1/K', 1], scaled to operator norm 1."""
    if dim < 1 or count < 1:
        raise ValueError("dim and count must be >= 1")
    rng = stream(seed, "directions", dim)
    out = []
    for _ in range(count):
        m = rng.uniform(1.0 / K_prime, 1.0, size=(dim, dim))
        out.append(m / m.sum(axis=0).max())
    return out


def _probability_vector(values: Sequence[float] | None, count: int, label: str) -> np.ndarray:
    if values is None:
        return np.full(count, 1.0 / count)
    w = np.asarray(values, dtype=float)
    if w.shape != (count,) or np.any(w < 0) or abs(w.sum() - 1) > 1e-9:
        raise ValueError(f"{label} must be {count} nonnegative numbers summing to 1, got {list(w)}.")
    return w / w.sum()


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _stationary_particles(
    directions: np.ndarray, weights: np.ndarray, size: int, burn_in: int, rng: np.random.Generator
) -> np.ndarray:
    """Independent copies of the direction chain after `burn_in` steps from the barycenter."""
    dim = directions.shape[1]
    xs = np.full((size, dim), 1.0 / dim)
    cumulative = np.cumsum(weights)
    for _ in range(burn_in):
        idx = np.minimum(np.searchsorted(cumulative, rng.random(size), side="right"), len(weights) - 1)
        _, xs = act_many(directions[idx], xs)
    return xs


def _direction_drift(directions: np.ndarray, weights: np.ndarray, samples: int, seed: int) -> float:
    """gamma_B = E[log|B X_0|] with X_0 stationary, averaged exactly over B."""
    if directions.shape[1] == 1:
        return 0.0
    xs = _stationary_particles(directions, weights, samples, DEFAULT_BURN_IN, stream(seed, "drift"))
    per_direction = np.log(np.einsum("mij,rj->mr", directions, xs)).mean(axis=1)
    return float(weights @ per_direction)


def make_ensemble(
    dim: int,
    direction_spec: DirectionSpec,
    radial: SecondOrderTail,
    K: float,
    *,
    drift_samples: int = 100_000,
    seed: int = 0,
) -> RadialFKEnsemble:
    """
    Validate directions and build the ensemble.

    For d >= 2 the mean log-growth gamma_B of the direction part is estimated
    from stationary particles. When alpha is in (1, 2) the radial offset is set
    to -gamma_B so Z = log|A_1 X_0| has mean 0 under the stationary law; for
    alpha <= 1 gamma_B is kept for the centering used in verification.

    Raises:
        ConditionViolation: Condition 1/3 for bad matrices, Condition 5 for a bad
            switching threshold
        ValueError: For shape or weight errors
    """
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}.")
    if K < 1:
        raise ConditionViolation(3, f"K must be >= 1, got {K}")
    raw = (
        [np.asarray(m, dtype=float) for m in direction_spec.matrices]
        if direction_spec.matrices
        else default_directions(dim, direction_spec.count, direction_spec.K_prime, direction_spec.seed)
    )
    for i, m in enumerate(raw):
        if m.shape != (dim, dim):
            raise ValueError(f"Direction {i} has shape {m.shape}, expected ({dim}, {dim}).")
        g = PositiveMatrix(m)
        if np.any(g.entries <= 0):
            raise ConditionViolation(3, f"direction {i} has a zero entry (0 < max g <= K min g fails)")
        if abs(op_norm(g) - 1) > NORM_TOL:
            raise ConditionViolation(3, f"direction {i} has operator norm {op_norm(g):.15g}, expected 1")
        ratio = fk_ratio(g)
        if ratio > K * (1 + 1e-12):
            raise ConditionViolation(3, f"direction {i} has entry ratio {ratio:.6g} > K = {K}")

    count = len(raw)
    weights = _probability_vector(direction_spec.weights, count, "weights")
    tail_weights = None
    if direction_spec.tail_weights is not None:
        tail_weights = _probability_vector(direction_spec.tail_weights, count, "tail_weights")
        if direction_spec.switch_threshold < radial.t0:
            raise ConditionViolation(
                5,
                f"switch_threshold {direction_spec.switch_threshold} must be >= t0 = {radial.t0}",
            )
    directions = _readonly(np.stack(raw))

    q = tail_mass_beyond(radial, direction_spec.switch_threshold) if tail_weights is not None else 0.0
    marginal = weights if tail_weights is None else (1 - q) * weights + q * tail_weights
    drift = _direction_drift(directions, marginal, drift_samples, seed)
    if 1 < radial.alpha < 2 and drift != 0.0:
        radial = SecondOrderTail.model_validate({**radial.model_dump(), "offset": -drift})
        logger.info(f"Radial offset set to {-drift:.6g} so the stationary increment has mean 0")

    fingerprint = content_id(
        directions.tobytes(),
        weights.tobytes(),
        b"" if tail_weights is None else tail_weights.tobytes(),
        repr(direction_spec.switch_threshold),
        radial.model_dump_json(),
        repr(K),
    )
    return RadialFKEnsemble(
        dim=dim,
        directions=directions,
        weights=_readonly(weights),
        radial=radial,
        K=float(K),
        tail_weights=None if tail_weights is None else _readonly(tail_weights),
        switch_threshold=direction_spec.switch_threshold,
        direction_drift=drift,
        fingerprint=fingerprint,
    )


class EnsembleSpec(BaseModel):
    """Serializable description of an ensemble; `build` validates it into a `RadialFKEnsemble`."""

    model_config = ConfigDict(frozen=True)

    dim: int = Field(..., description="Matrix dimension d.")
    radial: SecondOrderTail = Field(..., description="Law of log |A_1|.")
    K: float = Field(default=8.0, description="Furstenberg-Kesten constant.")
    directions: DirectionSpec = Field(default_factory=DirectionSpec)
    drift_samples: int = Field(default=100_000, description="Particles used to estimate gamma_B.")

    def build(self, seed: int = 0) -> RadialFKEnsemble:
        return make_ensemble(
            self.dim, self.directions, self.radial, self.K, drift_samples=self.drift_samples, seed=seed
        )


def draw_steps(
    e: RadialFKEnsemble, size: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Draw `size` i.i.d. (Z', direction index) pairs."""
    u = rng.random(size)
    u[u == 0.0] = np.nextafter(0.0, 1.0)
    z = np.asarray(quantile(e.radial, u), dtype=float).reshape(size)
    v = rng.random(size)
    last = e.count - 1
    idx = np.minimum(np.searchsorted(np.cumsum(e.weights), v, side="right"), last)
    if e.tail_weights is not None:
        in_tail = np.abs(z - e.radial.center) > e.switch_threshold
        tail_idx = np.minimum(np.searchsorted(np.cumsum(e.tail_weights), v, side="right"), last)
        idx = np.where(in_tail, tail_idx, idx)
    return z, idx


def sample_matrix(e: RadialFKEnsemble, seed: int) -> PositiveMatrix:
    """One draw A = e^{Z'} B; deterministic per seed. Raises ValueError if e^{Z'} overflows."""
    z, idx = draw_steps(e, 1, np.random.default_rng(seed))
    with np.errstate(over="ignore"):
        return PositiveMatrix(np.exp(z[0]) * e.directions[idx[0]])


@dataclass(frozen=True, eq=False)
class TrajectorySample:
    """(S_n, X_n) = (log|G_n x0|, G_n.x0), with S split into its radial and direction parts."""

    x0: DirectionVector
    n: int
    S: float
    X: DirectionVector
    seed: int
    radial_part: float = 0.0
    direction_part: float = 0.0
    z_path: np.ndarray | None = field(default=None, repr=False)
    index_path: np.ndarray | None = field(default=None, repr=False)


def sample_walk(
    e: RadialFKEnsemble, x0: DirectionVector, n: int, seed: int, *, record: bool = False
) -> TrajectorySample:
    """Run one walk for n steps; `record` keeps the drawn (Z', index) path."""
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}.")
    if x0.dim != e.dim:
        raise ValueError(f"x0 has dimension {x0.dim}, ensemble has {e.dim}.")
    z, idx = draw_steps(e, n, np.random.default_rng(seed))
    x = np.array(x0.coords)
    direction_part = 0.0
    for k in range(n):
        gx = e.directions[idx[k]] @ x
        norm = gx.sum()
        direction_part += float(np.log(norm))
        x = gx / norm
    radial_part = float(z.sum())
    return TrajectorySample(
        x0=x0,
        n=n,
        S=radial_part + direction_part,
        X=DirectionVector(x),
        seed=seed,
        radial_part=radial_part,
        direction_part=direction_part,
        z_path=z if record else None,
        index_path=idx if record else None,
    )


def direction_chain(e: RadialFKEnsemble, starts: np.ndarray, n: int, seed: int) -> np.ndarray:
    """Coupled direction chains from several starts, sharing one matrix stream; shape (n+1, k, d)."""
    xs = np.asarray(starts, dtype=float)
    xs = xs / xs.sum(axis=-1, keepdims=True)
    _, idx = draw_steps(e, n, np.random.default_rng(seed))
    path = [xs]
    for k in range(n):
        _, xs = act_many(e.directions[idx[k]], xs)
        path.append(xs)
    return np.stack(path)


def sample_stationary_start(
    e: RadialFKEnsemble, burn_in: int, seed: int, x0: DirectionVector | None = None
) -> DirectionVector:
    """X_{burn_in} of the direction chain from x0 (default: the barycenter)."""
    if burn_in < 0:
        raise ValueError(f"burn_in must be >= 0, got {burn_in}.")
    start = x0 if x0 is not None else DirectionVector.barycenter(e.dim)
    if burn_in == 0:
        return start
    return DirectionVector(direction_chain(e, start.coords[None, :], burn_in, seed)[-1, 0])


def stationary_sample(
    e: RadialFKEnsemble, size: int, seed: int, burn_in: int = DEFAULT_BURN_IN
) -> np.ndarray:
    """`size` independent approximately stationary directions, shape (size, d)."""
    return _stationary_particles(
        e.directions, e.effective_weights, size, burn_in, stream(seed, "stationary")
    )


def stationary_Z_sample(
    e: RadialFKEnsemble, n: int, seed: int, burn_in: int = DEFAULT_BURN_IN
) -> np.ndarray:
    """n draws of Z = log|A_1 X_0| with X_0 approximately stationary."""
    xs = stationary_sample(e, n, seed, burn_in)
    z, idx = draw_steps(e, n, stream(seed, "stationary-step"))
    log_norms, _ = act_many(e.directions[idx], xs)
    return z + log_norms


@dataclass(frozen=True, eq=False)
class TrajectoryBatch:
    """Snapshots of R replicas at each n in n_list: S has shape (k, R), X has shape (k, R, d)."""

    x0: DirectionVector
    n_list: tuple[int, ...]
    S: np.ndarray = field(repr=False)
    X: np.ndarray = field(repr=False)
    seed: int

    @property
    def replicas(self) -> int:
        return self.S.shape[1]

    def at(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        k = self.n_list.index(n)
        return self.S[k], self.X[k]

    def to_csv(self, path: Path) -> Path:
        from stablelab.output import write_csv

        dim = self.X.shape[-1]
        header = ["replica", "n", "S"] + [f"X_{i + 1}" for i in range(dim)] + ["seed"]
        rows = (
            [r, n, self.S[k, r], *self.X[k, r], self.seed]
            for k, n in enumerate(self.n_list)
            for r in range(self.replicas)
        )
        return write_csv(path, header, rows)


def sample_walks(
    e: RadialFKEnsemble,
    x0: DirectionVector,
    n_list: Sequence[int],
    replicas: int,
    seed: int,
    *,
    batch_size: int = 10_000,
    executor: AnyExecutorConfig | None = None,
) -> TrajectoryBatch:
    """
    Vectorized walks of `replicas` independent copies, snapshotted at each n in n_list.

    Replicas are split into the fixed batches of `batch_bounds`; batch b draws
    from stream(seed, "walk", b). The result is therefore identical for any
    executor or thread count.
    """
    n_sorted = tuple(sorted(set(int(n) for n in n_list)))
    if not n_sorted or n_sorted[0] < 0:
        raise ValueError(f"n_list must be non-empty and nonnegative, got {list(n_list)}.")
    if replicas < 1:
        raise ValueError(f"replicas must be >= 1, got {replicas}.")
    bounds = batch_bounds(replicas, batch_size)
    n_max = n_sorted[-1]
    snapshot_at = {n: k for k, n in enumerate(n_sorted)}

    def run_batch(b: int) -> tuple[np.ndarray, np.ndarray]:
        start, stop = bounds[b]
        size = stop - start
        rng = stream(seed, "walk", b)
        xs = np.tile(x0.coords, (size, 1))
        s = np.zeros(size)
        S_out = np.empty((len(n_sorted), size))
        X_out = np.empty((len(n_sorted), size, e.dim))
        if 0 in snapshot_at:
            S_out[0], X_out[0] = s, xs
        for step in range(1, n_max + 1):
            z, idx = draw_steps(e, size, rng)
            log_norms, xs = act_many(e.directions[idx], xs)
            s = s + z + log_norms
            k = snapshot_at.get(step)
            if k is not None:
                S_out[k], X_out[k] = s, xs
        return S_out, X_out

    logger.info(f"Simulating {replicas} walk(s) to n={n_max} in {len(bounds)} batch(es)")
    parts = run_batches(run_batch, len(bounds), executor)
    return TrajectoryBatch(
        x0=x0,
        n_list=n_sorted,
        S=np.concatenate([p[0] for p in parts], axis=1),
        X=np.concatenate([p[1] for p in parts], axis=1),
        seed=seed,
    )


class TailLimitCheck(BaseModel):
    """Condition 2 tail limits at one t: estimate vs the exact finite-t value and the limit."""

    t: float
    c_plus_hat: float
    c_plus_exact: float
    c_minus_hat: float
    c_minus_exact: float
    c_plus_limit: float
    c_minus_limit: float
    band_plus: float
    band_minus: float

    @property
    def within_band(self) -> bool:
        return (
            abs(self.c_plus_hat - self.c_plus_exact) <= self.band_plus
            and abs(self.c_minus_hat - self.c_minus_exact) <= self.band_minus
        )


class Condition5Check(BaseModel):
    """Total-variation distance of the conditional direction law to the tail direction law."""

    threshold: float
    exact_tv_upper: float
    exact_tv_lower: float
    empirical_tv_upper: float | None
    conditioned_samples: int
    band: float = Field(default=0.0, description="Sampling band of the empirical distance.")

    @property
    def residual(self) -> float:
        return max(self.exact_tv_upper, self.exact_tv_lower)

    @property
    def within_band(self) -> bool:
        return self.empirical_tv_upper is None or self.empirical_tv_upper <= self.exact_tv_upper + self.band


def condition5_shrinks(checks: Sequence[Condition5Check]) -> bool:
    """Exact residuals are non-increasing in the threshold and fall between the smallest and largest one."""
    residuals = [c.residual for c in sorted(checks, key=lambda c: c.threshold)]
    if any(b > a + 1e-12 for a, b in zip(residuals, residuals[1:])):
        return False
    return len(residuals) < 2 or residuals[-1] == 0.0 or residuals[-1] < residuals[0]


class ConditionReport(BaseModel):
    allowable: bool
    fk_ok: bool
    max_fk_ratio: float
    distinct_directions: int
    tail_checks: list[TailLimitCheck]
    iota_tail_hat: float
    iota_tail_bound: float
    iota_tail_band: float = 0.0
    condition5: list[Condition5Check]
    contraction: float

    @property
    def flags(self) -> list[str]:
        flags = []
        if not self.allowable:
            flags.append("Condition 1: some direction has a zero row or column")
        if not self.fk_ok:
            flags.append("Condition 3: entry ratio exceeds K")
        if self.contraction >= 1:
            flags.append(f"Condition 1: estimated projective contraction {self.contraction:.6g} is not below 1")
        for check in self.tail_checks:
            if not check.within_band:
                flags.append(f"Condition 2: tail constant estimate outside its band at t={check.t}")
        if self.iota_tail_hat > self.iota_tail_bound + self.iota_tail_band:
            flags.append(
                f"Condition 2: iota tail estimate {self.iota_tail_hat:.6g} exceeds its bound "
                f"{self.iota_tail_bound:.6g}"
            )
        for check in self.condition5:
            if not check.within_band:
                flags.append(
                    f"Condition 5: conditional direction law at threshold {check.threshold} is "
                    f"{check.empirical_tv_upper:.6g} from the tail law, expected {check.exact_tv_upper:.6g}"
                )
        if not condition5_shrinks(self.condition5):
            flags.append("Condition 5: tail direction residual does not shrink as the threshold grows")
        return flags

    @property
    def ok(self) -> bool:
        return not self.flags


def _body_fraction(e: RadialFKEnsemble, upper: bool, threshold: float) -> float:
    """Share of {log|A_1| > threshold} (or <= -threshold) on which the body direction law is used."""
    r = e.radial
    if upper:
        total = float(tail_sf(r, threshold))
        if total <= 0:
            return 0.0
        cut = r.center + e.switch_threshold
        body = max(0.0, total - float(tail_sf(r, max(threshold, cut))))
    else:
        total = float(tail_cdf(r, -threshold))
        if total <= 0:
            return 0.0
        cut = r.center - e.switch_threshold
        body = max(0.0, total - float(tail_cdf(r, min(-threshold, cut))))
    return body / total


def check_conditions(
    e: RadialFKEnsemble,
    n_samples: int,
    seed: int,
    *,
    ts: Sequence[float] = (10.0, 30.0),
    thresholds: Sequence[float] = (5.0, 20.0),
) -> ConditionReport:
    """Validate Conditions 1, 2, 3 and 5 for the ensemble; failures show up in `report.flags`."""
    ratios = [fk_ratio(b) for b in e.directions]
    allowable = bool(np.all(e.directions > 0))
    fk_ok = max(ratios) <= e.K * (1 + 1e-12)
    distinct = len({b.tobytes() for b in e.directions})

    rng = stream(seed, "conditions")
    z, idx = draw_steps(e, n_samples, rng)
    r = e.radial
    a = r.alpha
    tail_checks = []
    for t in ts:
        p_plus, p_minus = float(tail_sf(r, t)), float(tail_cdf(r, -t))
        scale = t**a
        check = TailLimitCheck(
            t=t,
            c_plus_hat=scale * float(np.mean(z > t)),
            c_plus_exact=scale * p_plus,
            c_minus_hat=scale * float(np.mean(z <= -t)),
            c_minus_exact=scale * p_minus,
            c_plus_limit=r.p * r.c,
            c_minus_limit=(1 - r.p) * r.c,
            band_plus=3 * scale * np.sqrt(p_plus * (1 - p_plus) / n_samples) + 1e-12,
            band_minus=3 * scale * np.sqrt(p_minus * (1 - p_minus) / n_samples) + 1e-12,
        )
        tail_checks.append(check)

    # log iota(A_1) = Z' + log iota(B) >= Z' - log K
    t_iota = max(ts)
    iota = np.log(e.directions.sum(axis=1).min(axis=1))[idx]
    iota_hat = t_iota**a * float(np.mean(z + iota <= -t_iota))
    p_iota = float(tail_cdf(r, -t_iota + np.log(e.K)))
    iota_bound = t_iota**a * p_iota
    iota_band = 3 * t_iota**a * np.sqrt(p_iota * (1 - p_iota) / n_samples) + 1e-12

    tilde = e.tilde_weights
    body_tv = 0.5 * float(np.abs(e.weights - tilde).sum())
    condition5 = []
    for tau in thresholds:
        body_upper = _body_fraction(e, True, tau) if e.tail_weights is not None else 0.0
        body_lower = _body_fraction(e, False, tau) if e.tail_weights is not None else 0.0
        tv_upper, tv_lower = body_upper * body_tv, body_lower * body_tv
        hit = z > tau
        empirical, band = None, 0.0
        if np.any(hit):
            freq = np.bincount(idx[hit], minlength=e.count) / hit.sum()
            empirical = 0.5 * float(np.abs(freq - tilde).sum())
            law = body_upper * e.weights + (1 - body_upper) * tilde
            # four standard errors per direction, halved for total variation
            band = 2 * float(np.sqrt(law * (1 - law) / hit.sum()).sum()) + 1e-12
        condition5.append(
            Condition5Check(
                threshold=tau,
                exact_tv_upper=tv_upper,
                exact_tv_lower=tv_lower,
                empirical_tv_upper=empirical,
                conditioned_samples=int(hit.sum()),
                band=band,
            )
        )

    contraction = max(
        contraction_coeff_est(PositiveMatrix(b), 2000, seed) for b in e.directions
    )
    if distinct < 2:
        logger.info("Ensemble has a single distinct direction")
    return ConditionReport(
        allowable=allowable,
        fk_ok=fk_ok,
        max_fk_ratio=max(ratios),
        distinct_directions=distinct,
        tail_checks=tail_checks,
        iota_tail_hat=iota_hat,
        iota_tail_bound=iota_bound,
        iota_tail_band=iota_band,
        condition5=condition5,
        contraction=contraction,
    )
