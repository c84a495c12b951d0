"""
Monte-Carlo experiments for the joint stable limit of (S_n, X_n), its local
version, the first-order rates of the distribution function, and numeric
checks of the transfer-operator expansions.

Every experiment reads walks through the ambient `ExperimentSession`, so
experiments on one configuration share a single set of simulated trajectories.
Sums are centered as

    W_n = S_n / a_n - b_n - n gamma_B / a_n     alpha <= 1
    W_n = S_n / a_n                             1 < alpha < 2 (Z is already centered)
"""

import math
from dataclasses import dataclass
from logging import getLogger
from pathlib import Path
from typing import Literal, Self

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.optimize import isotonic_regression
from scipy.stats import kstest, kstwobign

from stablelab.ensemble import EnsembleSpec, RadialFKEnsemble
from stablelab.errors import ExcludedCaseError
from stablelab.executors._common import derive_seed
from stablelab.geometry import DirectionVector
from stablelab.heavy_tail import aux_A, norming_a, norming_b
from stablelab.output import write_csv, write_plot_data
from stablelab.quadrature import integrate
from stablelab.session import active_session
from stablelab.stable_law import (
    StableLawParams,
    char_fn,
    correction_profile,
    operator_C,
    stable_cdf,
    stable_table,
)
from stablelab.transfer import (
    STATIONARY_TOL,
    DiscretizedOperator,
    OperatorConfig,
    SimplexGrid,
    TwoFormulaCheck,
    Q_matrix,
    build_Pt,
    delta_functional,
    dominant_eig,
    phi_Z,
    remainder_decay,
    stationary_measure,
    two_formula_check,
)

logger = getLogger(__name__)

MIN_REPLICAS = 1_000

# Replica budget beyond which a rate run is reported instead of attempted.
REPLICA_BUDGET = 10**8

ProbeKind = Literal["constant", "coordinate", "product", "bump"]
KernelKind = Literal["gaussian", "triangle", "zero"]
RateBranch = Literal["rho_gt", "rho_lt"]


class Probe(BaseModel):
    """
    A Lipschitz test function on the simplex, from a small named basis:

        one / const:v       f = v
        coord:i             f = x_i
        product:i:j         f = x_i x_j
        bump:c1,..,cd:w     f = exp(-|x - c|^2 / (2 w^2))

    Indices are 1-based. Lipschitz constants are taken w.r.t. the L1 distance.
    """

    model_config = ConfigDict(frozen=True)

    kind: ProbeKind = Field(..., description="Member of the probe basis.")
    indices: tuple[int, ...] = Field(default=(), description="1-based coordinates used.")
    center: tuple[float, ...] = Field(default=(), description="Bump center.")
    width: float = Field(default=0.25, description="Bump width.")
    value: float = Field(default=1.0, description="Value of a constant probe.")

    @model_validator(mode="after")
    def _validate_kind(self) -> Self:
        needed = {"constant": 0, "coordinate": 1, "product": 2, "bump": 0}[self.kind]
        if len(self.indices) != needed:
            raise ValueError(f"{self.kind} probe needs {needed} index(es), got {self.indices}.")
        if any(i < 1 for i in self.indices):
            raise ValueError(f"Probe indices are 1-based, got {self.indices}.")
        if self.kind == "bump" and (not self.center or self.width <= 0):
            raise ValueError("bump probe needs a center and a positive width.")
        return self

    @classmethod
    def parse(cls, text: str) -> "Probe":
        text = text.strip()
        kind, _, rest = text.partition(":")
        try:
            match kind:
                case "one":
                    return cls(kind="constant")
                case "const":
                    return cls(kind="constant", value=float(rest))
                case "coord":
                    return cls(kind="coordinate", indices=(int(rest),))
                case "product":
                    i, j = rest.split(":")
                    return cls(kind="product", indices=(int(i), int(j)))
                case "bump":
                    center, width = rest.split(":")
                    return cls(
                        kind="bump",
                        center=tuple(float(c) for c in center.split(",")),
                        width=float(width),
                    )
        except ValueError as e:
            raise ValueError(f"Malformed probe {text!r}: {e}") from None
        raise ValueError(f"Unknown probe {text!r}. Expected one, const:v, coord:i, product:i:j or bump:c:w.")

    @property
    def name(self) -> str:
        match self.kind:
            case "constant":
                return "one" if self.value == 1.0 else f"const:{self.value:g}"
            case "coordinate":
                return f"coord:{self.indices[0]}"
            case "product":
                return f"product:{self.indices[0]}:{self.indices[1]}"
            case _:
                return f"bump:{','.join(f'{c:g}' for c in self.center)}:{self.width:g}"

    @property
    def lipschitz(self) -> float:
        match self.kind:
            case "constant":
                return 0.0
            case "coordinate" | "product":
                return 1.0
            case _:
                return 1.0 / (self.width * math.sqrt(math.e))

    def check_dim(self, dim: int) -> None:
        if any(i > dim for i in self.indices):
            raise ValueError(f"Probe {self.name} uses a coordinate beyond dimension {dim}.")
        if self.kind == "bump" and len(self.center) != dim:
            raise ValueError(f"Probe {self.name} has a center of length {len(self.center)}, expected {dim}.")

    def __call__(self, xs: np.ndarray) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        match self.kind:
            case "constant":
                return np.full(xs.shape[:-1], self.value)
            case "coordinate":
                return xs[..., self.indices[0] - 1]
            case "product":
                return xs[..., self.indices[0] - 1] * xs[..., self.indices[1] - 1]
            case _:
                r2 = ((xs - np.asarray(self.center)) ** 2).sum(axis=-1)
                return np.exp(-r2 / (2 * self.width**2))


class KernelSpec(BaseModel):
    """Kernel k for the local limit theorem; its integral is known in closed form."""

    model_config = ConfigDict(frozen=True)

    kind: KernelKind = Field(default="gaussian", description="gaussian bump, triangle, or zero.")
    width: float = Field(default=1.0, description="Scale of the kernel.")

    @model_validator(mode="after")
    def _validate_width(self) -> Self:
        if self.width <= 0:
            raise ValueError(f"Kernel width must be positive, got {self.width}.")
        return self

    @property
    def integral(self) -> float:
        match self.kind:
            case "gaussian":
                return self.width * math.sqrt(2 * math.pi)
            case "triangle":
                return self.width
            case _:
                return 0.0

    @property
    def support(self) -> float:
        """Half-width outside which k is (numerically) zero."""
        return 12 * self.width if self.kind == "gaussian" else self.width

    def __call__(self, z: np.ndarray | float) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        match self.kind:
            case "gaussian":
                return np.exp(-0.5 * (z / self.width) ** 2)
            case "triangle":
                return np.maximum(0.0, 1.0 - np.abs(z) / self.width)
            case _:
                return np.zeros_like(z)


def _default_s_grid() -> tuple[float, ...]:
    return tuple(float(s) for s in np.linspace(-5.0, 5.0, 21))


class ExperimentConfig(BaseModel):
    """Everything one experiment run needs: the ensemble, the walk start, budgets, and probes."""

    model_config = ConfigDict(frozen=True)

    ensemble: EnsembleSpec
    x0: tuple[float, ...] | None = Field(default=None, description="Walk start; barycenter when omitted.")
    n_list: tuple[int, ...] = Field(default=(64, 256, 1024, 4096), description="Step counts, increasing.")
    replicas: int = Field(default=100_000, description="Independent walks R.")
    probes: tuple[Probe, ...] = Field(default=(Probe(kind="constant"),), description="Test functions f.")
    t_list: tuple[float, ...] = Field(default=(0.5, 1.0, 2.0), description="Frequencies for CF gaps.")
    s_grid: tuple[float, ...] = Field(default_factory=_default_s_grid, description="Grid for rate profiles.")
    kernel: KernelSpec = Field(default_factory=KernelSpec)
    y_grid: tuple[float, ...] = Field(default=(-2.0, -1.0, 0.0, 1.0, 2.0), description="LLT shifts y.")
    operator: OperatorConfig = Field(default_factory=OperatorConfig)
    seed: int = Field(default=0, description="Base seed; every stream is derived from it.")

    @model_validator(mode="after")
    def _validate_budgets(self) -> Self:
        if self.replicas < MIN_REPLICAS:
            raise ValueError(f"replicas must be >= {MIN_REPLICAS}, got {self.replicas}.")
        if not self.n_list or self.n_list[0] < 1:
            raise ValueError(f"n_list must be non-empty with n >= 1, got {self.n_list}.")
        if any(b <= a for a, b in zip(self.n_list, self.n_list[1:])):
            raise ValueError(f"n_list must be strictly increasing, got {self.n_list}.")
        if any(b <= a for a, b in zip(self.s_grid, self.s_grid[1:])):
            raise ValueError("s_grid must be strictly increasing.")
        if not self.probes:
            raise ValueError("At least one probe is required.")
        for probe in self.probes:
            probe.check_dim(self.ensemble.dim)
        if self.x0 is not None and len(self.x0) != self.ensemble.dim:
            raise ValueError(f"x0 has {len(self.x0)} coordinates, expected {self.ensemble.dim}.")
        return self

    @property
    def start(self) -> DirectionVector:
        if self.x0 is None:
            return DirectionVector.barycenter(self.ensemble.dim)
        return DirectionVector(np.array(self.x0))


# --- Shared references ---------------------------------------------------------


def ensemble_for(cfg: ExperimentConfig) -> RadialFKEnsemble:
    """The validated ensemble of a config, built once per session."""
    spec = cfg.ensemble
    seed = derive_seed(cfg.seed, "ensemble")
    return active_session().memo(("ensemble", spec.model_dump_json(), seed), lambda: spec.build(seed))


def limit_law(e: RadialFKEnsemble, *, alpha_shift: float = 0.0, p_shift: float = 0.0) -> StableLawParams:
    """h_alpha's parameters for the ensemble; the shifts build mis-specified laws for negative controls."""
    base = StableLawParams.from_tail(e.radial)
    if alpha_shift == 0 and p_shift == 0:
        return base
    return StableLawParams(
        alpha=base.alpha + alpha_shift, p=base.p + p_shift, c=base.c, rho=base.rho, q=base.q
    )


def centering(e: RadialFKEnsemble, n: int) -> float:
    """The constant subtracted from S_n / a_n."""
    if e.radial.alpha > 1:
        return 0.0
    return norming_b(e.radial, n) + n * e.direction_drift / norming_a(e.radial, n)


def centered_sums(e: RadialFKEnsemble, S: np.ndarray, n: int) -> np.ndarray:
    return np.asarray(S) / norming_a(e.radial, n) - centering(e, n)


@dataclass(frozen=True, eq=False)
class StationaryReference:
    """The discrete stationary measure on a simplex grid, with the t = 0 operator it came from."""

    grid: SimplexGrid
    P0: DiscretizedOperator
    nu: np.ndarray

    def value(self, probe: Probe) -> tuple[float, float]:
        """(nu(f), tolerance): node quadrature of f, tolerance Lip(f) h plus the solver residual."""
        f = probe(self.grid.nodes)
        return float(self.nu @ f), probe.lipschitz * self.grid.h + STATIONARY_TOL


def stationary_reference(e: RadialFKEnsemble, operator: OperatorConfig, seed: int) -> StationaryReference:
    session = active_session()

    def build() -> StationaryReference:
        grid = SimplexGrid(e.dim, operator.resolution)
        P0 = build_Pt(
            e, grid, 0.0, operator.mc_samples, seed, method=operator.method, executor=session.executor
        )
        return StationaryReference(grid, P0, stationary_measure(P0))

    return session.memo(("nu", e.fingerprint, operator.model_dump_json(), seed), build)


# --- Trend assertions ----------------------------------------------------------


class TrendCheck(BaseModel):
    """A non-increasing isotonic fit and how far the data stray from it, in stderr units."""

    values: list[float]
    fitted: list[float]
    slack: float
    max_excess: float

    @property
    def ok(self) -> bool:
        return self.max_excess <= 0.0


def isotonic_trend(values: list[float], stderr: list[float], *, slack: float = 2.0) -> TrendCheck:
    """
    Check that `values` are non-increasing up to `slack` standard errors.

    The data are fitted by weighted isotonic (non-increasing) regression; the
    trend holds when every point lies within slack * stderr of the fit.
    """
    y = np.asarray(values, dtype=float)
    se = np.asarray(stderr, dtype=float)
    if y.shape != se.shape:
        raise ValueError("values and stderr must have the same length")
    if y.size < 2:
        return TrendCheck(values=list(y), fitted=list(y), slack=slack, max_excess=0.0)
    positive = se[se > 0]
    floor = positive.min() if positive.size else 1.0
    weights = 1.0 / np.maximum(se, floor) ** 2
    fitted = isotonic_regression(y, weights=weights, increasing=False).x
    # Tiny absolute allowance for bit-level differences when stderr is 0.
    excess = np.abs(y - fitted) - slack * se - 1e-12 * (1 + np.abs(y))
    return TrendCheck(
        values=y.tolist(), fitted=fitted.tolist(), slack=slack, max_excess=float(max(excess.max(), 0.0))
    )


# --- Joint characteristic-function gap -----------------------------------------


class CFGapRow(BaseModel):
    n: int
    t: float
    probe: str
    estimate_re: float
    estimate_im: float
    predicted_re: float
    predicted_im: float
    gap: float
    stderr: float
    tolerance: float


class JointCFGap(BaseModel):
    """|E[e^{itW_n} f(X_n)] - h_alpha(t) nu(f)| per (n, t, f)."""

    rows: list[CFGapRow]
    oracle_mode: bool

    def series(self, t: float, probe: str) -> list[CFGapRow]:
        return [r for r in self.rows if r.t == t and r.probe == probe]

    def passes(self, n: int, threshold: float = 0.02) -> bool:
        """Every gap at n within threshold + 3 (stderr + nu tolerance)."""
        return all(
            r.gap <= threshold + 3 * (r.stderr + r.tolerance) for r in self.rows if r.n == n
        )

    def trends(self) -> dict[tuple[float, str], TrendCheck]:
        keys = sorted({(r.t, r.probe) for r in self.rows})
        out = {}
        for t, probe in keys:
            series = self.series(t, probe)
            out[(t, probe)] = isotonic_trend([r.gap for r in series], [r.stderr for r in series])
        return out

    def to_csv(self, path: Path) -> Path:
        header = list(CFGapRow.model_fields)
        return write_csv(path, header, ([getattr(r, k) for k in header] for r in self.rows))

    def write_plot_data(self, out_dir: Path) -> list[Path]:
        paths = []
        for t, probe in sorted({(r.t, r.probe) for r in self.rows}):
            series = self.series(t, probe)
            name = f"cf_gap_t{t:g}_{probe.replace(':', '-').replace(',', '_')}.plot.csv"
            paths.append(
                write_plot_data(
                    Path(out_dir) / name, [r.n for r in series], [r.gap for r in series], [r.stderr for r in series]
                )
            )
        return paths


def joint_cf_gap(cfg: ExperimentConfig, *, alpha_shift: float = 0.0, p_shift: float = 0.0) -> JointCFGap:
    """
    Estimate E[e^{it W_n} f(X_n)] from simulated walks and compare it with h_alpha(t) nu(f).

    A nonzero `alpha_shift`/`p_shift` compares against a mis-specified stable
    law instead (negative control).
    """
    session = active_session()
    e = ensemble_for(cfg)
    law = limit_law(e, alpha_shift=alpha_shift, p_shift=p_shift)
    ref = stationary_reference(e, cfg.operator, cfg.seed)
    batch = session.walks(e, cfg.start, cfg.n_list, cfg.replicas, cfg.seed)
    R = cfg.replicas
    rows = []
    for n in cfg.n_list:
        S, X = batch.at(n)
        W = centered_sums(e, S, n)
        for probe in cfg.probes:
            fx = probe(X)
            nu_f, tol = ref.value(probe)
            for t in cfg.t_list:
                values = np.exp(1j * t * W) * fx
                estimate = complex(values.mean())
                predicted = complex(char_fn(law, t)) * nu_f
                rows.append(
                    CFGapRow(
                        n=n,
                        t=t,
                        probe=probe.name,
                        estimate_re=estimate.real,
                        estimate_im=estimate.imag,
                        predicted_re=predicted.real,
                        predicted_im=predicted.imag,
                        gap=abs(estimate - predicted),
                        stderr=float(np.std(values) / math.sqrt(R)),
                        tolerance=tol,
                    )
                )
    logger.info(f"Joint CF gap on {len(rows)} (n, t, f) cell(s)")
    return JointCFGap(rows=rows, oracle_mode=e.dim == 1)


# --- Kolmogorov-Smirnov distance to H_alpha ------------------------------------


class KSRow(BaseModel):
    n: int
    statistic: float
    stderr: float
    quadrature_tolerance: float
    p_value: float


class KSTable(BaseModel):
    rows: list[KSRow]
    alpha: float
    p: float
    null: bool = False

    def passes(self, n: int, threshold: float = 0.02) -> bool:
        row = next(r for r in self.rows if r.n == n)
        return row.statistic <= threshold + row.quadrature_tolerance

    def trend(self) -> TrendCheck:
        return isotonic_trend([r.statistic for r in self.rows], [r.stderr for r in self.rows])

    def to_csv(self, path: Path) -> Path:
        header = list(KSRow.model_fields)
        return write_csv(path, header, ([getattr(r, k) for k in header] for r in self.rows))

    def write_plot_data(self, path: Path) -> Path:
        return write_plot_data(
            path, [r.n for r in self.rows], [r.statistic for r in self.rows], [r.stderr for r in self.rows]
        )


def _ks_row(n: int, samples: np.ndarray, law: StableLawParams) -> KSRow:
    table = stable_table(law)
    result = kstest(samples, table.cdf)
    return KSRow(
        n=n,
        statistic=float(result.statistic),
        stderr=float(kstwobign.std() / math.sqrt(samples.size)),
        quadrature_tolerance=table.max_error,
        p_value=float(result.pvalue),
    )


def ks_to_stable(cfg: ExperimentConfig, *, alpha_shift: float = 0.0, p_shift: float = 0.0) -> KSTable:
    """KS distance between the empirical law of W_n and (the tabulated) H_alpha, for each n."""
    e = ensemble_for(cfg)
    law = limit_law(e, alpha_shift=alpha_shift, p_shift=p_shift)
    batch = active_session().walks(e, cfg.start, cfg.n_list, cfg.replicas, cfg.seed)
    rows = [_ks_row(n, centered_sums(e, batch.at(n)[0], n), law) for n in cfg.n_list]
    for r in rows:
        logger.info(f"KS at n={r.n}: {r.statistic:.4g} (+- {r.stderr:.2g})")
    return KSTable(rows=rows, alpha=law.alpha, p=law.p)


def ks_null_calibration(cfg: ExperimentConfig) -> KSTable:
    """KS of H_alpha's own quantile-transform samples (size R) against H_alpha, one draw per n."""
    law = limit_law(ensemble_for(cfg))
    table = stable_table(law)
    rows = [
        _ks_row(n, table.sample(cfg.replicas, derive_seed(cfg.seed, "null", n)), law)
        for n in cfg.n_list
    ]
    return KSTable(rows=rows, alpha=law.alpha, p=law.p, null=True)


# --- Local limit theorem -------------------------------------------------------


class LLTRow(BaseModel):
    n: int
    probe: str
    y: float
    estimate: float
    stderr: float
    predicted: float
    difference: float


class LLTTable(BaseModel):
    """a_n E[f(X_n) k(y + S_n - a_n b_n)] against nu(f) int k(z) p_alpha((z - y)/a_n) dz."""

    rows: list[LLTRow]
    kernel: KernelSpec

    def sup_difference(self, n: int) -> float:
        return max(r.difference for r in self.rows if r.n == n)

    def peak(self, n: int) -> float:
        return max(abs(r.predicted) for r in self.rows if r.n == n)

    def relative_error(self, n: int) -> float:
        peak = self.peak(n)
        return self.sup_difference(n) / peak if peak > 0 else 0.0

    def trend(self) -> TrendCheck:
        ns = sorted({r.n for r in self.rows})
        stderr = [max(r.stderr for r in self.rows if r.n == n) for n in ns]
        return isotonic_trend([self.sup_difference(n) for n in ns], stderr)

    def to_csv(self, path: Path) -> Path:
        header = list(LLTRow.model_fields)
        return write_csv(path, header, ([getattr(r, k) for k in header] for r in self.rows))

    def write_plot_data(self, path: Path) -> Path:
        ns = sorted({r.n for r in self.rows})
        stderr = [max(r.stderr for r in self.rows if r.n == n) for n in ns]
        return write_plot_data(path, ns, [self.sup_difference(n) for n in ns], stderr)


def require_llt_alpha(alpha: float) -> None:
    """
    Raises:
        ExcludedCaseError: For alpha = 2, where the local limit theorem is not stated
    """
    if alpha == 2:
        raise ExcludedCaseError("alpha = 2", "the local limit theorem is stated for alpha != 2 only")


def llt_check(
    cfg: ExperimentConfig, kernel: KernelSpec | None = None, y_grid: tuple[float, ...] | None = None
) -> LLTTable:
    """Kernel-smoothed local limit comparison at every (n, f, y)."""
    kernel = kernel or cfg.kernel
    y_grid = y_grid if y_grid is not None else cfg.y_grid
    e = ensemble_for(cfg)
    require_llt_alpha(e.radial.alpha)
    table = stable_table(limit_law(e))
    ref = stationary_reference(e, cfg.operator, cfg.seed)
    batch = active_session().walks(e, cfg.start, cfg.n_list, cfg.replicas, cfg.seed)
    L = kernel.support
    rows = []
    for n in cfg.n_list:
        a_n = norming_a(e.radial, n)
        S, X = batch.at(n)
        shifted = S - a_n * centering(e, n)
        for y in y_grid:
            if kernel.kind == "zero":
                smoothed = 0.0
            else:
                smoothed, _ = integrate(
                    lambda z: float(kernel(z) * table.pdf((z - y) / a_n)), -L, L, tol=1e-10
                )
            kv = kernel(y + shifted)
            for probe in cfg.probes:
                values = a_n * probe(X) * kv
                estimate = float(values.mean())
                predicted = ref.value(probe)[0] * smoothed
                rows.append(
                    LLTRow(
                        n=n,
                        probe=probe.name,
                        y=y,
                        estimate=estimate,
                        stderr=float(values.std() / math.sqrt(cfg.replicas)),
                        predicted=predicted,
                        difference=abs(estimate - predicted),
                    )
                )
    return LLTTable(rows=rows, kernel=kernel)


# --- Rate profiles -------------------------------------------------------------


class RateProfile(BaseModel):
    """
    Scaled deviations l_n^-1 (E[f(X_n); W_n <= s] - nu(f) H_alpha(s)) on an s-grid,
    with the predicted curve nu(f) M(s) (+ delta(f) N(s) when rho < -alpha).

    l_n = A(a_n) for rho > -alpha and 1/n for rho < -alpha.
    """

    branch: RateBranch
    probe: str
    s_grid: list[float]
    n_list: list[int]
    scale: list[float] = Field(..., description="l_n per n.")
    empirical: list[list[float]]
    stderr: list[list[float]]
    predicted: list[float]
    prediction_tolerance: list[float]
    z_scores: list[list[float]]
    shape_correlation: float
    nu_f: float
    delta_f: float
    replicas: int
    required_replicas: int

    @property
    def underpowered(self) -> bool:
        return self.replicas < self.required_replicas

    @property
    def budget_exceeded(self) -> bool:
        return self.required_replicas > REPLICA_BUDGET

    @staticmethod
    def _tails_small(values: list[float], s_grid: list[float]) -> bool:
        s = np.asarray(s_grid)
        v = np.abs(np.asarray(values))
        mid = v[np.abs(s) <= np.abs(s).max() / 2]
        return bool(max(v[0], v[-1]) <= 2 * mid.max()) if mid.size else True

    @property
    def tails_decay(self) -> bool:
        """|profile| at s = +-s_max stays below twice its mid-range maximum."""
        return self._tails_small(self.predicted, self.s_grid)

    def to_csv(self, path: Path) -> Path:
        rows = (
            [n, s, self.scale[i], self.empirical[i][j], self.stderr[i][j], self.predicted[j], self.z_scores[i][j]]
            for i, n in enumerate(self.n_list)
            for j, s in enumerate(self.s_grid)
        )
        return write_csv(path, ["n", "s", "scale", "deviation", "stderr", "predicted", "z"], rows)

    def write_plot_data(self, out_dir: Path) -> list[Path]:
        out_dir = Path(out_dir)
        paths = [
            write_plot_data(out_dir / "rate_predicted.plot.csv", self.s_grid, self.predicted, self.prediction_tolerance)
        ]
        for i, n in enumerate(self.n_list):
            paths.append(
                write_plot_data(out_dir / f"rate_n{n}.plot.csv", self.s_grid, self.empirical[i], self.stderr[i])
            )
        return paths


def _require_branch(alpha: float, rho: float, branch: RateBranch) -> None:
    if rho == -alpha:
        raise ExcludedCaseError("rho = -alpha", "the first-order rate excludes the case rho == -alpha")
    if branch == "rho_gt" and not rho > -alpha:
        raise ValueError(f"branch rho_gt needs rho > -alpha, got rho={rho}, alpha={alpha}.")
    if branch == "rho_lt" and not rho < -alpha:
        raise ValueError(f"branch rho_lt needs rho < -alpha, got rho={rho}, alpha={alpha}.")


def _rate_scale(e: RadialFKEnsemble, n: int, branch: RateBranch) -> float:
    if branch == "rho_lt":
        return 1.0 / n
    a_n = norming_a(e.radial, n)
    if a_n < e.radial.t0:
        raise ValueError(f"a_n = {a_n:.4g} at n={n} is below t0; use larger n.")
    return float(aux_A(e.radial, a_n))


def rate_profile(cfg: ExperimentConfig, branch: RateBranch, probe: Probe | None = None) -> RateProfile:
    """
    Empirical scaled deviations of the f-weighted distribution function against the predicted curve.

    Raises:
        ExcludedCaseError: If rho == -alpha
        ValueError: If the branch does not match (alpha, rho), or A is identically 0
    """
    probe = probe or cfg.probes[0]
    e = ensemble_for(cfg)
    tail = e.radial
    _require_branch(tail.alpha, tail.rho, branch)
    if branch == "rho_gt" and (tail.beta == 0 or tail.rho == 0):
        raise ValueError("A(t) is identically 0 for this family (beta = 0 or rho = 0); there is no rate to resolve.")

    law = limit_law(e)
    s_grid = list(cfg.s_grid)
    profile = correction_profile(law, s_grid, with_N=branch == "rho_lt")
    ref = stationary_reference(e, cfg.operator, cfg.seed)
    nu_f, nu_tol = ref.value(probe)

    delta_f, delta_tol = 0.0, 0.0
    if branch == "rho_lt" and e.dim > 1:
        result = delta_functional(ref.P0, Q_matrix(e, ref.grid), ref.nu, probe(ref.grid.nodes))
        delta_f, delta_tol = result.delta.real, result.truncation_bound

    M = np.asarray(profile.M_values)
    N = np.asarray(profile.N_values)
    predicted = nu_f * M + delta_f * N
    pred_tol = (
        nu_tol * np.abs(M) + abs(nu_f) * np.asarray(profile.err_M)
        + delta_tol * np.abs(N) + abs(delta_f) * np.asarray(profile.err_N)
    )
    H = np.array([stable_cdf(law, s) for s in s_grid])

    batch = active_session().walks(e, cfg.start, cfg.n_list, cfg.replicas, cfg.seed)
    R = cfg.replicas
    scales, empirical, stderr, z_scores = [], [], [], []
    for n in cfg.n_list:
        l_n = _rate_scale(e, n, branch)
        S, X = batch.at(n)
        W = centered_sums(e, S, n)
        values = probe(X)[:, None] * (W[:, None] <= np.asarray(s_grid)[None, :])
        deviation = (values.mean(axis=0) - nu_f * H) / l_n
        # An all-equal column still carries the 1/R resolution of the empirical mean.
        se = np.maximum(values.std(axis=0) / math.sqrt(R), 1.0 / R) / abs(l_n)
        z = (deviation - predicted) / (se + pred_tol + nu_tol * H / abs(l_n))
        scales.append(l_n)
        empirical.append(deviation.tolist())
        stderr.append(se.tolist())
        z_scores.append(z.tolist())

    last = np.asarray(empirical[-1])
    if np.std(last) > 0 and np.std(predicted) > 0:
        shape = float(np.corrcoef(last, predicted)[0, 1])
    else:
        shape = 0.0
    peak = float(np.abs(predicted).max())
    resolution = abs(scales[-1]) * peak
    required = math.ceil((10.0 / resolution) ** 2) if resolution > 0 else REPLICA_BUDGET + 1
    result = RateProfile(
        branch=branch,
        probe=probe.name,
        s_grid=s_grid,
        n_list=list(cfg.n_list),
        scale=scales,
        empirical=empirical,
        stderr=stderr,
        predicted=predicted.tolist(),
        prediction_tolerance=pred_tol.tolist(),
        z_scores=z_scores,
        shape_correlation=shape,
        nu_f=nu_f,
        delta_f=delta_f,
        replicas=R,
        required_replicas=required,
    )
    if result.underpowered:
        logger.warning(
            f"Rate profile underpowered: R={R} but resolving l_n={scales[-1]:.3g} needs R >= {required}"
        )
    return result


# --- Operator expansions -------------------------------------------------------


class ExpansionRow(BaseModel):
    probe: str
    k: int
    t: float
    p_residual: float = Field(..., description="||(P_t - P) f - C(t) |t|^alpha Q f||_inf")
    pi_residual: float = Field(..., description="||(Pi_t - Pi) f - C(t) |t|^alpha delta(f) 1||_inf")
    noise_floor: float


class BootstrapRow(BaseModel):
    n: int
    t: float
    difference: float = Field(..., description="|lambda(t/a_n)^n - phi_Z(t/a_n)^n|")
    scaled: float = Field(..., description="difference * n / |t|^(2 alpha)")
    conjugate_defect: float = Field(..., description="|d(-t) - conj d(t)| for the complex difference d")


class OperatorExpansionCheck(BaseModel):
    alpha: float
    rows: list[ExpansionRow]
    bootstrap: list[BootstrapRow]
    zero_residual: float

    def scaled(self, probe: str, which: Literal["p", "pi"] = "p") -> list[float]:
        return [
            (r.p_residual if which == "p" else r.pi_residual) / r.t**self.alpha
            for r in self.rows
            if r.probe == probe
        ]

    def decreasing(self, probe: str, which: Literal["p", "pi"] = "p") -> TrendCheck:
        """Scaled residuals along t = 2^-k must fall toward the floor (slack 1 floor)."""
        floors = [r.noise_floor / r.t**self.alpha for r in self.rows if r.probe == probe]
        return isotonic_trend(self.scaled(probe, which), floors, slack=1.0)

    @property
    def max_conjugate_defect(self) -> float:
        return max((r.conjugate_defect for r in self.bootstrap), default=0.0)

    def to_csv(self, path: Path) -> Path:
        rows = (
            [r.probe, r.k, r.t, r.p_residual, r.pi_residual, r.p_residual / r.t**self.alpha,
             r.pi_residual / r.t**self.alpha, r.noise_floor]
            for r in self.rows
        )
        header = ["probe", "k", "t", "p_residual", "pi_residual", "p_scaled", "pi_scaled", "noise_floor"]
        return write_csv(path, header, rows)


def _residual_noise(Pt: DiscretizedOperator) -> float:
    if Pt.row_stderr is not None:
        return float(Pt.row_stderr.max())
    return 1e-11


def operator_expansion_check(cfg: ExperimentConfig, ks: range = range(1, 9)) -> OperatorExpansionCheck:
    """
    Residuals of the small-t expansions of P_t and Pi_t along t = 2^-k, and of
    lambda^n against phi_Z^n along (n, t / a_n).

    Raises:
        ExcludedCaseError: If rho == -alpha
        ValueError: Unless rho < -alpha and alpha < 1
    """
    session = active_session()
    e = ensemble_for(cfg)
    alpha = e.radial.alpha
    _require_branch(alpha, e.radial.rho, "rho_lt")
    law = limit_law(e)
    op = cfg.operator
    ref = stationary_reference(e, op, cfg.seed)
    grid, P0, nu = ref.grid, ref.P0, ref.nu
    Q = Q_matrix(e, grid)
    Pi = np.outer(np.ones(grid.size), nu)

    def operator_at(t: float) -> DiscretizedOperator:
        return build_Pt(e, grid, t, op.mc_samples, cfg.seed, method=op.method, executor=session.executor)

    probes = [(p.name, p(grid.nodes)) for p in cfg.probes]
    deltas = {name: delta_functional(P0, Q, nu, f).delta for name, f in probes}

    zero = dominant_eig(P0, nu=nu).projector()
    zero_residual = float(np.abs(zero - Pi).sum(axis=1).max())

    rows = []
    for k in ks:
        t = 2.0**-k
        Pt = operator_at(t)
        eig = dominant_eig(Pt, nu=nu)
        coef = complex(operator_C(law, t)) * t**alpha
        diff = Pt.matrix - P0.matrix
        noise = _residual_noise(Pt)
        for name, f in probes:
            p_res = float(np.abs(diff @ f - coef * (Q @ f)).max())
            pi_res = float(np.abs(eig.apply_projector(f) - nu @ f - coef * deltas[name]).max())
            rows.append(ExpansionRow(probe=name, k=k, t=t, p_residual=p_res, pi_residual=pi_res, noise_floor=noise))

    bootstrap = []
    for n in cfg.n_list:
        a_n = norming_a(e.radial, n)
        for t in cfg.t_list:
            d = {}
            for sign in (1, -1):
                Pt = operator_at(sign * t / a_n)
                lam = dominant_eig(Pt, nu=nu).lam
                d[sign] = lam**n - phi_Z(Pt, nu) ** n
            bootstrap.append(
                BootstrapRow(
                    n=n,
                    t=t,
                    difference=abs(d[1]),
                    scaled=abs(d[1]) * n / t ** (2 * alpha),
                    conjugate_defect=abs(d[-1] - d[1].conjugate()),
                )
            )
    logger.info(f"Operator expansion check: {len(rows)} residual(s), {len(bootstrap)} bootstrap cell(s)")
    return OperatorExpansionCheck(alpha=alpha, rows=rows, bootstrap=bootstrap, zero_residual=zero_residual)


class OperatorSuite(BaseModel):
    """Structural checks of the discretized operators: delta(1), lambda(0), Pi_0, remainders, Delta."""

    delta_one: float
    lambda_zero_defect: float
    projector_defect: float
    projector_tolerance: float
    remainder_slope: float
    two_formula: list[TwoFormulaCheck]

    @property
    def ok(self) -> bool:
        return (
            self.delta_one <= 1e-10
            and self.lambda_zero_defect <= 1e-10
            and self.projector_defect <= self.projector_tolerance
            and self.remainder_slope < 0
            and all(c.consistent for c in self.two_formula)
        )


def operator_suite(cfg: ExperimentConfig, *, m: int = 8, n_max: int = 30) -> OperatorSuite:
    """delta(1) = 0, lambda(0) = 1, Pi_0 f = nu(f) 1 per probe, remainder decay, and the two Delta formulas."""
    e = ensemble_for(cfg)
    op = cfg.operator
    ref = stationary_reference(e, op, cfg.seed)
    grid, P0, nu = ref.grid, ref.P0, ref.nu
    Q = Q_matrix(e, grid)
    ones = np.ones(grid.size)

    eig0 = dominant_eig(P0, nu=nu)
    projector_defect = max(
        float(np.abs(eig0.apply_projector(p(grid.nodes)) - nu @ p(grid.nodes)).max()) for p in cfg.probes
    )
    tolerance = max(ref.value(p)[1] for p in cfg.probes) + 1e-9

    t = cfg.t_list[0] / norming_a(e.radial, cfg.n_list[0])
    Pt = build_Pt(e, grid, t, op.mc_samples, cfg.seed, method=op.method, executor=active_session().executor)
    eig_t = dominant_eig(Pt, nu=nu)
    f = cfg.probes[-1](grid.nodes)
    decay = remainder_decay(Pt, eig_t, f, n_max)

    return OperatorSuite(
        delta_one=abs(delta_functional(P0, Q, nu, ones).delta),
        lambda_zero_defect=abs(eig0.lam - 1),
        projector_defect=projector_defect,
        projector_tolerance=tolerance,
        remainder_slope=decay.slope,
        two_formula=[two_formula_check(P0, Q, nu, p(grid.nodes), m) for p in cfg.probes],
    )
