"""
Discretized transfer operators on the simplex.

Functions on S_+^{d-1} are represented by their values on the lattice
{k/N : k in N^d, sum k = N}; off-lattice values are piecewise-linear
interpolations with convex weights, so every discretized Markov operator
stays exactly stochastic.

    P_t f(x) = E[e^{it sigma(A_1, x)} f(A_1.x)],   P = P_0
    Q f(x)   = sum_i w~_i f(B_i.x)
    R_0      = P - Pi,  Pi f = nu(f) 1
    delta(f) = nu((Q - P) sum_i R_0^i f)
"""

from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations
from logging import getLogger
from pathlib import Path
from typing import Callable, Literal, Self

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.spatial import Delaunay

from stablelab.ensemble import RadialFKEnsemble, draw_steps
from stablelab.errors import GapWindowError
from stablelab.executors import AnyExecutorConfig
from stablelab.executors._common import stream
from stablelab.geometry import act_many
from stablelab.heavy_tail import char_fn_Z
from stablelab.runtime import run_batches

logger = getLogger(__name__)

STATIONARY_TOL = 1e-10
EIG_TOL = 1e-12
NEUMANN_TOL = 1e-12
NEUMANN_CAP = 200
ENVELOPE_FLOOR = 1e-8
GAP_KAPPA_MAX = 0.999

OperatorMethod = Literal["monte_carlo", "factorized"]


class OperatorConfig(BaseModel):
    """Discretization settings shared by every operator of a run."""

    model_config = ConfigDict(frozen=True)

    resolution: int = Field(default=64, description="Lattice resolution N (mesh 1/N).")
    mc_samples: int = Field(default=4000, description="Draws per row for the Monte Carlo method.")
    method: OperatorMethod = Field(default="factorized", description="How rows are built.")

    @model_validator(mode="after")
    def _validate(self) -> Self:
        if self.resolution < 1:
            raise ValueError(f"resolution must be >= 1, got {self.resolution}.")
        if self.mc_samples < 1:
            raise ValueError(f"mc_samples must be >= 1, got {self.mc_samples}.")
        return self


def _compositions(total: int, parts: int) -> np.ndarray:
    """All nonnegative integer vectors of length `parts` summing to `total` (stars and bars)."""
    rows = []
    for bars in combinations(range(total + parts - 1), parts - 1):
        edges = (-1, *bars, total + parts - 1)
        rows.append([edges[i + 1] - edges[i] - 1 for i in range(parts)])
    return np.array(rows, dtype=float)


@dataclass(frozen=True, eq=False)
class SimplexGrid:
    """The lattice {k/N} on the simplex; includes every vertex. Mesh h = 1/N in the L1 norm."""

    dim: int
    resolution: int
    nodes: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.dim < 1 or self.resolution < 1:
            raise ValueError("dim and resolution must be >= 1")
        if self.dim == 1:
            nodes = np.ones((1, 1))
        elif self.dim == 2:
            k = np.arange(self.resolution + 1, dtype=float)
            nodes = np.column_stack([k, self.resolution - k]) / self.resolution
        else:
            nodes = _compositions(self.resolution, self.dim) / self.resolution
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @property
    def size(self) -> int:
        return self.nodes.shape[0]

    @property
    def h(self) -> float:
        return 1.0 / self.resolution if self.dim > 1 else 0.0

    @cached_property
    def _triangulation(self) -> Delaunay:
        return Delaunay(self.nodes[:, : self.dim - 1])

    def evaluate(self, fn: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        """Node values of a function vectorized over an (n, d) array of points."""
        return np.asarray(fn(self.nodes))

    def interpolation(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Convex interpolation weights: (node indices, weights), each of shape (n, k)."""
        points = np.asarray(points, dtype=float).reshape(-1, self.dim)
        n = points.shape[0]
        if self.dim == 1:
            return np.zeros((n, 1), dtype=int), np.ones((n, 1))
        if self.dim == 2:
            u = np.clip(points[:, 0], 0.0, 1.0) * self.resolution
            lo = np.minimum(np.floor(u).astype(int), self.resolution - 1)
            frac = u - lo
            return np.column_stack([lo, lo + 1]), np.column_stack([1 - frac, frac])

        tri = self._triangulation
        projected = points[:, : self.dim - 1]
        simplex = tri.find_simplex(projected)
        missing = simplex < 0
        if np.any(missing):
            # Rounding can put a point a hair outside the hull; pull it toward the barycenter.
            nudged = (1 - 1e-9) * projected[missing] + 1e-9 / self.dim
            simplex[missing] = tri.find_simplex(nudged)
            projected = projected.copy()
            projected[missing] = nudged
        transform = tri.transform[simplex]
        partial = np.einsum("nij,nj->ni", transform[:, : self.dim - 1], projected - transform[:, self.dim - 1])
        weights = np.column_stack([partial, 1 - partial.sum(axis=1)])
        weights = np.clip(weights, 0.0, None)
        weights /= weights.sum(axis=1, keepdims=True)
        return tri.simplices[simplex], weights

    def interpolation_matrix(self, points: np.ndarray) -> np.ndarray:
        """Dense (n_points, n_nodes) matrix W with (W f)_j = interpolated f at point j."""
        idx, w = self.interpolation(points)
        out = np.zeros((idx.shape[0], self.size))
        np.add.at(out, (np.repeat(np.arange(idx.shape[0]), idx.shape[1]), idx.ravel()), w.ravel())
        return out

    def nearest_node(self, point: np.ndarray) -> int:
        return int(np.argmin(np.abs(self.nodes - np.asarray(point)[None, :]).sum(axis=1)))


@dataclass(frozen=True, eq=False)
class DiscretizedOperator:
    """A node x node matrix for P_t on a grid, with its provenance."""

    grid: SimplexGrid
    matrix: np.ndarray = field(repr=False)
    t: float
    mc_samples: int
    seed: int
    method: OperatorMethod
    row_stderr: np.ndarray | None = field(default=None, repr=False)

    def apply(self, f: np.ndarray) -> np.ndarray:
        return self.matrix @ f

    def sup_norm(self) -> float:
        """Operator norm induced by the sup norm: the maximal absolute row sum."""
        return float(np.abs(self.matrix).sum(axis=1).max())

    def to_csv(self, path: Path) -> Path:
        from stablelab.output import write_csv

        rows, cols = np.nonzero(self.matrix)
        values = self.matrix[rows, cols]
        comments = [
            f"t={self.t!r}",
            f"mc_samples={self.mc_samples}",
            f"seed={self.seed}",
            f"h={self.grid.h!r}",
            f"method={self.method}",
        ]
        data = zip(rows, cols, np.real(values), np.imag(values))
        return write_csv(path, ["row", "col", "re", "im"], data, comments=comments)


def _row_monte_carlo(
    e: RadialFKEnsemble, grid: SimplexGrid, t: float, mc_samples: int, seed: int, r: int
) -> tuple[np.ndarray, float]:
    # Streams depend on (seed, row) only, so operators at different t share draws.
    z, idx = draw_steps(e, mc_samples, stream(seed, "row", r))
    log_norms, images = act_many(e.directions[idx], grid.nodes[r])
    phase = np.exp(1j * t * (z + log_norms)) if t != 0 else np.ones(mc_samples, dtype=complex)
    nodes, w = grid.interpolation(images)
    row = np.zeros(grid.size, dtype=complex)
    np.add.at(row, nodes.ravel(), (phase[:, None] * w).ravel() / mc_samples)
    stderr = float(np.std(phase) / np.sqrt(mc_samples)) if mc_samples > 1 else 0.0
    return row, stderr


def direction_phases(e: RadialFKEnsemble, t: float) -> np.ndarray:
    """psi_i(t) = E[e^{itZ'}; B = B_i], the radial factor of each direction."""
    if t == 0:
        return e.effective_weights.astype(complex)
    phi = char_fn_Z(e.radial, t)
    if e.tail_weights is None:
        return phi * e.weights
    tail = char_fn_Z(e.radial, t, beyond=e.switch_threshold)
    return (phi - tail) * e.weights + tail * e.tail_weights


def build_Pt(
    e: RadialFKEnsemble,
    grid: SimplexGrid,
    t: float,
    mc_samples: int,
    seed: int,
    *,
    method: OperatorMethod = "monte_carlo",
    executor: AnyExecutorConfig | None = None,
) -> DiscretizedOperator:
    """
    Discretize P_t on the grid.

    "monte_carlo" averages e^{it sigma(g, x)} W(g.x) over `mc_samples` draws per
    row. "factorized" uses the radial/direction independence to write each row
    exactly as sum_i psi_i(t) e^{it log|B_i x|} W(B_i.x); only interpolation
    error remains.
    """
    if grid.dim != e.dim:
        raise ValueError(f"Grid dimension {grid.dim} does not match ensemble dimension {e.dim}.")
    if method == "monte_carlo":
        rows = run_batches(
            lambda r: _row_monte_carlo(e, grid, t, mc_samples, seed, r), grid.size, executor
        )
        matrix = np.stack([row for row, _ in rows])
        stderr = np.array([s for _, s in rows])
    elif method == "factorized":
        psi = direction_phases(e, t)
        matrix = np.zeros((grid.size, grid.size), dtype=complex)
        for i, b in enumerate(e.directions):
            log_norms, images = act_many(b, grid.nodes)
            weights = grid.interpolation_matrix(images)
            matrix += (psi[i] * np.exp(1j * t * log_norms))[:, None] * weights
        stderr = None
    else:
        raise ValueError(f"Unknown operator method {method!r}.")
    logger.info(f"Built P_t at t={t:g} ({method}, {grid.size} nodes)")
    return DiscretizedOperator(grid, matrix, float(t), mc_samples, seed, method, stderr)


def stationary_measure(P0: DiscretizedOperator, *, max_iter: int = 100_000) -> np.ndarray:
    """
    Left fixed vector of P by power iteration (residual ||nu P - nu||_1 <= 1e-10).

    Falls back to a least-squares solve of nu (P - I) = 0, sum nu = 1 when the
    iteration is slow.

    Raises:
        GapWindowError: If neither method reaches the residual
    """
    if P0.t != 0:
        raise ValueError("stationary_measure needs the t = 0 operator.")
    P = P0.matrix.real
    n = P.shape[0]
    nu = np.full(n, 1.0 / n)
    residual = np.inf
    for iteration in range(1, max_iter + 1):
        nxt = nu @ P
        nxt /= nxt.sum()
        residual = float(np.abs(nxt - nu).sum())
        nu = nxt
        if residual <= STATIONARY_TOL:
            logger.info(f"Stationary measure after {iteration} iteration(s)")
            return nu
    system = np.vstack([(P - np.eye(n)).T, np.ones((1, n))])
    rhs = np.concatenate([np.zeros(n), [1.0]])
    nu = np.linalg.lstsq(system, rhs, rcond=None)[0]
    nu = np.clip(nu, 0.0, None)
    nu /= nu.sum()
    residual = float(np.abs(nu @ P - nu).sum())
    if residual > STATIONARY_TOL:
        raise GapWindowError(0.0, max_iter, residual)
    return nu


@dataclass(frozen=True, eq=False)
class EigenResult:
    """Dominant eigenpair of P_t with the rank-one projector Pi_t f = right * (left . f) / (left . right)."""

    lam: complex
    right: np.ndarray = field(repr=False)
    left: np.ndarray = field(repr=False)
    iterations: int
    contraction: float

    def apply_projector(self, f: np.ndarray) -> np.ndarray:
        return self.right * (self.left @ f) / (self.left @ self.right)

    def projector(self) -> np.ndarray:
        return np.outer(self.right, self.left) / (self.left @ self.right)


def dominant_eig(
    Pt: DiscretizedOperator,
    *,
    nu: np.ndarray | None = None,
    max_iter: int = 20_000,
    tol: float = EIG_TOL,
) -> EigenResult:
    """
    lambda(t) and Pi_t by simultaneous left/right power iteration.

    The right eigenvector is scaled so nu(right) = 1 when `nu` is given.

    Raises:
        GapWindowError: If the iteration stops contracting before reaching `tol`,
            i.e. t is outside the gap window
    """
    M = Pt.matrix
    n = M.shape[0]
    v = np.ones(n, dtype=complex)
    u = np.full(n, 1.0 / n, dtype=complex)
    lam = 1.0 + 0j
    residual = np.inf
    history: list[float] = []
    for iteration in range(1, max_iter + 1):
        Mv = M @ v
        uM = u @ M
        denom = u @ v
        lam = (u @ Mv) / denom if denom != 0 else 0j
        scale = max(abs(lam), 1e-300)
        residual = max(
            float(np.abs(Mv - lam * v).max() / np.abs(v).max()) / scale,
            float(np.abs(uM - lam * u).sum() / np.abs(u).sum()) / scale,
        )
        history.append(residual)
        if residual <= tol:
            break
        v = Mv / np.abs(Mv).max()
        u = uM / np.abs(uM).sum()
        if iteration >= 200 and history[-1] >= 0.999999 * history[-101]:
            raise GapWindowError(Pt.t, iteration, residual)
    else:
        raise GapWindowError(Pt.t, max_iter, residual)

    tail = [h for h in history[-20:] if h > 0]
    contraction = (
        float((tail[-1] / tail[0]) ** (1 / (len(tail) - 1))) if len(tail) > 2 else 0.0
    )
    if nu is not None:
        v = v / (nu @ v)
    return EigenResult(complex(lam), v, u, iteration, contraction)


def phi_Z(Pt: DiscretizedOperator, nu: np.ndarray) -> complex:
    """nu P_t 1: the characteristic function of Z = log|A_1 X_0| under the discrete stationary law."""
    return complex(nu @ Pt.matrix.sum(axis=1))


def eigenvalue_bound(Pt: DiscretizedOperator, P0: DiscretizedOperator, eig: EigenResult) -> float:
    """|lambda(t) - nu P_t 1| <= ||P_t - P||_inf ||r_t - 1||_inf when nu(r_t) = 1."""
    diff = float(np.abs(Pt.matrix - P0.matrix).sum(axis=1).max())
    return diff * float(np.abs(eig.right - 1).max())


class RemainderDecay(BaseModel):
    norms: list[float]
    slope: float


def remainder_decay(
    Pt: DiscretizedOperator, eig: EigenResult, f: np.ndarray, n_max: int, *, floor: float = 1e-13
) -> RemainderDecay:
    """sup-norms of R_t^n f = P_t^n f - lambda^n Pi_t f for n = 1..n_max and their log-linear slope."""
    pi_f = eig.apply_projector(f)
    g = np.asarray(f, dtype=complex)
    norms = []
    for n in range(1, n_max + 1):
        g = Pt.apply(g)
        norms.append(float(np.abs(g - eig.lam**n * pi_f).max()))
    ns = np.arange(1, n_max + 1)
    above = np.array(norms) > floor
    if above.sum() < 2:
        return RemainderDecay(norms=norms, slope=float("-inf"))
    slope = float(np.polyfit(ns[above], np.log(np.array(norms)[above]), 1)[0])
    return RemainderDecay(norms=norms, slope=slope)


def Q_matrix(e: RadialFKEnsemble, grid: SimplexGrid) -> np.ndarray:
    """Q f(x) = sum_i w~_i f(B_i.x) as a (row-stochastic) node x node matrix."""
    Q = np.zeros((grid.size, grid.size))
    for weight, b in zip(e.tilde_weights, e.directions):
        _, images = act_many(b, grid.nodes)
        Q += weight * grid.interpolation_matrix(images)
    return Q


def apply_Q(e: RadialFKEnsemble, grid: SimplexGrid, f: np.ndarray) -> np.ndarray:
    return Q_matrix(e, grid) @ f


class DeltaResult(BaseModel):
    """delta(f) from the truncated Neumann series, with a bound on the truncation error."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    delta: complex
    terms: int
    norms: list[float]
    last_norm: float
    decay_rate: float
    truncation_bound: float


def neumann_truncation_bound(norms: list[float]) -> tuple[float, float]:
    """(decay rate kappa, bound 2 ||R_0^m f|| kappa / (1 - kappa)) from the measured norms."""
    last = norms[-1]
    if last == 0 or len(norms) < 2:
        return 0.0, 0.0
    recent = [x for x in norms[-6:] if x > 0]
    kappa = (recent[-1] / recent[0]) ** (1 / (len(recent) - 1)) if len(recent) > 1 else 1.0
    if kappa >= 1:
        return float(kappa), float("inf")
    return float(kappa), 2 * last * kappa / (1 - kappa)


def delta_functional(
    P0: DiscretizedOperator,
    Q: np.ndarray,
    nu: np.ndarray,
    f: np.ndarray,
    m_trunc: int | None = None,
) -> DeltaResult:
    """
    delta(f) = nu((Q - P) sum_{i>=0} R_0^i f), R_0 = P - Pi.

    Without `m_trunc` the series stops at the first m with ||R_0^m f||_inf < 1e-12
    (at most 200 terms).

    Raises:
        GapWindowError: If R_0^i f does not decay
    """
    P = P0.matrix.real
    f = np.asarray(f)
    term = f.astype(complex)
    total = term.copy()
    norms = [float(np.abs(term).max())]
    cap = m_trunc if m_trunc is not None else NEUMANN_CAP
    for _ in range(cap):
        term = P @ term - nu @ term
        norms.append(float(np.abs(term).max()))
        total += term
        if m_trunc is None and norms[-1] < NEUMANN_TOL:
            break
    kappa, bound = neumann_truncation_bound(norms)
    if m_trunc is None and norms[-1] >= NEUMANN_TOL and not np.isfinite(bound):
        raise GapWindowError(0.0, len(norms) - 1, norms[-1])
    delta = complex(nu @ (Q @ total - P @ total))
    return DeltaResult(
        delta=delta,
        terms=len(norms) - 1,
        norms=norms,
        last_norm=norms[-1],
        decay_rate=kappa,
        truncation_bound=bound,
    )


class TwoFormulaCheck(BaseModel):
    """
    sum_{i<m} P^{m-1-i}(Q-P)P^i f compared with delta(f) 1.

    Both gaps are held to 2 C_P C_f m kappa^(m-1) plus the series tail, where
    ||P^k - Pi|| <= C_P kappa^k and ||R_0^i f|| <= C_f kappa^i are fitted on the
    measured norms and ||Q - P|| <= 2 for stochastic Q and P.
    """

    delta: complex
    delta_m: complex
    deviation: float
    partial_gap: float
    decay_rate: float
    bound: float
    tail_bound: float

    @property
    def gap_ok(self) -> bool:
        return self.decay_rate < GAP_KAPPA_MAX

    @property
    def consistent(self) -> bool:
        return self.gap_ok and self.deviation <= self.bound and self.partial_gap <= self.tail_bound


def _decay_rate(norms: list[float], floor: float) -> float:
    """Geometric rate over the last six norms above `floor`; 0 when only the first one is."""
    above = [(k, x) for k, x in enumerate(norms) if x > floor][-6:]
    if not above or (len(above) == 1 and above[0][0] == 0):
        return 0.0
    if len(above) == 1:
        return 1.0
    ks, xs = zip(*above)
    return float(np.exp(np.polyfit(ks, np.log(xs), 1)[0]))


def _envelope_constant(norms: list[float], floor: float, kappa: float) -> float:
    """Smallest C with norms[k] <= C kappa^k wherever norms[k] > floor."""
    above = [(k, x) for k, x in enumerate(norms) if x > floor]
    if not above:
        return 0.0
    if kappa == 0:
        return max(x for k, x in above if k == 0)
    return max(x / kappa**k for k, x in above)


def two_formula_check(
    P0: DiscretizedOperator, Q: np.ndarray, nu: np.ndarray, f: np.ndarray, m: int
) -> TwoFormulaCheck:
    """Evaluate both expressions of Delta f and hold their gap to the fitted geometric envelope."""
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}.")
    P = P0.matrix.real
    f = np.asarray(f, dtype=complex)
    series = delta_functional(P0, Q, nu, f)
    delta = series.delta
    pi = np.outer(np.ones(P.shape[0]), nu)
    P_pow = [np.eye(P.shape[0])]
    for _ in range(m - 1):
        P_pow.append(P_pow[-1] @ P)
    P_norms = [float(np.abs(Pk - pi).sum(axis=1).max()) for Pk in P_pow]

    summed = np.zeros(P.shape[0], dtype=complex)
    delta_m = 0j
    power_f = f
    for i in range(m):
        jump = Q @ power_f - P @ power_f
        summed += P_pow[m - 1 - i] @ jump
        delta_m += nu @ jump
        power_f = P @ power_f

    scale = max(1.0, float(np.abs(f).max()))
    floor_f = ENVELOPE_FLOOR * scale
    kappa = max(_decay_rate(P_norms, ENVELOPE_FLOOR), _decay_rate(series.norms, floor_f))
    if kappa >= GAP_KAPPA_MAX:
        bound = tail_bound = float("inf")
    else:
        C_P = _envelope_constant(P_norms, ENVELOPE_FLOOR, kappa)
        C_f = _envelope_constant(series.norms, floor_f, kappa)
        # terms with a factor under its floor, and the sub-floor part of the series tail
        floor_slack = m * (2 * ENVELOPE_FLOOR * max(series.norms) + 4 * floor_f)
        tail_bound = (
            2 * C_f * kappa**m / (1 - kappa)
            + 2 * floor_f * len(series.norms)
            + series.truncation_bound
            + 1e-12 * scale
        )
        bound = 2 * C_P * C_f * m * kappa ** (m - 1) + floor_slack + tail_bound
    return TwoFormulaCheck(
        delta=delta,
        delta_m=delta_m,
        deviation=float(np.abs(summed - delta).max()),
        partial_gap=abs(delta_m - delta),
        decay_rate=kappa,
        bound=bound,
        tail_bound=tail_bound,
    )
