"""Cone and projective geometry of nonnegative matrices.

Norms are L1: |x| = sum of coordinates for x >= 0, so the operator norm is the
maximal column sum and the simplex S_+^{d-1} is {x >= 0 : |x| = 1}. All
functions are pure; the `*_many` variants are vectorized over a leading axis.
"""

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from stablelab.errors import ConditionViolation, ContractViolation

SIMPLEX_TOL = 1e-12

# Pairs closer than this in d are dropped from contraction estimates (0/0).
_MIN_PAIR_DIST = 1e-10


@dataclass(frozen=True)
class PositiveMatrix:
    """A d x d nonnegative, allowable matrix (every row and column has a positive entry)."""

    entries: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        entries = np.array(self.entries, dtype=float)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1] or entries.shape[0] < 1:
            raise ValueError(f"Expected a square d x d matrix, got shape {entries.shape}.")
        if not np.all(np.isfinite(entries)):
            raise ValueError("Matrix entries must be finite.")
        if np.any(entries < 0):
            raise ConditionViolation(1, "matrix has a negative entry")
        if not (np.all(entries.max(axis=0) > 0) and np.all(entries.max(axis=1) > 0)):
            raise ConditionViolation(
                1, "matrix is not allowable: some row or column has no positive entry"
            )
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def __matmul__(self, other: "PositiveMatrix") -> "PositiveMatrix":
        return PositiveMatrix(self.entries @ other.entries)


@dataclass(frozen=True)
class DirectionVector:
    """A point of the simplex S_+^{d-1}; renormalized to unit L1 norm on construction."""

    coords: np.ndarray

    def __post_init__(self) -> None:
        coords = np.array(self.coords, dtype=float).reshape(-1)
        if coords.size < 1 or np.any(coords < 0) or not np.all(np.isfinite(coords)):
            raise ValueError(f"Direction coordinates must be finite and nonnegative: {coords}")
        total = coords.sum()
        if total <= 0:
            raise ValueError("Direction vector must have positive L1 norm.")
        coords = coords / total
        coords.setflags(write=False)
        object.__setattr__(self, "coords", coords)

    @property
    def dim(self) -> int:
        return self.coords.size

    @classmethod
    def barycenter(cls, dim: int) -> "DirectionVector":
        return cls(np.full(dim, 1.0 / dim))

    @classmethod
    def vertex(cls, dim: int, index: int) -> "DirectionVector":
        coords = np.zeros(dim)
        coords[index] = 1.0
        return cls(coords)


def _entries(g: PositiveMatrix | np.ndarray) -> np.ndarray:
    return g.entries if isinstance(g, PositiveMatrix) else PositiveMatrix(g).entries


def op_norm(g: PositiveMatrix | np.ndarray) -> float:
    """Maximal column sum, i.e. sup{|gx| : x in the simplex}."""
    return float(_entries(g).sum(axis=0).max())


def op_iota(g: PositiveMatrix | np.ndarray) -> float:
    """Minimal column sum, i.e. inf{|gx| : x in the simplex}."""
    return float(_entries(g).sum(axis=0).min())


def fk_ratio(g: PositiveMatrix | np.ndarray) -> float:
    """max entry / min entry; infinite when some entry is zero."""
    entries = _entries(g)
    smallest = entries.min()
    return float(entries.max() / smallest) if smallest > 0 else float("inf")


def projective_action(g: PositiveMatrix, x: DirectionVector) -> DirectionVector:
    """g.x = gx / |gx|."""
    gx = _entries(g) @ x.coords
    norm = gx.sum()
    if norm <= 0:
        raise ContractViolation("|gx| = 0: projective action undefined")
    return DirectionVector(gx / norm)


def cocycle(g: PositiveMatrix, x: DirectionVector) -> float:
    """sigma(g, x) = log(|gx| / |x|)."""
    norm = float((_entries(g) @ x.coords).sum())
    if norm <= 0:
        raise ContractViolation("|gx| = 0: cocycle undefined")
    return float(np.log(norm / x.coords.sum()))


def act_many(matrices: np.ndarray, xs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """
    Apply a batch of matrices to a batch of simplex points.

    Args:
        matrices: (..., d, d) array, or a single (d, d) matrix broadcast over xs
        xs: (..., d) array of simplex points

    Returns:
        (log |g x|, g.x) with shapes (...,) and (..., d)
    """
    gx = np.einsum("...ij,...j->...i", matrices, xs)
    norms = gx.sum(axis=-1)
    if np.any(norms <= 0):
        raise ContractViolation("|gx| = 0 in a batched projective action")
    return np.log(norms), gx / norms[..., None]


def hilbert_dist_many(xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Vectorized d(x, y) = (1 - m(x,y) m(y,x)) / (1 + m(x,y) m(y,x)) over a leading axis."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)

    def m(a: np.ndarray, b: np.ndarray) -> np.ndarray:
        ratio = np.divide(a, b, out=np.full(np.broadcast(a, b).shape, np.inf), where=b > 0)
        return ratio.min(axis=-1)

    prod = m(xs, ys) * m(ys, xs)
    return np.clip((1.0 - prod) / (1.0 + prod), 0.0, 1.0)


def hilbert_dist(x: DirectionVector, y: DirectionVector) -> float:
    """The bounded Hilbert-metric variant d on the simplex; values in [0, 1]."""
    return float(hilbert_dist_many(x.coords, y.coords))


def _vertex_pairs(dim: int) -> tuple[np.ndarray, np.ndarray]:
    eye = np.eye(dim)
    pairs = list(combinations(range(dim), 2))
    if not pairs:
        return np.empty((0, dim)), np.empty((0, dim))
    return eye[[i for i, _ in pairs]], eye[[j for _, j in pairs]]


def contraction_coeff_est(g: PositiveMatrix, n_pairs: int, seed: int) -> float:
    """
    Estimate c(g) = sup d(g.x, g.y) / d(x, y) over the simplex.

    The supremum is taken over `n_pairs` uniformly sampled pairs plus every pair
    of simplex vertices; pairs closer than 1e-10 are discarded. Deterministic
    per seed. Returns 0 in dimension 1, where the simplex is a single point.
    """
    if n_pairs < 1:
        raise ValueError(f"n_pairs must be >= 1, got {n_pairs}.")
    entries = _entries(g)
    dim = entries.shape[0]
    if dim == 1:
        return 0.0
    rng = np.random.default_rng(seed)
    vx, vy = _vertex_pairs(dim)
    xs = np.vstack([rng.dirichlet(np.ones(dim), size=n_pairs), vx])
    ys = np.vstack([rng.dirichlet(np.ones(dim), size=n_pairs), vy])

    before = hilbert_dist_many(xs, ys)
    keep = before > _MIN_PAIR_DIST
    if not np.any(keep):
        return 0.0
    _, gxs = act_many(entries, xs[keep])
    _, gys = act_many(entries, ys[keep])
    ratios = hilbert_dist_many(gxs, gys) / before[keep]
    return float(min(1.0, ratios.max()))
