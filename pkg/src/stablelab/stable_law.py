"""
Alpha-stable numerics: the characteristic function h_alpha, density and CDF by
Fourier inversion, the constants d_a / z_a / c_a, the second-order corrections
A_rho, B_rho, J, M(s), N(s), and an Esseen-type smoothing inequality evaluator.

All inversion integrals pair t with -t (every integrand is Hermitian), so they
reduce to real integrals over (0, T*], with T* chosen so |h_alpha(T*)| < 1e-12.
The range is split at a small t1: plain adaptive quadrature near the
integrable singularity at 0, QUADPACK's oscillatory rule (QAWO) beyond.
"""

import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from logging import getLogger
from pathlib import Path
from typing import Callable, NamedTuple, Self

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.interpolate import PchipInterpolator
from scipy.special import digamma, gamma

from stablelab.errors import ExcludedCaseError
from stablelab.heavy_tail import SecondOrderTail, stable_c, tail_q
from stablelab.quadrature import DEFAULT_TOL, integrate

logger = getLogger(__name__)

EULER_GAMMA = float(np.euler_gamma)

# |h_alpha| is below this beyond the truncation point T*.
TRUNCATION_LEVEL = 1e-12

# Within this distance of a = 1 the removable singularity of d_a is replaced by its series.
_SERIES_WINDOW = 1e-6


class StableLawParams(BaseModel):
    """Parameters of h_alpha plus the second-order indices selecting the correction branches."""

    model_config = ConfigDict(frozen=True)

    alpha: float = Field(..., description="Stability index in (0, 2).")
    p: float = Field(..., description="Right-tail weight in [0, 1].")
    c: float = Field(default=1.0, description="Scale constant of h_alpha.")
    rho: float = Field(default=-1.0, description="Second-order index; selects J's branch.")
    q: float = Field(default=0.0, description="Second-order tail-asymmetry constant.")

    @model_validator(mode="after")
    def _validate_ranges(self) -> Self:
        if not 0 < self.alpha < 2:
            raise ValueError(f"alpha must lie in (0, 2), got {self.alpha}.")
        if not 0 <= self.p <= 1:
            raise ValueError(f"p must lie in [0, 1], got {self.p}.")
        if self.c <= 0:
            raise ValueError(f"c must be positive, got {self.c}.")
        if self.rho > 0:
            raise ValueError(f"rho must be <= 0, got {self.rho}.")
        return self

    @classmethod
    def from_tail(cls, tail: SecondOrderTail) -> "StableLawParams":
        """The limit law of the normalized sums of a second-order tail family."""
        return cls(alpha=tail.alpha, p=tail.p, c=stable_c(tail), rho=tail.rho, q=tail_q(tail))

    @property
    def skew(self) -> float:
        return 2 * self.p - 1

    @property
    def decay_rate(self) -> float:
        """kappa with |h_alpha(t)| = exp(-kappa |t|^alpha)."""
        a = self.alpha
        if a == 1:
            return self.c * math.pi / 2
        return self.c * float(gamma(1 - a)) * math.cos(math.pi * a / 2)

    @property
    def truncation(self) -> float:
        """T* with |h_alpha(T*)| = 1e-12."""
        return (math.log(1 / TRUNCATION_LEVEL) / self.decay_rate) ** (1 / self.alpha)

    @property
    def scale(self) -> float:
        """Natural width kappa^(1/alpha) of the law."""
        return self.decay_rate ** (1 / self.alpha)


def sgn(t: np.ndarray | float) -> np.ndarray:
    """+1 for t >= 0 and -1 for t < 0."""
    return np.where(np.asarray(t) < 0, -1.0, 1.0)


def d_const(a: float) -> float:
    """d_a = int_0^inf x^-a sin x dx = Gamma(1-a) sin(pi(1-a)/2) for a in (0, 2)."""
    if not 0 < a < 2:
        raise ValueError(f"d_a is defined for a in (0, 2), got {a}.")
    e = 1 - a
    if abs(e) < _SERIES_WINDOW:
        return math.pi / 2 - EULER_GAMMA * math.pi * e / 2
    return float(gamma(e)) * math.sin(math.pi * e / 2)


def z_const(a: float) -> float:
    """z_a = d_a (psi(1-a) + (pi/2) cot(pi(1-a)/2)) = -d'(a); at a = 1 the limit -gamma pi / 2."""
    if not 0 < a < 2:
        raise ValueError(f"z_a is defined for a in (0, 2), got {a}.")
    e = 1 - a
    if abs(e) < _SERIES_WINDOW:
        return -EULER_GAMMA * math.pi / 2
    return d_const(a) * (float(digamma(e)) + (math.pi / 2) / math.tan(math.pi * e / 2))


def c_const(a: float) -> float:
    """c_a = z_{a-1}/(a-1) + d_{a-1}/(a-1)^2 for a in (1, 2)."""
    if not 1 < a < 2:
        raise ValueError(f"c_a is defined for a in (1, 2), got {a}.")
    return z_const(a - 1) / (a - 1) + d_const(a - 1) / (a - 1) ** 2


def log_char_fn(params: StableLawParams, t: np.ndarray | float) -> np.ndarray | complex:
    """log h_alpha(t) in closed form."""
    t_arr = np.asarray(t, dtype=float)
    at = np.abs(t_arr)
    s = sgn(t_arr)
    a, c = params.alpha, params.c
    if a == 1:
        with np.errstate(divide="ignore", invalid="ignore"):
            log_at = np.where(at > 0, np.log(np.where(at > 0, at, 1.0)), 0.0)
        out = -at * c * (math.pi / 2 - 1j * s * params.skew * log_at)
    else:
        out = -(at**a) * c * float(gamma(1 - a)) * (
            math.cos(math.pi * a / 2) - 1j * s * params.skew * math.sin(math.pi * a / 2)
        )
    out = np.asarray(out, dtype=complex)
    return out if out.ndim else complex(out)


def char_fn(params: StableLawParams, t: np.ndarray | float) -> np.ndarray | complex:
    """h_alpha(t)."""
    out = np.exp(np.asarray(log_char_fn(params, t)))
    return out if out.ndim else complex(out)


def operator_C(params: StableLawParams, t: np.ndarray | float) -> np.ndarray | complex:
    """
    C(t, alpha) = -c d_alpha + i sgn(t) c (2p-1) alpha d_{alpha+1}, alpha in (0, 1).

    C(t, alpha) |t|^alpha is log h_alpha(t); it is the leading coefficient of the
    transfer-operator expansion when rho < -alpha.
    """
    a = params.alpha
    if not 0 < a < 1:
        raise ValueError(f"C(t, alpha) is only used for alpha in (0, 1), got {a}.")
    s = sgn(t)
    out = -params.c * d_const(a) + 1j * s * params.c * params.skew * a * d_const(a + 1)
    out = np.asarray(out, dtype=complex)
    return out if out.ndim else complex(out)


def _xlogx_power(at: np.ndarray, a: float) -> np.ndarray:
    """|t|^a log|t| with 0^a log 0 = 0."""
    safe = np.where(at > 0, at, 1.0)
    return np.where(at > 0, safe**a * np.log(safe), 0.0)


def corr_A_rho(params: StableLawParams, t: np.ndarray | float) -> np.ndarray | float:
    """A_rho(t): (c/rho) d_{alpha-rho} |t|^(alpha-rho) for rho < 0; |t|^alpha (z_alpha - d_alpha log|t|) for rho = 0."""
    at = np.abs(np.asarray(t, dtype=float))
    a, r, c = params.alpha, params.rho, params.c
    if r < 0:
        out = (c / r) * d_const(a - r) * at ** (a - r)
    else:
        out = z_const(a) * at**a - d_const(a) * _xlogx_power(at, a)
    out = np.asarray(out, dtype=float)
    return out if out.ndim else float(out)


def b_rho_branch(alpha: float, rho: float) -> int | None:
    """Which of the four B_rho branches (1..4) covers (alpha, rho); None when none does."""
    if 1 < alpha < 2 and alpha - 2 < rho < 0:
        return 1
    if 1 < alpha < 2 and rho == 0:
        return 2
    if alpha == 1 and -1 < rho < 0:
        return 3
    if 0 < alpha < 1 and alpha - 2 < rho < alpha - 1:
        return 4
    return None


def corr_B_rho(params: StableLawParams, t: np.ndarray | float) -> np.ndarray | float:
    """
    B_rho(t) = sgn(t) B_rho(|t|), with B_rho(|t|) from the branch selected by (alpha, rho).

    Raises:
        ExcludedCaseError: If (alpha, rho) lies outside every branch
    """
    t_arr = np.asarray(t, dtype=float)
    at = np.abs(t_arr)
    a, r, c, skew, q = params.alpha, params.rho, params.c, params.skew, params.q
    branch = b_rho_branch(a, r)
    match branch:
        case 1:
            out = (skew / r + 2 * q) * c * d_const(a - r - 1) / (a - r - 1) * at ** (a - r)
        case 2:
            out = (
                skew * (c_const(a) * at**a - d_const(a - 1) * _xlogx_power(at, a) / (a - 1))
                + 2 * q * d_const(a - 1) / (a - 1) * at**a
            )
        case 3:
            out = (skew / r + 2 * q) * c * d_const(-r) / (-r) * (at ** (1 - r) - at)
        case 4:
            out = (skew / r + 2 * q) * c / (a - r - 1) * (d_const(a - r - 1) * at ** (a - r) - at)
        case _:
            raise ExcludedCaseError(
                "B_rho", f"(alpha={a}, rho={r}) lies outside every branch of B_rho"
            )
    out = np.asarray(sgn(t_arr) * out, dtype=float)
    return out if out.ndim else float(out)


def corr_J(params: StableLawParams, t: np.ndarray | float) -> np.ndarray | complex:
    """
    J(t) = A_rho(t) + i B_rho(t) for rho > -alpha, (log h_alpha(t))^2 / 2 for rho < -alpha.

    Raises:
        ExcludedCaseError: If rho == -alpha
    """
    a, r = params.alpha, params.rho
    if r == -a:
        raise ExcludedCaseError("rho = -alpha", "the second-order expansion excludes rho == -alpha")
    if r > -a:
        out = np.asarray(corr_A_rho(params, t)) + 1j * np.asarray(corr_B_rho(params, t))
    else:
        out = np.asarray(log_char_fn(params, t)) ** 2 / 2
    out = np.asarray(out, dtype=complex)
    return out if out.ndim else complex(out)


def _split_point(s: float, t_max: float) -> float:
    return min(1.0, 1.0 / (1.0 + abs(s)), t_max)


def _inversion_im_over_t(
    G: Callable[[float], complex], s: float, t_max: float, tol: float
) -> tuple[float, float]:
    """(1/pi) int_0^t_max Im(e^{-its} G(t)) / t dt and its error estimate."""
    t1 = _split_point(s, t_max)

    def head(t: float) -> float:
        if t == 0:
            return 0.0
        return (np.exp(-1j * t * s) * G(t)).imag / t

    value, err = integrate(head, 0.0, t1, tol=tol)
    if t_max > t1:
        if s == 0:
            v, e = integrate(lambda t: G(t).imag / t, t1, t_max, tol=tol)
            value, err = value + v, err + e
        else:
            # Im(e^{-its} G) = Im G cos(ts) - Re G sin(ts)
            w = abs(s)
            v1, e1 = integrate(lambda t: G(t).imag / t, t1, t_max, weight="cos", wvar=w, tol=tol)
            v2, e2 = integrate(lambda t: G(t).real / t, t1, t_max, weight="sin", wvar=w, tol=tol)
            value += v1 - math.copysign(1.0, s) * v2
            err += e1 + e2
    return value / math.pi, err / math.pi


def stable_density_with_error(
    params: StableLawParams, s: float, *, tol: float = DEFAULT_TOL
) -> tuple[float, float]:
    """p_alpha(s) = (1/pi) int_0^T* Re(e^{-its} h_alpha(t)) dt, with the quadrature error estimate."""
    s = float(s)
    t_max = params.truncation
    t1 = _split_point(s, t_max)

    def h(t: float) -> complex:
        return complex(char_fn(params, t))

    value, err = integrate(lambda t: (np.exp(-1j * t * s) * h(t)).real, 0.0, t1, tol=tol)
    if s == 0:
        v, e = integrate(lambda t: h(t).real, t1, t_max, tol=tol)
        value, err = value + v, err + e
    else:
        w = abs(s)
        v1, e1 = integrate(lambda t: h(t).real, t1, t_max, weight="cos", wvar=w, tol=tol)
        v2, e2 = integrate(lambda t: h(t).imag, t1, t_max, weight="sin", wvar=w, tol=tol)
        value += v1 + math.copysign(1.0, s) * v2
        err += e1 + e2
    return max(value / math.pi, 0.0), err / math.pi


def stable_density(params: StableLawParams, s: float, *, tol: float = DEFAULT_TOL) -> float:
    return stable_density_with_error(params, s, tol=tol)[0]


def stable_cdf_with_error(
    params: StableLawParams, s: float, *, tol: float = DEFAULT_TOL
) -> tuple[float, float]:
    """H_alpha(s) = 1/2 - (1/pi) int_0^inf Im(e^{-its} h_alpha(t)) / t dt, with the error estimate."""
    value, err = _inversion_im_over_t(
        lambda t: complex(char_fn(params, t)), float(s), params.truncation, tol
    )
    return float(min(1.0, max(0.0, 0.5 - value))), err


def stable_cdf(params: StableLawParams, s: float, *, tol: float = DEFAULT_TOL) -> float:
    return stable_cdf_with_error(params, s, tol=tol)[0]


def correction_M_with_error(
    params: StableLawParams, s: float, *, tol: float = 1e-10
) -> tuple[float, float]:
    """M(s) = (1/2pi) int e^{-its}/(it) J(t) h(t) dt, with the quadrature error estimate."""
    return _inversion_im_over_t(
        lambda t: complex(corr_J(params, t) * char_fn(params, t)), float(s), params.truncation, tol
    )


def correction_N_with_error(
    params: StableLawParams, s: float, *, tol: float = 1e-10
) -> tuple[float, float]:
    """N(s) = (1/2pi) int e^{-its}/(-it) log h(t) h(t) dt, with the quadrature error estimate."""
    value, err = _inversion_im_over_t(
        lambda t: complex(log_char_fn(params, t) * char_fn(params, t)),
        float(s),
        params.truncation,
        tol,
    )
    return -value, err


def correction_M(params: StableLawParams, s: float, *, tol: float = 1e-10) -> float:
    return correction_M_with_error(params, s, tol=tol)[0]


def correction_N(params: StableLawParams, s: float, *, tol: float = 1e-10) -> float:
    return correction_N_with_error(params, s, tol=tol)[0]


class CorrectionProfile(BaseModel):
    """M(s) and N(s) tabulated on an s-grid together with their quadrature error estimates."""

    s_grid: list[float]
    M_values: list[float]
    N_values: list[float]
    err_M: list[float]
    err_N: list[float]

    @model_validator(mode="after")
    def _validate_lengths(self) -> Self:
        n = len(self.s_grid)
        if any(len(v) != n for v in (self.M_values, self.N_values, self.err_M, self.err_N)):
            raise ValueError("CorrectionProfile columns must all match s_grid in length.")
        if any(b <= a for a, b in zip(self.s_grid, self.s_grid[1:])):
            raise ValueError("s_grid must be strictly increasing.")
        return self

    @property
    def quadrature_error(self) -> list[float]:
        return [max(m, n) for m, n in zip(self.err_M, self.err_N)]

    def to_csv(self, path: Path) -> Path:
        from stablelab.output import write_csv

        rows = zip(self.s_grid, self.M_values, self.N_values, self.err_M, self.err_N)
        return write_csv(path, ["s", "M", "N", "err_M", "err_N"], rows)


def correction_profile(
    params: StableLawParams, s_grid: list[float], *, tol: float = 1e-10, with_N: bool = True
) -> CorrectionProfile:
    """Evaluate M and N on a sorted grid. N is skipped (reported as 0) when `with_N` is False."""
    ms, ns, em, en = [], [], [], []
    for s in s_grid:
        m, e = correction_M_with_error(params, s, tol=tol)
        ms.append(m)
        em.append(e)
        if with_N:
            n, e = correction_N_with_error(params, s, tol=tol)
        else:
            n, e = 0.0, 0.0
        ns.append(n)
        en.append(e)
    logger.info(f"Correction profile on {len(s_grid)} point(s): max|M|={max(map(abs, ms)):.4g}")
    return CorrectionProfile(s_grid=list(s_grid), M_values=ms, N_values=ns, err_M=em, err_N=en)


def h_l1_bound(params: StableLawParams) -> float:
    """(1/pi) int_0^inf |h_alpha(t)| dt, an upper bound for sup p_alpha."""
    value, err = integrate(
        lambda t: math.exp(-params.decay_rate * t**params.alpha), 0.0, params.truncation
    )
    return (value + err) / math.pi


def jh_l1_bound(params: StableLawParams) -> float:
    """(1/pi) int_0^inf |J(t) h_alpha(t)| dt, an upper bound for sup |M'|."""
    value, err = integrate(
        lambda t: abs(complex(corr_J(params, t) * char_fn(params, t))), 0.0, params.truncation
    )
    return (value + err) / math.pi


@dataclass(frozen=True, eq=False)
class StableTable:
    """
    H_alpha and p_alpha tabulated on s = w sinh(u) with monotone (PCHIP) interpolation.

    Beyond the grid both are extended by the alpha-power tails of a stable law.
    Built once per parameter set by `stable_table`.
    """

    params: StableLawParams
    s: np.ndarray = field(repr=False)
    H: np.ndarray = field(repr=False)
    density: np.ndarray = field(repr=False)
    max_error: float = 0.0

    @cached_property
    def _cdf_interp(self) -> PchipInterpolator:
        return PchipInterpolator(self.s, self.H, extrapolate=False)

    @cached_property
    def _pdf_interp(self) -> PchipInterpolator:
        return PchipInterpolator(self.s, self.density, extrapolate=False)

    @cached_property
    def _ppf_interp(self) -> PchipInterpolator:
        keep = np.concatenate([[True], np.diff(self.H) > 1e-15])
        return PchipInterpolator(self.H[keep], self.s[keep], extrapolate=False)

    def cdf(self, x: np.ndarray | float) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        a = self.params.alpha
        lo, hi = self.s[0], self.s[-1]
        out = np.asarray(self._cdf_interp(np.clip(x, lo, hi)), dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(x > hi, 1.0 - (1.0 - self.H[-1]) * (hi / x) ** a, out)
            out = np.where(x < lo, self.H[0] * (lo / x) ** a, out)
        return np.clip(out, 0.0, 1.0)

    def pdf(self, x: np.ndarray | float) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        a = self.params.alpha
        lo, hi = self.s[0], self.s[-1]
        out = np.asarray(self._pdf_interp(np.clip(x, lo, hi)), dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(x > hi, self.density[-1] * (hi / x) ** (a + 1), out)
            out = np.where(x < lo, self.density[0] * (lo / x) ** (a + 1), out)
        return np.maximum(out, 0.0)

    def ppf(self, u: np.ndarray | float) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if np.any((u <= 0) | (u >= 1)):
            raise ValueError("ppf requires 0 < u < 1")
        a = self.params.alpha
        h_lo, h_hi = self.H[0], self.H[-1]
        out = np.asarray(self._ppf_interp(np.clip(u, h_lo, h_hi)), dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            upper = self.s[-1] * ((1.0 - h_hi) / (1.0 - u)) ** (1 / a)
            lower = self.s[0] * (h_lo / u) ** (1 / a)
        out = np.where(u > h_hi, upper, out)
        out = np.where(u < h_lo, lower, out)
        return out

    def sample(self, n: int, seed: int) -> np.ndarray:
        """n draws by quantile transform; deterministic per seed."""
        u = np.random.default_rng(seed).random(n)
        u[u == 0.0] = np.nextafter(0.0, 1.0)
        return self.ppf(u)

    @property
    def density_sup(self) -> float:
        return float(self.density.max())


@lru_cache(maxsize=16)
def stable_table(params: StableLawParams, n_points: int = 601, span: float = 1e4) -> StableTable:
    """Tabulate H_alpha and p_alpha on a sinh-spaced grid spanning +-span natural widths."""
    if n_points < 5:
        raise ValueError(f"n_points must be >= 5, got {n_points}.")
    u = np.linspace(-math.asinh(span), math.asinh(span), n_points)
    s = params.scale * np.sinh(u)
    H = np.array([stable_cdf(params, x) for x in s])
    H = np.maximum.accumulate(np.clip(H, 0.0, 1.0))
    density = np.array([stable_density(params, x) for x in s])

    table = StableTable(params=params, s=s, H=H, density=density)
    mids = 0.5 * (s[:-1] + s[1:])[:: max(1, n_points // 40)]
    direct = np.array([stable_cdf(params, x) for x in mids])
    max_error = float(np.max(np.abs(table.cdf(mids) - direct)))
    logger.info(f"Stable table alpha={params.alpha} p={params.p}: {n_points} points, err~{max_error:.2e}")
    return StableTable(params=params, s=s, H=H, density=density, max_error=max_error)


def stable_quantile(params: StableLawParams, u: np.ndarray | float) -> np.ndarray:
    return stable_table(params).ppf(u)


@dataclass(frozen=True, eq=False)
class StepCDF:
    """Empirical distribution function of a sample; right-continuous."""

    points: np.ndarray

    @classmethod
    def from_samples(cls, samples: np.ndarray) -> "StepCDF":
        samples = np.sort(np.asarray(samples, dtype=float).reshape(-1))
        if samples.size == 0 or not np.all(np.isfinite(samples)):
            raise ValueError("StepCDF needs a non-empty finite sample.")
        return cls(samples)

    def __call__(self, x: np.ndarray | float) -> np.ndarray:
        return np.searchsorted(self.points, x, side="right") / self.points.size

    def left_limit(self, x: np.ndarray | float) -> np.ndarray:
        return np.searchsorted(self.points, x, side="left") / self.points.size

    def char_fn(self, t: float) -> complex:
        return complex(np.mean(np.exp(1j * t * self.points)))


class EsseenGap(NamedTuple):
    lhs: float
    rhs: float


def _check_hermitian(g: Callable[[float], complex], T: float) -> None:
    for t in (0.37, 1.3, T / 2):
        forward, backward = complex(g(t)), complex(g(-t))
        if abs(backward - forward.conjugate()) > 1e-10 * (1 + abs(forward)):
            raise ValueError(f"g is not conjugate-symmetric at t={t}: g(-t) != conj(g(t))")


def esseen_gap(
    F1: StepCDF | Callable[[np.ndarray], np.ndarray],
    f1: Callable[[float], complex],
    F2: Callable[[np.ndarray], np.ndarray],
    f2: Callable[[float], complex],
    T: float,
    *,
    derivative_bound: float,
    G: Callable[[np.ndarray], np.ndarray] | None = None,
    g: Callable[[float], complex] | None = None,
    x_grid: np.ndarray | None = None,
    n_grid: int = 10_000,
    tol: float = 1e-6,
) -> EsseenGap:
    """
    Both sides of the smoothing inequality

        sup_x |F1(x) - F2(x) - G(x)| <= 24 ||F2' + G'||_inf / (pi T)
                                         + (1/pi) int_{-T}^{T} |f1 - f2 - g| / |t| dt

    lhs is a sup over a grid (plus every jump of a step-function F1, from both
    sides); rhs uses the caller's `derivative_bound` for ||F2' + G'||_inf.

    Raises:
        ValueError: If g is not conjugate-symmetric, or no grid can be chosen
    """
    if T <= 0:
        raise ValueError(f"T must be positive, got {T}.")
    if (G is None) != (g is None):
        raise ValueError("G and g must be given together.")
    if g is not None:
        _check_hermitian(g, T)

    if x_grid is None:
        if not isinstance(F1, StepCDF):
            raise ValueError("x_grid is required unless F1 is a StepCDF.")
        q1, q3 = np.quantile(F1.points, [0.25, 0.75])
        iqr = max(q3 - q1, 1e-12)
        x_grid = np.linspace(q1 - 10 * iqr, q3 + 10 * iqr, n_grid)
    xs = np.asarray(x_grid, dtype=float)

    def gap(values: np.ndarray, at: np.ndarray) -> np.ndarray:
        correction = np.asarray(G(at), dtype=float) if G is not None else 0.0
        return np.abs(values - np.asarray(F2(at), dtype=float) - correction)

    lhs = float(np.max(gap(np.asarray(F1(xs), dtype=float), xs)))
    if isinstance(F1, StepCDF):
        jumps = np.unique(F1.points)
        lhs = max(lhs, float(np.max(gap(F1(jumps), jumps))))
        lhs = max(lhs, float(np.max(gap(F1.left_limit(jumps), jumps))))

    def integrand(t: float) -> float:
        diff = complex(f1(t)) - complex(f2(t)) - (complex(g(t)) if g is not None else 0.0)
        return abs(diff) / t

    integral, err = integrate(integrand, 0.0, T, tol=tol, limit=5000)
    rhs = 24 * derivative_bound / (math.pi * T) + 2 * (integral + err) / math.pi
    return EsseenGap(lhs=lhs, rhs=rhs)
