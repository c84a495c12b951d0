"""The two-term Pareto family satisfying second-order regular variation exactly.

In base coordinates Y (Z = Y + center), for t >= t0:

    1 - F(t) = p * s(t),  F(-t) = (1 - p) * s(t),  s(t) = c t^-alpha (1 + beta t^rho)

so A(t) = rho beta t^rho / (1 + beta t^rho) makes the first second-order limit
an identity for every t >= t0, and the tail-balance ratio is exactly p (q = 0).
The body on (-t0, t0) is a continuous piecewise-linear density matched to the
tail densities at +-t0 that carries the remaining mass.
"""

from dataclasses import dataclass
from functools import cached_property
from logging import getLogger
from typing import Self

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.optimize import brentq
from scipy.special import sici

from stablelab.errors import ConditionViolation
from stablelab.quadrature import integrate

logger = getLogger(__name__)

# Safeguarded Newton iterations for the tail inverse; converges to rounding in < 10.
_NEWTON_STEPS = 60


class SecondOrderTail(BaseModel):
    """Parameters of the radial law (alpha, rho, p, c, beta, t0) plus an optional offset."""

    model_config = ConfigDict(frozen=True)

    alpha: float = Field(..., description="Tail index in (0, 2).")
    rho: float = Field(..., description="Second-order index, rho <= 0.")
    p: float = Field(..., description="Right-tail weight in [0, 1].")
    c: float = Field(default=1.0, description="Tail constant: t^alpha (1-F(t)+F(-t)) -> c.")
    beta: float = Field(default=0.0, description="Second-order amplitude.")
    t0: float = Field(..., description="Tail onset; the exact tail formulas hold for |y| >= t0.")
    offset: float = Field(
        default=0.0,
        description=(
            "Extra location added on top of the mean-zero centering (alpha in (1,2) only). "
            "Ensembles use it to make E[log|A X0|] = 0."
        ),
    )

    @model_validator(mode="after")
    def _validate_family(self) -> Self:
        if not 0 < self.alpha < 2:
            raise ConditionViolation(4, f"alpha must lie in (0, 2), got {self.alpha}")
        if self.rho > 0:
            raise ConditionViolation(4, f"rho must be <= 0, got {self.rho}")
        if not 0 <= self.p <= 1:
            raise ConditionViolation(4, f"p must lie in [0, 1], got {self.p}")
        if self.c <= 0 or self.t0 <= 0:
            raise ConditionViolation(4, "c and t0 must be positive")
        if self.rho == 0 and self.beta != 0:
            raise ConditionViolation(
                4, "rho = 0 is the pure power law; beta must be 0"
            )
        if self.offset != 0 and not 1 < self.alpha < 2:
            raise ValueError("offset is only defined for alpha in (1, 2).")
        # Tail density c t^-alpha-1 (alpha + (alpha - rho) beta t^rho) must stay positive on
        # [t0, inf); t^rho is largest at t0, so checking there suffices when beta < 0.
        if self.alpha + (self.alpha - self.rho) * self.beta * self.t0**self.rho <= 0:
            raise ConditionViolation(
                4,
                f"tail is not monotone on [t0, inf) for beta={self.beta}, rho={self.rho}, "
                f"t0={self.t0}; increase t0 or beta",
            )
        if self.tail_total_base(self.t0) > 1 + 1e-15:
            raise ConditionViolation(
                4, f"tail mass beyond +-t0 is {self.tail_total_base(self.t0):.4g} > 1; increase t0"
            )
        return self

    def s(self, t: np.ndarray | float) -> np.ndarray:
        """s(t) = c t^-alpha (1 + beta t^rho), valid for t >= t0."""
        t = np.asarray(t, dtype=float)
        return self.c * t ** (-self.alpha) * (1.0 + self.beta * t**self.rho)

    def g(self, t: np.ndarray | float) -> np.ndarray:
        """g = -s', the (two-sided) tail density magnitude for t >= t0."""
        t = np.asarray(t, dtype=float)
        return (
            self.c
            * t ** (-self.alpha - 1.0)
            * (self.alpha + (self.alpha - self.rho) * self.beta * t**self.rho)
        )

    def tail_total_base(self, t: float) -> float:
        return float(self.s(t))

    @cached_property
    def body(self) -> "PiecewiseLinearDensity":
        return _make_body(self)

    @cached_property
    def center(self) -> float:
        """Z = Y + center: mean-zero centering for alpha in (1, 2) plus the offset."""
        if self.alpha <= 1:
            return 0.0
        return -self.mean_base + self.offset

    @cached_property
    def mean_base(self) -> float:
        """E[Y] for alpha in (1, 2), from closed-form tail moments and the body moment."""
        if self.alpha <= 1:
            return float("nan")
        a, r, t0 = self.alpha, self.rho, self.t0
        # int_{t0}^inf t g(t) dt = t0 s(t0) + int_{t0}^inf s(t) dt
        tail_moment = (
            t0 * self.tail_total_base(t0)
            + self.c * t0 ** (1 - a) / (a - 1)
            + self.c * self.beta * t0 ** (1 + r - a) / (a - r - 1)
        )
        return (2 * self.p - 1) * tail_moment + self.body.first_moment()


@dataclass(frozen=True, eq=False)
class PiecewiseLinearDensity:
    """A nonnegative piecewise-linear density on [xs[0], xs[-1]] (unnormalized mass allowed)."""

    xs: np.ndarray
    ys: np.ndarray

    @cached_property
    def cumulative(self) -> np.ndarray:
        widths = np.diff(self.xs)
        return np.concatenate([[0.0], np.cumsum(widths * (self.ys[:-1] + self.ys[1:]) / 2)])

    @property
    def mass(self) -> float:
        return float(self.cumulative[-1])

    def pdf(self, x: np.ndarray) -> np.ndarray:
        return np.interp(x, self.xs, self.ys, left=0.0, right=0.0)

    def cdf(self, x: np.ndarray) -> np.ndarray:
        """Mass on [xs[0], x], clipped to the support."""
        x = np.clip(np.asarray(x, dtype=float), self.xs[0], self.xs[-1])
        k = np.clip(np.searchsorted(self.xs, x, side="right") - 1, 0, len(self.xs) - 2)
        v = x - self.xs[k]
        width = self.xs[k + 1] - self.xs[k]
        slope = np.divide(
            self.ys[k + 1] - self.ys[k], width, out=np.zeros_like(v), where=width > 0
        )
        return self.cumulative[k] + self.ys[k] * v + slope * v * v / 2

    def ppf(self, r: np.ndarray) -> np.ndarray:
        """Inverse of `cdf` for r in [0, mass]."""
        r = np.clip(np.asarray(r, dtype=float), 0.0, self.mass)
        k = np.clip(np.searchsorted(self.cumulative, r, side="right") - 1, 0, len(self.xs) - 2)
        rem = r - self.cumulative[k]
        width = self.xs[k + 1] - self.xs[k]
        half_slope = np.divide(
            self.ys[k + 1] - self.ys[k], 2 * width, out=np.zeros_like(rem), where=width > 0
        )
        y0 = self.ys[k]
        disc = np.sqrt(np.maximum(y0 * y0 + 4 * half_slope * rem, 0.0))
        denom = y0 + disc
        v = np.divide(2 * rem, denom, out=np.zeros_like(rem), where=denom > 0)
        return self.xs[k] + np.minimum(v, width)

    def first_moment(self) -> float:
        x0, x1 = self.xs[:-1], self.xs[1:]
        y0, y1 = self.ys[:-1], self.ys[1:]
        w = x1 - x0
        return float(np.sum(x0 * w * (y0 + y1) / 2 + w * w * (y0 / 6 + y1 / 3)))


def _make_body(params: SecondOrderTail) -> PiecewiseLinearDensity:
    t0 = params.t0
    g0 = float(params.g(t0))
    f_plus, f_minus = params.p * g0, (1 - params.p) * g0
    mass = 1.0 - params.tail_total_base(t0)
    apex = mass / t0 - g0 / 2
    if apex >= 0:
        xs = np.array([-t0, 0.0, t0])
        ys = np.array([f_minus, apex, f_plus])
    else:
        # Not enough mass for a triangle: ramp down to 0 within a fraction lam of each side.
        lam = 2 * mass / (t0 * g0)
        inner = t0 * (1 - lam)
        xs = np.array([-t0, -inner, inner, t0])
        ys = np.array([f_minus, 0.0, 0.0, f_plus])
        logger.debug(f"Body uses notch shape (lam={lam:.4g}) for t0={t0}")
    return PiecewiseLinearDensity(xs, ys)


def _lower_upper(params: SecondOrderTail, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(P[Y <= y], P[Y > y]) in base coordinates, each computed without cancellation in its tail."""
    lower = np.empty_like(y)
    upper = np.empty_like(y)
    t0, p = params.t0, params.p
    left, right = y <= -t0, y >= t0
    mid = ~(left | right)
    tail0 = params.tail_total_base(t0)
    with np.errstate(divide="ignore", invalid="ignore"):
        lower[left] = (1 - p) * params.s(-y[left])
        upper[left] = 1.0 - lower[left]
        upper[right] = p * params.s(y[right])
        lower[right] = 1.0 - upper[right]
    body = params.body.cdf(y[mid])
    lower[mid] = (1 - p) * tail0 + body
    upper[mid] = p * tail0 + (params.body.mass - body)
    lower = np.where(np.isneginf(y), 0.0, np.where(np.isposinf(y), 1.0, lower))
    upper = np.where(np.isneginf(y), 1.0, np.where(np.isposinf(y), 0.0, upper))
    return lower, upper


def _scalar_or_array(out: np.ndarray) -> np.ndarray | float:
    return out if out.ndim else float(out)


def tail_cdf(params: SecondOrderTail, t: np.ndarray | float) -> np.ndarray | float:
    """F(t) = P[Z <= t]; vectorized."""
    lower, _ = _lower_upper(params, np.asarray(t, dtype=float) - params.center)
    return _scalar_or_array(lower)


def tail_sf(params: SecondOrderTail, t: np.ndarray | float) -> np.ndarray | float:
    """1 - F(t) for Z."""
    _, upper = _lower_upper(params, np.asarray(t, dtype=float) - params.center)
    return _scalar_or_array(upper)


def tail_total(params: SecondOrderTail, t: np.ndarray | float) -> np.ndarray | float:
    """1 - F(t) + F(-t) for Z and t >= 0."""
    t = np.asarray(t, dtype=float)
    _, upper = _lower_upper(params, t - params.center)
    lower, _ = _lower_upper(params, -t - params.center)
    return _scalar_or_array(upper + lower)


def tail_density(params: SecondOrderTail, t: np.ndarray | float) -> np.ndarray | float:
    """Density of Z; continuous everywhere except when the body is empty."""
    y = np.asarray(t, dtype=float) - params.center
    out = np.asarray(params.body.pdf(y), dtype=float).copy()
    t0 = params.t0
    right, left = y > t0, y < -t0
    out[right] = params.p * params.g(y[right])
    out[left] = (1 - params.p) * params.g(-y[left])
    return out if out.ndim else float(out)


def _inverse_s(params: SecondOrderTail, level: np.ndarray) -> np.ndarray:
    """Solve s(t) = level for t >= t0 (level in (0, s(t0)]), vectorized."""
    a, r, c, beta, t0 = params.alpha, params.rho, params.c, params.beta, params.t0
    if beta == 0:
        return np.maximum((c / level) ** (1 / a), t0)
    # Newton on u = log t, bracketed in [log t0, log t_hi] where s(t_hi) <= level.
    lo = np.full_like(level, np.log(t0))
    hi = np.log(np.maximum(t0, (c * (1 + abs(beta) * t0**r) / level) ** (1 / a)))
    u = np.clip(np.log((c / level) ** (1 / a)), lo, hi)
    log_level = np.log(level)
    for _ in range(_NEWTON_STEPS):
        t = np.exp(u)
        phi = np.log(params.s(t)) - log_level
        lo = np.where(phi > 0, u, lo)
        hi = np.where(phi < 0, u, hi)
        slope = -(a + (a - r) * beta * t**r) / (1 + beta * t**r)
        step = u - phi / slope
        bisect = 0.5 * (lo + hi)
        u_new = np.where((step > lo) & (step < hi), step, bisect)
        if np.all(np.abs(u_new - u) <= 4e-16 * np.maximum(1.0, np.abs(u))):
            u = u_new
            break
        u = u_new
    return np.exp(u)


def quantile(params: SecondOrderTail, u: np.ndarray | float) -> np.ndarray | float:
    """Inverse of `tail_cdf` on (0, 1)."""
    u_arr = np.asarray(u, dtype=float)
    if np.any((u_arr <= 0) | (u_arr >= 1)):
        raise ValueError("quantile requires 0 < u < 1")
    t0, p = params.t0, params.p
    tail0 = params.tail_total_base(t0)
    left_mass = (1 - p) * tail0
    right_start = 1.0 - p * tail0

    out = np.empty_like(u_arr)
    left = u_arr <= left_mass
    right = u_arr >= right_start
    mid = ~(left | right)
    if np.any(left):
        out[left] = -_inverse_s(params, u_arr[left] / (1 - p))
    if np.any(right):
        out[right] = _inverse_s(params, (1.0 - u_arr[right]) / p)
    if np.any(mid):
        out[mid] = params.body.ppf(u_arr[mid] - left_mass)
    out = out + params.center
    return out if out.ndim else float(out)


def sample_from(params: SecondOrderTail, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw n values by inverse transform from an existing Generator."""
    u = rng.random(n)
    u[u == 0.0] = np.nextafter(0.0, 1.0)
    return np.asarray(quantile(params, u))


def sample(params: SecondOrderTail, n: int, seed: int) -> np.ndarray:
    """n i.i.d. draws of Z; deterministic per seed."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}.")
    return sample_from(params, n, np.random.default_rng(seed))


def aux_A(params: SecondOrderTail, t: np.ndarray | float) -> np.ndarray | float:
    """
    Second-order auxiliary function A(t) = rho beta t^rho / (1 + beta t^rho), t >= t0.

    With this A the first second-order limit holds with equality for all t >= t0
    and x >= t0 / t. A is identically 0 for the pure power law (beta = 0 or rho = 0).
    """
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < params.t0):
        raise ValueError(f"aux_A is defined for t >= t0 = {params.t0}")
    if params.beta == 0 or params.rho == 0:
        out = np.zeros_like(t_arr)
    else:
        bt = params.beta * t_arr**params.rho
        out = params.rho * bt / (1 + bt)
    return out if out.ndim else float(out)


def tail_q(params: SecondOrderTail) -> float:
    """Constant q of the tail-balance limit; (1-F(t))/(1-F(t)+F(-t)) = p exactly beyond t0."""
    return 0.0


def stable_c(params: SecondOrderTail) -> float:
    """The constant c entering h_alpha: c for rho < 0, 1 for rho = 0 (a_n = U(n) absorbs it)."""
    return params.c if params.rho < 0 else 1.0


def norming_a(params: SecondOrderTail, n: int) -> float:
    """a_n = n^(1/alpha) for rho < 0; U(n), the generalized inverse of 1/tail_total, for rho = 0."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}.")
    if params.rho < 0 or n == 1:
        return float(n) ** (1.0 / params.alpha)
    target = 1.0 / n
    lo, hi = 0.0, max(params.t0, 1.0)
    while tail_total(params, hi) > target:
        lo, hi = hi, 2 * hi
    # tail_total is continuous and non-increasing on [lo, hi].
    return float(brentq(lambda x: tail_total(params, x) - target, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps))


def _power_integral(exponent: float, x0: float) -> float:
    """int_{x0}^1 x^exponent dx."""
    if abs(exponent + 1) < 1e-14:
        return -np.log(x0)
    return (1 - x0 ** (exponent + 1)) / (exponent + 1)


def _body_antisymmetric(params: SecondOrderTail, y: float) -> float:
    """D(y) = 1 - F(y) - F(-y) in base coordinates (location 0 for alpha <= 1)."""
    return float(tail_sf(params, y)) - float(tail_cdf(params, -y))


def norming_b(params: SecondOrderTail, n: int, *, tol: float = 1e-11) -> float:
    """
    Centering b_n.

    alpha < 1: int_0^1 (n D(a_n x) - c (2p-1) x^-alpha) dx with D(y) = 1 - F(y) - F(-y).
    alpha = 1: int_0^inf n D(a_n x) cos x dx.
    1 < alpha < 2: 0.

    Beyond x0 = t0 / a_n the integrand is a closed-form power (or an oscillatory
    power integral handed to QAWF); only the body piece needs adaptive quadrature.

    Raises:
        QuadratureError: If a quadrature piece does not converge
    """
    a = params.alpha
    if a > 1:
        return 0.0
    an = norming_a(params, n)
    c_eff = stable_c(params)
    skew = 2 * params.p - 1
    x0 = params.t0 / an

    if a < 1:
        if x0 >= 1:
            body, _ = integrate(lambda x: n * _body_antisymmetric(params, an * x), 0.0, 1.0, tol=tol)
            return body - c_eff * skew / (1 - a)
        tail = n * skew * params.c * an ** (-a) * (
            _power_integral(-a, x0) + params.beta * an**params.rho * _power_integral(params.rho - a, x0)
        )
        tail -= c_eff * skew * _power_integral(-a, x0)
        body, _ = integrate(lambda y: _body_antisymmetric(params, y), 0.0, params.t0, tol=tol)
        body = n / an * body - c_eff * skew * x0 ** (1 - a) / (1 - a)
        return float(tail + body)

    # alpha == 1
    body, _ = integrate(
        lambda y: _body_antisymmetric(params, y), 0.0, params.t0, weight="cos", wvar=1.0 / an, tol=tol
    )
    total = n / an * body
    if skew != 0:
        total += n * skew * params.c / an * (-sici(x0)[1])
        if params.beta != 0:
            oscill, _ = integrate(
                lambda x: x ** (params.rho - 1), x0, np.inf, weight="cos", wvar=1.0, tol=tol
            )
            total += n * skew * params.c * params.beta * an ** (params.rho - 1) * oscill
    return float(total)


def char_fn_Z(
    params: SecondOrderTail, t: float, *, beyond: float | None = None, tol: float = 1e-12
) -> complex:
    """
    E[exp(itZ)], or E[exp(itZ); |Z - center| > beyond] when `beyond` is given.

    Tails use QAWF on the closed-form tail density; the body is integrated with
    QAWO. `beyond` must be at least t0 so the event lies in the tails.
    """
    loc = params.center
    if beyond is not None and beyond < params.t0:
        raise ValueError(f"beyond={beyond} must be at least t0 = {params.t0}")
    if t == 0:
        if beyond is None:
            return 1.0 + 0j
        return complex(tail_mass_beyond(params, beyond))

    w = abs(t)
    start = params.t0 if beyond is None else beyond
    re, _ = integrate(lambda y: float(params.g(y)), start, np.inf, weight="cos", wvar=w, tol=tol)
    im, _ = integrate(lambda y: float(params.g(y)), start, np.inf, weight="sin", wvar=w, tol=tol)
    # e^{ity} over the right tail, e^{-ity} over the mirrored left tail.
    value = complex(re, (2 * params.p - 1) * im)
    if beyond is None:
        body = params.body
        for x0, x1 in zip(body.xs[:-1], body.xs[1:]):
            if x1 <= x0:
                continue
            re, _ = integrate(lambda y: float(body.pdf(y)), x0, x1, weight="cos", wvar=w, tol=tol)
            im, _ = integrate(lambda y: float(body.pdf(y)), x0, x1, weight="sin", wvar=w, tol=tol)
            value += complex(re, im)
    if t < 0:
        value = value.conjugate()
    return complex(np.exp(1j * t * loc) * value)


def tail_mass_beyond(params: SecondOrderTail, threshold: float) -> float:
    """P[|Z - center| > threshold] = s(threshold) for threshold >= t0."""
    if threshold < params.t0:
        raise ValueError(f"threshold={threshold} must be at least t0 = {params.t0}")
    return params.tail_total_base(threshold)


class TailSelfTest(BaseModel):
    """Numeric self-check of the family: exactness of the second-order limit and its constants."""

    max_relative_residual: float
    A_sign: int
    q: float
    q_sign: int
    c: float
    mean: float | None


def self_test(
    params: SecondOrderTail, ts: tuple[float, ...] = (10.0, 1e2, 1e4), xs: tuple[float, ...] = (0.5, 2.0, 5.0)
) -> TailSelfTest:
    """Evaluate the first second-order limit at finite (t, x) and report the tail constants."""
    worst = 0.0
    for t in ts:
        t = max(t, params.t0 / min(xs))
        A = float(aux_A(params, t))
        for x in xs:
            ratio = params.tail_total_base(t * x) / params.tail_total_base(t)
            if A == 0:
                residual = abs(ratio - x ** (-params.alpha))
            else:
                lhs = (ratio - x ** (-params.alpha)) / A
                rhs = x ** (-params.alpha) * (
                    np.log(x) if params.rho == 0 else (x**params.rho - 1) / params.rho
                )
                residual = abs(lhs - rhs) / max(abs(rhs), 1e-300)
            worst = max(worst, residual)
    A_far = float(aux_A(params, max(params.t0, 1e3)))
    q = tail_q(params)
    return TailSelfTest(
        max_relative_residual=worst,
        A_sign=int(np.sign(A_far)),
        q=q,
        q_sign=int(np.sign(q)),
        c=params.c,
        mean=params.mean_base + params.center if params.alpha > 1 else None,
    )
