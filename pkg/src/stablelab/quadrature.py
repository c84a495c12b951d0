"""Thin wrapper over QUADPACK (scipy.integrate.quad) with structured failure reporting."""

from logging import getLogger
from typing import Callable, Literal

import numpy as np
from scipy.integrate import quad

from stablelab.errors import QuadratureError

logger = getLogger(__name__)

DEFAULT_TOL = 1e-11

# Warnings whose error estimate stays within this multiple of the requested
# tolerance are logged, not raised.
_FAILURE_FACTOR = 1e3
_RETRY_FACTOR = 4


def integrate(
    func: Callable[[float], float],
    a: float,
    b: float,
    *,
    tol: float = DEFAULT_TOL,
    weight: Literal["cos", "sin"] | None = None,
    wvar: float | None = None,
    limit: int = 2000,
) -> tuple[float, float]:
    """
    Integrate a real function on [a, b] and return (value, abserr).

    With `weight="cos"`/`"sin"` and `wvar=omega` the integrand is multiplied by
    cos(omega x)/sin(omega x) and QUADPACK's oscillatory rules are used (QAWO on a
    finite range, QAWF when b is infinite).

    Raises:
        QuadratureError: QUADPACK flagged a problem and the error estimate stays far
            above the requested tolerance after one retry with larger limits
    """
    kwargs: dict = {"epsabs": tol, "epsrel": tol, "full_output": 1}
    if weight is not None:
        if wvar is None:
            raise ValueError("Oscillatory weights need a frequency (wvar).")
        kwargs.update(weight=weight, wvar=wvar)
        if np.isinf(b):
            kwargs.pop("epsrel")
            kwargs["limlst"] = 200
        else:
            kwargs["limit"] = limit
    else:
        kwargs["limit"] = limit

    res = quad(func, a, b, **kwargs)
    if _far_off(res, tol):
        logger.debug(f"quad on [{a:g}, {b:g}] missed tolerance, retrying with {_RETRY_FACTOR}x limits")
        for key in ("limit", "limlst"):
            if key in kwargs:
                kwargs[key] *= _RETRY_FACTOR
        res = quad(func, a, b, **kwargs)
    value, abserr = float(res[0]), float(res[1])
    if _far_off(res, tol):
        raise QuadratureError(
            f"quad on [{a:g}, {b:g}] (weight={weight}) did not converge: {res[3].strip()}",
            abserr,
        )
    if len(res) > 3 and isinstance(res[3], str):
        logger.debug(f"quad on [{a:g}, {b:g}] accepted with warning: abserr={abserr:.2e}")
    return value, abserr


def _far_off(res: tuple, tol: float) -> bool:
    """QUADPACK warned and the error estimate is far above the tolerance (or the value is not finite)."""
    if len(res) <= 3 or not isinstance(res[3], str):
        return False
    value, abserr = float(res[0]), float(res[1])
    return not np.isfinite(value) or abserr > _FAILURE_FACTOR * max(tol, tol * abs(value))
