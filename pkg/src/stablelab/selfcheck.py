import functools
from typing import Callable

from stablelab.runtime import register_check


def selfcheck(
    module: str, name: str | None = None
) -> Callable[[Callable[[], str | None]], Callable[[], str | None]]:
    """
    Decorator that registers a zero-argument invariant check for `stablelab selftest`.

    The check passes by returning (optionally a short detail string) and fails by
    raising AssertionError. Applying the decorator has no side effects beyond
    registering the check; the function itself stays directly callable, e.g.
    from pytest.

        @selfcheck(module="geometry")
        def cocycle_is_additive() -> str:
            ...
            assert worst < 1e-12, f"worst defect {worst:.2e}"
            return f"worst defect {worst:.2e}"
    """

    def decorator(fn: Callable[[], str | None]) -> Callable[[], str | None]:
        @functools.wraps(fn)
        def wrapper() -> str | None:
            return fn()

        register_check(name or fn.__name__, module, wrapper)
        return wrapper

    return decorator
