"""Shared runtime machinery: executor registry, seed resolution, and the self-check registry."""

import os
import time
from dataclasses import dataclass
from logging import getLogger
from typing import Any, Callable

from stablelab.executors import AnyExecutorConfig, Executor, ExecutorType, Serial
from stablelab.executors.serial import SerialExecutor
from stablelab.executors.threads import ThreadExecutor

logger = getLogger(__name__)

# Registry mapping executor types to their implementations
EXECUTOR_REGISTRY: dict[ExecutorType, type[Executor]] = {
    ExecutorType.SERIAL: SerialExecutor,
    ExecutorType.THREADS: ThreadExecutor,
}

SEED_ENV_VAR = "STABLELAB_SEED"

SEED_MAX = 2**64 - 1


def run_batches(
    fn: Callable[[int], Any], n_batches: int, executor: AnyExecutorConfig | None = None
) -> list[Any]:
    """Evaluate `fn` over batch indices with the configured executor; results in index order."""
    config = executor or Serial()
    return EXECUTOR_REGISTRY[config.type].run(config, fn, n_batches)


def _parse_seed(raw: str | int, origin: str) -> int:
    try:
        seed = int(str(raw).strip(), 0)
    except ValueError:
        raise ValueError(f"Unrecognized seed from {origin}: {raw!r}. Expected an integer.") from None
    if not 0 <= seed <= SEED_MAX:
        raise ValueError(f"Seed from {origin} must be an unsigned 64-bit integer, got {seed}.")
    return seed


def resolve_seed(flag: int | str | None, config_seed: int | None) -> tuple[int, str]:
    """
    Decide which seed a run uses and where it came from.

    Precedence: the explicit `--seed` flag, then the STABLELAB_SEED environment
    variable, then the experiment file's `seed`, then 0. The returned source
    ("flag", "env", "config", "default") is recorded in the run manifest.

    Raises:
        ValueError: If the flag or STABLELAB_SEED holds something that is not a u64
    """
    if flag is not None:
        return _parse_seed(flag, "--seed"), "flag"
    env_value = os.environ.get(SEED_ENV_VAR)
    if env_value is not None:
        return _parse_seed(env_value, SEED_ENV_VAR), "env"
    if config_seed is not None:
        return _parse_seed(config_seed, "config"), "config"
    return 0, "default"


@dataclass
class RegisteredCheck:
    name: str
    module: str
    fn: Callable[[], str | None]


# Every @selfcheck-decorated invariant, in registration order. Consumed by
# run_all_checks() / the `stablelab selftest` CLI.
_REGISTERED_CHECKS: list[RegisteredCheck] = []


def register_check(name: str, module: str, fn: Callable[[], str | None]) -> None:
    """Record a self-check; re-registering the same name replaces the earlier entry."""
    for i, existing in enumerate(_REGISTERED_CHECKS):
        if existing.name == name:
            _REGISTERED_CHECKS[i] = RegisteredCheck(name, module, fn)
            return
    _REGISTERED_CHECKS.append(RegisteredCheck(name, module, fn))


def registered_checks() -> list[RegisteredCheck]:
    return list(_REGISTERED_CHECKS)


@dataclass
class CheckResult:
    """Outcome of running one registered invariant check."""

    name: str
    module: str
    status: str  # "pass" | "fail" | "error"
    detail: str = ""
    seconds: float = 0.0


def run_all_checks(modules: set[str] | None = None) -> list[CheckResult]:
    """
    Run every registered self-check (optionally restricted to some modules).

    A check passes by returning normally (its return value, if any, is the
    detail column); an AssertionError is a "fail", anything else an "error".
    One check failing doesn't stop the rest, so callers can surface all of
    them at once.
    """
    results: list[CheckResult] = []
    for check in _REGISTERED_CHECKS:
        if modules is not None and check.module not in modules:
            continue
        start = time.perf_counter()
        try:
            detail = check.fn() or ""
            status = "pass"
        except AssertionError as e:
            status, detail = "fail", str(e) or "assertion failed"
        except Exception as e:
            status, detail = "error", f"{type(e).__name__}: {e}"
        elapsed = time.perf_counter() - start
        logger.info(f"Check {check.name}: {status} ({elapsed:.2f}s)")
        results.append(CheckResult(check.name, check.module, status, detail, elapsed))
    return results
