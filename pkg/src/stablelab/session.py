"""Ambient experiment sessions: one executor and one trajectory cache shared by verification calls."""

import threading
from contextvars import ContextVar, Token
from logging import getLogger
from typing import Any, Callable, Hashable, Self, Sequence

from stablelab.ensemble import DirectionVector, RadialFKEnsemble, TrajectoryBatch, sample_walks
from stablelab.executors import AnyExecutorConfig, Serial

logger = getLogger(__name__)

# The ambient session for the current context. Set by `with session:` and read
# by verification operations, which never take a session parameter.
_current_session: ContextVar["ExperimentSession | None"] = ContextVar(
    "stablelab_current_session", default=None
)


def current_session() -> "ExperimentSession | None":
    """The session governing the current context, if any."""
    return _current_session.get()


def active_session() -> "ExperimentSession":
    """The ambient session, or a fresh serial one when none is active."""
    return _current_session.get() or ExperimentSession()


class ExperimentSession:
    """
    Executor choice plus a cache of simulated walks, made ambient with `with`:

        with ExperimentSession(executor=Threads(workers=8)) as session:
            joint_cf_gap(config)   # simulates
            llt_check(config)      # reuses the same walks

    Cached batches are keyed by (ensemble fingerprint, x0, n_list, replicas,
    seed, batch_size) and are never mutated after insertion, so concurrent readers
    are safe. Scopes nest; leaving the outermost scope keeps the cache, so a
    session object can be re-entered.
    """

    def __init__(self, executor: AnyExecutorConfig | None = None, batch_size: int = 10_000):
        if batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {batch_size}.")
        self.executor = executor or Serial()
        self.batch_size = batch_size
        self._cache: dict[tuple, TrajectoryBatch] = {}
        self._memo: dict[Hashable, Any] = {}
        self._lock = threading.Lock()
        # Stack because scopes can nest and tokens must be reset in reverse order.
        self._scopes: list[Token] = []

    def __enter__(self) -> Self:
        self._scopes.append(_current_session.set(self))
        return self

    def __exit__(self, exc_type, exc_val, exc_tb) -> None:
        _current_session.reset(self._scopes.pop())

    def memo(self, key: Hashable, build: Callable[[], Any]) -> Any:
        """A per-session memo for derived references (stationary measures, stable tables)."""
        with self._lock:
            if key in self._memo:
                return self._memo[key]
        value = build()
        with self._lock:
            return self._memo.setdefault(key, value)

    @property
    def cached_batches(self) -> int:
        return len(self._cache)

    def walks(
        self,
        e: RadialFKEnsemble,
        x0: DirectionVector,
        n_list: Sequence[int],
        replicas: int,
        seed: int,
    ) -> TrajectoryBatch:
        """Simulated walks for these inputs, from the cache when an identical request was made."""
        key = (
            e.fingerprint,
            x0.coords.tobytes(),
            tuple(sorted(set(int(n) for n in n_list))),
            replicas,
            seed,
            self.batch_size,
        )
        with self._lock:
            cached = self._cache.get(key)
        if cached is not None:
            logger.debug(f"Trajectory cache hit for n_list={key[2]}")
            return cached
        batch = sample_walks(
            e, x0, n_list, replicas, seed, batch_size=self.batch_size, executor=self.executor
        )
        with self._lock:
            return self._cache.setdefault(key, batch)
