from enum import Enum, auto
from typing import Any, Callable, Literal, Protocol, Self, Sequence

from pydantic import BaseModel, Field, model_validator


class ExecutorType(Enum):
    """Executor type identifiers."""

    SERIAL = auto()
    THREADS = auto()


class ExecutorConfig[T: ExecutorType](BaseModel):
    """Base class for executor configurations."""

    type: T = Field(..., description="Executor type discriminator")


class Serial(ExecutorConfig[Literal[ExecutorType.SERIAL]]):
    """Run every batch inline, in batch-index order."""

    type: Literal[ExecutorType.SERIAL] = ExecutorType.SERIAL


class Threads(ExecutorConfig[Literal[ExecutorType.THREADS]]):
    """Run batches on worker threads (numpy releases the GIL in its kernels)."""

    type: Literal[ExecutorType.THREADS] = ExecutorType.THREADS
    workers: int = Field(
        default=4,
        description="Maximum number of batches in flight at once.",
    )

    @model_validator(mode="after")
    def _validate_workers(self) -> Self:
        if self.workers < 1:
            raise ValueError(f"Threads executor requires workers >= 1, got {self.workers}.")
        return self


# Add new executor configs here as they're implemented
AnyExecutorConfig = Serial | Threads


def executor_for_threads(threads: int) -> AnyExecutorConfig:
    """The executor a `--threads N` flag selects: serial for N == 1, a pool otherwise."""
    if threads < 1:
        raise ValueError(f"--threads must be >= 1, got {threads}.")
    return Serial() if threads == 1 else Threads(workers=threads)


class BatchExecutionError(Exception):
    """A replica batch raised; carries the batch index so the failure is reproducible."""

    def __init__(self, batch_index: int, error: BaseException):
        self.batch_index = batch_index
        self.error_type = type(error).__name__
        super().__init__(f"Batch {batch_index} failed with {self.error_type}: {error}")


class Executor(Protocol):
    """Protocol that all executor implementations must follow.

    `run` evaluates `fn(i)` for every batch index and returns the results in
    index order, whatever order the batches actually finished in. That fixed
    reduction order is what makes every table independent of the thread count.
    """

    @staticmethod
    def run(config: AnyExecutorConfig, fn: Callable[[int], Any], n_batches: int) -> list[Any]:
        """
        Evaluate `fn` on batch indices 0..n_batches-1.

        Raises:
            BatchExecutionError: If any batch raised (the lowest failing index wins)
        """
        ...


def batch_bounds(total: int, batch_size: int) -> Sequence[tuple[int, int]]:
    """Fixed partition of `total` replica indices into [start, stop) batches."""
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}.")
    return [(start, min(start + batch_size, total)) for start in range(0, total, batch_size)]
