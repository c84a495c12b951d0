from typing import Any, Callable

from stablelab.executors import AnyExecutorConfig, BatchExecutionError, Serial


class SerialExecutor:
    """Executor that runs every batch inline on the calling thread."""

    @staticmethod
    def run(config: AnyExecutorConfig, fn: Callable[[int], Any], n_batches: int) -> list[Any]:
        if not isinstance(config, Serial):
            raise TypeError(f"SerialExecutor requires Serial config, got {type(config)}")
        results = []
        for index in range(n_batches):
            try:
                results.append(fn(index))
            except Exception as e:
                raise BatchExecutionError(index, e) from e
        return results
