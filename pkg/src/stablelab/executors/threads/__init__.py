import asyncio
from logging import getLogger
from typing import Any, Callable

from stablelab.executors import AnyExecutorConfig, BatchExecutionError, Threads

logger = getLogger(__name__)


class ThreadExecutor:
    """Executor that fans batches out to worker threads.

    Each batch runs via `asyncio.to_thread`, bounded by a semaphore of
    `config.workers`. Results are gathered in batch-index order, so the output
    is identical to the serial executor's for the same batch function.
    """

    @staticmethod
    def run(config: AnyExecutorConfig, fn: Callable[[int], Any], n_batches: int) -> list[Any]:
        if not isinstance(config, Threads):
            raise TypeError(f"ThreadExecutor requires Threads config, got {type(config)}")
        return asyncio.run(ThreadExecutor._gather(config.workers, fn, n_batches))

    @staticmethod
    async def _gather(workers: int, fn: Callable[[int], Any], n_batches: int) -> list[Any]:
        semaphore = asyncio.Semaphore(workers)

        async def one(index: int) -> Any:
            async with semaphore:
                return await asyncio.to_thread(fn, index)

        logger.info(f"Running {n_batches} batch(es) on up to {workers} thread(s)")
        outcomes = await asyncio.gather(
            *(one(index) for index in range(n_batches)), return_exceptions=True
        )
        for index, outcome in enumerate(outcomes):
            if isinstance(outcome, BaseException):
                raise BatchExecutionError(index, outcome) from outcome
        return list(outcomes)
