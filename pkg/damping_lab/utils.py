#
# Copyright Elasticsearch B.V. and/or licensed to Elasticsearch B.V. under one
# or more contributor license agreements. Licensed under the Elastic License 2.0;
# you may not use this file except in compliance with the Elastic License 2.0.
#
import asyncio
import functools
from datetime import datetime, timezone

from damping_lab.logger import logger

DEFAULT_MAX_CONCURRENCY = 4


def iso_utc(when=None):
    if when is None:
        when = datetime.now(timezone.utc)
    return when.isoformat()


class TaskPool:
    """Runs coroutines with at most `max_concurrency` of them in flight.

    - `max_concurrency`: tasks allowed to run at once, default: 4
    - `results_callback`: when provided, synchronous function called with the result of each task.

    A failed task never reaches the callbacks. Its exception is kept and
    raised again by the next `put` and by `join`, once every task is done.
    """

    def __init__(self, max_concurrency=DEFAULT_MAX_CONCURRENCY, results_callback=None):
        self.max_concurrency = max_concurrency
        self.results_callback = results_callback
        self.tasks = set()
        self.failures = []
        self._slots = asyncio.Semaphore(max_concurrency)

    def __len__(self):
        return len(self.tasks)

    def _raise_failure(self):
        if self.failures:
            raise self.failures[0]

    def _done(self, task, result_callback=None):
        self.tasks.discard(task)
        self._slots.release()
        if task.cancelled():
            return
        error = task.exception()
        if error is not None:
            logger.error(f"Task failed: {error!r}")
            self.failures.append(error)
            return
        try:
            for callback in (result_callback, self.results_callback):
                if callback is not None:
                    callback(task.result())
        except Exception as e:
            logger.error(f"Result callback failed: {e!r}")
            self.failures.append(e)

    async def put(self, coroutine, result_callback=None):
        """Starts `coroutine()` as soon as a slot is free.

        If provided, `result_callback` is called with the task's result.
        """
        self._raise_failure()
        await self._slots.acquire()
        if self.failures:
            self._slots.release()
            self._raise_failure()
        task = asyncio.create_task(coroutine())
        self.tasks.add(task)
        task.add_done_callback(functools.partial(self._done, result_callback=result_callback))
        return task

    async def join(self):
        """Waits for every task, then raises the first failure if any."""
        if self.tasks:
            await asyncio.gather(*self.tasks, return_exceptions=True)
        self._raise_failure()

    def cancel(self):
        for task in self.tasks:
            task.cancel()


async def gather_blocking(func, items, max_concurrency=DEFAULT_MAX_CONCURRENCY):
    """Runs the blocking `func` on every item in the default executor.

    Results come back in the order of `items`, whatever the completion order.
    """
    loop = asyncio.get_running_loop()
    results = [None] * len(items)

    def _store(index, value):
        results[index] = value

    async def _one(index, item):
        return index, await loop.run_in_executor(None, func, item)

    runner = TaskPool(
        max_concurrency=max(1, max_concurrency),
        results_callback=lambda pair: _store(*pair),
    )
    try:
        for index, item in enumerate(items):
            await runner.put(functools.partial(_one, index, item))
        await runner.join()
    except Exception:
        runner.cancel()
        raise
    return results


def run_blocking(func, items, max_concurrency=DEFAULT_MAX_CONCURRENCY):
    """Synchronous front for `gather_blocking`.

    With `max_concurrency` of 1 the items are processed inline, which keeps
    single-threaded runs free of any event loop.
    """
    items = list(items)
    if max_concurrency <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    logger.debug(f"Running {len(items)} tasks with concurrency {max_concurrency}")
    try:
        asyncio.get_running_loop()
    except RuntimeError:
        pass
    else:
        # already inside a loop (e.g. async tests): stay synchronous
        return [func(item) for item in items]
    loop = asyncio.new_event_loop()
    try:
        return loop.run_until_complete(
            gather_blocking(func, items, max_concurrency=max_concurrency)
        )
    finally:
        loop.close()
