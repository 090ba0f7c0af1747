import logging
import os
import typing

from joblib import Parallel, delayed

from . import constants

logger = logging.getLogger(__name__)

T = typing.TypeVar("T")


def default_threads() -> int:
    """Returns the thread count from the CMELAB_THREADS environment variable,
    or 1 when it is unset or invalid.

    Returns:
        int: A positive thread count.
    """
    raw = os.environ.get(constants.THREADS_ENV_VAR, "")
    try:
        threads = int(raw)
    except ValueError:
        if raw:
            logger.warning("ignoring %s=%r: not an integer", constants.THREADS_ENV_VAR, raw)
        return 1
    return max(threads, 1)


def run_tasks(
    func: typing.Callable[[int], T], n_tasks: int, n_jobs: typing.Optional[int] = None
) -> typing.List[T]:
    """Runs `func(0) ... func(n_tasks - 1)` and returns the results in task
    order.

    Tasks must take every random draw from a stream keyed by their own index.
    Under that contract the output is identical for any thread count, since
    results are collected by index and not by completion time.

    Args:
        func (typing.Callable[[int], T]): The task body.
        n_tasks (int): Number of tasks.
        n_jobs (typing.Optional[int], optional): Threads. Defaults to
                                                 `default_threads()`.
    """
    n_jobs = default_threads() if n_jobs is None else max(int(n_jobs), 1)
    if n_jobs == 1 or n_tasks <= 1:
        return [func(i) for i in range(n_tasks)]
    return Parallel(n_jobs=n_jobs, backend="threading")(
        delayed(func)(i) for i in range(n_tasks)
    )
