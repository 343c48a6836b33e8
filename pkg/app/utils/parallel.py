from collections import deque
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, Iterator, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def ordered_map(fn: Callable[[T], R], items: Iterable[T], workers: int = 1, window: int = 0) -> Iterator[R]:
    """
    Map fn over items, yielding results in input order.
    With workers > 1 the work runs in a process pool with at most `window`
    items in flight (default 4 per worker), so input is never read eagerly.
    fn and items must be picklable in that case.
    """
    if workers <= 1:
        for item in items:
            yield fn(item)
        return

    window = window or workers * 4
    with ProcessPoolExecutor(max_workers=workers) as executor:
        pending = deque()
        for item in items:
            pending.append(executor.submit(fn, item))
            if len(pending) >= window:
                yield pending.popleft().result()
        while pending:
            yield pending.popleft().result()
