"""
Parallel execution helpers.

Work items are processed on a thread pool and results are returned in input
order, so output never depends on scheduling.
"""

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

from utils.logging_utils import get_logger

logger = get_logger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def ordered_map(
    func: Callable[[T], R],
    items: Iterable[T],
    workers: int = 1,
    label: Optional[str] = None,
) -> List[R]:
    """
    Apply func to every item, in parallel when workers > 1.

    Args:
        func: Function of one item
        items: Work items
        workers (int): Thread count; 1 runs inline
        label (str, optional): Name used in progress log messages

    Returns:
        list: Results in the order of `items`; the first exception raised by
        any item propagates
    """
    items = list(items)
    if label:
        logger.debug(f"Running {label} on {len(items)} item(s) with {workers} worker(s)")
    if workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(func, items))
