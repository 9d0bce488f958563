"""
Worker pool for independent items.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

from tqdm import tqdm

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def map_items(
    func: Callable[[T], R],
    items: Iterable[T],
    threads: int = 1,
    progress: bool = False,
    desc: Optional[str] = None,
) -> List[R]:
    """
    Apply ``func`` to every item and return results in input order.

    Args:
        func: Function of one item; must not share mutable state across items
        items: Work items
        threads: Worker count; 1 or less runs in the calling thread
        progress: Show a progress bar
        desc: Progress bar label

    Returns:
        List of results, ordered like ``items``
    """
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [func(item) for item in tqdm(items, desc=desc, disable=not progress)]
    logger.debug("Running %d items on %d threads", len(items), threads)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(tqdm(pool.map(func, items), total=len(items), desc=desc, disable=not progress))
