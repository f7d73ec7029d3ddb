"""Small shared helpers."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor


def map_ordered(fn, count: int, jobs: int = 1) -> list:
    """Apply fn(i) for i in range(count), collecting results in index order.

    With jobs > 1 the calls run on a thread pool; each call must be
    self-contained (seeded per index) so the output is identical to the
    sequential run.
    """
    if jobs <= 1 or count <= 1:
        return [fn(i) for i in range(count)]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, range(count)))
