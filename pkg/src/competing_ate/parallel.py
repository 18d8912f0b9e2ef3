"""Order-preserving map over a process pool.

Every task carries its own index, so each one derives its own random stream
and results are collected in index order; the output does not depend on the
number of workers.
"""

from __future__ import annotations

import functools
import os
from concurrent.futures import ProcessPoolExecutor


def default_workers():
    return max(1, os.cpu_count() or 1)


def run_indexed(func, indices, workers=1, chunksize=None, **kwargs):
    """``[func(i, **kwargs) for i in indices]``, optionally on worker processes."""
    indices = list(indices)
    call = functools.partial(func, **kwargs)
    workers = int(workers or 1)
    if workers <= 1 or len(indices) <= 1:
        return [call(i) for i in indices]
    if chunksize is None:
        chunksize = max(1, len(indices) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(call, indices, chunksize=chunksize))
