"""Seed derivation and the optional thread pool shared by the pipeline."""

import hashlib
import os
from concurrent.futures import ThreadPoolExecutor

THREADS_ENV = "VINEDEP_THREADS"


def derive_seed(seed, label, index=0) -> int:
    """Child seed = blake2b(seed, label, index), truncated to 63 bits.

    Independent of the Python hash seed, so results are stable across runs.
    """
    h = hashlib.blake2b(digest_size=8)
    h.update(f"{int(seed)}|{label}|{int(index)}".encode())
    return int.from_bytes(h.digest(), "big") >> 1


def max_workers() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def parallel_map(fn, items):
    """``list(map(fn, items))``, threaded when VINEDEP_THREADS > 1.

    Result order always follows ``items``.
    """
    items = list(items)
    workers = min(max_workers(), len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
