import os
from concurrent.futures import ThreadPoolExecutor

ENV_THREADS = "COALITION_FORGE_THREADS"


def worker_count() -> int:
    """Worker cap from ``COALITION_FORGE_THREADS`` (unset or 0 means one per CPU)."""
    raw = os.environ.get(ENV_THREADS, "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        n = 0
    return n if n > 0 else (os.cpu_count() or 1)


def parallel_map(fn, items):
    """``list(map(fn, items))``, fanned out over a thread pool; order preserved."""
    items = list(items)
    n = min(worker_count(), len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
