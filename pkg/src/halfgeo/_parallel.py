import os
from concurrent.futures import ThreadPoolExecutor


def default_jobs() -> int:
    try:
        return max(1, int(os.environ.get("HALFGEO_JOBS", "1")))
    except ValueError:
        return 1


def pmap(fn, items, jobs=None):
    """Order-preserving map; threads help because the kernels release the GIL."""
    items = list(items)
    jobs = default_jobs() if jobs is None else jobs
    if jobs <= 1 or len(items) < 2:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))
