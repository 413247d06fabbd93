"""Contiguous replica sharding over threads (compiled kernels release the GIL)."""
from concurrent.futures import ThreadPoolExecutor


def shards(n: int, workers: int) -> list[tuple[int, int]]:
    """Split ``range(n)`` into at most ``workers`` contiguous, nonempty ranges."""
    workers = max(1, min(int(workers), n)) if n > 0 else 1
    base, extra = divmod(n, workers)
    out, a = [], 0
    for w in range(workers):
        b = a + base + (1 if w < extra else 0)
        if b > a:
            out.append((a, b))
        a = b
    return out


def run_sharded(task, n: int, workers: int = 1) -> None:
    """Call ``task(a, b)`` on every shard of ``range(n)``.

    Each replica writes only its own output slot, so the merged result does
    not depend on ``workers`` or on scheduling.
    """
    parts = shards(n, workers)
    if len(parts) <= 1:
        for a, b in parts:
            task(a, b)
        return
    with ThreadPoolExecutor(max_workers=len(parts)) as pool:
        for fut in [pool.submit(task, a, b) for a, b in parts]:
            fut.result()
