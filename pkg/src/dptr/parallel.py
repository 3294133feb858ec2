"""Process-based task fan-out with order-insensitive, deterministic merging.

Tasks are (index, payload) pairs; results are returned sorted by index, so the
caller sees identical output for any worker count.
"""

from concurrent.futures import ProcessPoolExecutor


def run_indexed_tasks(fn, payloads, workers=1):
    """Apply ``fn`` to each payload, in parallel when ``workers > 1``.

    Returns ``[fn(payloads[0]), fn(payloads[1]), ...]`` in payload order
    regardless of completion order.
    """
    payloads = list(payloads)
    if workers is None or workers <= 1 or len(payloads) <= 1:
        return [fn(p) for p in payloads]
    results = [None] * len(payloads)
    with ProcessPoolExecutor(max_workers=min(workers, len(payloads))) as pool:
        futures = {pool.submit(fn, p): i for i, p in enumerate(payloads)}
        for fut, i in futures.items():
            results[i] = fut.result()
    return results


def chunk_ranges(total, n_chunks):
    """Split range(total) into at most n_chunks contiguous (start, stop) pairs."""
    n_chunks = max(1, min(n_chunks, total))
    base, extra = divmod(total, n_chunks)
    ranges = []
    start = 0
    for i in range(n_chunks):
        stop = start + base + (1 if i < extra else 0)
        ranges.append((start, stop))
        start = stop
    return ranges
