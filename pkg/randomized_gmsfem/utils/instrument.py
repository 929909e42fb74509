"""
Process-wide operation counters.

The offline/online split is only meaningful if the online stage never touches
the expensive kernels. The kernels increment these counters so that tests (and
curious users) can check that claim directly.

>>> with counting() as delta:
...     run_something()
>>> delta["eigensolve"]
0
"""
import collections
import contextlib
import threading

counters = collections.Counter()
_lock = threading.Lock()

EIGENSOLVE = "eigensolve"
FINE_ASSEMBLY = "fine_assembly"
LOCAL_SOLVE = "local_solve"


def increment(name, amount=1):
    with _lock:
        counters[name] += amount


@contextlib.contextmanager
def counting():
    """
    Yield a Counter that, on exit, holds the increments made inside the block.
    """
    with _lock:
        before = collections.Counter(counters)
    delta = collections.Counter()
    try:
        yield delta
    finally:
        with _lock:
            after = collections.Counter(counters)
        for name in set(before) | set(after):
            delta[name] = after[name] - before[name]
