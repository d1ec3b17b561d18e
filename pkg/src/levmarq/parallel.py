"""Fixed-size worker pool with ordered results.

Two backends are available.  ``"thread"`` dispatches onto a thread pool and
pays off for objectives that release the GIL (numpy-heavy code, I/O, native
extensions).  ``"process"`` forks worker processes that inherit the callable
by memory, so closures and lambdas work without pickling; only the
parameter vectors and the results cross process boundaries.  It is the
backend to use for pure-Python objectives and is only available where the
``fork`` start method exists.

A pool of size 1 never dispatches: work runs inline in the caller.
"""
from __future__ import annotations

import multiprocessing as mp
import os
from collections import OrderedDict
from concurrent.futures import Executor, ProcessPoolExecutor, ThreadPoolExecutor
from typing import Any, Callable, Sequence

__all__ = ["WorkerPool", "default_nproc", "NPROC_ENV"]

NPROC_ENV = "LEVMARQ_NPROC"

_BACKENDS = ("thread", "process")
# executors kept alive per process pool, one per distinct callable
_MAX_CACHED = 4

_forked_fn: Callable | None = None


def _install(fn):
    global _forked_fn
    _forked_fn = fn


def _call_installed(item):
    return _forked_fn(item)


def default_nproc() -> int:
    """Worker count from the ``LEVMARQ_NPROC`` environment variable, else 1."""
    raw = os.environ.get(NPROC_ENV)
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{NPROC_ENV} must be a positive integer, got {raw!r}")
    if n < 1:
        raise ValueError(f"{NPROC_ENV} must be a positive integer, got {raw!r}")
    return n


class WorkerPool:
    """Evaluate a callable over a sequence of inputs, preserving order.

    Parameters
    ----------
    nproc : int
        Number of workers.  ``1`` runs everything inline.
    backend : {"thread", "process"}
        Dispatch mechanism for ``nproc > 1``.

    Examples
    --------
    >>> with WorkerPool(2) as pool:
    ...     pool.map(abs, [-1, 2, -3])
    [1, 2, 3]
    """

    def __init__(self, nproc: int = 1, backend: str = "thread"):
        if int(nproc) != nproc or nproc < 1:
            raise ValueError(f"nproc must be a positive integer, got {nproc!r}")
        if backend not in _BACKENDS:
            raise ValueError(f"backend must be one of {_BACKENDS}, got {backend!r}")
        if backend == "process" and "fork" not in mp.get_all_start_methods():
            raise ValueError("process backend requires the 'fork' start method")
        self.nproc = int(nproc)
        self.backend = backend
        self._threads: ThreadPoolExecutor | None = None
        self._forked: OrderedDict[int, tuple[Callable, Executor]] = OrderedDict()

    def __repr__(self):
        return f"WorkerPool(nproc={self.nproc}, backend={self.backend!r})"

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def close(self):
        if self._threads is not None:
            self._threads.shutdown(wait=True)
            self._threads = None
        for _, ex in self._forked.values():
            ex.shutdown(wait=True)
        self._forked.clear()

    def _process_executor(self, fn) -> Executor:
        # wrappers that only decorate a callable expose it as ``pool_identity``
        # so a fresh wrapper around the same callable reuses the forked workers
        ident = getattr(fn, "pool_identity", fn)
        key = id(ident)
        hit = self._forked.get(key)
        if hit is not None and hit[0] is ident:
            self._forked.move_to_end(key)
            return hit[1]
        ex = ProcessPoolExecutor(
            max_workers=self.nproc,
            mp_context=mp.get_context("fork"),
            initializer=_install,
            initargs=(fn,),
        )
        self._forked[key] = (ident, ex)
        while len(self._forked) > _MAX_CACHED:
            _, (_, old) = self._forked.popitem(last=False)
            old.shutdown(wait=True)
        return ex

    def map(self, fn: Callable[[Any], Any], items: Sequence[Any]) -> list:
        """Return ``[fn(x) for x in items]``, computed by the workers.

        Results are assembled in input order whatever the completion order.
        Exceptions raised by ``fn`` propagate to the caller.
        """
        items = list(items)
        if self.nproc == 1 or len(items) <= 1:
            return [fn(x) for x in items]
        if self.backend == "thread":
            if self._threads is None:
                self._threads = ThreadPoolExecutor(max_workers=self.nproc)
            return list(self._threads.map(fn, items))
        ex = self._process_executor(fn)
        chunk = max(1, len(items) // (4 * self.nproc))
        return list(ex.map(_call_installed, items, chunksize=chunk))
