"""Worker-count plumbing shared by the FFT call sites.

The CLI sets this once from ``--threads`` or the DECNORM_THREADS environment
variable; library code never spawns processes, it only forwards the worker
count to scipy.fft.
"""

from __future__ import annotations

import os

_workers: int | None = None


def set_threads(n: int | None) -> None:
    global _workers
    if n is not None and n < 1:
        raise ValueError("thread count must be >= 1")
    _workers = n


def fft_workers() -> int:
    if _workers is not None:
        return _workers
    env = os.environ.get("DECNORM_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1
