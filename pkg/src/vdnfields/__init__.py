"""Desk-scale SDF volume rendering with view-dependence normalization."""

import os

# Single-threaded BLAS wins on this workload's small-K matmuls, and keeps
# results reproducible regardless of core count. Must happen before numpy
# spins up its threadpool; threadpoolctl below covers the already-imported case.
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")

try:
    import ctypes

    _libc = ctypes.CDLL("libc.so.6")
    _libc.mallopt(-3, 1 << 30)  # M_MMAP_THRESHOLD: keep big blocks reusable
    _libc.mallopt(-1, 1 << 30)  # M_TRIM_THRESHOLD: don't hand heap back per-step
except Exception:  # non-glibc platforms
    pass

try:
    import threadpoolctl

    threadpoolctl.threadpool_limits(1, "blas")
except Exception:
    pass

__version__ = "0.1.0"
