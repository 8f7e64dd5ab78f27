"""Runtime configuration.

The only tunable is the worker-pool size used by the tiled kernels.
``LOKI_THREADS`` overrides it; the default is the logical core count.
"""

import os

_ENV_VAR = "LOKI_THREADS"


def worker_threads() -> int:
    """Resolve the kernel worker-pool size (>= 1)."""
    raw = os.environ.get(_ENV_VAR, "")
    if raw.strip():
        try:
            n = int(raw)
        except ValueError:
            n = 0
        if n >= 1:
            return n
    return os.cpu_count() or 1
