"""Best-effort process tuning for replicate-heavy runs.

Repeated oracle calls allocate and free a few MB of numpy buffers each; with
glibc's default mmap threshold those pages bounce back to the kernel and
every replicate pays the page-fault cost again. Raising the thresholds keeps
the arena warm (observed ~3x on the matrix-tree oracle). No-op where glibc
is unavailable.
"""

import ctypes
import ctypes.util

_M_TRIM_THRESHOLD = -1
_M_MMAP_THRESHOLD = -3

_done = False


def tune_allocator() -> bool:
    """Raise glibc malloc thresholds so large buffers get reused. Idempotent."""
    global _done
    if _done:
        return True
    try:
        libc = ctypes.CDLL(ctypes.util.find_library("c") or "libc.so.6",
                           use_errno=True)
        keep = 1 << 30
        ok = libc.mallopt(_M_MMAP_THRESHOLD, keep) == 1
        ok = libc.mallopt(_M_TRIM_THRESHOLD, keep) == 1 and ok
        _done = bool(ok)
    except (OSError, AttributeError):
        _done = False
    return _done
