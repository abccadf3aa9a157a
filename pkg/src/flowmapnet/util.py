"""Small shared helpers: thread-count resolution, atomic file writes, chunking."""

from __future__ import annotations

import os
import tempfile
from contextlib import contextmanager

THREADS_ENV = "FLOWMAP_THREADS"


def resolve_threads(threads: int | None = None) -> int:
    """Pick a worker count: explicit value, FLOWMAP_THREADS, else machine parallelism."""
    if threads is not None:
        if threads < 1:
            raise ValueError(f"thread count must be >= 1, got {threads}")
        return threads
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


@contextmanager
def atomic_open(path: str | os.PathLike, mode: str = "wb"):
    """Write to a temp file in the target directory, then rename into place.

    Interrupted runs never leave a truncated artifact at `path`.
    """
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=os.path.basename(path) + ".tmp")
    try:
        with os.fdopen(fd, mode) as fh:
            yield fh
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def atomic_write_bytes(path, data: bytes) -> None:
    with atomic_open(path, "wb") as fh:
        fh.write(data)


def atomic_write_text(path, text: str) -> None:
    with atomic_open(path, "w") as fh:
        fh.write(text)


def chunk_ranges(n: int, parts: int) -> list[tuple[int, int]]:
    """Split range(n) into at most `parts` contiguous near-equal slices."""
    parts = max(1, min(parts, n)) if n > 0 else 1
    base, extra = divmod(n, parts)
    ranges = []
    lo = 0
    for i in range(parts):
        hi = lo + base + (1 if i < extra else 0)
        ranges.append((lo, hi))
        lo = hi
    return [r for r in ranges if r[0] < r[1]] or [(0, 0)]
