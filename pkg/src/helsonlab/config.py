"""Process-wide knobs read from the environment."""

from __future__ import annotations

import os

from .errors import ResourceError

MEMORY_CAP_ENV = "HELSONLAB_MEMORY_CAP"
WORKERS_ENV = "HELSONLAB_WORKERS"

DEFAULT_MEMORY_CAP = 2 * 1024**3


def memory_cap() -> int:
    """Byte budget for a single table or sieve allocation."""
    raw = os.environ.get(MEMORY_CAP_ENV)
    return int(float(raw)) if raw else DEFAULT_MEMORY_CAP


def worker_count(requested: int | None = None) -> int:
    """An explicit request wins, then the environment, then a single worker."""
    if requested is not None:
        return max(1, int(requested))
    raw = os.environ.get(WORKERS_ENV)
    return max(1, int(raw)) if raw else 1


def check_memory(nbytes: float, what: str) -> None:
    cap = memory_cap()
    if nbytes > cap:
        raise ResourceError(
            f"{what} needs ~{nbytes / 2**20:.0f} MiB, above the cap of "
            f"{cap / 2**20:.0f} MiB (set {MEMORY_CAP_ENV} to raise it)"
        )
