"""Counter-based random streams and block-parallel execution.

Every block of Monte-Carlo work draws from its own Philox stream keyed by
``(seed, purpose, grid index, block index)``.  Block sizes depend only on
the experiment configuration, and results are reduced in block order, so
the output does not depend on how many workers ran the blocks.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ValidationError

__all__ = [
    "SHIFT",
    "FLOW",
    "LAP",
    "TEICH",
    "SAMPLING",
    "WORKERS_ENV",
    "block_generator",
    "block_sizes",
    "check_seed",
    "default_workers",
    "run_blocks",
]

SHIFT, FLOW, LAP, TEICH, SAMPLING = 1, 2, 3, 4, 5
WORKERS_ENV = "TEICHLD_WORKERS"
SEED_MAX = 2**64 - 1


def check_seed(seed) -> int:
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise ValidationError(f"seed must be an integer, got {seed!r}")
    seed = int(seed)
    if not 0 <= seed <= SEED_MAX:
        raise ValidationError("seed must be a 64-bit unsigned integer")
    return seed


def block_generator(seed: int, purpose: int, grid_index: int, block: int) -> np.random.Generator:
    """Philox generator for one block of work."""
    ss = np.random.SeedSequence(check_seed(seed), spawn_key=(int(purpose), int(grid_index), int(block)))
    return np.random.Generator(np.random.Philox(ss))


def block_sizes(total: int, block: int) -> list[int]:
    """Split ``total`` samples into full blocks plus a remainder."""
    if total < 0 or block < 1:
        raise ValidationError("need total >= 0 and block >= 1")
    full, rest = divmod(int(total), int(block))
    return [int(block)] * full + ([rest] if rest else [])


def default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV)
    if raw is None:
        return 1
    try:
        n = int(raw)
    except ValueError as exc:
        raise ValidationError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from exc
    if n < 1:
        raise ValidationError(f"{WORKERS_ENV} must be positive")
    return n


def run_blocks(func: Callable, tasks: Sequence | Iterable, workers: int | None = None) -> list:
    """Apply ``func`` to each task, in a process pool when ``workers > 1``.

    Results come back in task order either way.
    """
    tasks = list(tasks)
    workers = default_workers() if workers is None else int(workers)
    if workers < 1:
        raise ValidationError("workers must be positive")
    if workers == 1 or len(tasks) <= 1:
        return [func(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, tasks, chunksize=1))
