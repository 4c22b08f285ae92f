"""Counter-based seed derivation.

Every random stream is addressed by ``(master_seed, stream, index)`` so the
values drawn for trial ``k`` never depend on how trials are scheduled.
"""
from __future__ import annotations

import zlib
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

import numpy as np

T = TypeVar("T")

SeedLike = int | np.random.SeedSequence


def _stream_id(stream: str | int) -> int:
    if isinstance(stream, str):
        return zlib.crc32(stream.encode("utf-8"))
    return int(stream)


def derive(master: SeedLike, *keys: str | int) -> np.random.SeedSequence:
    """SeedSequence for the stream addressed by ``keys`` under ``master``."""
    if isinstance(master, np.random.SeedSequence):
        base_entropy = master.entropy
        base_key = tuple(master.spawn_key)
    else:
        if int(master) < 0:
            raise ValueError("seed must be non-negative")
        base_entropy = int(master)
        base_key = ()
    return np.random.SeedSequence(
        base_entropy, spawn_key=base_key + tuple(_stream_id(k) for k in keys)
    )


def rng(master: SeedLike, *keys: str | int) -> np.random.Generator:
    return np.random.default_rng(derive(master, *keys))


def map_ordered(fn: Callable[[int], T], count: int, threads: int = 1) -> list[T]:
    """Evaluate ``fn(0..count-1)``; results are returned in index order."""
    if threads <= 1 or count <= 1:
        return [fn(k) for k in range(count)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(count)))


def mean_and_se(values: Sequence[float] | np.ndarray) -> tuple[float, float]:
    """Sample mean and standard error (pairwise summation via numpy)."""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise ValueError("no samples")
    mean = float(np.sum(arr) / arr.size)
    if arr.size == 1:
        return mean, 0.0
    var = float(np.sum((arr - mean) ** 2) / (arr.size - 1))
    return mean, float(np.sqrt(var / arr.size))
