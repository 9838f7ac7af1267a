"""Deterministic low-discrepancy point sequences (Halton / Hammersley).

All sampling in the planner is index-based: the same (count, offset) always
yields the same points, so graph construction is reproducible bit-for-bit.
"""

from __future__ import annotations

from typing import Iterator


def radical_inverse(base: int, index: int) -> float:
    """Van der Corput radical inverse of ``index`` in the given base."""
    if index < 0:
        raise ValueError("index must be >= 0")
    inv = 0.0
    f = 1.0 / base
    while index > 0:
        index, digit = divmod(index, base)
        inv += digit * f
        f /= base
    return inv


def halton_2d(start_index: int = 1) -> Iterator[tuple[float, float]]:
    """Infinite 2-D Halton sequence (bases 2 and 3) from ``start_index``."""
    i = start_index
    while True:
        yield radical_inverse(2, i), radical_inverse(3, i)
        i += 1


def hammersley_2d(n: int, offset: int = 0) -> list[tuple[float, float]]:
    """2-D Hammersley point set of size n: ((i % n)/n, base-2 inverse).

    Points are emitted for i = 1..n; ``offset`` rotates the index so a seed
    can shift the set deterministically without changing its structure.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    points = []
    for i in range(1, n + 1):
        j = (i + offset) % n
        points.append((j / n, radical_inverse(2, j)))
    return points
