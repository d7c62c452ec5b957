"""Dyadic inducing grid on [0, 1].

Level blocks are ordered coarse to fine: block 0 holds the endpoints {0, 1},
block l (1 <= l <= L) holds the 2^(l-1) odd multiples of 2^-l in increasing
order.  A grid of depth L has M = 2^L + 1 points; refining appends blocks, so
positions are stable as L grows.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

LEVEL_MAX = 20


def _check_depth(level: int) -> int:
    if int(level) != level or level < 0 or level > LEVEL_MAX:
        raise ValueError(f"grid depth must be an integer in 0..{LEVEL_MAX}, got {level!r}")
    return int(level)


def position(level, m):
    """Flat grid position of the level-l point m 2^-l (m odd), 0-based.

    Coarser blocks hold 2 + sum_{j<l} 2^(j-1) = 2^(l-1) + 1 points, so block
    l starts at that offset and position = 2^(l-1) + 1 + (m - 1) / 2.
    """
    level = np.asarray(level, dtype=np.int64)
    m = np.asarray(m, dtype=np.int64)
    if np.any(level < 1):
        raise ValueError("interior positions require level >= 1")
    if np.any(m % 2 == 0):
        raise ValueError("m must be odd")
    pos = (np.int64(1) << (level - 1)) + 1 + (m - 1) // 2
    return pos if pos.ndim else int(pos)


def level_and_m(pos):
    """Inverse of `position` for interior slots (pos >= 2)."""
    pos_arr = np.asarray(pos, dtype=np.int64)
    if np.any(pos_arr < 2):
        raise ValueError("positions 0 and 1 are the boundary slots")
    level = np.floor(np.log2(pos_arr - 1)).astype(np.int64) + 1
    m = 2 * (pos_arr - 1 - (np.int64(1) << (level - 1))) + 1
    if pos_arr.ndim:
        return level, m
    return int(level), int(m)


@dataclass(frozen=True)
class DyadicGrid:
    depth: int
    points: np.ndarray = field(repr=False)
    offsets: np.ndarray
    interior_levels: np.ndarray = field(repr=False)
    interior_ms: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return self.points.size

    def position_of(self, numerator: int, level: int) -> int:
        """Grid position of the point numerator * 2^-level (any parity).

        Even numerators reduce to a coarser level; numerator 0 and 2^level
        are the boundary slots 0 and 1.
        """
        n, l = int(numerator), int(level)
        if not 0 <= n <= (1 << l):
            raise ValueError(f"point {n}*2^-{l} lies outside [0, 1]")
        while n % 2 == 0 and l > 0:
            n //= 2
            l -= 1
        if l == 0:
            return 0 if n == 0 else 1
        return position(l, n)


def build_grid(depth: int) -> DyadicGrid:
    """Dyadic grid of the given depth; depth 0 is just the endpoints."""
    depth = _check_depth(depth)
    points = [0.0, 1.0]
    levels = []
    ms = []
    offsets = [0]
    for l in range(1, depth + 1):
        offsets.append(len(points))
        m = np.arange(1, 1 << l, 2, dtype=np.int64)
        points.extend((m * 2.0 ** (-l)).tolist())
        levels.append(np.full(m.size, l, dtype=np.int64))
        ms.append(m)
    empty = np.zeros(0, dtype=np.int64)
    return DyadicGrid(
        depth=depth,
        points=np.asarray(points),
        offsets=np.asarray(offsets, dtype=np.int64),
        interior_levels=np.concatenate(levels) if levels else empty,
        interior_ms=np.concatenate(ms) if ms else empty,
    )
