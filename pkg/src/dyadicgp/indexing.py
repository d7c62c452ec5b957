"""Sparse activation indexing for the dyadic basis.

At most one interior basis function per level is nonzero at a point x: the one
whose peak m 2^-l is nearest.  Its odd index follows in closed form from
t = floor((ceil(x 2^l) + 1) / 2), m = 2t - 1, so a forward pass touches the
two boundary slots plus L interior slots instead of all 2^L + 1 columns.

`sparse_features` and `dense_features` evaluate the selected basis functions
through the same piecewise evaluator, so scattering the sparse values into a
zero row reproduces the dense row bitwise.
"""

from __future__ import annotations

import numpy as np

from . import kernel
from .grid import DyadicGrid

DENSE_CELL_LIMIT = 50_000_000


def _check_unit_interval(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.size:
        # non-finite values signal a diverged upstream computation, not bad data
        if not np.all(np.isfinite(x)):
            raise FloatingPointError("inputs contain non-finite values")
        if np.min(x) < 0.0 or np.max(x) > 1.0:
            raise ValueError("inputs must be normalized to [0, 1]")
    return x


def tsi_indices(x, depth: int) -> np.ndarray:
    """Per-level indices t (..., depth) of the active interior basis at x.

    t is clamped to [1, 2^(l-1)]; the clamp only fires at x = 0, where every
    interior basis function vanishes, so the selected value is still exact.
    """
    x = _check_unit_interval(x)
    if depth < 1 or depth > 20:
        raise ValueError(f"depth must lie in 1..20, got {depth!r}")
    levels = np.arange(1, depth + 1, dtype=np.int64)
    scaled = np.ceil(x[..., None] * (2.0 ** levels))
    t = np.floor((scaled + 1.0) / 2.0).astype(np.int64)
    return np.clip(t, 1, np.int64(1) << (levels - 1))


def assemble_global_indices(t: np.ndarray) -> np.ndarray:
    """Grid positions (..., depth + 2) of all active slots: 0, 1, then levels."""
    t = np.asarray(t, dtype=np.int64)
    depth = t.shape[-1]
    levels = np.arange(1, depth + 1, dtype=np.int64)
    out = np.empty(t.shape[:-1] + (depth + 2,), dtype=np.int64)
    out[..., 0] = 0
    out[..., 1] = 1
    out[..., 2:] = (np.int64(1) << (levels - 1)) + t
    return out


def sparse_features(x, grid: DyadicGrid, theta: float):
    """Active basis values and their grid positions at x.

    Returns (values, positions), both shaped x.shape + (depth + 2,).
    """
    x = _check_unit_interval(x)
    t = tsi_indices(x, grid.depth)
    positions = assemble_global_indices(t)
    levels = np.arange(1, grid.depth + 1, dtype=np.int64)
    values = np.empty(positions.shape, dtype=float)
    values[..., 0], values[..., 1] = kernel.boundary_basis(x, theta)
    values[..., 2:] = kernel.interior_basis(levels, 2 * t - 1, x[..., None], theta)
    return values, positions


def dense_features(x, grid: DyadicGrid, theta: float) -> np.ndarray:
    """All 2^depth + 1 basis values at x, shaped x.shape + (grid.size,)."""
    x = _check_unit_interval(x)
    cells = x.size * grid.size
    if cells > DENSE_CELL_LIMIT:
        raise ValueError(
            f"dense feature matrix would hold {cells} cells "
            f"(limit {DENSE_CELL_LIMIT}); use the sparse path or chunk the input"
        )
    out = np.empty(x.shape + (grid.size,), dtype=float)
    out[..., 0], out[..., 1] = kernel.boundary_basis(x, theta)
    out[..., 2:] = kernel.interior_basis(
        grid.interior_levels, grid.interior_ms, x[..., None], theta
    )
    return out


def scatter_features(values: np.ndarray, positions: np.ndarray, size: int) -> np.ndarray:
    """Place sparse values into zero rows of width `size`."""
    out = np.zeros(values.shape[:-1] + (size,), dtype=values.dtype)
    np.put_along_axis(out, positions, values, axis=-1)
    return out


def gather_weights(w: np.ndarray, positions: np.ndarray, n_features: int) -> np.ndarray:
    """Gather rows of a feature-major weight matrix at the active slots.

    w has shape (n_features * grid.size, out); row d * grid.size + p holds
    the weight of basis slot p for input feature d.  positions has shape
    (batch, n_features, k); the result is (batch, n_features, k, out).
    """
    w = np.asarray(w)
    if w.ndim != 2:
        raise ValueError("weights must be 2-d (rows by outputs)")
    if w.shape[0] % n_features:
        raise ValueError(
            f"weight rows {w.shape[0]} are not divisible by n_features {n_features}"
        )
    size = w.shape[0] // n_features
    if np.min(positions) < 0 or np.max(positions) >= size:
        raise ValueError("slot positions fall outside the weight layout")
    rows = positions + (np.arange(n_features, dtype=np.int64) * size)[None, :, None]
    return w[rows]


def brute_force_indices(x, depth: int) -> np.ndarray:
    """Nearest odd index per level by exhaustive scan, ties to smaller m.

    Independent reference for `tsi_indices`; returns m = 2t - 1 directly.
    """
    x = _check_unit_interval(np.asarray(x, dtype=float)).ravel()
    out = np.empty((x.size, depth), dtype=np.int64)
    for l in range(1, depth + 1):
        m_all = np.arange(1, 1 << l, 2, dtype=np.int64)
        pts = m_all * 2.0 ** (-l)
        chunk = max(1, 40_000_000 // max(pts.size, 1))
        for start in range(0, x.size, chunk):
            seg = x[start : start + chunk]
            nearest = np.argmin(np.abs(seg[:, None] - pts[None, :]), axis=1)
            out[start : start + chunk, l - 1] = m_all[nearest]
    return out
