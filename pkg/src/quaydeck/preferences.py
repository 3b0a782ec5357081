"""Preference-vector helpers shared by training, calibration, and the service."""

from __future__ import annotations

import numpy as np


def as_preference(p, tol: float = 1e-9) -> np.ndarray:
    """Validate and renormalize a 2-component simplex vector."""
    arr = np.asarray(p, dtype=float)
    if arr.shape != (2,):
        raise ValueError(f"preference must have 2 components, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("preference components must be finite")
    if np.any(arr < -tol):
        raise ValueError(f"preference components must be non-negative, got {arr}")
    arr = np.clip(arr, 0.0, None)
    total = float(arr.sum())
    if abs(total - 1.0) > tol and total > 0.0:
        raise ValueError(f"preference must sum to 1, got {total}")
    if total == 0.0:
        raise ValueError("preference must not be the zero vector")
    return arr / total


def even_grid(n: int) -> list[np.ndarray]:
    """n evenly spaced preferences from [1, 0] to [0, 1]."""
    if n < 1:
        raise ValueError("grid size must be positive")
    if n == 1:
        return [np.array([0.5, 0.5])]
    return [np.array([1.0 - i / (n - 1), i / (n - 1)]) for i in range(n)]
