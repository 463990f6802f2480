"""Named smooth radial test functions used by the verification suites."""

from __future__ import annotations

from typing import Callable, Dict

import numpy as np


def _mirrored(center: float, width: float) -> Callable:
    """Even Gaussian pair centred at ±center (smooth at the origin)."""
    def f(r):
        r = np.asarray(r, dtype=float)
        return np.exp(-((r - center) / width) ** 2) + np.exp(-((r + center) / width) ** 2)
    return f


#: five functions for the norm-equivalence check (all Schwartz, even)
NORM_SUITE: Dict[str, Callable] = {
    "gauss": lambda r: np.exp(-np.asarray(r, dtype=float) ** 2),
    "gauss-hermite": lambda r: np.exp(-np.asarray(r, dtype=float) ** 2 / 2) * (1 - np.asarray(r, dtype=float) ** 2 / 3),
    "sech2": lambda r: 1.0 / np.cosh(np.asarray(r, dtype=float)) ** 2,
    "quartic": lambda r: np.exp(-np.asarray(r, dtype=float) ** 4 / 4),
    "poly-gauss": lambda r: (1 + np.asarray(r, dtype=float) ** 2) * np.exp(-np.asarray(r, dtype=float) ** 2),
}

#: ten functions for the free-semigroup decay check
SEMIGROUP_SUITE: Dict[str, Callable] = {
    "gauss-1": lambda r: np.exp(-np.asarray(r, dtype=float) ** 2),
    "gauss-0.5": lambda r: np.exp(-2.0 * np.asarray(r, dtype=float) ** 2),
    "gauss-2": lambda r: np.exp(-np.asarray(r, dtype=float) ** 2 / 4),
    "poly-gauss": lambda r: (1 + np.asarray(r, dtype=float) ** 2) * np.exp(-np.asarray(r, dtype=float) ** 2),
    "hermite": lambda r: (1 - np.asarray(r, dtype=float) ** 2) * np.exp(-np.asarray(r, dtype=float) ** 2 / 2),
    "shell-1": _mirrored(1.0, 1.0),
    "shell-2": _mirrored(2.0, 0.7),
    "shell-3": _mirrored(3.0, 1.0),
    "sech2": lambda r: 1.0 / np.cosh(np.asarray(r, dtype=float)) ** 2,
    "quartic": lambda r: np.exp(-np.asarray(r, dtype=float) ** 4 / 4),
}

__all__ = ["NORM_SUITE", "SEMIGROUP_SUITE"]
