"""Correlation statistics for paired experiment outcomes."""

from __future__ import annotations

import numpy as np

from .errors import DegenerateSeriesError, InvalidInputError


def _validate_pair(x, y) -> tuple[np.ndarray, np.ndarray]:
    xa = np.asarray(x, dtype=np.float64)
    ya = np.asarray(y, dtype=np.float64)
    if xa.ndim != 1 or ya.ndim != 1 or xa.shape != ya.shape:
        raise InvalidInputError("paired series must be 1-D arrays of equal length")
    if xa.shape[0] < 3:
        raise InvalidInputError("paired series needs at least 3 points")
    if not (np.isfinite(xa).all() and np.isfinite(ya).all()):
        raise InvalidInputError("paired series must be finite")
    return xa, ya


def pearson(x, y) -> float:
    """Pearson correlation coefficient of two series."""
    xa, ya = _validate_pair(x, y)
    dx = xa - xa.mean()
    dy = ya - ya.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise DegenerateSeriesError("pearson is undefined for a constant series")
    r = float(dx @ dy) / np.sqrt(sxx * syy)
    return float(min(1.0, max(-1.0, r)))


def _average_ranks(v: np.ndarray) -> np.ndarray:
    # Ties receive the average of the ranks they would occupy.
    order = np.argsort(v, kind="stable")
    ranks = np.empty(v.shape[0], dtype=np.float64)
    i = 0
    while i < v.shape[0]:
        j = i
        while j + 1 < v.shape[0] and v[order[j + 1]] == v[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(x, y) -> float:
    """Spearman rank correlation with average ranks for ties."""
    xa, ya = _validate_pair(x, y)
    return pearson(_average_ranks(xa), _average_ranks(ya))


def r_squared(x, y) -> float:
    """Coefficient of determination of the ordinary least-squares line y ~ x.

    Equals the squared Pearson correlation for a simple linear regression.
    """
    xa, ya = _validate_pair(x, y)
    dx = xa - xa.mean()
    dy = ya - ya.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0:
        raise DegenerateSeriesError("r_squared is undefined for constant x")
    if syy == 0.0:
        raise DegenerateSeriesError("r_squared is undefined for constant y")
    slope = float(dx @ dy) / sxx
    residuals = dy - slope * dx
    return float(1.0 - float(residuals @ residuals) / syy)
