"""Numerically safe logit/probability containers and tempered softmax transforms.

Logit matrices are plain float64 ``(n, k)`` arrays of finite reals, probability
matrices are row-stochastic float64 arrays, and label vectors are integer
arrays in ``[0, k)``. The validators below are the single entry point every
operation uses, so invariants are enforced uniformly instead of per call site.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidInputError, InvalidTemperatureError, ShapeError

#: Tolerance on row sums when accepting an externally supplied probability
#: matrix. Inputs outside the tolerance are rejected, never renormalized.
ROW_SUM_TOL = 1e-9


def validate_logits(values) -> np.ndarray:
    """Validate and return an ``(n, k)`` float64 logit matrix.

    Requires a 2-D array with at least one row, at least two classes, and all
    entries finite.
    """
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"logit matrix must be 2-D, got shape {arr.shape}")
    n, k = arr.shape
    if n < 1 or k < 2:
        raise ShapeError(f"logit matrix needs n >= 1 and k >= 2, got {arr.shape}")
    if not np.isfinite(arr).all():
        raise InvalidInputError("logit matrix contains non-finite entries")
    return arr


def validate_probs(values) -> np.ndarray:
    """Validate and return an ``(n, k)`` row-stochastic probability matrix.

    Every entry must lie in [0, 1] and every row must sum to 1 within
    ``ROW_SUM_TOL``. Out-of-tolerance rows are an error: silently
    renormalizing would hide upstream bugs.
    """
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"probability matrix must be 2-D, got shape {arr.shape}")
    n, k = arr.shape
    if n < 1 or k < 2:
        raise ShapeError(f"probability matrix needs n >= 1 and k >= 2, got {arr.shape}")
    if not np.isfinite(arr).all():
        raise InvalidInputError("probability matrix contains non-finite entries")
    if (arr < 0.0).any() or (arr > 1.0).any():
        raise InvalidInputError("probability matrix entries must lie in [0, 1]")
    row_sums = arr.sum(axis=1)
    worst = float(np.abs(row_sums - 1.0).max())
    if worst > ROW_SUM_TOL:
        raise InvalidInputError(
            f"probability rows must sum to 1 within {ROW_SUM_TOL}, worst deviation {worst:g}"
        )
    return arr


def validate_labels(labels, n: int, k: int) -> np.ndarray:
    """Validate a length-``n`` integer label vector with classes in [0, k)."""
    arr = np.asarray(labels)
    if arr.ndim != 1:
        raise ShapeError(f"label vector must be 1-D, got shape {arr.shape}")
    if arr.shape[0] != n:
        raise ShapeError(f"label vector has length {arr.shape[0]}, expected {n}")
    if not np.issubdtype(arr.dtype, np.integer):
        if not np.all(arr == np.floor(arr)):
            raise InvalidInputError("labels must be integers")
        arr = arr.astype(np.int64)
    else:
        arr = arr.astype(np.int64)
    if arr.size and (arr.min() < 0 or arr.max() >= k):
        raise InvalidInputError(f"labels must lie in [0, {k})")
    return arr


def validate_temperature(t) -> float:
    """Validate a positive finite scalar temperature."""
    tf = float(t)
    if not np.isfinite(tf) or tf <= 0.0:
        raise InvalidTemperatureError(f"temperature must be positive and finite, got {t!r}")
    return tf


def _softmax(logits: np.ndarray, t: float) -> np.ndarray:
    # Per-row max subtraction keeps exp() in range for arbitrary finite logits.
    shifted = (logits - logits.max(axis=1, keepdims=True)) / t
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _log_softmax(logits: np.ndarray, t: float) -> np.ndarray:
    shifted = (logits - logits.max(axis=1, keepdims=True)) / t
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    return shifted - lse


def tempered_softmax(logits, t=1.0) -> np.ndarray:
    """Row-wise softmax of ``logits / t``.

    ``t = 1`` is the standard softmax; ``t > 1`` flattens rows toward uniform
    and ``t < 1`` sharpens them. The row-wise argmax is invariant under any
    positive temperature.
    """
    arr = validate_logits(logits)
    tf = validate_temperature(t)
    return _softmax(arr, tf)


def log_tempered_softmax(logits, t=1.0) -> np.ndarray:
    """Log of :func:`tempered_softmax`, computed via log-sum-exp.

    Stays finite for logits whose softmax would underflow to 0.
    """
    arr = validate_logits(logits)
    tf = validate_temperature(t)
    return _log_softmax(arr, tf)


def predictions(probs) -> np.ndarray:
    """Row-wise argmax; ties are broken by the lowest class index."""
    arr = validate_probs(probs)
    return arr.argmax(axis=1)


def confidences(probs) -> np.ndarray:
    """Row-wise maximum probability (the confidence of the predicted class)."""
    arr = validate_probs(probs)
    return arr.max(axis=1)


def accuracy(probs, labels) -> float:
    """Fraction of rows whose argmax (lowest index on ties) equals the label."""
    arr = validate_probs(probs)
    y = validate_labels(labels, arr.shape[0], arr.shape[1])
    return float(np.mean(arr.argmax(axis=1) == y))


def one_hot(labels, k: int) -> np.ndarray:
    """One-hot encode a label vector into an ``(n, k)`` float64 matrix."""
    y = np.asarray(labels)
    out = np.zeros((y.shape[0], k), dtype=np.float64)
    out[np.arange(y.shape[0]), y] = 1.0
    return out
