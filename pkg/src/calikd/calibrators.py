"""Post-hoc calibrators applied to a frozen classifier's logits.

Three kinds are supported:

* ``fixed_temperature``: divide logits by a user-chosen constant before the
  softmax. The default of 1.5 is a robust choice for overconfident models;
  values up to about 3 behave similarly.
* ``fitted_temperature``: the constant is chosen to minimize the mean NLL on
  a held-out split, via golden-section search on log-temperature.
* ``vector_scaling``: a per-class affine transform ``w * z + b`` of the
  logits, fitted by full-batch gradient descent on the mean NLL.

Temperature calibrators never change any argmax decision, hence never change
accuracy.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import FitDivergedError, InvalidInputError, ShapeError
from .probs import (
    log_tempered_softmax,
    one_hot,
    tempered_softmax,
    validate_labels,
    validate_logits,
    validate_temperature,
)

FIXED_TEMPERATURE = "fixed_temperature"
FITTED_TEMPERATURE = "fitted_temperature"
VECTOR_SCALING = "vector_scaling"

#: Default fixed calibration temperature; the robust range is [1.5, 3].
DEFAULT_CALIBRATION_TEMPERATURE = 1.5

DEFAULT_SEARCH_LO = 0.05
DEFAULT_SEARCH_HI = 10.0
DEFAULT_SEARCH_TOL = 1e-4

DEFAULT_VECTOR_STEPS = 2000
DEFAULT_VECTOR_LR = 0.05


@dataclass(frozen=True, eq=False)
class Calibrator:
    """A fitted or fixed calibrator. Use the module functions to construct."""

    kind: str
    t: float | None = None
    w: np.ndarray | None = None
    b: np.ndarray | None = None
    fit_metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind in (FIXED_TEMPERATURE, FITTED_TEMPERATURE):
            object.__setattr__(self, "t", validate_temperature(self.t))
        elif self.kind == VECTOR_SCALING:
            w = np.asarray(self.w, dtype=np.float64)
            b = np.asarray(self.b, dtype=np.float64)
            if w.ndim != 1 or b.ndim != 1 or w.shape != b.shape:
                raise ShapeError("vector scaling needs 1-D w and b of equal length")
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise InvalidInputError("vector scaling parameters must be finite")
            object.__setattr__(self, "w", w)
            object.__setattr__(self, "b", b)
        else:
            raise InvalidInputError(f"unknown calibrator kind {self.kind!r}")

    def transform_logits(self, logits) -> np.ndarray:
        """Return the calibrated logits (z / t, or w * z + b)."""
        arr = validate_logits(logits)
        if self.kind == VECTOR_SCALING:
            if arr.shape[1] != self.w.shape[0]:
                raise ShapeError(
                    f"calibrator has {self.w.shape[0]} classes, logits have {arr.shape[1]}")
            return self.w * arr + self.b
        return arr / self.t

    def apply(self, logits) -> np.ndarray:
        """Calibrated probability matrix for the given logits."""
        if self.kind == VECTOR_SCALING:
            return tempered_softmax(self.transform_logits(logits), 1.0)
        return tempered_softmax(logits, self.t)

    def describe(self) -> str:
        if self.kind == FIXED_TEMPERATURE:
            return f"fixed_t={self.t:g}"
        if self.kind == FITTED_TEMPERATURE:
            return f"fitted_t={self.t:.4f}"
        return "vector_scaling"

    def to_json_dict(self) -> dict:
        out: dict = {"kind": self.kind}
        if self.kind == VECTOR_SCALING:
            out["w"] = self.w.tolist()
            out["b"] = self.b.tolist()
        else:
            out["t"] = self.t
        out["fit_metadata"] = self.fit_metadata
        return out

    @classmethod
    def from_json_dict(cls, d: dict) -> "Calibrator":
        kind = d["kind"]
        if kind == VECTOR_SCALING:
            return cls(kind=kind, w=np.asarray(d["w"]), b=np.asarray(d["b"]),
                       fit_metadata=d.get("fit_metadata", {}))
        return cls(kind=kind, t=d["t"], fit_metadata=d.get("fit_metadata", {}))

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2) + "\n"


def fixed_temperature(t: float = DEFAULT_CALIBRATION_TEMPERATURE) -> Calibrator:
    """Calibrator that divides logits by a fixed temperature."""
    return Calibrator(kind=FIXED_TEMPERATURE, t=t)


def mean_nll_from_logits(logits, labels, t: float = 1.0) -> float:
    """Mean NLL of the tempered softmax of ``logits`` against ``labels``."""
    arr = validate_logits(logits)
    y = validate_labels(labels, arr.shape[0], arr.shape[1])
    log_p = log_tempered_softmax(arr, t)
    return float(-np.mean(log_p[np.arange(arr.shape[0]), y]))


def _golden_section(f, a: float, b: float, tol: float) -> float:
    # Minimize a unimodal f on [a, b] to interval width tol; returns midpoint.
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while (b - a) > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def fit_temperature(logits, labels, lo: float = DEFAULT_SEARCH_LO,
                    hi: float = DEFAULT_SEARCH_HI, tol: float = DEFAULT_SEARCH_TOL,
                    split_seed: int | None = None) -> Calibrator:
    """Fit the temperature that minimizes mean NLL on the given data.

    Golden-section search on log-temperature over [lo, hi] to width ``tol``,
    followed by one local grid refinement. When the interior-minimum bracket
    check fails, a dense log-spaced grid search runs instead. The returned
    temperature never has a worse NLL than t = 1, which is always a
    candidate.

    Single-class labels are a degenerate fit; a warning is recorded in the
    metadata and the fit proceeds.
    """
    arr = validate_logits(logits)
    y = validate_labels(labels, arr.shape[0], arr.shape[1])
    if not (0.0 < lo < hi):
        raise InvalidInputError(f"need 0 < lo < hi, got lo={lo}, hi={hi}")

    warnings = []
    if np.unique(y).size < 2:
        warnings.append("degenerate_labels: fit data contains a single class")

    def nll_at_log_t(log_t: float) -> float:
        return mean_nll_from_logits(arr, y, math.exp(log_t))

    a, b = math.log(lo), math.log(hi)
    mid = 0.5 * (a + b)
    fa, fm, fb = nll_at_log_t(a), nll_at_log_t(mid), nll_at_log_t(b)

    used_grid_fallback = not (fm < fa and fm < fb)
    if used_grid_fallback:
        grid = np.linspace(a, b, 512)
        best_log_t = float(grid[int(np.argmin([nll_at_log_t(g) for g in grid]))])
    else:
        best_log_t = _golden_section(nll_at_log_t, a, b, tol)

    # One local grid refinement around the search result.
    refine = best_log_t + np.linspace(-2.0 * tol, 2.0 * tol, 21)
    refine = np.clip(refine, a, b)
    candidates = [math.exp(g) for g in refine] + [math.exp(best_log_t), 1.0]
    nlls = [mean_nll_from_logits(arr, y, t) for t in candidates]
    best = int(np.argmin(nlls))

    nll_before = mean_nll_from_logits(arr, y, 1.0)
    metadata = {
        "nll_before": nll_before,
        "nll_after": nlls[best],
        "split_seed": split_seed,
        "used_grid_fallback": used_grid_fallback,
        "warnings": warnings,
    }
    return Calibrator(kind=FITTED_TEMPERATURE, t=candidates[best], fit_metadata=metadata)


def fit_vector_scaling(logits, labels, steps: int = DEFAULT_VECTOR_STEPS,
                       lr: float = DEFAULT_VECTOR_LR,
                       split_seed: int | None = None) -> Calibrator:
    """Fit per-class scale and bias (w, b) by gradient descent on mean NLL.

    Starts from the identity (w = 1, b = 0) and returns the best iterate
    seen, so the fitted NLL is never worse than the identity's.
    ``steps = 0`` returns the identity calibrator.
    """
    arr = validate_logits(logits)
    y = validate_labels(labels, arr.shape[0], arr.shape[1])
    if steps < 0:
        raise InvalidInputError(f"steps must be >= 0, got {steps}")
    n, k = arr.shape
    targets = one_hot(y, k)

    w = np.ones(k)
    b = np.zeros(k)
    nll_init = mean_nll_from_logits(arr, y, 1.0)
    best_w, best_b, best_nll = w.copy(), b.copy(), nll_init

    for _ in range(steps):
        scaled = w * arr + b
        log_p = log_tempered_softmax(scaled, 1.0)
        resid = np.exp(log_p) - targets
        grad_w = (resid * arr).sum(axis=0) / n
        grad_b = resid.sum(axis=0) / n
        if not (np.isfinite(grad_w).all() and np.isfinite(grad_b).all()):
            raise FitDivergedError("vector scaling produced a non-finite gradient")
        w = w - lr * grad_w
        b = b - lr * grad_b
        if not (np.isfinite(w).all() and np.isfinite(b).all()):
            raise FitDivergedError("vector scaling parameters diverged")
        step_nll = float(-np.mean(log_tempered_softmax(w * arr + b, 1.0)[np.arange(n), y]))
        if step_nll < best_nll:
            best_w, best_b, best_nll = w.copy(), b.copy(), step_nll

    metadata = {
        "nll_before": nll_init,
        "nll_after": best_nll,
        "split_seed": split_seed,
        "steps": steps,
        "lr": lr,
    }
    return Calibrator(kind=VECTOR_SCALING, w=best_w, b=best_b, fit_metadata=metadata)
