"""Calibration error metrics over binned confidence statistics.

Two binning schemes are supported:

* ``equal_width``: ``m`` left-closed, right-open intervals of width ``1/m``
  over the predicted-class confidence, with the last bin closed at 1.0. This
  backs the expected calibration error (ECE) and its overconfident /
  underconfident decomposition.
* ``equal_count``: for each class independently, samples sorted by that
  class's predicted probability are split into ``r`` contiguous groups whose
  sizes differ by at most one (the first ``n mod r`` groups take the extra
  sample). This backs the adaptive calibration error (ACE), which averages
  the per-bin |accuracy - confidence| gap over all classes and bins.

All bin statistics are computed in a canonical confidence-sorted order so
that jointly permuting samples leaves the metrics bit-for-bit unchanged, and
the scalar metrics are defined as recomputations from the bin statistics so
``reliability_bins`` and the direct operations can never disagree.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import InvalidBinsError, InvalidInputError
from .probs import validate_labels, validate_probs

DEFAULT_M_BINS = 15
DEFAULT_R_BINS = 15

#: Probabilities are clamped here before the log in NLL so degenerate one-hot
#: predictions still yield a finite report.
NLL_CLAMP = 1e-12

EQUAL_WIDTH = "equal_width"
EQUAL_COUNT = "equal_count"


@dataclass(frozen=True)
class ReliabilityBin:
    """Statistics of one confidence bin.

    ``lo``/``hi`` describe the bin boundary: the confidence interval for
    equal-width bins, the observed confidence range for equal-count bins.
    ``class_index`` is None for equal-width (predicted-class) bins and the
    class whose probability column was binned for equal-count bins.
    """

    count: int
    mean_confidence: float
    mean_accuracy: float
    lo: float
    hi: float
    class_index: int | None = None


@dataclass(frozen=True)
class BinPartition:
    """A full binning of one (probs, labels) pair under one scheme."""

    scheme: str
    n_bins: int
    n: int
    k: int
    bins: tuple[ReliabilityBin, ...]


@dataclass(frozen=True)
class CalibrationReport:
    """Scalar calibration metrics of one prediction set."""

    ece: float
    ece_over: float
    ece_under: float
    ace: float
    accuracy: float
    nll: float
    n: int
    k: int
    m_bins: int
    r_bins: int

    def __post_init__(self):
        values = (self.ece, self.ece_over, self.ece_under, self.ace, self.accuracy, self.nll)
        if not all(np.isfinite(v) and v >= 0.0 for v in values):
            raise InvalidInputError("calibration metrics must be finite and non-negative")
        if abs(self.ece - (self.ece_over + self.ece_under)) > 1e-12:
            raise InvalidInputError("ece must equal ece_over + ece_under within 1e-12")

    def to_json_dict(self) -> dict:
        return {
            "ece": self.ece,
            "ece_over": self.ece_over,
            "ece_under": self.ece_under,
            "ace": self.ace,
            "accuracy": self.accuracy,
            "nll": self.nll,
            "n": self.n,
            "k": self.k,
            "m_bins": self.m_bins,
            "r_bins": self.r_bins,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "CalibrationReport":
        return cls(**{f: d[f] for f in (
            "ece", "ece_over", "ece_under", "ace", "accuracy", "nll", "n", "k", "m_bins", "r_bins")})

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2) + "\n"


def _equal_width_partition(probs: np.ndarray, labels: np.ndarray, m: int) -> BinPartition:
    n, k = probs.shape
    conf = probs.max(axis=1)
    correct = (probs.argmax(axis=1) == labels).astype(np.int64)

    # Canonical order: stable sort by confidence. Bins are then contiguous
    # segments, and bin means do not depend on the input sample order.
    order = np.argsort(conf, kind="stable")
    conf_s = conf[order]
    correct_s = correct[order]

    boundaries = np.arange(1, m) / m
    edges = np.concatenate(([0], np.searchsorted(conf_s, boundaries, side="left"), [n]))

    bins = []
    for j in range(m):
        lo_edge, hi_edge = int(edges[j]), int(edges[j + 1])
        count = hi_edge - lo_edge
        if count:
            mean_conf = float(conf_s[lo_edge:hi_edge].mean())
            mean_acc = float(correct_s[lo_edge:hi_edge].sum() / count)
        else:
            mean_conf = 0.0
            mean_acc = 0.0
        bins.append(ReliabilityBin(count, mean_conf, mean_acc, j / m, (j + 1) / m))
    return BinPartition(EQUAL_WIDTH, m, n, k, tuple(bins))


def _equal_count_partition(probs: np.ndarray, labels: np.ndarray, r: int) -> BinPartition:
    n, k = probs.shape
    sizes = np.full(r, n // r, dtype=np.int64)
    sizes[: n % r] += 1
    edges = np.concatenate(([0], np.cumsum(sizes)))

    bins = []
    for cls in range(k):
        conf = probs[:, cls]
        correct = (labels == cls).astype(np.int64)
        order = np.argsort(conf, kind="stable")  # ascending, ties by sample index
        conf_s = conf[order]
        correct_s = correct[order]
        for j in range(r):
            lo_edge, hi_edge = int(edges[j]), int(edges[j + 1])
            count = hi_edge - lo_edge
            mean_conf = float(conf_s[lo_edge:hi_edge].mean())
            mean_acc = float(correct_s[lo_edge:hi_edge].sum() / count)
            bins.append(ReliabilityBin(
                count, mean_conf, mean_acc,
                float(conf_s[lo_edge]), float(conf_s[hi_edge - 1]), cls,
            ))
    return BinPartition(EQUAL_COUNT, r, n, k, tuple(bins))


def reliability_bins(probs, labels, scheme: str, n_bins: int) -> BinPartition:
    """Bin predictions under ``scheme`` in {'equal_width', 'equal_count'}.

    Recomputing the scalar metrics from the returned partition matches the
    direct operations bit-for-bit.
    """
    arr = validate_probs(probs)
    y = validate_labels(labels, arr.shape[0], arr.shape[1])
    if scheme == EQUAL_WIDTH:
        if n_bins < 1:
            raise InvalidBinsError(f"equal-width bin count must be >= 1, got {n_bins}")
        return _equal_width_partition(arr, y, int(n_bins))
    if scheme == EQUAL_COUNT:
        if n_bins < 1:
            raise InvalidBinsError(f"equal-count bin count must be >= 1, got {n_bins}")
        if n_bins > arr.shape[0]:
            raise InvalidBinsError(
                f"cannot split {arr.shape[0]} samples into {n_bins} equal-count bins")
        return _equal_count_partition(arr, y, int(n_bins))
    raise InvalidInputError(f"unknown binning scheme {scheme!r}")


def ece_from_partition(part: BinPartition) -> float:
    """Bin-weighted mean |accuracy - confidence| gap of an equal-width partition."""
    if part.scheme != EQUAL_WIDTH:
        raise InvalidInputError("ece requires an equal-width partition")
    total = 0.0
    for b in part.bins:
        total += (b.count / part.n) * abs(b.mean_accuracy - b.mean_confidence)
    return total


def ece_decomposed_from_partition(part: BinPartition) -> tuple[float, float]:
    """(overconfident, underconfident) halves of the equal-width gap."""
    if part.scheme != EQUAL_WIDTH:
        raise InvalidInputError("ece decomposition requires an equal-width partition")
    over = 0.0
    under = 0.0
    for b in part.bins:
        w = b.count / part.n
        over += w * max(b.mean_confidence - b.mean_accuracy, 0.0)
        under += w * max(b.mean_accuracy - b.mean_confidence, 0.0)
    return over, under


def ace_from_partition(part: BinPartition) -> float:
    """Mean per-class per-bin gap of an equal-count partition."""
    if part.scheme != EQUAL_COUNT:
        raise InvalidInputError("ace requires an equal-count partition")
    total = 0.0
    for b in part.bins:
        total += abs(b.mean_accuracy - b.mean_confidence)
    return total / (part.k * part.n_bins)


def ece(probs, labels, m: int = DEFAULT_M_BINS) -> float:
    """Expected calibration error over ``m`` equal-width confidence bins.

    Empty bins contribute zero; the result lies in [0, 1].
    """
    return ece_from_partition(reliability_bins(probs, labels, EQUAL_WIDTH, m))


def ece_decomposed(probs, labels, m: int = DEFAULT_M_BINS) -> tuple[float, float]:
    """Split the ECE into its overconfident and underconfident components.

    The two components sum to :func:`ece` within 1e-12.
    """
    return ece_decomposed_from_partition(reliability_bins(probs, labels, EQUAL_WIDTH, m))


def ace(probs, labels, r: int = DEFAULT_R_BINS) -> float:
    """Adaptive calibration error over ``r`` equal-count bins per class.

    For each class the per-sample confidence is that class's predicted
    probability and correctness is label equality; samples are sorted
    ascending by (confidence, sample index) before grouping.
    """
    return ace_from_partition(reliability_bins(probs, labels, EQUAL_COUNT, r))


def nll(probs, labels) -> float:
    """Mean negative natural log of the true-class probability.

    Probabilities are clamped below at ``NLL_CLAMP`` before the log.
    """
    arr = validate_probs(probs)
    y = validate_labels(labels, arr.shape[0], arr.shape[1])
    p_true = np.maximum(arr[np.arange(arr.shape[0]), y], NLL_CLAMP)
    return float(-np.mean(np.log(p_true)))


def full_report(probs, labels, m_bins: int = DEFAULT_M_BINS,
                r_bins: int = DEFAULT_R_BINS) -> CalibrationReport:
    """Compute every scalar metric of one prediction set in one pass."""
    arr = validate_probs(probs)
    y = validate_labels(labels, arr.shape[0], arr.shape[1])
    width_part = reliability_bins(arr, y, EQUAL_WIDTH, m_bins)
    count_part = reliability_bins(arr, y, EQUAL_COUNT, r_bins)
    over, under = ece_decomposed_from_partition(width_part)
    return CalibrationReport(
        ece=ece_from_partition(width_part),
        ece_over=over,
        ece_under=under,
        ace=ace_from_partition(count_part),
        accuracy=float(np.mean(arr.argmax(axis=1) == y)),
        nll=nll(arr, y),
        n=arr.shape[0],
        k=arr.shape[1],
        m_bins=int(m_bins),
        r_bins=int(r_bins),
    )
