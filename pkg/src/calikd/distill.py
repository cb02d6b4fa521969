"""Calibrated-teacher knowledge distillation loss and its decomposition.

The student minimizes ``(1 - lambda) * CE(labels, q) + lambda * KL(p || q)``
where ``q`` is the student's tempered softmax at the shared distillation
temperature ``t_kd`` and ``p`` is the teacher's softmax at the composite
temperature ``t_cal * t_kd``: a calibration temperature applied only to the
teacher composes multiplicatively with the shared one. The KL term is scaled
by ``t_kd ** 2`` by default so gradient magnitudes stay comparable across
temperatures; disable the flag for the raw form.

``decompose_loss`` checks the identity behind calibrated distillation: when
the teacher's output is ``(1 - k) * p_cal + k * onehot(y)`` (a calibrated
part plus an overconfident error of intensity ``k``), the total loss splits
into a one-hot term weighted ``1 - lambda + lambda * k`` and a distillation
term weighted ``lambda * (1 - k)``, so overconfidence directly shrinks the
distillation signal and at ``k = 1`` removes it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .calibrators import Calibrator
from .errors import InvalidInputError, NumericalError, ShapeError
from .metrics import DEFAULT_M_BINS, DEFAULT_R_BINS, full_report
from .nn import MlpModel, TrainConfig, Dataset, _hard_ce, model_probs, train
from .probs import (
    one_hot,
    validate_labels,
    validate_logits,
    validate_probs,
    validate_temperature,
    _log_softmax,
)

DEFAULT_LAMBDA = 0.9
DEFAULT_T_KD = 4.0
DEFAULT_T_CAL = 1.5


@dataclass(frozen=True)
class KdConfig:
    """Knobs of the composite distillation loss.

    ``lam`` is the distillation weight, ``t_kd`` the shared temperature
    applied to both sides of the KL term, and ``t_cal`` the extra
    teacher-only calibration temperature.
    """

    lam: float = DEFAULT_LAMBDA
    t_kd: float = DEFAULT_T_KD
    t_cal: float = DEFAULT_T_CAL
    scale_kd_by_t_squared: bool = True

    def __post_init__(self):
        if not (0.0 <= self.lam <= 1.0):
            raise InvalidInputError(f"lambda must be in [0, 1], got {self.lam}")
        validate_temperature(self.t_kd)
        validate_temperature(self.t_cal)

    def to_json_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "t_kd": self.t_kd,
            "t_cal": self.t_cal,
            "scale_kd_by_t_squared": self.scale_kd_by_t_squared,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "KdConfig":
        return cls(lam=d["lambda"], t_kd=d["t_kd"], t_cal=d["t_cal"],
                   scale_kd_by_t_squared=d["scale_kd_by_t_squared"])

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2) + "\n"


def kd_loss(student_logits, teacher_logits, labels, cfg: KdConfig):
    """Composite distillation loss and its (ce, kd) parts.

    The cross-entropy part always uses the student's plain softmax at
    temperature 1; only the KL term is tempered.
    """
    s = validate_logits(student_logits)
    t = validate_logits(teacher_logits)
    if s.shape != t.shape:
        raise ShapeError(f"student logits {s.shape} do not match teacher logits {t.shape}")
    y = validate_labels(labels, s.shape[0], s.shape[1])

    ce, _ = _hard_ce(s, y)
    kd = _mean_kl(t, s, cfg)
    if not (np.isfinite(ce) and np.isfinite(kd)):
        raise NumericalError("distillation loss is non-finite")
    loss = (1.0 - cfg.lam) * ce + cfg.lam * kd
    return loss, {"ce": ce, "kd": kd}


def _mean_kl(teacher_logits: np.ndarray, student_logits: np.ndarray, cfg: KdConfig) -> float:
    log_p = _log_softmax(teacher_logits, cfg.t_cal * cfg.t_kd)
    log_q = _log_softmax(student_logits, cfg.t_kd)
    p = np.exp(log_p)
    kl = float(np.mean((p * (log_p - log_q)).sum(axis=1)))
    if cfg.scale_kd_by_t_squared:
        kl *= cfg.t_kd ** 2
    return kl


@dataclass(frozen=True, eq=False)
class KdComposite:
    """Loss spec binding a frozen teacher's soft targets into training.

    ``teacher_logits`` are already calibrated and aligned row-for-row with
    the train split; the training loop passes batch indices through ``rows``.
    """

    teacher_logits: np.ndarray
    kd: KdConfig

    def loss_and_logit_grad(self, logits, targets, rows=None):
        y = validate_labels(targets, logits.shape[0], logits.shape[1])
        teacher = self.teacher_logits if rows is None else self.teacher_logits[rows]
        if teacher.shape != logits.shape:
            raise ShapeError(
                f"teacher logits {teacher.shape} do not match student logits {logits.shape}")
        cfg = self.kd
        n = logits.shape[0]

        ce, ce_grad = _hard_ce(logits, y)
        log_p = _log_softmax(teacher, cfg.t_cal * cfg.t_kd)
        log_q = _log_softmax(logits, cfg.t_kd)
        p = np.exp(log_p)
        q = np.exp(log_q)
        kl = float(np.mean((p * (log_p - log_q)).sum(axis=1)))
        kd_grad = (q - p) / (cfg.t_kd * n)
        if cfg.scale_kd_by_t_squared:
            kl *= cfg.t_kd ** 2
            kd_grad = kd_grad * cfg.t_kd ** 2
        loss = (1.0 - cfg.lam) * ce + cfg.lam * kl
        grad = (1.0 - cfg.lam) * ce_grad + cfg.lam * kd_grad
        return loss, grad


@dataclass(frozen=True, eq=False)
class DecompositionSpec:
    """A teacher output composed as (1 - k) * p_cal + k * onehot(labels)."""

    k_over: float
    p_cal: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if not (0.0 <= self.k_over <= 1.0):
            raise InvalidInputError(f"overconfidence intensity must be in [0, 1], got {self.k_over}")


def decompose_loss(student_logits, spec: DecompositionSpec, lam: float) -> dict:
    """Evaluate the loss decomposition identity both ways, independently.

    ``direct`` composes the teacher probability first and evaluates
    ``(1 - lam) * CE(y, q) + lam * CE(p, q)``; ``decomposed`` evaluates
    ``(1 - lam + lam*k) * CE(y, q) + lam * (1 - k) * CE(p_cal, q)``. Both
    values and both gradients (with respect to the student logits) agree to
    floating-point noise; the KL form of the loss differs from the CE form
    only by ``kl_constant = -H(p)``, reported separately. Stated at unit
    temperature.
    """
    if not (0.0 <= lam <= 1.0):
        raise InvalidInputError(f"lambda must be in [0, 1], got {lam}")
    s = validate_logits(student_logits)
    p_cal = validate_probs(spec.p_cal)
    if p_cal.shape != s.shape:
        raise ShapeError(f"p_cal {p_cal.shape} does not match student logits {s.shape}")
    y = validate_labels(spec.labels, s.shape[0], s.shape[1])
    k = float(spec.k_over)
    n = s.shape[0]

    y_onehot = one_hot(y, s.shape[1])
    log_q = _log_softmax(s, 1.0)
    q = np.exp(log_q)

    def mean_ce(target: np.ndarray) -> float:
        return float(-np.mean((target * log_q).sum(axis=1)))

    p = (1.0 - k) * p_cal + k * y_onehot
    direct = (1.0 - lam) * mean_ce(y_onehot) + lam * mean_ce(p)
    grad_direct = ((1.0 - lam) * (q - y_onehot) + lam * (q - p)) / n

    onehot_coeff = 1.0 - lam + lam * k
    kd_coeff = lam * (1.0 - k)
    decomposed = onehot_coeff * mean_ce(y_onehot) + kd_coeff * mean_ce(p_cal)
    grad_decomposed = (onehot_coeff * (q - y_onehot) + kd_coeff * (q - p_cal)) / n

    with np.errstate(divide="ignore", invalid="ignore"):
        plogp = np.where(p > 0.0, p * np.log(np.where(p > 0.0, p, 1.0)), 0.0)
    kl_constant = float(np.mean(plogp.sum(axis=1)))

    return {
        "direct": direct,
        "decomposed": decomposed,
        "grad_direct": grad_direct,
        "grad_decomposed": grad_decomposed,
        "onehot_coeff": onehot_coeff,
        "kd_coeff": kd_coeff,
        "kl_constant": kl_constant,
    }


def distill_student(student_dims, teacher: MlpModel, calibrator: Calibrator | None,
                    dataset: Dataset, train_cfg: TrainConfig, kd_cfg: KdConfig,
                    m_bins: int = DEFAULT_M_BINS, r_bins: int = DEFAULT_R_BINS):
    """Train a student against a frozen, optionally calibrated teacher.

    The calibrator (identity when None) supplies the teacher's calibration:
    its transformed logits feed the KL term at temperature ``t_kd``, which
    for a temperature calibrator equals the composite ``t * t_kd`` softmax.
    ``kd_cfg.t_cal`` is therefore not consulted here; pass a fixed-temperature
    calibrator to get calibrated distillation. The returned log carries the
    student's test-split calibration report.
    """
    teacher_train = teacher.forward(dataset.split("train")[0])
    if calibrator is not None:
        teacher_train = calibrator.transform_logits(teacher_train)
    spec = KdComposite(teacher_logits=teacher_train, kd=replace(kd_cfg, t_cal=1.0))
    model, log = train(student_dims, dataset, train_cfg, spec)

    x_test, y_test = dataset.split("test")
    log.test_report = full_report(model_probs(model, x_test), y_test, m_bins, r_bins)
    return model, log
