"""Calibration metrics, post-hoc calibrators, and calibrated-teacher
knowledge distillation on desk-scale MLP classifiers."""

from .calibrators import (
    Calibrator,
    fit_temperature,
    fit_vector_scaling,
    fixed_temperature,
    mean_nll_from_logits,
)
from .distill import DecompositionSpec, KdComposite, KdConfig, decompose_loss, distill_student, kd_loss
from .errors import (
    CalikdError,
    DegenerateSeriesError,
    FitDivergedError,
    InvalidBinsError,
    InvalidInputError,
    InvalidTemperatureError,
    NumericalError,
    ShapeError,
)
from .harness import (
    ExperimentRecord,
    SyntheticSpec,
    TeacherSpec,
    default_manifest,
    gen_dataset,
    run_calibrator_comparison,
    run_correlation_study,
    run_teacher_zoo,
    run_temperature_ablation,
)
from .metrics import (
    BinPartition,
    CalibrationReport,
    ReliabilityBin,
    ace,
    ece,
    ece_decomposed,
    full_report,
    nll,
    reliability_bins,
)
from .nn import (
    Dataset,
    HardCE,
    MlpModel,
    SoftCE,
    TrainConfig,
    TrainLog,
    init_model,
    loss_and_grads,
    mixup_batch,
    model_probs,
    train,
)
from .probs import accuracy, log_tempered_softmax, one_hot, tempered_softmax
from .stats import pearson, r_squared, spearman

__version__ = "0.1.0"
