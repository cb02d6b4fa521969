"""Dense MLP classifier with manual backpropagation and SGD training.

The model is a stack of affine layers with ReLU on hidden layers and identity
on the output; all math is float64 numpy. Training is plain SGD with
momentum, coupled L2 weight decay (an explicit ``0.5 * wd * ||theta||^2``
term in the loss), step learning-rate decay, per-epoch shuffling from a
seeded generator, and optional mixup augmentation. A fixed seed makes a
training run bitwise reproducible on one platform.

Loss specifications passed to :func:`loss_and_grads` and :func:`train` are
small objects with a ``loss_and_logit_grad(logits, targets, rows)`` method;
:class:`HardCE` and :class:`SoftCE` live here and the composite distillation
loss is defined in :mod:`calikd.distill`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, NumericalError, ShapeError
from .metrics import CalibrationReport
from .probs import one_hot, validate_labels, validate_probs, _log_softmax, _softmax


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer and schedule recipe for one training run."""

    epochs: int
    batch_size: int
    lr0: float
    lr_decay_epochs: tuple[int, ...] = ()
    lr_decay_factor: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 0.0
    seed: int = 0
    mixup_alpha: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "lr_decay_epochs", tuple(int(e) for e in self.lr_decay_epochs))
        if self.epochs < 0 or self.batch_size < 1:
            raise InvalidInputError("epochs must be >= 0 and batch_size >= 1")
        if self.lr0 <= 0 or not (0.0 <= self.momentum < 1.0) or self.weight_decay < 0:
            raise InvalidInputError("need lr0 > 0, momentum in [0, 1), weight_decay >= 0")
        if self.mixup_alpha < 0:
            raise InvalidInputError("mixup_alpha must be >= 0")
        decays = self.lr_decay_epochs
        if any(e2 <= e1 for e1, e2 in zip(decays, decays[1:])):
            raise InvalidInputError("lr_decay_epochs must be strictly increasing")
        if decays and decays[-1] >= self.epochs:
            raise InvalidInputError("lr_decay_epochs must all be < epochs")

    def to_json_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "lr0": self.lr0,
            "lr_decay_epochs": list(self.lr_decay_epochs),
            "lr_decay_factor": self.lr_decay_factor,
            "momentum": self.momentum,
            "weight_decay": self.weight_decay,
            "seed": self.seed,
            "mixup_alpha": self.mixup_alpha,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "TrainConfig":
        kw = dict(d)
        kw["lr_decay_epochs"] = tuple(kw.get("lr_decay_epochs", ()))
        return cls(**kw)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Feature matrix, labels, and disjoint covering train/val/test splits."""

    features: np.ndarray
    labels: np.ndarray
    splits: dict
    n_classes: int

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        y = validate_labels(self.labels, feats.shape[0], self.n_classes)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", y)
        seen = np.concatenate([np.asarray(v, dtype=np.int64) for v in self.splits.values()])
        if len(seen) != feats.shape[0] or len(np.unique(seen)) != feats.shape[0]:
            raise InvalidInputError("splits must be disjoint and cover all sample indices")

    def split(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        idx = np.asarray(self.splits[name], dtype=np.int64)
        return self.features[idx], self.labels[idx]


class MlpModel:
    """Fully connected ReLU network; identity activation on the output layer."""

    def __init__(self, layer_dims, weights, biases):
        self.layer_dims = tuple(int(d) for d in layer_dims)
        if len(self.layer_dims) < 2:
            raise InvalidInputError("need at least input and output dims")
        self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in biases]
        expected = list(zip(self.layer_dims[:-1], self.layer_dims[1:]))
        if len(self.weights) != len(expected) or len(self.biases) != len(expected):
            raise ShapeError("one weight matrix and bias vector per layer required")
        for (din, dout), w, b in zip(expected, self.weights, self.biases):
            if w.shape != (din, dout) or b.shape != (dout,):
                raise ShapeError(f"layer expects W{(din, dout)} and b({dout},), got {w.shape}, {b.shape}")
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise InvalidInputError("model parameters must be finite")

    @property
    def n_classes(self) -> int:
        return self.layer_dims[-1]

    def copy(self) -> "MlpModel":
        return MlpModel(self.layer_dims,
                        [w.copy() for w in self.weights],
                        [b.copy() for b in self.biases])

    def forward(self, features) -> np.ndarray:
        """Logits for a batch of feature rows."""
        logits, _, _ = _forward_cached(self, features)
        return logits

    def to_checkpoint_dict(self, train_config: TrainConfig | None = None,
                           final_val_accuracy: float | None = None) -> dict:
        return {
            "layer_dims": list(self.layer_dims),
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "activation": "relu",
            "train_config": train_config.to_json_dict() if train_config else None,
            "seed": train_config.seed if train_config else None,
            "final_val_accuracy": final_val_accuracy,
        }

    @classmethod
    def from_checkpoint_dict(cls, d: dict) -> "MlpModel":
        return cls(d["layer_dims"], d["weights"], d["biases"])


def save_checkpoint(path, model: MlpModel, train_config: TrainConfig | None = None,
                    final_val_accuracy: float | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model.to_checkpoint_dict(train_config, final_val_accuracy), fh, indent=2)
        fh.write("\n")


def load_checkpoint(path) -> MlpModel:
    with open(path, encoding="utf-8") as fh:
        return MlpModel.from_checkpoint_dict(json.load(fh))


def init_model(layer_dims, seed: int) -> MlpModel:
    """He-initialized model: W ~ N(0, 2 / fan_in), zero biases."""
    dims = tuple(int(d) for d in layer_dims)
    rng = np.random.default_rng(seed)
    weights = []
    biases = []
    for din, dout in zip(dims[:-1], dims[1:]):
        weights.append(rng.normal(0.0, np.sqrt(2.0 / din), size=(din, dout)))
        biases.append(np.zeros(dout))
    return MlpModel(dims, weights, biases)


def _forward_cached(model: MlpModel, features):
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.layer_dims[0]:
        raise ShapeError(f"features must be (n, {model.layer_dims[0]}), got {x.shape}")
    activations = [x]
    pre_acts = []
    out = x
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = out @ w + b
        pre_acts.append(z)
        out = z if i == last else np.maximum(z, 0.0)
        if i != last:
            activations.append(out)
    return out, pre_acts, activations


@dataclass(frozen=True)
class HardCE:
    """Cross-entropy against integer labels."""

    def loss_and_logit_grad(self, logits, targets, rows=None):
        y = validate_labels(targets, logits.shape[0], logits.shape[1])
        return _hard_ce(logits, y)


@dataclass(frozen=True)
class SoftCE:
    """Cross-entropy against a row-stochastic soft-target matrix."""

    def loss_and_logit_grad(self, logits, targets, rows=None):
        t = validate_probs(targets)
        if t.shape != logits.shape:
            raise ShapeError(f"soft targets {t.shape} do not match logits {logits.shape}")
        return _soft_ce(logits, t)


def _hard_ce(logits: np.ndarray, labels: np.ndarray):
    n = logits.shape[0]
    log_p = _log_softmax(logits, 1.0)
    loss = float(-np.mean(log_p[np.arange(n), labels]))
    grad = (np.exp(log_p) - one_hot(labels, logits.shape[1])) / n
    return loss, grad


def _soft_ce(logits: np.ndarray, targets: np.ndarray):
    n = logits.shape[0]
    log_p = _log_softmax(logits, 1.0)
    loss = float(-np.mean((targets * log_p).sum(axis=1)))
    grad = (np.exp(log_p) - targets) / n
    return loss, grad


def loss_and_grads(model: MlpModel, features, targets, loss_spec,
                   weight_decay: float = 0.0, rows=None):
    """Mean batch loss and exact analytic parameter gradients.

    The weight-decay term ``0.5 * weight_decay * ||theta||^2`` (over weights
    and biases) is included in both the loss and the gradients. ``rows``
    threads batch indices through to loss specs that carry per-sample state.
    """
    logits, pre_acts, activations = _forward_cached(model, features)
    if not np.isfinite(logits).all():
        raise NumericalError("forward pass produced non-finite logits")
    loss, dlogits = loss_spec.loss_and_logit_grad(logits, targets, rows)
    if not np.isfinite(loss):
        raise NumericalError("loss is non-finite")

    grads_w = [None] * len(model.weights)
    grads_b = [None] * len(model.biases)
    dz = dlogits
    for i in range(len(model.weights) - 1, -1, -1):
        grads_w[i] = activations[i].T @ dz
        grads_b[i] = dz.sum(axis=0)
        if i > 0:
            dz = (dz @ model.weights[i].T) * (pre_acts[i - 1] > 0.0)

    if weight_decay:
        sq = 0.0
        for i, (w, b) in enumerate(zip(model.weights, model.biases)):
            sq += float((w * w).sum()) + float((b * b).sum())
            grads_w[i] = grads_w[i] + weight_decay * w
            grads_b[i] = grads_b[i] + weight_decay * b
        loss = loss + 0.5 * weight_decay * sq
    return loss, list(zip(grads_w, grads_b))


def mixup_batch(features, labels_onehot, alpha: float, rng: np.random.Generator,
                lam: float | None = None, partner=None):
    """Convex combinations of a batch with a uniformly permuted partner batch.

    One mixing coefficient ``lam ~ Beta(alpha, alpha)`` is drawn per batch;
    ``lam`` and ``partner`` can be pinned for deterministic tests. Mixed soft
    labels stay on the probability simplex.
    """
    if alpha <= 0 and lam is None:
        raise InvalidInputError("mixup requires alpha > 0")
    x = np.asarray(features, dtype=np.float64)
    t = np.asarray(labels_onehot, dtype=np.float64)
    if x.shape[0] != t.shape[0]:
        raise ShapeError("features and labels must have the same number of rows")
    if lam is None:
        lam = float(rng.beta(alpha, alpha))
    if partner is None:
        partner = rng.permutation(x.shape[0])
    mixed_x = lam * x + (1.0 - lam) * x[partner]
    mixed_t = lam * t + (1.0 - lam) * t[partner]
    return mixed_x, mixed_t


@dataclass
class TrainLog:
    """Per-epoch history of one training run."""

    train_loss: list = field(default_factory=list)
    val_accuracy: list = field(default_factory=list)
    final_val_accuracy: float = 0.0
    test_report: CalibrationReport | None = None


def _split_accuracy(model: MlpModel, dataset: Dataset, name: str) -> float:
    x, y = dataset.split(name)
    if len(y) == 0:
        return 0.0
    logits = model.forward(x)
    return float(np.mean(logits.argmax(axis=1) == y))


def train(layer_dims, dataset: Dataset, config: TrainConfig, loss_spec):
    """Train a freshly initialized model on the dataset's train split.

    Runs ``epochs`` passes of SGD with momentum; the learning rate is
    multiplied by ``lr_decay_factor`` at the start of each listed epoch.
    Initialization, shuffling, and mixup draws all derive from
    ``config.seed``, so identical inputs give identical parameters.

    Mixup (``config.mixup_alpha > 0``) replaces each batch with mixed
    features and soft labels and is only supported for the hard
    cross-entropy loss.

    Raises :class:`NumericalError` if the loss goes non-finite; the
    exception carries the last finite end-of-epoch checkpoint.
    """
    if tuple(layer_dims)[0] != dataset.features.shape[1]:
        raise ShapeError("model input dim must match dataset feature dim")
    if config.mixup_alpha > 0 and not isinstance(loss_spec, HardCE):
        raise InvalidInputError("mixup is only supported with the hard cross-entropy loss")

    model = init_model(layer_dims, config.seed)
    rng = np.random.default_rng(config.seed)
    x_train, y_train = dataset.split("train")
    n = x_train.shape[0]
    k = model.n_classes

    vel_w = [np.zeros_like(w) for w in model.weights]
    vel_b = [np.zeros_like(b) for b in model.biases]
    lr = config.lr0
    decay_at = set(config.lr_decay_epochs)
    log = TrainLog()
    checkpoint = model.copy()
    soft_spec = SoftCE()

    for epoch in range(config.epochs):
        if epoch in decay_at:
            lr *= config.lr_decay_factor
        perm = rng.permutation(n)
        epoch_losses = []
        for start in range(0, n, config.batch_size):
            idx = perm[start:start + config.batch_size]
            xb, yb = x_train[idx], y_train[idx]
            try:
                if config.mixup_alpha > 0:
                    xb, tb = mixup_batch(xb, one_hot(yb, k), config.mixup_alpha, rng)
                    loss, grads = loss_and_grads(model, xb, tb, soft_spec,
                                                 config.weight_decay)
                else:
                    loss, grads = loss_and_grads(model, xb, yb, loss_spec,
                                                 config.weight_decay, rows=idx)
            except NumericalError as exc:
                raise NumericalError(
                    f"training diverged in epoch {epoch}: {exc}",
                    last_model=checkpoint, log=log) from exc
            for i, (gw, gb) in enumerate(grads):
                vel_w[i] = config.momentum * vel_w[i] + gw
                vel_b[i] = config.momentum * vel_b[i] + gb
                model.weights[i] -= lr * vel_w[i]
                model.biases[i] -= lr * vel_b[i]
            epoch_losses.append(loss)
        log.train_loss.append(float(np.mean(epoch_losses)))
        log.val_accuracy.append(_split_accuracy(model, dataset, "val"))
        checkpoint = model.copy()

    log.final_val_accuracy = _split_accuracy(model, dataset, "val")
    return model, log


def model_probs(model: MlpModel, features, temperature: float = 1.0) -> np.ndarray:
    """Predicted probability matrix at the given softmax temperature."""
    logits = model.forward(features)
    if not np.isfinite(logits).all():
        raise NumericalError("forward pass produced non-finite logits")
    return _softmax(logits, temperature)
