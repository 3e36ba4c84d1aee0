"""Minibatch training, evaluation and prediction."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .arch import ArchSpec
from .losses import ce_loss, distill_loss, softmax
from .network import Model
from .optim import AdamState, adam_step


class TrainingDivergedError(RuntimeError):
    """Raised when the training loss becomes non-finite.

    ``history`` holds the curves recorded up to the failure.
    """

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings.

    With ``lambda2 == 0`` the objective is ``lambda1`` times the cross
    entropy; otherwise teacher logits are required and the distillation
    objective is used.
    """

    learning_rate: float = 1e-3
    batch_size: int = 128
    epochs: int = 30
    seed: int = 0
    lambda1: float = 1.0
    lambda2: float = 0.0
    temperature: float = 1.0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")
        if self.lambda1 < 0 or self.lambda2 < 0 or self.lambda1 + self.lambda2 <= 0:
            raise ValueError("need lambda1, lambda2 >= 0 with a positive sum")
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")

    @property
    def distilling(self) -> bool:
        return self.lambda2 > 0

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainHistory:
    """Per-epoch curves; index 0 is the untrained network.

    ``train_loss`` is the optimized objective averaged over the epoch's
    minibatches (train-mode batch norm).  ``train_ce`` is the matching cross
    entropy and ``val_ce`` the inference-mode validation cross entropy.
    """

    train_loss: list = field(default_factory=list)
    train_ce: list = field(default_factory=list)
    val_ce: list = field(default_factory=list)

    def to_rows(self) -> list[dict]:
        return [
            {"epoch": e, "train_loss": a, "train_ce": b, "val_ce": c}
            for e, (a, b, c) in enumerate(zip(self.train_loss, self.train_ce, self.val_ce))
        ]


def encode_targets(arch: ArchSpec, y) -> np.ndarray:
    """Per-source labels ``(batch, n)`` to the class indices ``arch`` predicts."""
    y = np.asarray(y, dtype=int)
    if y.ndim != 2 or y.shape[1] != arch.n_sources:
        raise ValueError(f"expected labels of shape (batch, {arch.n_sources}), got {y.shape}")
    if y.min(initial=0) < 0 or y.max(initial=0) > arch.n_relays:
        raise ValueError(f"labels must lie in 0..{arch.n_relays}")
    if arch.output == "per_source":
        return y
    base = arch.n_relays + 1
    weights = base ** np.arange(arch.n_sources - 1, -1, -1)
    return y @ weights


def decode_classes(arch: ArchSpec, c) -> np.ndarray:
    """Joint class indices to ``(batch, n)`` assignments (base ``k+1`` digits)."""
    c = np.asarray(c, dtype=int)
    base = arch.n_relays + 1
    weights = base ** np.arange(arch.n_sources - 1, -1, -1)
    return (c[:, None] // weights[None, :]) % base


def evaluate_ce(model: Model, X, y, batch_size: int = 1024) -> float:
    """Inference-mode mean cross entropy on ``(X, y)``."""
    if len(X) == 0:
        return float("nan")
    return ce_loss(model.logits(X, batch_size), encode_targets(model.arch, y))


def predict(model: Model, X, batch_size: int = 1024) -> np.ndarray:
    """Assignments ``(batch, n)``: per-column argmax, ties to the smallest class."""
    z = model.logits(X, batch_size)
    if model.arch.output == "joint":
        return decode_classes(model.arch, np.argmax(z, axis=1))
    return np.argmax(z, axis=1)


def predict_proba(model: Model, X, batch_size: int = 1024) -> np.ndarray:
    return softmax(model.logits(X, batch_size), axis=1)


def train(
    arch: ArchSpec,
    X_train,
    y_train,
    X_val=None,
    y_val=None,
    cfg: TrainConfig | None = None,
    teacher_train=None,
    callback=None,
) -> tuple[Model, TrainHistory]:
    """Train a fresh network of shape ``arch`` with Adam on shuffled minibatches.

    Parameters
    ----------
    arch : ArchSpec
    X_train, X_val : ndarray, shape (samples, rows, 4)
        Normalized input matrices.
    y_train, y_val : ndarray, shape (samples, n)
        Optimal assignments.
    cfg : TrainConfig
    teacher_train : ndarray, optional
        Cached teacher logits for the training split, required when ``cfg.lambda2 > 0``.
    callback : callable, optional
        Called as ``callback(epoch, history)`` after every epoch.

    Returns
    -------
    model, history

    Raises
    ------
    TrainingDivergedError
        If a minibatch loss is not finite.
    """
    cfg = cfg or TrainConfig()
    X_train = np.asarray(X_train, dtype=float)
    t_train = encode_targets(arch, y_train)
    has_val = X_val is not None and len(X_val) > 0
    if cfg.distilling:
        if teacher_train is None:
            raise ValueError("distillation needs teacher logits for the training split")
        teacher_train = np.asarray(teacher_train, dtype=float)
        if teacher_train.shape != (len(X_train),) + arch.class_shape:
            raise ValueError("teacher logits do not match the training split")

    seeds = np.random.SeedSequence(cfg.seed).spawn(2)
    model = Model(arch, seed=np.random.default_rng(seeds[0]))
    model.seed = cfg.seed
    shuffle_rng = np.random.default_rng(seeds[1])
    state = AdamState.for_params(model.params)
    history = TrainHistory()

    init_logits = model.logits(X_train)
    init_ce = ce_loss(init_logits, t_train)
    if cfg.distilling:
        init_loss = distill_loss(init_logits, teacher_train, t_train, cfg.lambda1, cfg.lambda2, cfg.temperature)
    else:
        init_loss = cfg.lambda1 * init_ce
    history.train_loss.append(init_loss)
    history.train_ce.append(init_ce)
    history.val_ce.append(evaluate_ce(model, X_val, y_val) if has_val else float("nan"))

    n = len(X_train)
    for epoch in range(1, cfg.epochs + 1):
        order = shuffle_rng.permutation(n)
        tot_loss = tot_ce = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            logits = model.forward(X_train[idx], training=True)
            if cfg.distilling:
                loss, grad = distill_loss(
                    logits, teacher_train[idx], t_train[idx], cfg.lambda1, cfg.lambda2,
                    cfg.temperature, return_grad=True,
                )
                ce = ce_loss(logits, t_train[idx])
            else:
                ce, grad = ce_loss(logits, t_train[idx], return_grad=True)
                loss, grad = cfg.lambda1 * ce, cfg.lambda1 * grad
            if not math.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, batch starting at {start}", history
                )
            model.backward(grad)
            adam_step(model.params, model.grads, state, cfg.learning_rate)
            tot_loss += loss * len(idx)
            tot_ce += ce * len(idx)
        history.train_loss.append(tot_loss / n)
        history.train_ce.append(tot_ce / n)
        history.val_ce.append(evaluate_ce(model, X_val, y_val) if has_val else float("nan"))
        if callback is not None:
            callback(epoch, history)
    return model, history
