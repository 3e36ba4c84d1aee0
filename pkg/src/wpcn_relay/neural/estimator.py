"""scikit-learn style wrapper around the numpy networks."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .arch import ArchSpec, make_arch
from .losses import softmax
from .network import Model
from .training import TrainConfig, decode_classes, train


def _check_inputs(X, arch: ArchSpec) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    rows, cols = arch.input_shape
    if X.ndim == 2 and X.shape[1] == rows * cols:
        X = X.reshape(len(X), rows, cols)
    if X.ndim != 3 or X.shape[1:] != (rows, cols):
        raise ValueError(f"expected X of shape (n_samples, {rows}, {cols}), got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("X contains NaN or infinity")
    return X


def _check_labels(y, n_samples: int, arch: ArchSpec) -> np.ndarray:
    y = np.asarray(y)
    if y.shape != (n_samples, arch.n_sources):
        raise ValueError(f"expected y of shape ({n_samples}, {arch.n_sources}), got {y.shape}")
    if not np.issubdtype(y.dtype, np.integer):
        if not np.all(np.equal(np.mod(y, 1), 0)):
            raise ValueError("y must hold integer relay indices")
        y = y.astype(int)
    return y


class RelayNetClassifier(ClassifierMixin, BaseEstimator):
    """Predicts a relay per source from normalized gain matrices.

    Parameters
    ----------
    arch : str or ArchSpec, default="sc-net"
        A name accepted by :func:`make_arch` or an explicit spec.
    n_sources, n_relays : int
        Network size; ignored when ``arch`` is a spec.
    epochs, batch_size, learning_rate : training budget.
    lambda1, lambda2, temperature : float
        Loss weights; ``lambda2 > 0`` distills from ``teacher``.
    teacher : Model, optional
    random_state : int
    """

    def __init__(
        self,
        arch="sc-net",
        n_sources=3,
        n_relays=2,
        epochs=30,
        batch_size=128,
        learning_rate=1e-3,
        lambda1=1.0,
        lambda2=0.0,
        temperature=1.0,
        teacher=None,
        random_state=0,
    ):
        self.arch = arch
        self.n_sources = n_sources
        self.n_relays = n_relays
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.lambda1 = lambda1
        self.lambda2 = lambda2
        self.temperature = temperature
        self.teacher = teacher
        self.random_state = random_state

    def _arch(self) -> ArchSpec:
        if isinstance(self.arch, ArchSpec):
            return self.arch
        return make_arch(self.arch, self.n_sources, self.n_relays)

    def fit(self, X, y, X_val=None, y_val=None):
        """Train from scratch; ``X_val``/``y_val`` only feed the loss curves."""
        arch = self._arch()
        X = _check_inputs(X, arch)
        y = _check_labels(y, len(X), arch)
        if X_val is not None:
            X_val = _check_inputs(X_val, arch)
            y_val = _check_labels(y_val, len(X_val), arch)
        cfg = TrainConfig(
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            epochs=self.epochs,
            seed=self.random_state,
            lambda1=self.lambda1,
            lambda2=self.lambda2,
            temperature=self.temperature,
        )
        soft = None
        if cfg.distilling:
            if self.teacher is None:
                raise ValueError("lambda2 > 0 needs a trained teacher")
            soft = self.teacher.logits(X)
        self.model_, self.history_ = train(arch, X, y, X_val, y_val, cfg, teacher_train=soft)
        self.classes_ = np.arange(arch.n_relays + 1)
        self.n_features_in_ = int(np.prod(arch.input_shape))
        return self

    @classmethod
    def from_model(cls, model: Model) -> "RelayNetClassifier":
        est = cls(arch=model.arch, n_sources=model.arch.n_sources, n_relays=model.arch.n_relays)
        est.model_ = model
        est.classes_ = np.arange(model.arch.n_relays + 1)
        est.n_features_in_ = int(np.prod(model.arch.input_shape))
        return est

    def decision_function(self, X) -> np.ndarray:
        """Raw logits, ``(n_samples, k+1, n)`` or ``(n_samples, (k+1)**n)``."""
        check_is_fitted(self, "model_")
        return self.model_.logits(_check_inputs(X, self.model_.arch))

    def predict_proba(self, X) -> np.ndarray:
        return softmax(self.decision_function(X), axis=1)

    def predict(self, X) -> np.ndarray:
        """Assignments ``(n_samples, n)``; ties go to the smaller relay index."""
        z = self.decision_function(X)
        if self.model_.arch.output == "joint":
            return decode_classes(self.model_.arch, np.argmax(z, axis=1))
        return np.argmax(z, axis=1)

    def score(self, X, y, sample_weight=None) -> float:
        """Fraction of sources assigned their optimal relay."""
        pred = self.predict(X)
        y = _check_labels(y, len(pred), self.model_.arch)
        hits = (pred == y).mean(axis=1)
        return float(np.average(hits, weights=sample_weight))
