"""Classification and distillation losses with analytic gradients.

Logits put the class axis at position 1: ``(batch, k+1, n)`` for
per-source outputs (one softmax per source column) or ``(batch, classes)``
for a single joint softmax.  Losses average over sources and over the batch.
"""
from __future__ import annotations

import numpy as np


def log_softmax(logits, axis: int = 1) -> np.ndarray:
    z = np.asarray(logits, dtype=float)
    z = z - z.max(axis=axis, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=axis, keepdims=True))


def softmax(logits, axis: int = 1) -> np.ndarray:
    return np.exp(log_softmax(logits, axis))


def _targets(labels, logits: np.ndarray) -> np.ndarray:
    """Probability targets shaped like ``logits`` from class indices or one-hot."""
    labels = np.asarray(labels)
    if labels.shape == logits.shape:
        return labels.astype(float)
    idx = labels.astype(int)
    if idx.shape != logits.shape[:1] + logits.shape[2:]:
        raise ValueError(f"labels of shape {labels.shape} do not fit logits {logits.shape}")
    n_cls = logits.shape[1]
    if idx.min(initial=0) < 0 or idx.max(initial=0) >= n_cls:
        raise ValueError(f"class labels must lie in 0..{n_cls - 1}")
    return np.moveaxis(np.eye(n_cls)[idx], -1, 1)


def _scale(logits: np.ndarray) -> float:
    """``1 / (batch * sources)``."""
    n_cols = int(np.prod(logits.shape[2:])) if logits.ndim > 2 else 1
    return 1.0 / (logits.shape[0] * n_cols)


def ce_loss(logits, labels, return_grad: bool = False):
    """Mean cross-entropy of per-column softmax predictions.

    Parameters
    ----------
    logits : ndarray
    labels : ndarray
        Class indices of shape ``(batch, n)`` (or ``(batch,)`` for joint
        logits), or target probabilities shaped like ``logits``.
    return_grad : bool
        Also return ``dL/dlogits``.
    """
    logits = np.asarray(logits, dtype=float)
    t = _targets(labels, logits)
    logp = log_softmax(logits)
    s = _scale(logits)
    loss = -float((t * logp).sum()) * s
    if not return_grad:
        return loss
    return loss, (np.exp(logp) * t.sum(axis=1, keepdims=True) - t) * s


def kld_loss(student_logits, teacher_logits, temperature: float = 1.0, return_grad: bool = False):
    """Mean KL divergence from the teacher's softened distribution to the student's."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    zs = np.asarray(student_logits, dtype=float)
    zt = np.asarray(teacher_logits, dtype=float)
    if zs.shape != zt.shape:
        raise ValueError(f"student {zs.shape} and teacher {zt.shape} logits differ in shape")
    log_ps = log_softmax(zs / temperature)
    log_pt = log_softmax(zt / temperature)
    pt = np.exp(log_pt)
    s = _scale(zs)
    loss = max(float((pt * (log_pt - log_ps)).sum()) * s, 0.0)
    if not return_grad:
        return loss
    return loss, (np.exp(log_ps) - pt) * (s / temperature)


def distill_loss(
    student_logits,
    teacher_logits,
    labels,
    lambda1: float = 0.5,
    lambda2: float = 0.5,
    temperature: float = 1.0,
    return_grad: bool = False,
):
    """``lambda1 * ce_loss + lambda2 * kld_loss``."""
    if lambda1 < 0 or lambda2 < 0:
        raise ValueError("loss weights must be non-negative")
    ce = ce_loss(student_logits, labels, return_grad)
    kl = kld_loss(student_logits, teacher_logits, temperature, return_grad)
    if not return_grad:
        return lambda1 * ce + lambda2 * kl
    return lambda1 * ce[0] + lambda2 * kl[0], lambda1 * ce[1] + lambda2 * kl[1]
