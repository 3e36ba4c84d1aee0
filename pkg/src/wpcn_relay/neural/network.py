"""Trainable model built from an :class:`ArchSpec`."""
from __future__ import annotations

import base64
import json
from pathlib import Path

import numpy as np

from .arch import ArchSpec
from .layers import (
    AdaptiveAvgPool2D,
    BatchNorm,
    Conv2D,
    Dense,
    Flatten,
    InceptionBlock,
    Layer,
    MaxPool2D,
    ReLU,
)

MODEL_FORMAT = "wpcn-relay-model/1"


class _Skip(Layer):
    """Channel concatenation of the running tensor with an earlier output."""

    def __init__(self, source: int, width: int):
        super().__init__()
        self.source = source
        self.width = width  # channels of the running tensor

    def forward(self, x, training=False):
        raise RuntimeError("skip layers are evaluated by the model")

    def backward(self, dy):
        return dy[:, : self.width], dy[:, self.width :]


def _build(arch: ArchSpec, rng) -> list[Layer]:
    rows, cols = arch.input_shape
    shape = (1, rows, cols)  # channels, height, width (or (features,) when flat)
    outputs = []
    layers: list[Layer] = []
    for i, spec in enumerate(arch.layers):
        if spec.kind == "conv":
            layer = Conv2D(shape[0], spec.out, spec.kernel, rng, spec.zero_init)
            shape = (spec.out,) + shape[1:]
        elif spec.kind == "inception":
            layer = InceptionBlock(shape[0], spec.out, spec.kernel, spec.kernel2, rng)
            shape = (spec.out,) + shape[1:]
        elif spec.kind == "dense":
            if len(shape) != 1:
                raise ValueError(f"layer {i}: dense layers need flat input, got shape {shape}")
            layer = Dense(shape[0], spec.out, rng, spec.zero_init)
            shape = (spec.out,)
        elif spec.kind == "bn":
            layer = BatchNorm(shape[0])
        elif spec.kind == "relu":
            layer = ReLU()
        elif spec.kind == "maxpool":
            layer = MaxPool2D(spec.kernel or (3, 3))
        elif spec.kind == "flatten":
            layer = Flatten()
            shape = (int(np.prod(shape)),)
        elif spec.kind == "pool":
            if len(shape) != 3:
                raise ValueError(f"layer {i}: pooling needs image input")
            layer = AdaptiveAvgPool2D(spec.out)
            shape = (shape[0],) + tuple(spec.out)
        elif spec.kind == "skip":
            if not 0 <= spec.source < i:
                raise ValueError(f"layer {i}: skip source {spec.source} must precede it")
            other = outputs[spec.source]
            if other[1:] != shape[1:]:
                raise ValueError(f"layer {i}: cannot concatenate {other} onto {shape}")
            layer = _Skip(spec.source, shape[0])
            shape = (shape[0] + other[0],) + shape[1:]
        else:  # pragma: no cover - LayerSpec validates kinds
            raise ValueError(spec.kind)
        layers.append(layer)
        outputs.append(shape)
    expected = (1,) + arch.class_shape if arch.output == "per_source" else arch.class_shape
    if shape != expected:
        raise ValueError(f"network output shape {shape} does not match classes {expected}")
    return layers


class Model:
    """Layers, weights and batch-norm statistics of one network.

    Parameters
    ----------
    arch : ArchSpec
    seed : int or None
        Seeds the fan-in scaled uniform initialization.  ``None`` leaves all
        weights at zero, which is enough for shape and count queries.
    """

    def __init__(self, arch: ArchSpec, seed=0):
        self.arch = arch
        self.seed = seed
        rng = None if seed is None else np.random.default_rng(seed)
        self.layers = _build(arch, rng)
        self._skip_sources = {L.source for L in self.layers if isinstance(L, _Skip)}

    @property
    def params(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer.params]

    @property
    def grads(self) -> list[np.ndarray]:
        return [g for layer in self.layers for g in layer.grads]

    def buffers(self) -> list[np.ndarray]:
        return [b for layer in self.layers for b in layer.buffers()]

    def param_count(self) -> int:
        return int(sum(p.size for p in self.params))

    def _prepare(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        rows, cols = self.arch.input_shape
        if X.ndim == 3:
            X = X[:, None]
        if X.ndim != 4 or X.shape[1:] != (1, rows, cols):
            raise ValueError(f"expected input of shape (batch, {rows}, {cols}), got {X.shape}")
        return X

    def forward(self, X, training: bool = False) -> np.ndarray:
        """Logits of shape ``(batch, k+1, n)`` or ``(batch, (k+1)**n)``."""
        x = self._prepare(X)
        saved = {}
        for i, layer in enumerate(self.layers):
            if isinstance(layer, _Skip):
                x = np.concatenate([x, saved[layer.source]], axis=1)
            else:
                x = layer.forward(x, training)
            if i in self._skip_sources:
                saved[i] = x
        return x[:, 0] if self.arch.output == "per_source" else x

    def backward(self, dlogits) -> np.ndarray:
        """Back-propagate ``dL/dlogits``; fills every layer's ``grads``."""
        dy = dlogits[:, None] if self.arch.output == "per_source" else dlogits
        pending = {}
        for i in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[i]
            if i in pending:
                dy = dy + pending.pop(i)
            if isinstance(layer, _Skip):
                dy, dskip = layer.backward(dy)
                pending[layer.source] = pending.get(layer.source, 0) + dskip
            else:
                dy = layer.backward(dy)
        return dy[:, 0]

    def logits(self, X, batch_size: int = 1024) -> np.ndarray:
        """Inference-mode logits, evaluated in chunks."""
        X = np.asarray(X, dtype=float)
        parts = [self.forward(X[i : i + batch_size]) for i in range(0, len(X), batch_size)]
        return np.concatenate(parts) if parts else np.zeros((0,) + self.arch.class_shape)

    def get_weights(self) -> list[np.ndarray]:
        return [a.copy() for a in self.params + self.buffers()]

    def set_weights(self, arrays) -> None:
        targets = self.params + self.buffers()
        arrays = list(arrays)
        if len(arrays) != len(targets):
            raise ValueError(f"expected {len(targets)} arrays, got {len(arrays)}")
        for t, a in zip(targets, arrays):
            a = np.asarray(a, dtype=float)
            if a.shape != t.shape:
                raise ValueError(f"weight shape {a.shape} does not match {t.shape}")
            t[...] = a

    def to_dict(self, normalization: dict | None = None) -> dict:
        blobs = []
        n_params = len(self.params)
        for i, a in enumerate(self.params + self.buffers()):
            data = np.ascontiguousarray(a, dtype="<f8").tobytes()
            blobs.append(
                {
                    "shape": list(a.shape),
                    "trainable": i < n_params,
                    "data": base64.b64encode(data).decode("ascii"),
                }
            )
        return {
            "format": MODEL_FORMAT,
            "arch": self.arch.to_dict(),
            "seed": self.seed,
            "param_count": self.param_count(),
            "normalization": normalization,
            "arrays": blobs,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Model":
        if d.get("format") != MODEL_FORMAT:
            raise ValueError(f"not a model file (format {d.get('format')!r})")
        model = cls(ArchSpec.from_dict(d["arch"]), seed=None)
        model.seed = d.get("seed")
        arrays = [
            np.frombuffer(base64.b64decode(b["data"]), dtype="<f8").reshape(b["shape"])
            for b in d["arrays"]
        ]
        model.set_weights(arrays)
        model.normalization = d.get("normalization")
        return model

    def save(self, path, normalization: dict | None = None) -> None:
        Path(path).write_text(json.dumps(self.to_dict(normalization)), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Model":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def param_count(arch: ArchSpec) -> int:
    """Number of trainable scalars (weights, biases, batch-norm scale and shift)."""
    return Model(arch, seed=None).param_count()
