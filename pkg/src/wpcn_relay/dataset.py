"""Labeled relay-selection datasets.

Each instance is encoded as a ``rows x 4`` matrix of raw channel gains and
labeled with its optimal assignment.  Splits are written as JSON lines next
to a ``<name>.meta.json`` sidecar that carries the generation parameters and
the log-domain standardization statistics fitted on the training split.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .model import EhParams, GeometryConfig, NetworkInstance, SystemParams, sample_instance
from .selection import ENUMERATION_CAP, bba

N_COLS = 4
SPLITS = ("train", "val", "test")


def n_features(n: int, k: int) -> int:
    """Number of gains describing an ``n``-source ``k``-relay network."""
    return (n + k) + n * (k + 1) + k


def input_rows(n: int, k: int) -> int:
    return math.ceil(n_features(n, k) / N_COLS)


def build_input_matrix(inst: NetworkInstance) -> np.ndarray:
    """Pack all gains row-major into a zero-padded ``rows x 4`` matrix.

    Order: downlink gains (sources, then relays), uplink source gains
    row by row (direct link first), then relay-to-AP gains.
    """
    flat = np.concatenate([inst.dl_gain, inst.ul_src.ravel(), inst.ul_relay])
    rows = input_rows(inst.n_sources, inst.k_relays)
    out = np.zeros(rows * N_COLS)
    out[: flat.size] = flat
    return out.reshape(rows, N_COLS)


def decode_input_matrix(matrix, n: int, k: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Inverse of :func:`build_input_matrix`: ``(dl_gain, ul_src, ul_relay)``."""
    flat = np.asarray(matrix, dtype=float).ravel()
    if flat.size != input_rows(n, k) * N_COLS:
        raise ValueError(f"matrix has {flat.size} entries, expected {input_rows(n, k) * N_COLS}")
    dl = flat[: n + k]
    ul_src = flat[n + k : n + k + n * (k + 1)].reshape(n, k + 1)
    ul_relay = flat[n + k + n * (k + 1) : n_features(n, k)]
    return dl.copy(), ul_src.copy(), ul_relay.copy()


def label_to_matrix(assignment, n: int, k: int) -> np.ndarray:
    """One-hot ``(k+1) x n`` matrix with a single 1 per column."""
    a = np.asarray(assignment, dtype=int).ravel()
    if a.size != n or a.min(initial=0) < 0 or a.max(initial=0) > k:
        raise ValueError(f"invalid assignment {a.tolist()} for n={n}, k={k}")
    out = np.zeros((k + 1, n))
    out[a, np.arange(n)] = 1.0
    return out


def matrix_to_label(matrix) -> tuple:
    m = np.asarray(matrix)
    return tuple(int(j) for j in np.argmax(m, axis=0))


@dataclass
class DatasetSample:
    instance_id: int
    input: np.ndarray
    label: tuple
    optimal_total: float

    def to_json(self) -> str:
        return json.dumps(
            {
                "id": self.instance_id,
                "input": self.input.tolist(),
                "label": list(self.label),
                "optimal_total": self.optimal_total,
            }
        )

    @classmethod
    def from_json(cls, line: str) -> "DatasetSample":
        d = json.loads(line)
        return cls(d["id"], np.asarray(d["input"], dtype=float), tuple(d["label"]), d["optimal_total"])


@dataclass
class DatasetMeta:
    n: int
    k: int
    sizes: dict
    seed: int
    mean: list = field(default_factory=list)
    std: list = field(default_factory=list)
    demand: float = 50.0
    sys: dict = field(default_factory=lambda: asdict(SystemParams()))
    eh: dict = field(default_factory=lambda: asdict(EhParams()))
    geometry: dict = field(default_factory=lambda: asdict(GeometryConfig()))

    def __post_init__(self):
        if self.std and not all(s > 0 for s in self.std):
            raise ValueError("every standardization std must be positive")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def load(cls, path) -> "DatasetMeta":
        return cls(**json.loads(Path(path).read_text()))

    def instance(self, matrix) -> NetworkInstance:
        """Rebuild the network instance a stored input matrix came from."""
        dl, ul_src, ul_relay = decode_input_matrix(matrix, self.n, self.k)
        return NetworkInstance(
            n_sources=self.n,
            k_relays=self.k,
            dl_gain=dl,
            ul_src=ul_src,
            ul_relay=ul_relay,
            demand=np.full(self.n, float(self.demand)),
            eh=(EhParams(**self.eh),),
            sys=SystemParams(**self.sys),
        )


def _sample_seed(seed: int, sample_id: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed), int(sample_id)])


def _label_one(n, k, seed, sample_id, geo, ehp, sys, demand) -> DatasetSample:
    inst = sample_instance(n, k, geo, ehp, sys, seed=_sample_seed(seed, sample_id), demand=demand)
    res = bba(inst)
    return DatasetSample(sample_id, build_input_matrix(inst), res.assignment, res.total)


def label_samples(
    n, k, ids, seed, geo=None, ehp=None, sys=None, demand=50.0, n_jobs=1
) -> list[DatasetSample]:
    """Sample and optimally label the instances with the given ids."""
    geo, ehp, sys = geo or GeometryConfig(), ehp or EhParams(), sys or SystemParams()
    if (k + 1) ** n > ENUMERATION_CAP:
        raise ValueError(f"(k+1)^n = {(k + 1) ** n} exceeds the enumeration cap")
    if n_jobs == 1:
        return [_label_one(n, k, seed, i, geo, ehp, sys, demand) for i in ids]
    chunks = np.array_split(np.asarray(list(ids)), max(1, 4 * abs(n_jobs)))
    parts = Parallel(n_jobs=n_jobs)(
        delayed(label_samples)(n, k, c.tolist(), seed, geo, ehp, sys, demand, 1) for c in chunks
    )
    return [s for part in parts for s in part]  # chunks are contiguous: order preserved


def _log_features(X: np.ndarray, n_valid: int) -> np.ndarray:
    flat = np.asarray(X, dtype=float).reshape(len(X), -1)
    out = np.zeros_like(flat)
    out[:, :n_valid] = np.log10(flat[:, :n_valid])
    return out


def fit_normalization(X, n: int, k: int) -> tuple[list, list]:
    """Per-position mean and std of ``log10`` gains over the padded-free positions."""
    nv = n_features(n, k)
    logs = _log_features(X, nv)[:, :nv]
    mean = logs.mean(axis=0)
    std = logs.std(axis=0)
    if np.any(std <= 0):
        bad = np.flatnonzero(std <= 0).tolist()
        raise ValueError(f"constant feature(s) at positions {bad}; cannot standardize")
    return mean.tolist(), std.tolist()


def normalize(features, meta: DatasetMeta) -> np.ndarray:
    """Standardize ``log10`` gains with the training statistics in ``meta``.

    Padded positions stay exactly 0.  The output keeps the input's shape.
    """
    X = np.asarray(features, dtype=float)
    single = X.ndim == 2
    if single:
        X = X[None]
    nv = n_features(meta.n, meta.k)
    if len(meta.mean) != nv:
        raise ValueError("meta carries no normalization statistics for this shape")
    out = _log_features(X, nv)
    out[:, :nv] = (out[:, :nv] - np.asarray(meta.mean)) / np.asarray(meta.std)
    out = out.reshape(X.shape)
    return out[0] if single else out


class LogGainScaler(TransformerMixin, BaseEstimator):
    """Log-domain standardization of encoded gain matrices.

    Parameters
    ----------
    n_sources, n_relays : int
        Network size; fixes which trailing matrix entries are padding.
    """

    def __init__(self, n_sources=3, n_relays=2):
        self.n_sources = n_sources
        self.n_relays = n_relays

    def fit(self, X, y=None):
        X = _check_gain_matrices(X, self.n_sources, self.n_relays)
        mean, std = fit_normalization(X, self.n_sources, self.n_relays)
        self.mean_ = np.asarray(mean)
        self.scale_ = np.asarray(std)
        return self

    def transform(self, X):
        check_is_fitted(self, "mean_")
        X = _check_gain_matrices(X, self.n_sources, self.n_relays)
        meta = DatasetMeta(self.n_sources, self.n_relays, {}, 0, self.mean_.tolist(), self.scale_.tolist())
        return normalize(X, meta)

    @classmethod
    def from_meta(cls, meta: DatasetMeta) -> "LogGainScaler":
        scaler = cls(meta.n, meta.k)
        scaler.mean_ = np.asarray(meta.mean)
        scaler.scale_ = np.asarray(meta.std)
        return scaler


def _check_gain_matrices(X, n, k) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    rows = input_rows(n, k)
    if X.ndim == 2 and X.shape[1] == rows * N_COLS:
        X = X.reshape(len(X), rows, N_COLS)
    if X.ndim != 3 or X.shape[1:] != (rows, N_COLS):
        raise ValueError(f"expected gain matrices of shape (n_samples, {rows}, {N_COLS}), got {X.shape}")
    nv = n_features(n, k)
    flat = X.reshape(len(X), -1)
    if not np.all(flat[:, :nv] > 0) or not np.all(np.isfinite(flat[:, :nv])):
        raise ValueError("channel gains must be finite and strictly positive")
    return X


def split_path(out_dir, name: str, split: str) -> Path:
    suffix = "meta.json" if split == "meta" else f"{split}.jsonl"
    return Path(out_dir) / f"{name}.{suffix}"


def generate_dataset(
    n: int,
    k: int,
    sizes=(20000, 2000, 1000),
    seed: int = 0,
    out_dir=".",
    name: str = "dataset",
    geo: GeometryConfig | None = None,
    ehp: EhParams | None = None,
    sys: SystemParams | None = None,
    demand: float = 50.0,
    n_jobs: int = 1,
) -> DatasetMeta:
    """Sample, label and write train/val/test splits plus the meta sidecar.

    Sample ``i`` is drawn from ``SeedSequence([seed, i])``, so output files
    are byte-identical for a fixed seed regardless of ``n_jobs``.
    """
    if n < 1 or k < 0:
        raise ValueError(f"need n >= 1 and k >= 0, got n={n}, k={k}")
    sizes = tuple(int(s) for s in sizes)
    if len(sizes) != 3 or any(s < 1 for s in sizes):
        raise ValueError(f"sizes must be three positive counts, got {sizes}")
    geo, ehp, sys = geo or GeometryConfig(), ehp or EhParams(), sys or SystemParams()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    samples = label_samples(n, k, range(sum(sizes)), seed, geo, ehp, sys, demand, n_jobs)
    bounds = np.cumsum((0,) + sizes)
    by_split = {s: samples[bounds[i] : bounds[i + 1]] for i, s in enumerate(SPLITS)}
    for split, rows in by_split.items():
        with open(split_path(out_dir, name, split), "w", encoding="utf-8") as fh:
            for sample in rows:
                fh.write(sample.to_json() + "\n")

    X_train = np.stack([s.input for s in by_split["train"]])
    mean, std = fit_normalization(X_train, n, k)
    meta = DatasetMeta(
        n=n,
        k=k,
        sizes=dict(zip(SPLITS, sizes)),
        seed=int(seed),
        mean=mean,
        std=std,
        demand=float(demand),
        sys=asdict(sys),
        eh=asdict(ehp),
        geometry=asdict(geo),
    )
    split_path(out_dir, name, "meta").write_text(meta.to_json() + "\n", encoding="utf-8")
    return meta


@dataclass
class Split:
    """Arrays of one split: raw matrices, labels, optimal totals and ids."""

    X: np.ndarray
    y: np.ndarray
    optimal_total: np.ndarray
    ids: np.ndarray

    def __len__(self):
        return len(self.y)


def load_split(out_dir, name: str, split: str) -> Split:
    samples = []
    with open(split_path(out_dir, name, split), encoding="utf-8") as fh:
        samples = [DatasetSample.from_json(line) for line in fh if line.strip()]
    return Split(
        X=np.stack([s.input for s in samples]),
        y=np.array([s.label for s in samples], dtype=int),
        optimal_total=np.array([s.optimal_total for s in samples]),
        ids=np.array([s.instance_id for s in samples], dtype=int),
    )


def load_dataset(out_dir, name: str) -> tuple[DatasetMeta, dict]:
    meta = DatasetMeta.load(split_path(out_dir, name, "meta"))
    return meta, {s: load_split(out_dir, name, s) for s in SPLITS}
