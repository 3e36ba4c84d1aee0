"""Teacher-student training and parameter-budget architecture search.

:func:`distill_train` fits a student on a blend of the hard labels and a
trained teacher's soft outputs.  :func:`dasa` bisects the student's
trainable-parameter budget; each candidate budget is turned into concrete
layer widths by :func:`seq_psa`, which walks the layers from last to first
and picks the menu width that brings the count closest to the budget.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .neural.arch import ArchSpec
from .neural.network import Model, param_count
from .neural.training import TrainConfig, TrainHistory, evaluate_ce, train

DEFAULT_MENU = (64, 32, 24, 16, 8, 2, 0)


@dataclass
class TrainData:
    """Normalized inputs and optimal assignments of the train and validation splits."""

    X_train: np.ndarray
    y_train: np.ndarray
    X_val: np.ndarray
    y_val: np.ndarray


@dataclass
class DistillResult:
    model: Model
    history: TrainHistory
    val_ce: float


def teacher_logits(teacher: Model, X, batch_size: int = 1024) -> np.ndarray:
    """Inference-mode teacher outputs, computed once and reused every epoch."""
    return teacher.logits(X, batch_size)


def distill_train(
    teacher: Model,
    student_arch: ArchSpec,
    data: TrainData,
    cfg: TrainConfig | None = None,
    cached_logits: np.ndarray | None = None,
) -> DistillResult:
    """Train ``student_arch`` against labels and the teacher's soft outputs.

    With ``cfg.lambda2 == 0`` the teacher is ignored and this is plain
    cross-entropy training.  ``val_ce`` is the student's validation cross
    entropy after the last epoch.
    """
    cfg = cfg or TrainConfig(lambda1=0.5, lambda2=0.5)
    if teacher.arch.class_shape != student_arch.class_shape:
        raise ValueError("teacher and student predict different class shapes")
    soft = None
    if cfg.distilling:
        soft = cached_logits if cached_logits is not None else teacher_logits(teacher, data.X_train)
    model, history = train(
        student_arch, data.X_train, data.y_train, data.X_val, data.y_val, cfg, teacher_train=soft
    )
    return DistillResult(model, history, evaluate_ce(model, data.X_val, data.y_val))


@dataclass(frozen=True)
class PsaResult:
    nodes: tuple
    param_count: int
    n_layers: int  # layers with a non-zero width


def seq_psa(
    nodes: Sequence[int],
    target: int,
    menu: Sequence[int],
    count: Callable[[tuple], int],
    delta: float | None = None,
    protected: Sequence[int] = (),
) -> PsaResult:
    """Fit layer widths to a parameter budget, one layer at a time.

    Layers are visited from last to first.  At each layer every width in
    ``menu`` (plus the layer's current width) is tried with the other
    layers held fixed, and the one whose total ``count`` is closest to
    ``target`` is kept; ties keep the current width, then the earlier menu
    entry.  The walk stops once the distance drops below ``delta``
    (default ``0.02 * target``).  Layers listed in ``protected`` never get
    width 0.

    Parameters
    ----------
    nodes : sequence of int
        Starting width per layer; 0 marks a removed layer.
    target : int
        Desired trainable-parameter count.
    menu : sequence of int
        Allowed widths.
    count : callable
        Maps a width tuple to its exact parameter count.
    delta : float, optional
    protected : sequence of int
        Layer indices (negative allowed) that must keep a positive width.

    Returns
    -------
    PsaResult
    """
    if target < 0:
        raise ValueError("target must be non-negative")
    current = [int(m) for m in nodes]
    n = len(current)
    keep = {p % n for p in protected}
    delta = 0.02 * target if delta is None else float(delta)
    cache: dict[tuple, int] = {}

    def cnt(widths):
        key = tuple(widths)
        if key not in cache:
            cache[key] = int(count(key))
        return cache[key]

    realized = cnt(current)
    for pos in range(n - 1, -1, -1):
        options = [current[pos]] + [int(m) for m in menu if m != current[pos]]
        if pos in keep:
            options = [m for m in options if m > 0]
        best_m, best_c = None, None
        for m in options:
            trial = current.copy()
            trial[pos] = m
            c = cnt(trial)
            if best_c is None or abs(target - c) < abs(target - best_c):
                best_m, best_c = m, c
        current[pos], realized = best_m, best_c
        if abs(target - realized) < delta:
            break
    return PsaResult(tuple(current), realized, sum(1 for m in current if m > 0))


def seq_psa_arch(arch: ArchSpec, target: int, menu=DEFAULT_MENU, delta=None) -> tuple[ArchSpec, PsaResult]:
    """:func:`seq_psa` over a convolutional plan; the stem and last layer stay."""
    if not arch.nodes:
        raise ValueError("architecture search needs a convolutional plan")
    res = seq_psa(
        arch.nodes, target, menu, lambda w: param_count(arch.with_nodes(w)), delta, protected=(0, -1)
    )
    return arch.with_nodes(res.nodes), res


@dataclass(frozen=True)
class SearchConfig:
    """Settings of the budget bisection.

    ``node_menu`` must contain 0.  ``delta_params=None`` uses 2% of each
    iteration's target.  ``train`` is the budget of every inner run.
    """

    node_menu: tuple = DEFAULT_MENU
    eps_params: int = 300
    delta_params: float | None = None
    v_threshold: float = 1.5
    train: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=20, lambda1=0.5, lambda2=0.5))
    max_iter: int = 64

    def __post_init__(self):
        object.__setattr__(self, "node_menu", tuple(int(m) for m in self.node_menu))
        if 0 not in self.node_menu:
            raise ValueError("node_menu must contain 0")
        if any(m < 0 for m in self.node_menu):
            raise ValueError("node_menu entries must be non-negative")
        if self.eps_params < 1:
            raise ValueError("eps_params must be >= 1")
        if not self.v_threshold > 0:
            raise ValueError("v_threshold must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["node_menu"] = list(self.node_menu)
        return d


@dataclass
class SearchRecord:
    iteration: int
    target: int
    realized: int
    nodes: list
    hidden_blocks: int
    val_ce: float
    passed: bool
    ub: int
    lb: int


@dataclass
class SearchTrace:
    """One record per iteration; ``ub``/``lb`` are the bounds after it."""

    teacher_params: int
    records: list = field(default_factory=list)
    selected: int | None = None  # index of the returned record
    threshold_met: bool = True

    def to_dict(self) -> dict:
        return {
            "teacher_params": self.teacher_params,
            "selected": self.selected,
            "threshold_met": self.threshold_met,
            "records": [asdict(r) for r in self.records],
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def iteration_bound(teacher_params: int, eps: int) -> int:
    """Upper bound on the number of bisection steps."""
    return int(np.ceil(np.log2(max(teacher_params / eps, 1.0)))) + 1


def dasa(teacher: Model, data: TrainData, sc: SearchConfig | None = None, log=None):
    """Bisect the student's parameter budget between 0 and the teacher's.

    Each iteration targets the midpoint budget, realizes it with
    :func:`seq_psa_arch` starting from the previous student's widths,
    distills the student and moves the upper bound down when its
    validation cross entropy is below ``v_threshold`` (the lower bound up
    otherwise).  The search ends once ``ub - lb < eps_params``.

    Returns
    -------
    model : Model
        The smallest student meeting the threshold or, if none did, the
        student with the lowest validation loss (``trace.threshold_met`` is
        then False).
    trace : SearchTrace
    """
    sc = sc or SearchConfig()
    omega = teacher.param_count()
    ub, lb = omega, 0
    arch = teacher.arch
    cached = teacher_logits(teacher, data.X_train) if sc.train.distilling else None
    trace = SearchTrace(teacher_params=omega)
    models = []
    it = 0
    while ub - lb >= sc.eps_params and it < sc.max_iter:
        it += 1
        target = (ub + lb) // 2
        arch, psa = seq_psa_arch(arch, target, sc.node_menu, sc.delta_params)
        res = distill_train(teacher, arch, data, sc.train, cached_logits=cached)
        passed = bool(res.val_ce < sc.v_threshold)
        if passed:
            ub = target
        else:
            lb = target
        trace.records.append(
            SearchRecord(it, target, psa.param_count, list(psa.nodes), arch.hidden_blocks,
                         float(res.val_ce), passed, ub, lb)
        )
        models.append(res.model)
        if log is not None:
            log(trace.records[-1])

    if not models:
        trace.threshold_met = False
        return teacher, trace
    passing = [i for i, r in enumerate(trace.records) if r.passed]
    if passing:
        pick = min(passing, key=lambda i: (trace.records[i].realized, i))
    else:
        trace.threshold_met = False
        pick = min(range(len(models)), key=lambda i: (trace.records[i].val_ce, i))
    trace.selected = pick
    return models[pick], trace


__all__ = [
    "DEFAULT_MENU",
    "DistillResult",
    "PsaResult",
    "SearchConfig",
    "SearchRecord",
    "SearchTrace",
    "TrainData",
    "dasa",
    "distill_train",
    "iteration_bound",
    "seq_psa",
    "seq_psa_arch",
    "teacher_logits",
]
