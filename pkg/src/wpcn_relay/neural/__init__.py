"""From-scratch numpy networks for relay selection."""
from .arch import (
    ARCHITECTURES,
    SC_KERNELS,
    SKIN_KERNELS,
    ArchSpec,
    LayerSpec,
    make_arch,
    make_rel_net,
    make_sc_net,
    make_skin_net,
    make_student,
)
from .estimator import RelayNetClassifier
from .losses import ce_loss, distill_loss, kld_loss, log_softmax, softmax
from .network import Model, param_count
from .optim import AdamState, adam_step
from .training import (
    TrainConfig,
    TrainHistory,
    TrainingDivergedError,
    decode_classes,
    encode_targets,
    evaluate_ce,
    predict,
    predict_proba,
    train,
)

__all__ = [
    "ARCHITECTURES",
    "SC_KERNELS",
    "SKIN_KERNELS",
    "AdamState",
    "ArchSpec",
    "LayerSpec",
    "Model",
    "RelayNetClassifier",
    "TrainConfig",
    "TrainHistory",
    "TrainingDivergedError",
    "adam_step",
    "ce_loss",
    "decode_classes",
    "distill_loss",
    "encode_targets",
    "evaluate_ce",
    "kld_loss",
    "log_softmax",
    "make_arch",
    "make_rel_net",
    "make_sc_net",
    "make_skin_net",
    "make_student",
    "param_count",
    "predict",
    "predict_proba",
    "softmax",
    "train",
]
