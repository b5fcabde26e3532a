from .checkpoint import load as load_checkpoint, save as save_checkpoint
from .gradcheck import GradCheckReport, grad_check, relative_error
from .layers import (
    Activation,
    BatchNorm,
    Conv2D,
    Dense,
    Flatten,
    GlobalAvgPool,
    Layer,
    MaxPool,
    ResidualUnit,
    SoftmaxOutput,
)
from .model import Network, ParamStore, build
from .optim import AdamState, TrainConfig, adam_step

__all__ = [
    "Activation", "AdamState", "BatchNorm", "Conv2D", "Dense", "Flatten", "GlobalAvgPool",
    "GradCheckReport", "Layer", "MaxPool", "Network", "ParamStore", "ResidualUnit",
    "SoftmaxOutput", "TrainConfig", "adam_step", "build", "grad_check", "load_checkpoint",
    "relative_error", "save_checkpoint",
]
