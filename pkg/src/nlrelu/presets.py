"""Model presets: simple_cnn, lenet5_like and tiny_resnet."""

from __future__ import annotations

from .activations import ActivationSpec
from .errors import ConfigError
from .network import (
    Activation,
    BatchNorm,
    Conv2D,
    Dense,
    Flatten,
    GlobalAvgPool,
    MaxPool,
    ResidualUnit,
    SoftmaxOutput,
)

PRESETS = ("simple_cnn", "lenet5_like", "tiny_resnet")

# Order used by the position ablation.
POSITION_FLAGS = ((0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1),
                  (1, 1, 0), (1, 0, 1), (0, 1, 1), (1, 1, 1))


def simple_cnn(spec: ActivationSpec, num_classes: int = 10, *, pool: bool = True,
               filters: int = 64, dense: int = 1024, kernel: int = 5):
    """conv(filters, k x k, same padding) -> AF -> [2x2 maxpool] -> dense -> AF -> dense -> softmax."""
    layers = [Conv2D(filters, kernel, pad=kernel // 2), Activation(spec)]
    if pool:
        layers.append(MaxPool(2))
    layers += [Flatten(), Dense(dense), Activation(spec), Dense(num_classes), SoftmaxOutput()]
    return layers


def lenet5_like(spec: ActivationSpec, num_classes: int = 10):
    """conv6@5x5 / pool / conv16@5x5 / pool / dense120 / dense84 / softmax.

    The first convolution pads by 2 so 28x28 inputs keep the classic
    32x32-equivalent geometry.
    """
    return [
        Conv2D(6, 5, pad=2), Activation(spec), MaxPool(2),
        Conv2D(16, 5), Activation(spec), MaxPool(2),
        Flatten(), Dense(120), Activation(spec), Dense(84), Activation(spec),
        Dense(num_classes), SoftmaxOutput(),
    ]


def tiny_resnet(spec: ActivationSpec, flags=(0, 1, 0), num_classes: int = 10, *,
                widths=(16, 32, 64), units_per_stage: int = 2):
    """Pre-activation residual network with togglable activation sites.

    ``flags = (A, B, C)``: A is the activation after each unit's input BN,
    B the activation inside the unit, C the one after the final BN before
    global average pooling. Stages after the first start with a stride-2
    unit whose skip is a 2x2 stride-2 projection.
    """
    a, b, c = (bool(f) for f in flags)
    layers = [Conv2D(widths[0], 3, pad=1, bias=False)]
    for s, width in enumerate(widths):
        for u in range(units_per_stage):
            stride = 2 if (s > 0 and u == 0) else 1
            layers.append(ResidualUnit(width, stride=stride, spec=spec, use_a=a, use_b=b))
    layers.append(BatchNorm())
    if c:
        layers.append(Activation(spec))
    layers += [GlobalAvgPool(), Dense(num_classes), SoftmaxOutput()]
    return layers


def make(name: str, spec: ActivationSpec, num_classes: int = 10, **kw):
    if name == "simple_cnn":
        return simple_cnn(spec, num_classes, **kw)
    if name == "lenet5_like":
        return lenet5_like(spec, num_classes, **kw)
    if name == "tiny_resnet":
        return tiny_resnet(spec, num_classes=num_classes, **kw)
    raise ConfigError(f"unknown preset {name!r}; expected one of {PRESETS}")


def default_init(name: str) -> str:
    return "msra" if name == "tiny_resnet" else "xavier"
