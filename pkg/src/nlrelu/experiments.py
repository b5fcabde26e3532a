"""Initialization-time layer statistics for deep fully-connected stacks.

``simulate_bias_shift`` pushes a standard-normal batch through ``depth``
dense layers of ``width`` units (Gaussian weights, constant bias) and records,
for every hidden layer, the spread of the post-activation values and of the
per-input count of activated (strictly positive) units.

The heteroscedasticity score used here is the ratio of the largest to the
smallest per-layer activation standard deviation.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import activations as act
from .errors import NonFiniteError
from .tensor import RngStream, matmul, sample_normal


@dataclass(frozen=True)
class BiasShiftConfig:
    depth: int = 10
    width: int = 100
    batch: int = 100
    bias_init: float = 0.1
    weight_std: float = 1.5
    activation: act.ActivationSpec = field(default_factory=lambda: act.ActivationSpec("relu"))
    seed: int = 0

    def __post_init__(self):
        if self.depth < 1 or self.width < 1 or self.batch < 1:
            raise ValueError("depth, width and batch must be >= 1")
        if self.weight_std < 0:
            raise ValueError("weight_std must be >= 0")

    def describe(self) -> str:
        d = asdict(self)
        d["activation"] = self.activation.label
        return " ".join(f"{k}={v}" for k, v in d.items())


@dataclass(frozen=True)
class LayerStats:
    layer_index: int
    mean_activation: float
    std_activation: float
    active_fraction: float
    mean_active_count: float
    std_active_count: float
    finite: bool = True


def _stats(index: int, y: np.ndarray) -> LayerStats:
    active = y > 0
    counts = active.sum(axis=1)
    return LayerStats(
        layer_index=index,
        mean_activation=float(y.mean()),
        std_activation=float(y.std()),
        active_fraction=float(active.mean()),
        mean_active_count=float(counts.mean()),
        std_active_count=float(counts.std()),
    )


def simulate_bias_shift(config: BiasShiftConfig, strict: bool = False) -> list[LayerStats]:
    """One forward pass, no training; one ``LayerStats`` per hidden layer.

    Weights and inputs are drawn from streams split off ``config.seed``, so
    two configs differing only in activation see identical weights.

    If a layer overflows, that row is reported with ``finite=False`` and NaN
    statistics and the pass stops there; ``strict=True`` raises
    ``NonFiniteError`` naming the layer instead.
    """
    rng = RngStream(config.seed)
    x = sample_normal(rng.split("input"), (config.batch, config.width), 0.0, 1.0)
    out = []
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(1, config.depth + 1):
            w = sample_normal(rng.split("weight", i), (config.width, config.width), 0.0, config.weight_std)
            z = matmul(x, w) + config.bias_init
            y = act.forward(config.activation, z)
            if not np.isfinite(y).all():
                if strict:
                    raise NonFiniteError(f"hidden layer {i}")
                nan = float("nan")
                out.append(LayerStats(i, nan, nan, nan, nan, nan, finite=False))
                break
            out.append(_stats(i, y))
            x = y
    return out


def heteroscedasticity_metric(stats: list[LayerStats]) -> float:
    """``max(std) / max(min(std), 1e-12)`` over the finite layers."""
    finite = [s.std_activation for s in stats if s.finite]
    if len(finite) < 2:
        raise ValueError("need at least 2 finite layers")
    return max(finite) / max(min(finite), 1e-12)


def mean_shift_report(stats: list[LayerStats]) -> dict:
    finite = [s.mean_activation for s in stats if s.finite]
    if not finite:
        raise ValueError("need at least 1 finite layer")
    return {
        "mean_of_layer_means": float(np.mean(finite)),
        "max_abs_layer_mean": float(max(abs(m) for m in finite)),
    }


CSV_COLUMNS = ("layer", "mean_act", "std_act", "active_frac", "mean_active_count", "std_active_count")


def stats_csv(config: BiasShiftConfig, stats: list[LayerStats]) -> str:
    """CSV with a ``#`` line echoing ``config``; an overflowed layer is written as ``nan``."""
    buf = io.StringIO()
    buf.write(f"# simulate-bias-shift {config.describe()}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for s in stats:
        w.writerow([s.layer_index] + [act.format_float(v) for v in (
            s.mean_activation, s.std_activation, s.active_fraction,
            s.mean_active_count, s.std_active_count)])
    return buf.getvalue()


def compare(config: BiasShiftConfig, other: act.ActivationSpec) -> dict:
    """Run ``config`` and the same config with ``other``; summary of both.

    A run that overflows before the last layer is marked ``diverged``.
    """
    res = {}
    for spec in (config.activation, other):
        st = simulate_bias_shift(replace(config, activation=spec))
        diverged = any(not s.finite for s in st)
        finite = [s for s in st if s.finite]
        res[spec.label] = {
            "stats": st,
            "diverged": diverged,
            "hetero": heteroscedasticity_metric(finite) if len(finite) >= 2 else math.inf,
            **mean_shift_report(finite),
        }
    return res
