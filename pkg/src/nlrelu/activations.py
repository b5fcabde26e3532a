"""Activation functions with analytic first derivatives.

The zoo covers NLReLU, ``f(x) = ln(beta * max(0, x) + 1)``, and the usual
comparison set: ReLU, Softplus, Sigmoid, Tanh, leaky ReLU, PReLU, ELU, SELU
and Swish.

Conventions at the kink ``x = 0``:

* NLReLU derivative is ``beta`` (the ``x >= 0`` branch).
* ReLU, LReLU and PReLU derivatives take the ``x < 0`` branch (0 for ReLU).
* ELU and SELU use the ``x > 0`` branch at exactly zero as well.

Examples
--------
>>> import numpy as np
>>> spec = ActivationSpec("nlrelu", beta=1.0)
>>> forward(spec, np.array([-2.0, 0.0, 1.0]))
array([0.        , 0.        , 0.69314718])
>>> derivative(spec, np.array([0.0, 1.0]))
array([1. , 0.5])
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .tensor import as_tensor

SELU_SCALE = 1.0507009873554805
SELU_ALPHA = 1.6732632423543772

DEFAULT_PARAMS: dict[str, dict[str, float]] = {
    "nlrelu": {"beta": 1.0},
    "relu": {},
    "softplus": {},
    "sigmoid": {},
    "tanh": {},
    "lrelu": {"slope": 0.01},
    "prelu": {"slope": 0.25},
    "elu": {"alpha": 1.0},
    "selu": {"scale": SELU_SCALE, "alpha": SELU_ALPHA},
    "swish": {"beta": 1.0},
}

ZOO = tuple(DEFAULT_PARAMS)

# Activations with a non-differentiable point at x = 0.
KINKED = frozenset({"nlrelu", "relu", "lrelu", "prelu", "elu", "selu"})

_ALIASES = {
    "leaky_relu": "lrelu",
    "leakyrelu": "lrelu",
    "silu": "swish",
}


@dataclass(frozen=True)
class ActivationSpec:
    """One activation function and its parameters.

    Unspecified parameters take the kind's default (see ``DEFAULT_PARAMS``).
    For PReLU, ``slope`` is only the initial value; the trained slope lives in
    the network's parameter store and is passed to ``forward`` explicitly.
    """

    kind: str
    params: tuple[tuple[str, float], ...] = field(default=())

    def __init__(self, kind: str, **params: float):
        k = kind.lower().replace("-", "_")
        k = _ALIASES.get(k, k)
        if k not in DEFAULT_PARAMS:
            raise ValueError(f"unknown activation {kind!r}; expected one of {ZOO}")
        merged = dict(DEFAULT_PARAMS[k])
        for name, value in params.items():
            if name not in merged:
                raise ValueError(f"{k} has no parameter {name!r}")
            merged[name] = float(value)
        for name, value in merged.items():
            if not math.isfinite(value):
                raise ValueError(f"{k}.{name} must be finite, got {value}")
        if k == "nlrelu" and merged["beta"] <= 0:
            raise ValueError(f"nlrelu.beta must be > 0, got {merged['beta']}")
        object.__setattr__(self, "kind", k)
        object.__setattr__(self, "params", tuple(sorted(merged.items())))

    def __getitem__(self, name: str) -> float:
        return dict(self.params)[name]

    @property
    def has_kink(self) -> bool:
        return self.kind in KINKED

    @property
    def label(self) -> str:
        """Short human-readable name, e.g. ``nlrelu(beta=0.95)``."""
        if not self.params:
            return self.kind
        inner = ",".join(f"{k}={v:g}" for k, v in self.params)
        return f"{self.kind}({inner})"

    @classmethod
    def parse(cls, text: str) -> "ActivationSpec":
        """Parse ``"nlrelu"``, ``"nlrelu:beta=0.9"`` or ``"selu:scale=1,alpha=2"``."""
        kind, _, rest = text.partition(":")
        params = {}
        for item in filter(None, rest.split(",")):
            name, _, value = item.partition("=")
            params[name.strip()] = float(value)
        return cls(kind.strip(), **params)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # Two-sided form: no overflow for large |x|.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def forward(spec: ActivationSpec, x, slope: float | None = None) -> np.ndarray:
    """Apply the activation elementwise.

    ``slope`` overrides the PReLU slope (the trainable value); it is ignored
    by every other kind.
    """
    x = as_tensor(x)
    k = spec.kind
    if k == "nlrelu":
        return np.log1p(spec["beta"] * np.maximum(x, 0.0))
    if k == "relu":
        return np.maximum(x, 0.0)
    if k == "softplus":
        return _softplus(x)
    if k == "sigmoid":
        return _sigmoid(x)
    if k == "tanh":
        return np.tanh(x)
    if k in ("lrelu", "prelu"):
        a = spec["slope"] if slope is None else slope
        return np.where(x > 0, x, a * x)
    if k == "elu":
        return np.where(x > 0, x, spec["alpha"] * np.expm1(np.minimum(x, 0.0)))
    if k == "selu":
        neg = spec["alpha"] * np.expm1(np.minimum(x, 0.0))
        return spec["scale"] * np.where(x > 0, x, neg)
    if k == "swish":
        return x * _sigmoid(spec["beta"] * x)
    raise AssertionError(k)


def derivative(spec: ActivationSpec, x, slope: float | None = None) -> np.ndarray:
    """Analytic ``df/dx`` evaluated elementwise."""
    x = as_tensor(x)
    k = spec.kind
    if k == "nlrelu":
        b = spec["beta"]
        d = np.maximum(x, 0.0)
        d *= b
        d += 1.0
        np.divide(b, d, out=d)
        d[x < 0] = 0.0
        return d
    if k == "relu":
        return (x > 0).astype(x.dtype)
    if k == "softplus":
        return _sigmoid(x)
    if k == "sigmoid":
        # s(x) * s(-x) keeps full relative precision in both tails
        return _sigmoid(x) * _sigmoid(-x)
    if k == "tanh":
        # sech^2 written in exp(-2|x|) so the tails avoid 1 - tanh^2 cancellation
        e = np.exp(-2.0 * np.abs(x))
        return 4.0 * e / (1.0 + e) ** 2
    if k in ("lrelu", "prelu"):
        a = spec["slope"] if slope is None else slope
        return np.where(x > 0, 1.0, a)
    if k == "elu":
        return np.where(x >= 0, 1.0, spec["alpha"] * np.exp(np.minimum(x, 0.0)))
    if k == "selu":
        neg = spec["alpha"] * np.exp(np.minimum(x, 0.0))
        return spec["scale"] * np.where(x >= 0, 1.0, neg)
    if k == "swish":
        b = spec["beta"]
        s = _sigmoid(b * x)
        return s + b * x * s * _sigmoid(-b * x)
    raise AssertionError(k)


def slope_gradient(x, upstream) -> float:
    """d(loss)/d(slope) for a PReLU with a single shared slope."""
    x = as_tensor(x)
    return float(np.sum(np.asarray(upstream) * np.minimum(x, 0.0)))


def discrimination_gap(spec: ActivationSpec, a: float, delta: float) -> float:
    """Output gap ``f(a + delta) - f(a)`` for an input gap ``delta`` at ``a``.

    For NLReLU this is evaluated as ``log1p(beta*delta / (beta*a + 1))``,
    which equals ``ln(beta*(a+delta)+1) - ln(beta*a+1)`` without cancellation.
    """
    if a < 0:
        raise ValueError(f"a must be >= 0, got {a}")
    if delta <= 0:
        raise ValueError(f"delta must be > 0, got {delta}")
    if spec.kind == "nlrelu":
        b = spec["beta"]
        return math.log1p(b * delta / (b * a + 1.0))
    pts = forward(spec, np.array([a, a + delta]))
    return float(pts[1] - pts[0])


def emit_curve(
    spec: ActivationSpec,
    x_min: float,
    x_max: float,
    n_points: int,
    which: str = "value",
) -> list[tuple[float, float]]:
    """Evenly spaced ``(x, f(x))`` or ``(x, f'(x))`` samples on ``[x_min, x_max]``."""
    if not x_min < x_max:
        raise ValueError("x_min must be < x_max")
    if n_points < 2:
        raise ValueError("n_points must be >= 2")
    if which not in ("value", "derivative"):
        raise ValueError("which must be 'value' or 'derivative'")
    xs = np.linspace(x_min, x_max, n_points)
    ys = forward(spec, xs) if which == "value" else derivative(spec, xs)
    return [(float(a), float(b)) for a, b in zip(xs, ys)]


def format_float(v: float) -> str:
    """17 significant digits: enough to round-trip any double."""
    return format(v, ".17g")


def curve_csv(rows: Iterable[tuple[float, float]], comments: Iterable[str] = ()) -> str:
    buf = io.StringIO()
    for line in comments:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "value"])
    for x, y in rows:
        w.writerow([format_float(x), format_float(y)])
    return buf.getvalue()
