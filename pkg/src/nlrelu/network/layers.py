"""Layer definitions with explicit forward and backward passes.

A layer object is a description (its constructor arguments) plus, once a
network is built, its resolved input/output shapes and a parameter-name
prefix. Parameters never live on the layer; they are looked up in the
``ParamStore`` by ``prefix + local_name``.

``forward(params, x, train)`` returns ``(y, cache)`` and never mutates
``params``; batch-norm running statistics for the next step are returned in
the cache and applied by ``Network.apply_state_updates``.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .. import activations as act
from ..errors import ShapeError
from ..tensor import (RngStream, conv2d, conv2d_backward, conv2d_with_cols, conv_output_size,
                      maxpool2d, maxpool2d_backward)

BN_MOMENTUM = 0.9
BN_EPS = 1e-5


def init_weights(rng: RngStream, shape, fan_in: int, fan_out: int, scheme: str) -> np.ndarray:
    """Gaussian weights: Xavier var 2/(fan_in+fan_out), MSRA var 2/fan_in."""
    if scheme == "xavier":
        var = 2.0 / (fan_in + fan_out)
    elif scheme == "msra":
        var = 2.0 / fan_in
    else:
        raise ValueError(f"unknown init scheme {scheme!r}")
    return rng.normal(shape, 0.0, float(np.sqrt(var)))


class Layer:
    kind = "layer"
    prefix = ""
    in_shape: tuple = ()
    out_shape: tuple = ()

    def bind(self, prefix: str, in_shape: tuple) -> "Layer":
        """Copy of this layer with shapes resolved; raises ShapeError if incompatible."""
        layer = copy.copy(self)
        layer.prefix = prefix
        layer.in_shape = tuple(in_shape)
        layer.out_shape = tuple(layer._output_shape(layer.in_shape))
        return layer

    def _output_shape(self, in_shape: tuple) -> tuple:
        return in_shape

    def init_params(self, rng: RngStream, scheme: str) -> tuple[dict, list[str]]:
        """``(tensors, trainable_names)`` with fully qualified names."""
        return {}, []

    def forward(self, p, x, train: bool):
        raise NotImplementedError

    def backward(self, p, dy, cache, need_dx: bool = True):
        raise NotImplementedError

    def state_updates(self, cache) -> dict:
        return {}

    def kink_signature(self, cache) -> list:
        return []

    @property
    def name(self) -> str:
        return f"{self.prefix.rstrip('.')}:{self.kind}"


@dataclass
class Dense(Layer):
    out_features: int
    bias: bool = True
    kind = "dense"

    def _output_shape(self, in_shape):
        if len(in_shape) != 1:
            raise ShapeError(f"dense expects flat input, got per-sample shape {in_shape}")
        return (self.out_features,)

    def init_params(self, rng, scheme):
        fan_in = self.in_shape[0]
        t = {self.prefix + "w": init_weights(rng.split(self.prefix + "w"), (fan_in, self.out_features),
                                             fan_in, self.out_features, scheme)}
        if self.bias:
            t[self.prefix + "b"] = np.zeros(self.out_features)
        return t, list(t)

    def forward(self, p, x, train):
        y = x @ p[self.prefix + "w"]
        if self.bias:
            y += p[self.prefix + "b"]
        return y, x

    def backward(self, p, dy, x, need_dx=True):
        g = {self.prefix + "w": x.T @ dy}
        if self.bias:
            g[self.prefix + "b"] = dy.sum(axis=0)
        dx = dy @ p[self.prefix + "w"].T if need_dx else None
        return dx, g


@dataclass
class Conv2D(Layer):
    filters: int
    kh: int
    kw: int | None = None
    stride: int = 1
    pad: int = 0
    bias: bool = True
    kind = "conv2d"

    def __post_init__(self):
        if self.kw is None:
            self.kw = self.kh

    def _output_shape(self, in_shape):
        if len(in_shape) != 3:
            raise ShapeError(f"conv2d expects (C,H,W) input, got {in_shape}")
        _, h, w = in_shape
        return (self.filters, conv_output_size(h, self.kh, self.stride, self.pad),
                conv_output_size(w, self.kw, self.stride, self.pad))

    def init_params(self, rng, scheme):
        c = self.in_shape[0]
        shape = (self.filters, c, self.kh, self.kw)
        area = self.kh * self.kw
        t = {self.prefix + "w": init_weights(rng.split(self.prefix + "w"), shape,
                                             c * area, self.filters * area, scheme)}
        if self.bias:
            t[self.prefix + "b"] = np.zeros(self.filters)
        return t, list(t)

    def forward(self, p, x, train):
        # In training the im2col matrix is kept so backward need not rebuild it.
        if train:
            y, cols = conv2d_with_cols(x, p[self.prefix + "w"], self.stride, self.pad)
        else:
            y, cols = conv2d(x, p[self.prefix + "w"], self.stride, self.pad), None
        if self.bias:
            y += p[self.prefix + "b"][None, :, None, None]
        return y, (x, cols)

    def backward(self, p, dy, cache, need_dx=True):
        x, cols = cache
        dx, dw = conv2d_backward(dy, x, p[self.prefix + "w"], self.stride, self.pad, need_dx, cols)
        g = {self.prefix + "w": dw}
        if self.bias:
            g[self.prefix + "b"] = dy.sum(axis=(0, 2, 3))
        return dx, g


@dataclass
class MaxPool(Layer):
    """Max pooling; ties go to the first element in row-major window order."""

    k: int = 2
    stride: int | None = None
    kind = "maxpool"

    def __post_init__(self):
        if self.stride is None:
            self.stride = self.k

    def _output_shape(self, in_shape):
        if len(in_shape) != 3:
            raise ShapeError(f"maxpool expects (C,H,W) input, got {in_shape}")
        c, h, w = in_shape
        return (c, conv_output_size(h, self.k, self.stride, 0),
                conv_output_size(w, self.k, self.stride, 0))

    def forward(self, p, x, train):
        y, idx = maxpool2d(x, self.k, self.stride)
        return y, (x.shape, idx)

    def backward(self, p, dy, cache, need_dx=True):
        if not need_dx:
            return None, {}
        shape, idx = cache
        return maxpool2d_backward(dy, idx, shape, self.k, self.stride), {}

    def kink_signature(self, cache):
        return [cache[1]]


@dataclass
class GlobalAvgPool(Layer):
    kind = "avgpool_global"

    def _output_shape(self, in_shape):
        if len(in_shape) != 3:
            raise ShapeError(f"global average pool expects (C,H,W), got {in_shape}")
        return (in_shape[0],)

    def forward(self, p, x, train):
        return x.mean(axis=(2, 3)), x.shape

    def backward(self, p, dy, shape, need_dx=True):
        h, w = shape[2], shape[3]
        return np.broadcast_to(dy[:, :, None, None] / (h * w), shape).copy(), {}


@dataclass
class Flatten(Layer):
    kind = "flatten"

    def _output_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, p, x, train):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, p, dy, shape, need_dx=True):
        return dy.reshape(shape), {}


@dataclass
class BatchNorm(Layer):
    """Per-feature (2-D input) or per-channel (4-D input) batch normalization."""

    eps: float = BN_EPS
    kind = "batchnorm"

    def init_params(self, rng, scheme):
        c = self.in_shape[0]
        t = {
            self.prefix + "gamma": np.ones(c),
            self.prefix + "beta": np.zeros(c),
            self.prefix + "running_mean": np.zeros(c),
            self.prefix + "running_var": np.ones(c),
        }
        return t, [self.prefix + "gamma", self.prefix + "beta"]

    def _axes(self, x):
        return (0,) if x.ndim == 2 else (0, 2, 3)

    def _bcast(self, v, ndim):
        return v if ndim == 2 else v[None, :, None, None]

    def forward(self, p, x, train):
        axes = self._axes(x)
        gamma = self._bcast(p[self.prefix + "gamma"], x.ndim)
        beta = self._bcast(p[self.prefix + "beta"], x.ndim)
        if train:
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
        else:
            mean = p[self.prefix + "running_mean"]
            var = p[self.prefix + "running_var"]
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - self._bcast(mean, x.ndim)) * self._bcast(inv_std, x.ndim)
        return gamma * xhat + beta, (xhat, inv_std, mean, var, train)

    def normalize(self, x):
        """Train-mode normalized values before scale and shift."""
        axes = self._axes(x)
        mean, var = x.mean(axis=axes), x.var(axis=axes)
        return (x - self._bcast(mean, x.ndim)) / self._bcast(np.sqrt(var + self.eps), x.ndim)

    def backward(self, p, dy, cache, need_dx=True):
        xhat, inv_std, _, _, train = cache
        axes = self._axes(dy)
        g = {
            self.prefix + "gamma": (dy * xhat).sum(axis=axes),
            self.prefix + "beta": dy.sum(axis=axes),
        }
        if not need_dx:
            return None, g
        gamma = self._bcast(p[self.prefix + "gamma"], dy.ndim)
        dxhat = dy * gamma
        if not train:
            return dxhat * self._bcast(inv_std, dy.ndim), g
        m = dy.size // dy.shape[1]
        mean_dxhat = self._bcast(dxhat.sum(axis=axes) / m, dy.ndim)
        mean_dxhat_xhat = self._bcast((dxhat * xhat).sum(axis=axes) / m, dy.ndim)
        dx = (dxhat - mean_dxhat - xhat * mean_dxhat_xhat) * self._bcast(inv_std, dy.ndim)
        return dx, g

    def state_updates(self, cache):
        _, _, mean, var, train = cache
        if not train:
            return {}
        return {self.prefix + "running_mean": mean, self.prefix + "running_var": var}


@dataclass
class Activation(Layer):
    spec: act.ActivationSpec = field(default_factory=lambda: act.ActivationSpec("relu"))
    kind = "activation"

    @property
    def name(self):
        return f"{self.prefix.rstrip('.')}:activation[{self.spec.label}]"

    def init_params(self, rng, scheme):
        if self.spec.kind != "prelu":
            return {}, []
        t = {self.prefix + "slope": np.array([self.spec["slope"]])}
        return t, list(t)

    def _slope(self, p):
        return p[self.prefix + "slope"][0] if self.spec.kind == "prelu" else None

    def forward(self, p, x, train):
        return act.forward(self.spec, x, self._slope(p)), x

    def backward(self, p, dy, x, need_dx=True):
        g = {}
        if self.spec.kind == "prelu":
            g[self.prefix + "slope"] = np.array([act.slope_gradient(x, dy)])
        dx = dy * act.derivative(self.spec, x, self._slope(p)) if need_dx else None
        return dx, g

    def kink_signature(self, x):
        return [x > 0] if self.spec.has_kink else []


@dataclass
class ResidualUnit(Layer):
    """Full pre-activation residual unit: BN -> AF(A) -> W1 -> BN -> AF(B) -> W2, plus skip.

    With ``use_a``/``use_b`` false the corresponding activation is the
    identity. W1 and W2 are 3x3 convolutions. For ``stride=2`` W1 is a 4x4,
    stride-2, pad-1 convolution and the skip is a 2x2 stride-2 projection of
    the pre-activated input, so even resolutions halve exactly. A 1x1
    projection handles a channel change at stride 1.
    """

    filters: int
    stride: int = 1
    spec: act.ActivationSpec = field(default_factory=lambda: act.ActivationSpec("nlrelu"))
    use_a: bool = True
    use_b: bool = True
    kind = "residual_unit"

    def bind(self, prefix, in_shape):
        layer = super().bind(prefix, in_shape)
        c = in_shape[0]
        subs = [("bn1", BatchNorm())]
        if layer.use_a:
            subs.append(("act_a", Activation(layer.spec)))
        pre = len(subs)
        k1 = 3 if layer.stride == 1 else 2 * layer.stride
        subs += [("conv1", Conv2D(layer.filters, k1, stride=layer.stride, pad=1, bias=False)),
                 ("bn2", BatchNorm())]
        if layer.use_b:
            subs.append(("act_b", Activation(layer.spec)))
        subs.append(("conv2", Conv2D(layer.filters, 3, stride=1, pad=1, bias=False)))
        shape = tuple(in_shape)
        bound = []
        for name, sub in subs:
            s = sub.bind(f"{prefix}{name}.", shape)
            bound.append(s)
            shape = s.out_shape
        layer.subs = bound
        layer.n_pre = pre
        layer.proj = None
        if c != layer.filters or layer.stride != 1:
            layer.proj = Conv2D(layer.filters, layer.stride, stride=layer.stride, bias=False).bind(
                f"{prefix}proj.", bound[pre - 1].out_shape)
        return layer

    def _output_shape(self, in_shape):
        if len(in_shape) != 3:
            raise ShapeError(f"residual unit expects (C,H,W), got {in_shape}")
        _, h, w = in_shape
        k1 = 3 if self.stride == 1 else 2 * self.stride
        return (self.filters, conv_output_size(h, k1, self.stride, 1),
                conv_output_size(w, k1, self.stride, 1))

    def _all(self):
        return self.subs + ([self.proj] if self.proj is not None else [])

    def init_params(self, rng, scheme):
        t, tr = {}, []
        for sub in self._all():
            a, b = sub.init_params(rng, scheme)
            t.update(a)
            tr += b
        return t, tr

    def forward(self, p, x, train):
        caches = []
        h = x
        pre = None
        for i, sub in enumerate(self.subs):
            h, c = sub.forward(p, h, train)
            caches.append(c)
            if i == self.n_pre - 1:
                pre = h
        if self.proj is not None:
            skip, pc = self.proj.forward(p, pre, train)
        else:
            skip, pc = x, None
        return h + skip, (caches, pc)

    def backward(self, p, dy, cache, need_dx=True):
        caches, pc = cache
        grads = {}
        d = dy
        dpre_skip = None
        if self.proj is not None:
            dpre_skip, g = self.proj.backward(p, dy, pc)
            grads.update(g)
        for i in range(len(self.subs) - 1, -1, -1):
            d, g = self.subs[i].backward(p, d, caches[i], need_dx=True)
            grads.update(g)
            if i == self.n_pre and dpre_skip is not None:
                d = d + dpre_skip
        if self.proj is None:
            d = d + dy
        return d, grads

    def state_updates(self, cache):
        out = {}
        for sub, c in zip(self.subs, cache[0]):
            out.update(sub.state_updates(c))
        return out

    def kink_signature(self, cache):
        sig = []
        for sub, c in zip(self.subs, cache[0]):
            sig += sub.kink_signature(c)
        return sig

    def sublayer_names(self):
        return [s.name for s in self._all()]


@dataclass
class SoftmaxOutput(Layer):
    """Softmax probabilities; paired with mean cross-entropy loss."""

    kind = "softmax_output"

    def _output_shape(self, in_shape):
        if len(in_shape) != 1:
            raise ShapeError(f"softmax output expects flat logits, got {in_shape}")
        return in_shape

    def forward(self, p, x, train):
        z = x - x.max(axis=1, keepdims=True)
        e = np.exp(z)
        probs = e / e.sum(axis=1, keepdims=True)
        return probs, z

    @staticmethod
    def loss_and_grad(shifted_logits: np.ndarray, probs: np.ndarray, labels: np.ndarray):
        """Mean cross-entropy and its gradient w.r.t. the logits."""
        n = shifted_logits.shape[0]
        labels = np.asarray(labels, dtype=np.int64)
        logsum = np.log(np.exp(shifted_logits).sum(axis=1))
        loss = float(np.mean(logsum - shifted_logits[np.arange(n), labels]))
        d = probs.copy()
        d[np.arange(n), labels] -= 1.0
        return loss, d / n

    def backward(self, p, dy, z, need_dx=True):
        # Upstream gradient w.r.t. probabilities -> gradient w.r.t. logits.
        s = np.exp(z)
        s /= s.sum(axis=1, keepdims=True)
        return s * (dy - (dy * s).sum(axis=1, keepdims=True)), {}
