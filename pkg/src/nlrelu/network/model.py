"""Network construction, forward pass and reverse-mode backward pass."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from ..errors import NonFiniteError, ShapeError
from ..tensor import RngStream, as_tensor, check_finite
from .layers import BN_MOMENTUM, Layer, SoftmaxOutput


class ParamStore(dict):
    """Mapping ``"<layer>.<name>" -> ndarray`` plus the list of trainable keys.

    Non-trainable entries (batch-norm running statistics) share the mapping.
    """

    def __init__(self, *args, trainable: Sequence[str] = (), **kw):
        super().__init__(*args, **kw)
        self.trainable = tuple(trainable)

    def copy(self) -> "ParamStore":
        return ParamStore({k: v.copy() for k, v in self.items()}, trainable=self.trainable)

    def zeros_like_trainable(self) -> dict:
        return {k: np.zeros_like(self[k]) for k in self.trainable}

    def n_trainable(self) -> int:
        return int(sum(self[k].size for k in self.trainable))


class Network:
    """An ordered stack of bound layers with resolved shapes."""

    def __init__(self, layers: list[Layer], input_shape: tuple):
        self.layers = layers
        self.input_shape = tuple(input_shape)

    @property
    def output_shape(self) -> tuple:
        return self.layers[-1].out_shape if self.layers else self.input_shape

    @property
    def has_softmax(self) -> bool:
        return bool(self.layers) and isinstance(self.layers[-1], SoftmaxOutput)

    def describe(self) -> list[str]:
        return [f"{l.name} {l.in_shape} -> {l.out_shape}" for l in self.layers]

    def forward(self, params: ParamStore, batch, mode: str = "train"):
        """Run every layer; returns ``(outputs, cache)``.

        ``mode`` is ``"train"`` (batch statistics in batch-norm) or ``"infer"``.
        """
        if mode not in ("train", "infer"):
            raise ValueError("mode must be 'train' or 'infer'")
        x = as_tensor(batch)
        if x.shape[1:] != self.input_shape:
            raise ShapeError(f"batch has per-sample shape {x.shape[1:]}, network expects {self.input_shape}")
        train = mode == "train"
        caches = []
        # overflow surfaces as NonFiniteError naming the layer, not as a warning
        with np.errstate(over="ignore", invalid="ignore"):
            for layer in self.layers:
                x, c = layer.forward(params, x, train)
                if not math.isfinite(float(np.sum(x))):
                    check_finite(x, layer.name)
                caches.append(c)
        return x, caches

    def backprop(self, params: ParamStore, cache, upstream):
        """Propagate an arbitrary gradient w.r.t. the network output.

        Returns ``(d_input, grads)``.
        """
        grads = {}
        d = as_tensor(upstream)
        for i in range(len(self.layers) - 1, -1, -1):
            d, g = self.layers[i].backward(params, d, cache[i], need_dx=i > 0)
            grads.update(g)
        return d, grads

    def backward(self, params: ParamStore, cache, labels):
        """Mean cross-entropy loss and its gradient for every trainable tensor.

        Requires a network ending in ``SoftmaxOutput``; the softmax Jacobian is
        folded into the closed form ``(softmax - onehot) / batch``.
        """
        if not self.has_softmax:
            raise ValueError("backward with labels needs a SoftmaxOutput final layer")
        labels = np.asarray(labels)
        z = cache[-1]
        if labels.shape != (z.shape[0],):
            raise ShapeError(f"{labels.shape[0] if labels.ndim else 0} labels for a batch of {z.shape[0]}")
        probs = np.exp(z)
        probs /= probs.sum(axis=1, keepdims=True)
        loss, dlogits = SoftmaxOutput.loss_and_grad(z, probs, labels)
        if not math.isfinite(loss):
            raise NonFiniteError("loss")
        grads = {}
        d = dlogits
        for i in range(len(self.layers) - 2, -1, -1):
            d, g = self.layers[i].backward(params, d, cache[i], need_dx=i > 0)
            grads.update(g)
        for k in params.trainable:
            if k not in grads:
                grads[k] = np.zeros_like(params[k])
        return loss, grads

    def loss(self, params: ParamStore, batch, labels, mode: str = "train") -> float:
        _, cache = self.forward(params, batch, mode)
        z = cache[-1]
        n = z.shape[0]
        logsum = np.log(np.exp(z).sum(axis=1))
        return float(np.mean(logsum - z[np.arange(n), np.asarray(labels, dtype=np.int64)]))

    def state_updates(self, cache) -> dict:
        """Batch statistics gathered during a train-mode forward pass."""
        out = {}
        for layer, c in zip(self.layers, cache):
            out.update(layer.state_updates(c))
        return out

    def apply_state_updates(self, params: ParamStore, cache) -> None:
        for k, batch_stat in self.state_updates(cache).items():
            params[k] = BN_MOMENTUM * params[k] + (1.0 - BN_MOMENTUM) * batch_stat

    def kink_signature(self, cache) -> list:
        sig = []
        for layer, c in zip(self.layers, cache):
            sig += layer.kink_signature(c)
        return sig

    def owner_of(self, param_name: str) -> str:
        """Human-readable layer name owning ``param_name``."""
        head = param_name.split(".", 1)[0]
        for layer in self.layers:
            if layer.prefix.rstrip(".") == head:
                if hasattr(layer, "sublayer_names"):
                    sub = param_name.rsplit(".", 1)[0]
                    for s in layer._all():
                        if s.prefix.rstrip(".") == sub:
                            return s.name
                return layer.name
        return head


def build(specs: Sequence[Layer], input_shape, init: str = "xavier", rng: RngStream | None = None):
    """Bind layer specs to shapes and draw initial parameters.

    Weights are Gaussian with Xavier (``2/(fan_in+fan_out)``) or MSRA
    (``2/fan_in``) variance; biases start at exactly zero. Returns
    ``(Network, ParamStore)``.
    """
    if init not in ("xavier", "msra"):
        raise ValueError(f"init must be 'xavier' or 'msra', got {init!r}")
    rng = rng or RngStream(0)
    shape = tuple(input_shape)
    layers = []
    for i, spec in enumerate(specs):
        if isinstance(spec, SoftmaxOutput) and i != len(specs) - 1:
            raise ShapeError(f"layer {i}: softmax output must be the final layer")
        try:
            bound = spec.bind(f"{i}.", shape)
        except ShapeError as e:
            raise ShapeError(f"layer {i} ({spec.kind}): {e}") from None
        layers.append(bound)
        shape = bound.out_shape
    tensors, trainable = {}, []
    for layer in layers:
        t, tr = layer.init_params(rng, init)
        tensors.update(t)
        trainable += tr
    return Network(layers, tuple(input_shape)), ParamStore(tensors, trainable=trainable)
