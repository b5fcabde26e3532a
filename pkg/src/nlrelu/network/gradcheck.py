"""Exhaustive central-difference gradient checking."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..tensor import as_tensor
from .model import Network, ParamStore

MAX_PARAMS = 50_000


@dataclass
class GradCheckReport:
    max_rel_err: float
    worst_param: str
    worst_index: tuple
    worst_layer: str
    n_checked: int
    n_excluded: int
    per_param: dict = field(default_factory=dict)

    def passed(self, tolerance: float) -> bool:
        return self.max_rel_err <= tolerance

    def summary(self) -> str:
        return (f"max_rel_err={self.max_rel_err:.3e} at {self.worst_param}{list(self.worst_index)} "
                f"({self.worst_layer}); checked={self.n_checked} excluded={self.n_excluded}")


def relative_error(a, n) -> np.ndarray:
    a, n = np.asarray(a, dtype=float), np.asarray(n, dtype=float)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)


def _layer_index(name: str) -> int:
    return int(name.split(".", 1)[0])


class _Objective:
    """Scalar loss that can be re-evaluated from any layer onward.

    Parameters and inputs are held in extended precision: float64 round-off
    in the loss is about 1e-16 absolute, which after division by ``2h`` swamps
    gradient entries near the 1e-8 relative-error floor.
    """

    def __init__(self, net: Network, params: ParamStore, batch, labels, upstream):
        self.net, self.labels = net, labels
        self.params = {k: np.asarray(v, dtype=np.longdouble) for k, v in params.items()}
        self.upstream = None if upstream is None else np.asarray(upstream, dtype=np.longdouble)
        x = np.asarray(batch, dtype=np.longdouble)
        self.inputs = []
        for layer in net.layers:
            self.inputs.append(x)
            x, _ = layer.forward(self.params, x, True)

    def __call__(self, start: int):
        x = self.inputs[start]
        sig = []
        out = None
        for layer in self.net.layers[start:]:
            y, c = layer.forward(self.params, x, True)
            sig += layer.kink_signature(c)
            out, x = (c, y)
        if self.upstream is not None:
            return np.sum(self.upstream * x), sig
        z = out  # shifted logits cached by SoftmaxOutput
        n = z.shape[0]
        logsum = np.log(np.exp(z).sum(axis=1))
        return np.mean(logsum - z[np.arange(n), self.labels]), sig


def _same(sig_a, sig_b) -> bool:
    return all(np.array_equal(a, b) for a, b in zip(sig_a, sig_b))


def grad_check(
    net: Network,
    params: ParamStore,
    batch,
    labels=None,
    h: float = 1e-5,
    tolerance: float = 1e-5,
    upstream=None,
    max_params: int = MAX_PARAMS,
    extrapolate: bool = False,
) -> GradCheckReport:
    """Compare backprop gradients with ``(f(theta+h) - f(theta-h)) / (2h)``.

    The objective is the mean cross-entropy for softmax networks (pass
    ``labels``) or ``sum(upstream * output)`` otherwise. Relative error is
    ``|a - n| / max(|a|, |n|, 1e-8)``.

    A perturbation whose +h or -h evaluation changes which side of a kink any
    activation input sits on, or which element a max-pool selects, is
    excluded: the loss is not differentiable across that step.
    ``tolerance`` is informational; the report is always produced.

    With ``extrapolate`` the estimate is Richardson-extrapolated from steps
    ``h`` and ``h/2``, ``(4 D(h/2) - D(h)) / 3``, cancelling the ``h**2``
    truncation term. Plain central differences at ``h = 1e-5`` can exceed a
    1e-5 relative tolerance on near-zero gradient entries of smooth but
    strongly curved losses; the extrapolated estimate does not.
    """
    n_params = params.n_trainable()
    if n_params > max_params:
        raise ValueError(f"{n_params} trainable parameters exceed the exhaustive-check limit {max_params}")
    if (labels is None) == (upstream is None):
        raise ValueError("pass exactly one of labels (softmax net) or upstream")
    if labels is not None:
        labels = np.asarray(labels, dtype=np.int64)
    work = params.copy()
    out, cache = net.forward(work, batch, "train")
    if upstream is not None:
        upstream = as_tensor(upstream)
        _, analytic = net.backprop(work, cache, upstream)
    else:
        _, analytic = net.backward(work, cache, labels)
    objective = _Objective(net, work, batch, labels, upstream)
    steps = [np.longdouble(h)] + ([np.longdouble(h) / 2] if extrapolate else [])

    worst = (-1.0, "", (), "")
    n_checked = n_excluded = 0
    per_param = {}
    for name in params.trainable:
        start = _layer_index(name)
        _, base_sig = objective(start)
        theta = objective.params[name]
        flat = theta.reshape(-1)
        a_flat = np.asarray(analytic[name]).reshape(-1)
        errs = np.zeros(flat.size)
        for i in range(flat.size):
            orig = flat[i]
            est, kinked = None, False
            for step in steps:
                flat[i] = orig + step
                fp, sp = objective(start)
                flat[i] = orig - step
                fm, sm = objective(start)
                flat[i] = orig
                kinked = kinked or not (_same(sp, base_sig) and _same(sm, base_sig))
                d = (fp - fm) / (2 * step)
                est = d if est is None else (4 * d - est) / 3
            if kinked:
                n_excluded += 1
                continue
            n_checked += 1
            e = float(relative_error(a_flat[i], float(est)))
            errs[i] = e
            if e > worst[0]:
                worst = (e, name, np.unravel_index(i, theta.shape), net.owner_of(name))
        per_param[name] = float(errs.max()) if errs.size else 0.0
    e, name, idx, layer = worst
    return GradCheckReport(max(e, 0.0), name, tuple(int(j) for j in idx), layer,
                           n_checked, n_excluded, per_param)
