"""Dense tensor primitives and seeded random streams.

Tensors are plain ``numpy.ndarray`` objects of dtype float64, row-major,
with images laid out NCHW. Every function here is pure: inputs are never
modified and results are fresh arrays.

``conv2d`` is a cross-correlation (the kernel is not flipped), which is the
usual deep-learning convention.
"""

from __future__ import annotations

import zlib
from typing import Callable, Sequence

import numba
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import NonFiniteError, ShapeError

DTYPE = np.float64


def as_tensor(x) -> np.ndarray:
    """Return ``x`` as a C-contiguous float64 array (no copy if already one).

    ``longdouble`` input keeps its dtype so the gradient checker can run the
    forward pass in extended precision.
    """
    x = np.asarray(x)
    return np.ascontiguousarray(x, dtype=np.longdouble if x.dtype == np.longdouble else DTYPE)


def check_finite(x: np.ndarray, where: str) -> np.ndarray:
    if not np.isfinite(x).all():
        bad = int(np.size(x) - np.count_nonzero(np.isfinite(x)))
        raise NonFiniteError(where, f"{bad} of {np.size(x)} entries")
    return x


_BINARY = {"add": np.add, "sub": np.subtract, "mul": np.multiply}


def elementwise(
    op: str,
    a,
    b=None,
    *,
    factor: float | None = None,
    fn: Callable[[np.ndarray], np.ndarray] | None = None,
) -> np.ndarray:
    """Apply one of ``add``, ``sub``, ``mul`` (binary), ``scale`` or ``map`` (unary).

    ``scale`` multiplies by ``factor``; ``map`` applies the vectorised ``fn``.
    Binary operands must have identical shapes: no broadcasting.
    """
    a = as_tensor(a)
    if op in _BINARY:
        if b is None:
            raise ValueError(f"{op} needs two operands")
        b = as_tensor(b)
        if a.shape != b.shape:
            raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")
        with np.errstate(over="ignore", invalid="ignore"):
            out = _BINARY[op](a, b)
    elif op == "scale":
        if factor is None:
            raise ValueError("scale needs a factor")
        with np.errstate(over="ignore", invalid="ignore"):
            out = a * float(factor)
    elif op == "map":
        if fn is None:
            raise ValueError("map needs fn")
        out = as_tensor(fn(a))
        if out.shape != a.shape:
            raise ShapeError(f"map changed shape {a.shape} -> {out.shape}")
    else:
        raise ValueError(f"unknown elementwise op {op!r}")
    return check_finite(out, f"elementwise[{op}]")


def matmul(a, b) -> np.ndarray:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    return a @ b


def conv_output_size(size: int, k: int, stride: int, pad: int) -> int:
    span = size + 2 * pad - k
    if span < 0:
        raise ShapeError(f"kernel {k} larger than padded input {size + 2 * pad}")
    if span % stride:
        raise ShapeError(
            f"non-integer output size: ({size} + 2*{pad} - {k}) / {stride} + 1"
        )
    return span // stride + 1


def _im2col(x: np.ndarray, kh: int, kw: int, stride: int, pad: int):
    n, c, h, w = x.shape
    ho = conv_output_size(h, kh, stride, pad)
    wo = conv_output_size(w, kw, stride, pad)
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    # (n, c, ho, wo, kh, kw) -> rows indexed by (n, ho, wo), columns by (c, kh, kw)
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * kh * kw)
    return cols, ho, wo


def conv2d(x, kernels, stride: int = 1, padding: int = 0) -> np.ndarray:
    """2-D cross-correlation of ``x`` (N,C,H,W) with ``kernels`` (F,C,kh,kw).

    Zero padding of ``padding`` pixels on every side; output is (N,F,H',W')
    with ``H' = (H + 2*padding - kh) / stride + 1``.
    """
    return conv2d_with_cols(x, kernels, stride, padding)[0]


def conv2d_with_cols(x, kernels, stride: int = 1, padding: int = 0):
    """``conv2d`` that also returns its im2col matrix for reuse in the backward pass."""
    x, kernels = as_tensor(x), as_tensor(kernels)
    if x.ndim != 4 or kernels.ndim != 4:
        raise ShapeError(f"conv2d expects 4-D operands, got {x.shape}, {kernels.shape}")
    if x.shape[1] != kernels.shape[1]:
        raise ShapeError(
            f"conv2d: input has {x.shape[1]} channels, kernels expect {kernels.shape[1]}"
        )
    f, _, kh, kw = kernels.shape
    cols, ho, wo = _im2col(x, kh, kw, stride, padding)
    out = cols @ kernels.reshape(f, -1).T
    return np.ascontiguousarray(out.reshape(x.shape[0], ho, wo, f).transpose(0, 3, 1, 2)), cols


def conv2d_backward(dout, x, kernels, stride: int = 1, padding: int = 0, need_dx: bool = True,
                    cols=None):
    """Gradients of a ``conv2d`` output w.r.t. its input and kernels.

    Returns ``(dx, dkernels)`` for upstream gradient ``dout`` (N,F,H',W');
    ``dx`` is None when ``need_dx`` is false. ``cols`` is the matrix from
    ``conv2d_with_cols`` for the same ``x``, if the caller kept it.
    """
    x, kernels, dout = as_tensor(x), as_tensor(kernels), as_tensor(dout)
    n, c, h, w = x.shape
    f, _, kh, kw = kernels.shape
    ho, wo = dout.shape[2:]
    if cols is None:
        cols, ho, wo = _im2col(x, kh, kw, stride, padding)
    d2 = dout.transpose(0, 2, 3, 1).reshape(n * ho * wo, f)
    dk = (d2.T @ cols).reshape(kernels.shape)
    if not need_dx:
        return None, dk
    dcols = d2 @ kernels.reshape(f, -1)
    dxp = _col2im(dcols, n, c, h + 2 * padding, w + 2 * padding, kh, kw, ho, wo, stride)
    return np.ascontiguousarray(dxp[:, :, padding : padding + h, padding : padding + w]), dk


@numba.njit(cache=True)
def _col2im(cols, n, c, hp, wp, kh, kw, ho, wo, stride):
    # Scatter-add im2col rows back onto the padded input grid.
    out = np.zeros((n, c, hp, wp))
    r = 0
    for b in range(n):
        for oh in range(ho):
            for ow in range(wo):
                q = 0
                for ch in range(c):
                    for i in range(kh):
                        for j in range(kw):
                            out[b, ch, oh * stride + i, ow * stride + j] += cols[r, q]
                            q += 1
                r += 1
    return out


def maxpool2d(x, k: int, stride: int):
    """Max over k x k windows. Returns ``(out, argmax)``.

    ``argmax`` holds the winning row-major offset inside each window; ties
    go to the first element.
    """
    x = as_tensor(x)
    n, c, h, w = x.shape
    ho, wo = conv_output_size(h, k, stride, 0), conv_output_size(w, k, stride, 0)
    if x.dtype == DTYPE:
        return _maxpool_fwd(x, k, stride, ho, wo)
    best = x[:, :, : stride * ho : stride, : stride * wo : stride].copy()
    idx = np.zeros(best.shape, dtype=np.int8)
    for off in range(1, k * k):
        i, j = divmod(off, k)
        v = x[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride]
        better = v > best
        np.copyto(best, v, where=better)
        idx[better] = off
    return best, idx


def maxpool2d_backward(dout, argmax, in_shape, k: int, stride: int) -> np.ndarray:
    return _maxpool_bwd(as_tensor(dout), argmax, tuple(in_shape), k, stride)


@numba.njit(cache=True)
def _maxpool_fwd(x, k, stride, ho, wo):
    n, c = x.shape[0], x.shape[1]
    out = np.empty((n, c, ho, wo))
    idx = np.zeros((n, c, ho, wo), dtype=np.int8)
    for b in range(n):
        for ch in range(c):
            for oh in range(ho):
                for ow in range(wo):
                    best = x[b, ch, oh * stride, ow * stride]
                    arg = 0
                    for off in range(1, k * k):
                        i, j = off // k, off % k
                        v = x[b, ch, oh * stride + i, ow * stride + j]
                        if v > best:
                            best = v
                            arg = off
                    out[b, ch, oh, ow] = best
                    idx[b, ch, oh, ow] = arg
    return out, idx


@numba.njit(cache=True)
def _maxpool_bwd(dout, idx, in_shape, k, stride):
    dx = np.zeros(in_shape)
    n, c, ho, wo = dout.shape
    for b in range(n):
        for ch in range(c):
            for oh in range(ho):
                for ow in range(wo):
                    off = idx[b, ch, oh, ow]
                    dx[b, ch, oh * stride + off // k, ow * stride + off % k] += dout[b, ch, oh, ow]
    return dx


def _tag_words(tag) -> list[int]:
    if isinstance(tag, (int, np.integer)):
        if tag < 0:
            raise ValueError("integer tags must be non-negative")
        return [int(tag) & 0xFFFFFFFF, int(tag) >> 32]
    data = str(tag).encode("utf-8")
    return [zlib.crc32(data), len(data), zlib.adler32(data)]


class RngStream:
    """Deterministic normal/uniform generator keyed by a 64-bit seed.

    ``split(*tags)`` derives a child stream that depends only on the parent
    seed path and the tags, never on how many numbers the parent has drawn.
    """

    def __init__(self, seed: int, _path: tuple = ()):
        if not 0 <= int(seed) < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")
        self.seed = int(seed)
        self._path = tuple(_path)
        words = [self.seed & 0xFFFFFFFF, self.seed >> 32]
        for t in self._path:
            words.extend(_tag_words(t))
        self._gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(words)))

    def split(self, *tags) -> "RngStream":
        return RngStream(self.seed, self._path + tuple(tags))

    def normal(self, shape, mean: float = 0.0, std: float = 1.0) -> np.ndarray:
        return sample_normal(self, shape, mean, std)

    def uniform(self, shape, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        return self._gen.uniform(low, high, size=shape)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def integers(self, low: int, high: int, size=None):
        return self._gen.integers(low, high, size=size)

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, path={self._path!r})"


def sample_normal(rng: RngStream, shape: Sequence[int] | int, mean: float, std: float) -> np.ndarray:
    """I.i.d. draws from N(mean, std**2); ``std`` is a standard deviation."""
    if std < 0:
        raise ValueError(f"std must be non-negative, got {std}")
    shape = (shape,) if isinstance(shape, (int, np.integer)) else tuple(shape)
    z = rng._gen.standard_normal(shape)
    return as_tensor(mean + std * z)
