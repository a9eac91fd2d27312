"""Dense tensors with reverse-mode automatic differentiation.

Exactly the operations the two-stream networks need: 3x3 same-padded
convolution, 2x2 max pooling, ReLU, fully connected layers, elementwise
L1 distance, concatenation, inverted dropout and softmax cross-entropy.
Operations record backward rules on an explicit :class:`Tape`; calling
:func:`backward` replays it in reverse.

All ops accept either the single-sample shapes documented per function
or the same shape with one extra leading batch dimension (conv/pool) or
a leading row dimension (linear, distances). float64 is the default
dtype; float32 is supported for throughput-bound training.
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .errors import DimensionError, ParameterError

DEFAULT_DTYPE = np.float64


class Tensor:
    """A dense n-dimensional value with an optional gradient buffer."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.asarray(data, dtype=dtype or DEFAULT_DTYPE)
        # ascontiguousarray would promote 0-d scalars to 1-d; keep them 0-d
        self.data = arr if arr.ndim == 0 or arr.flags.c_contiguous else np.ascontiguousarray(arr)
        self.grad = None
        self.requires_grad = bool(requires_grad)

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def values(self):
        """Row-major flat view of the payload."""
        return self.data.reshape(-1)

    def zero_grad(self):
        self.grad = None

    def is_finite(self):
        return bool(np.isfinite(self.data).all())

    def __repr__(self):
        return f"Tensor(shape={tuple(self.shape)}, requires_grad={self.requires_grad})"


class Tape:
    """Ordered record of operations for one forward pass.

    Entries are appended in execution order, so inputs always precede
    the operations consuming them; backward walks the list once, in
    reverse.
    """

    def __init__(self):
        self.entries = []

    def record(self, output, inputs, backward_fn):
        output.requires_grad = True
        self.entries.append((output, inputs, backward_fn))


def _wants_grad(tape, *tensors):
    return tape is not None and any(t.requires_grad for t in tensors)


def backward(tape, loss):
    """Populate gradients of every tensor reachable from a scalar loss."""
    if loss.data.size != 1:
        raise DimensionError(f"backward needs a scalar loss, got shape {loss.shape}")
    loss.grad = np.ones_like(loss.data)
    for output, inputs, backward_fn in reversed(tape.entries):
        if output.grad is None:
            continue
        for tensor, grad in zip(inputs, backward_fn(output.grad)):
            if grad is None:
                continue
            grad = np.asarray(grad)
            tensor.grad = grad if tensor.grad is None else tensor.grad + grad


def _as_batched(x, rank):
    """View x.data with a leading batch axis; returns (array, had_batch)."""
    if x.data.ndim == rank:
        return x.data[None], False
    if x.data.ndim == rank + 1:
        return x.data, True
    raise DimensionError(f"expected rank {rank} or {rank + 1}, got shape {x.shape}")


def conv2d(x, w, b, tape=None):
    """3x3 cross-correlation, padding 1, stride 1: (C,H,W) -> (C_out,H,W)."""
    if w.data.ndim != 4 or w.shape[2:] != (3, 3):
        raise DimensionError(f"kernels must be (C_out,C_in,3,3), got {w.shape}")
    if b.data.ndim != 1 or b.shape[0] != w.shape[0]:
        raise DimensionError(f"bias must be (C_out,), got {b.shape}")
    xd, batched = _as_batched(x, 3)
    bsz, c_in, h, width = xd.shape
    c_out = w.shape[0]
    if c_in != w.shape[1]:
        raise DimensionError(f"input has {c_in} channels, kernels expect {w.shape[1]}")

    wm = w.data.reshape(c_out, c_in * 9)
    cols = kernels.im2col3(xd)
    out_d = np.matmul(wm, cols).reshape(bsz, c_out, h, width) + b.data[None, :, None, None]
    out = Tensor(out_d if batched else out_d[0], dtype=x.dtype)

    if _wants_grad(tape, x, w, b):
        def bwd(gy):
            gym = (gy if batched else gy[None]).reshape(bsz, c_out, h * width)
            gw = gb = gx = None
            if w.requires_grad:
                # im2col recomputed instead of cached: halves peak memory
                gw = np.matmul(gym, kernels.im2col3(xd).transpose(0, 2, 1)).sum(axis=0)
                gw = gw.reshape(w.shape)
            if b.requires_grad:
                gb = gym.sum(axis=(0, 2))
            if x.requires_grad:
                gcols = np.matmul(wm.T, gym)
                gx = kernels.col2im3(np.ascontiguousarray(gcols), c_in, h, width)
                if not batched:
                    gx = gx[0]
            return gx, gw, gb

        tape.record(out, (x, w, b), bwd)
    return out


def maxpool2x2(x, tape=None):
    """Non-overlapping 2x2 max pool, floor semantics on odd trailing edges."""
    xd, batched = _as_batched(x, 3)
    bsz, c, h, w = xd.shape
    if h < 2 or w < 2:
        raise DimensionError(f"maxpool2x2 needs H,W >= 2, got {h}x{w}")
    out_d, idx = kernels.maxpool2x2_forward(xd)
    out = Tensor(out_d if batched else out_d[0], dtype=x.dtype)

    if _wants_grad(tape, x):
        def bwd(gy):
            gyb = np.ascontiguousarray(gy if batched else gy[None])
            gx = kernels.maxpool2x2_backward(gyb, idx, h, w)
            return (gx if batched else gx[0],)

        tape.record(out, (x,), bwd)
    return out


def relu(x, tape=None):
    out = Tensor(np.maximum(x.data, 0), dtype=x.dtype)
    if _wants_grad(tape, x):
        mask = x.data > 0
        tape.record(out, (x,), lambda gy: (gy * mask,))
    return out


def linear(x, w, b, tape=None):
    """weight @ input + bias: (n,) -> (m,), or row-wise on (B,n)."""
    if w.data.ndim != 2 or b.data.ndim != 1 or b.shape[0] != w.shape[0]:
        raise DimensionError(f"weight {w.shape} / bias {b.shape} malformed")
    xd, batched = _as_batched(x, 1)
    if xd.shape[1] != w.shape[1]:
        raise DimensionError(f"input length {xd.shape[1]} != weight inner dim {w.shape[1]}")
    out_d = xd @ w.data.T + b.data
    out = Tensor(out_d if batched else out_d[0], dtype=x.dtype)

    if _wants_grad(tape, x, w, b):
        def bwd(gy):
            gyb = gy if batched else gy[None]
            gx = gyb @ w.data if x.requires_grad else None
            gw = gyb.T @ xd if w.requires_grad else None
            gb = gyb.sum(axis=0) if b.requires_grad else None
            if gx is not None and not batched:
                gx = gx[0]
            return gx, gw, gb

        tape.record(out, (x, w, b), bwd)
    return out


def l1_distance(a, b, tape=None):
    """Elementwise |a - b|; backward uses sign with sign(0) = 0."""
    if a.shape != b.shape:
        raise DimensionError(f"l1_distance shapes differ: {a.shape} vs {b.shape}")
    diff = a.data - b.data
    out = Tensor(np.abs(diff), dtype=a.dtype)
    if _wants_grad(tape, a, b):
        sign = np.sign(diff)
        tape.record(out, (a, b), lambda gy: (gy * sign, -gy * sign))
    return out


def concat(a, b, tape=None):
    """Join two rank-1 tensors end to end."""
    if a.data.ndim != 1 or b.data.ndim != 1:
        raise DimensionError(f"concat needs rank-1 inputs, got {a.shape} and {b.shape}")
    n = a.shape[0]
    out = Tensor(np.concatenate([a.data, b.data]), dtype=a.dtype)
    if _wants_grad(tape, a, b):
        tape.record(out, (a, b), lambda gy: (gy[:n], gy[n:]))
    return out


def concat_rows(a, b, tape=None):
    """Batched concat: (B,n) + (B,m) -> (B,n+m)."""
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[0] != b.shape[0]:
        raise DimensionError(f"concat_rows needs matching (B,*) inputs, got {a.shape}, {b.shape}")
    n = a.shape[1]
    out = Tensor(np.concatenate([a.data, b.data], axis=1), dtype=a.dtype)
    if _wants_grad(tape, a, b):
        tape.record(out, (a, b), lambda gy: (gy[:, :n], gy[:, n:]))
    return out


def reshape(x, shape, tape=None):
    if int(np.prod(shape)) != x.data.size:
        raise DimensionError(f"cannot reshape {x.shape} to {shape}")
    out = Tensor(x.data.reshape(shape), dtype=x.dtype)
    if _wants_grad(tape, x):
        tape.record(out, (x,), lambda gy: (gy.reshape(x.shape),))
    return out


def dropout(x, rate, training, rng, tape=None):
    """Inverted dropout: scaling happens at train time, inference is identity."""
    if not 0.0 <= rate < 1.0:
        raise ParameterError(f"dropout rate must be in [0,1), got {rate}")
    if not training or rate == 0.0:
        out = Tensor(x.data, dtype=x.dtype)
        if _wants_grad(tape, x):
            tape.record(out, (x,), lambda gy: (gy,))
        return out
    keep = (rng.random(x.shape) >= rate).astype(x.dtype)
    scale = x.dtype.type(1.0 / (1.0 - rate))
    out = Tensor(x.data * keep * scale, dtype=x.dtype)
    if _wants_grad(tape, x):
        tape.record(out, (x,), lambda gy: (gy * keep * scale,))
    return out


def softmax_cross_entropy(logits, label, tape=None):
    """Stabilized softmax + negative log-likelihood.

    Accepts (k,) logits with an integer label, or (B,k) logits with a
    length-B label sequence (loss is the batch mean). Returns
    (scalar loss, probs); only the loss participates in backward.
    """
    ld, batched = _as_batched(logits, 1)
    bsz, k = ld.shape
    if k < 2:
        raise DimensionError(f"need at least 2 classes, got {k}")
    labels = np.atleast_1d(np.asarray(label, dtype=np.intp))
    if labels.shape != (bsz,):
        raise ParameterError(f"expected {bsz} labels, got shape {labels.shape}")
    if labels.min() < 0 or labels.max() >= k:
        raise ParameterError(f"label out of range [0,{k}): {labels}")

    shifted = ld - ld.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    probs_d = e / e.sum(axis=1, keepdims=True)
    nll = -(shifted[np.arange(bsz), labels] - np.log(e.sum(axis=1)))
    loss = Tensor(nll.mean(), dtype=logits.dtype)
    probs = Tensor(probs_d if batched else probs_d[0], dtype=logits.dtype)

    if _wants_grad(tape, logits):
        def bwd(gy):
            g = probs_d.copy()
            g[np.arange(bsz), labels] -= 1
            g *= float(gy) / bsz
            return (g if batched else g[0],)

        tape.record(loss, (logits,), bwd)
    return loss, probs


def sum_all(x, tape=None):
    """Reduce a tensor to its scalar sum (test and loss plumbing)."""
    out = Tensor(x.data.sum(), dtype=x.dtype)
    if _wants_grad(tape, x):
        tape.record(out, (x,), lambda gy: (np.full(x.shape, gy, dtype=x.dtype),))
    return out
