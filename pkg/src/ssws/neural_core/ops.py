"""Network operations on Tensors: affine maps, causal convolutions,
activations, the softmax / cross-entropy head, and sequence utilities.

Every op provides exact reverse-mode gradients; the finite-difference suites
in the tests check each one independently.
"""

from __future__ import annotations

import numpy as np

from ssws.neural_core import kernels
from ssws.neural_core.tensor import AutodiffError, Tensor, _accumulate, _wrap, from_op


def affine(x, w, b=None) -> Tensor:
    """x @ w (+ b).  b broadcasts over rows."""
    out = x @ w
    if b is not None:
        out = out + b
    return out


def sigmoid(x) -> Tensor:
    x = _wrap(x)
    out_data = 1.0 / (1.0 + np.exp(-x.data))

    def backward(g):
        _accumulate(x, (g * out_data * (1.0 - out_data)).astype(x.data.dtype, copy=False))

    return from_op(out_data.astype(x.data.dtype, copy=False), (x,), backward)


def tanh(x) -> Tensor:
    x = _wrap(x)
    out_data = np.tanh(x.data)

    def backward(g):
        _accumulate(x, (g * (1.0 - out_data * out_data)).astype(x.data.dtype, copy=False))

    return from_op(out_data, (x,), backward)


def relu(x) -> Tensor:
    x = _wrap(x)
    out_data = np.maximum(x.data, 0)

    def backward(g):
        _accumulate(x, (g * (x.data > 0)).astype(x.data.dtype, copy=False))

    return from_op(out_data, (x,), backward)


def softmax(x, axis=-1) -> Tensor:
    x = _wrap(x)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out_data = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        inner = (g * out_data).sum(axis=axis, keepdims=True)
        _accumulate(x, (out_data * (g - inner)).astype(x.data.dtype, copy=False))

    return from_op(out_data, (x,), backward)


def cross_entropy(logits, targets, mask=None, reduction="mean") -> Tensor:
    """Softmax cross-entropy of integer targets against logit rows.

    targets: (N,) ints; mask: optional (N,) weights selecting positions.
    reduction "mean" divides by the mask weight total, "sum" does not.
    """
    logits = _wrap(logits)
    z = logits.data
    if z.ndim != 2:
        raise AutodiffError(f"cross_entropy expects (N, K) logits, got {z.shape}")
    targets = np.asarray(targets)
    if targets.shape != (z.shape[0],):
        raise AutodiffError("targets must be one integer per logit row")
    if mask is None:
        weights = np.ones(z.shape[0], dtype=z.dtype)
    else:
        weights = np.asarray(mask, dtype=z.dtype).reshape(-1)
        if weights.shape[0] != z.shape[0]:
            raise AutodiffError("mask length must match logit rows")
    total_w = float(weights.sum())
    if total_w <= 0.0:
        raise AutodiffError("cross_entropy mask selects no positions")

    zmax = z.max(axis=1, keepdims=True)
    ez = np.exp(z - zmax)
    sez = ez.sum(axis=1, keepdims=True)
    log_probs = (z - zmax) - np.log(sez)
    rows = np.arange(z.shape[0])
    nll = -log_probs[rows, targets]
    denom = total_w if reduction == "mean" else 1.0
    out_data = np.asarray((nll * weights).sum() / denom, dtype=z.dtype)
    probs = ez / sez

    def backward(g):
        scale = (weights / denom) * g
        dz = probs * scale[:, None]
        dz[rows, targets] -= scale
        _accumulate(logits, dz.astype(z.dtype, copy=False))

    return from_op(out_data, (logits,), backward)


def embedding(weight, indices) -> Tensor:
    """Row lookup into weight (V, C) — a one-hot input times a 1x1 convolution."""
    weight = _wrap(weight)
    idx = np.asarray(indices, dtype=np.int64).reshape(-1)
    if idx.size and (idx.min() < 0 or idx.max() >= weight.data.shape[0]):
        raise AutodiffError("embedding index out of range")
    out_data = weight.data[idx]

    def backward(g):
        if weight.requires_grad:
            dw = np.zeros_like(weight.data)
            np.add.at(dw, idx, g)
            _accumulate(weight, dw)

    return from_op(out_data, (weight,), backward)


def conv1d_causal(x, kernel, dilation) -> Tensor:
    """Dilated causal convolution: output[t] sees inputs at t, t-d, ... only.

    x: (T, Cin); kernel: (K, Cin, Cout); left zero-padding is implicit in the
    kernel, so output length equals input length.
    """
    x, kernel = _wrap(x), _wrap(kernel)
    if dilation < 1:
        raise AutodiffError(f"dilation must be >= 1, got {dilation}")
    if x.data.ndim != 2 or kernel.data.ndim != 3:
        raise AutodiffError("conv1d_causal expects x (T, Cin) and kernel (K, Cin, Cout)")
    if x.data.shape[1] != kernel.data.shape[1]:
        raise AutodiffError(
            f"channel mismatch: x has {x.data.shape[1]}, kernel expects {kernel.data.shape[1]}"
        )
    out_data = kernels.conv1d_causal_fwd(x.data, kernel.data, dilation)

    def backward(g):
        dx, dk = kernels.conv1d_causal_bwd(x.data, kernel.data, dilation, g)
        _accumulate(x, dx)
        _accumulate(kernel, dk)

    return from_op(out_data, (x, kernel), backward)


def lstm_seq(x, wx, wh, b) -> Tensor:
    """Unidirectional LSTM over the rows of x from zero initial state.

    x: (F, D); wx: (D, 4H); wh: (H, 4H); b: (4H,); returns hidden states (F, H).
    """
    x, wx, wh, b = _wrap(x), _wrap(wx), _wrap(wh), _wrap(b)
    F, D = x.data.shape
    if F == 0:
        raise AutodiffError("lstm_seq needs at least one frame")
    H = wh.data.shape[0]
    if wx.data.shape != (D, 4 * H) or wh.data.shape != (H, 4 * H) or b.data.shape != (4 * H,):
        raise AutodiffError("lstm_seq parameter shapes inconsistent")
    h_seq, gates, c_seq, tanh_c = kernels.lstm_fwd(x.data, wx.data, wh.data, b.data)

    def backward(g):
        dx, dwx, dwh, db = kernels.lstm_bwd(
            x.data, wx.data, wh.data, h_seq, gates, c_seq, tanh_c, g
        )
        _accumulate(x, dx)
        _accumulate(wx, dwx)
        _accumulate(wh, dwh)
        _accumulate(b, db)

    return from_op(h_seq, (x, wx, wh, b), backward)


def flip_time(x) -> Tensor:
    """Reverse the row order; the adjoint is the same flip."""
    x = _wrap(x)
    out_data = x.data[::-1].copy()

    def backward(g):
        _accumulate(x, g[::-1].copy())

    return from_op(out_data, (x,), backward)


def concat_cols(a, b) -> Tensor:
    """Concatenate two (F, *) blocks side by side."""
    a, b = _wrap(a), _wrap(b)
    na = a.data.shape[1]
    out_data = np.concatenate([a.data, b.data], axis=1)

    def backward(g):
        _accumulate(a, np.ascontiguousarray(g[:, :na]))
        _accumulate(b, np.ascontiguousarray(g[:, na:]))

    return from_op(out_data, (a, b), backward)


def upsample_repeat(x, hop) -> Tensor:
    """Repeat each frame row hop times; backward sums each frame's samples.

    The pair is an exact adjoint (transpose) of the forward linear map, which
    lets gradients flow from sample level back to frame level.
    """
    x = _wrap(x)
    if hop < 1:
        raise AutodiffError(f"hop must be >= 1, got {hop}")
    F, C = x.data.shape
    out_data = np.repeat(x.data, hop, axis=0)

    def backward(g):
        _accumulate(x, g.reshape(F, hop, C).sum(axis=1))

    return from_op(out_data, (x,), backward)
