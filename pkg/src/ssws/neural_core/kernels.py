"""Hot numeric kernels: dilated causal convolution and LSTM recurrence.

Each kernel has a pure-numpy implementation and a numba-jitted one.  The
active backend is chosen by the SSWS_KERNEL_BACKEND environment variable
("numba" or "numpy"); unset means numba when importable, numpy otherwise.
``set_backend`` overrides at runtime, which the benchmark and the backend
equivalence tests rely on.
"""

from __future__ import annotations

import os
import warnings

import numpy as np

_VALID = ("numba", "numpy")
_backend = os.environ.get("SSWS_KERNEL_BACKEND", "").strip().lower() or None
if _backend is not None and _backend not in _VALID:
    raise ValueError(f"SSWS_KERNEL_BACKEND must be one of {_VALID}, got {_backend!r}")

_numba_mod = None  # lazily imported ssws.neural_core._numba_kernels
_numba_failed = False


def set_backend(name: str | None) -> None:
    """Force a kernel backend; None restores environment/default selection."""
    global _backend
    if name is not None and name not in _VALID:
        raise ValueError(f"backend must be one of {_VALID}, got {name!r}")
    _backend = name


def get_backend() -> str:
    """The backend that the next kernel call will use."""
    if _backend == "numpy":
        return "numpy"
    return "numba" if _load_numba() is not None else "numpy"


def _load_numba():
    global _numba_mod, _numba_failed
    if _numba_mod is None and not _numba_failed:
        try:
            from ssws.neural_core import _numba_kernels
            _numba_mod = _numba_kernels
        except ImportError as exc:  # pragma: no cover - depends on environment
            _numba_failed = True
            warnings.warn(f"numba backend unavailable, falling back to numpy: {exc}")
    return _numba_mod


# ---------------------------------------------------------------------------
# Dilated causal 1-D convolution.
# x: (T, Cin), kernel: (K, Cin, Cout), tap j reaches j*dilation samples back;
# positions before the sequence start contribute zero.

def conv1d_causal_fwd_numpy(x, kernel, dilation):
    T = x.shape[0]
    out = x @ kernel[0]
    for j in range(1, kernel.shape[0]):
        off = j * dilation
        if off < T:
            out[off:] += x[: T - off] @ kernel[j]
    return out


def conv1d_causal_bwd_numpy(x, kernel, dilation, grad_out):
    T = x.shape[0]
    dx = grad_out @ kernel[0].T
    dk = np.zeros_like(kernel)
    dk[0] = x.T @ grad_out
    for j in range(1, kernel.shape[0]):
        off = j * dilation
        if off < T:
            dx[: T - off] += grad_out[off:] @ kernel[j].T
            dk[j] = x[: T - off].T @ grad_out[off:]
    return dx, dk


def conv1d_causal_fwd(x, kernel, dilation):
    if get_backend() == "numba":
        return _numba_mod.conv_fwd(x, kernel, dilation)
    return conv1d_causal_fwd_numpy(x, kernel, dilation)


def conv1d_causal_bwd(x, kernel, dilation, grad_out):
    if get_backend() == "numba":
        return _numba_mod.conv_bwd(x, kernel, dilation, grad_out)
    return conv1d_causal_bwd_numpy(x, kernel, dilation, grad_out)


# ---------------------------------------------------------------------------
# LSTM over a sequence.
# x: (F, D); wx: (D, 4H); wh: (H, 4H); b: (4H,).  Gate order i, f, g, o.
# Forward returns the hidden sequence plus the caches the backward pass needs:
# post-activation gates (F, 4H), cell states (F, H), tanh of cell states.

def lstm_fwd_numpy(x, wx, wh, b):
    F = x.shape[0]
    H = wh.shape[0]
    pre_x = x @ wx + b
    gates = np.empty((F, 4 * H), dtype=x.dtype)
    c_seq = np.empty((F, H), dtype=x.dtype)
    tanh_c = np.empty((F, H), dtype=x.dtype)
    h_seq = np.empty((F, H), dtype=x.dtype)
    h = np.zeros(H, dtype=x.dtype)
    c = np.zeros(H, dtype=x.dtype)
    for t in range(F):
        pre = pre_x[t] + h @ wh
        i = 1.0 / (1.0 + np.exp(-pre[:H]))
        f = 1.0 / (1.0 + np.exp(-pre[H : 2 * H]))
        g = np.tanh(pre[2 * H : 3 * H])
        o = 1.0 / (1.0 + np.exp(-pre[3 * H :]))
        c = f * c + i * g
        tc = np.tanh(c)
        h = o * tc
        gates[t, :H] = i
        gates[t, H : 2 * H] = f
        gates[t, 2 * H : 3 * H] = g
        gates[t, 3 * H :] = o
        c_seq[t] = c
        tanh_c[t] = tc
        h_seq[t] = h
    if x.dtype != h_seq.dtype:  # guard against accidental promotion
        h_seq = h_seq.astype(x.dtype)
    return h_seq, gates, c_seq, tanh_c


def lstm_bwd_numpy(x, wx, wh, h_seq, gates, c_seq, tanh_c, dh_out):
    F = x.shape[0]
    H = wh.shape[0]
    dpre = np.empty((F, 4 * H), dtype=x.dtype)
    dh_next = np.zeros(H, dtype=x.dtype)
    dc_next = np.zeros(H, dtype=x.dtype)
    for t in range(F - 1, -1, -1):
        i = gates[t, :H]
        f = gates[t, H : 2 * H]
        g = gates[t, 2 * H : 3 * H]
        o = gates[t, 3 * H :]
        tc = tanh_c[t]
        dh = dh_out[t] + dh_next
        dc = dh * o * (1.0 - tc * tc) + dc_next
        c_prev = c_seq[t - 1] if t > 0 else np.zeros(H, dtype=x.dtype)
        row = dpre[t]
        row[:H] = dc * g * i * (1.0 - i)
        row[H : 2 * H] = dc * c_prev * f * (1.0 - f)
        row[2 * H : 3 * H] = dc * i * (1.0 - g * g)
        row[3 * H :] = dh * tc * o * (1.0 - o)
        dh_next = row @ wh.T
        dc_next = dc * f
    dx = dpre @ wx.T
    dwx = x.T @ dpre
    h_prev = np.vstack([np.zeros((1, H), dtype=x.dtype), h_seq[:-1]])
    dwh = h_prev.T @ dpre
    db = dpre.sum(axis=0)
    return dx.astype(x.dtype, copy=False), dwx, dwh, db


def lstm_fwd(x, wx, wh, b):
    if get_backend() == "numba":
        return _numba_mod.lstm_fwd(x, wx, wh, b)
    return lstm_fwd_numpy(x, wx, wh, b)


def lstm_bwd(x, wx, wh, h_seq, gates, c_seq, tanh_c, dh_out):
    if get_backend() == "numba":
        return _numba_mod.lstm_bwd(x, wx, wh, h_seq, gates, c_seq, tanh_c, dh_out)
    return lstm_bwd_numpy(x, wx, wh, h_seq, gates, c_seq, tanh_c, dh_out)
