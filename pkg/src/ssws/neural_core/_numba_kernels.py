"""Numba-jitted kernel implementations, imported lazily by kernels.py.

The LSTM kernels are built by a per-dtype factory: numba promotes float32
arithmetic with Python float literals to float64, so the literal 1.0 is frozen
into each closure as a typed scalar instead.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def conv_fwd(x, kernel, dilation):
    T = x.shape[0]
    xc = np.ascontiguousarray(x)
    out = np.dot(xc, np.ascontiguousarray(kernel[0]))
    for j in range(1, kernel.shape[0]):
        off = j * dilation
        if off < T:
            tmp = np.dot(np.ascontiguousarray(xc[: T - off]), np.ascontiguousarray(kernel[j]))
            out[off:] += tmp
    return out


@njit(cache=True)
def conv_bwd(x, kernel, dilation, grad_out):
    T = x.shape[0]
    xc = np.ascontiguousarray(x)
    g = np.ascontiguousarray(grad_out)
    dx = np.dot(g, np.ascontiguousarray(kernel[0].T))
    dk = np.zeros_like(kernel)
    dk[0] = np.dot(np.ascontiguousarray(xc.T), g)
    for j in range(1, kernel.shape[0]):
        off = j * dilation
        if off < T:
            g_tail = np.ascontiguousarray(g[off:])
            dx[: T - off] += np.dot(g_tail, np.ascontiguousarray(kernel[j].T))
            dk[j] = np.dot(np.ascontiguousarray(xc[: T - off].T), g_tail)
    return dx, dk


def _make_lstm_fwd(one):
    @njit
    def _lstm_fwd(x, wx, wh, b):
        F = x.shape[0]
        H = wh.shape[0]
        pre_x = np.dot(x, wx) + b
        gates = np.empty((F, 4 * H), dtype=x.dtype)
        c_seq = np.empty((F, H), dtype=x.dtype)
        tanh_c = np.empty((F, H), dtype=x.dtype)
        h_seq = np.empty((F, H), dtype=x.dtype)
        h = np.zeros(H, dtype=x.dtype)
        c = np.zeros(H, dtype=x.dtype)
        for t in range(F):
            pre = pre_x[t] + np.dot(h, wh)
            i = one / (one + np.exp(-pre[:H]))
            f = one / (one + np.exp(-pre[H : 2 * H]))
            g = np.tanh(pre[2 * H : 3 * H])
            o = one / (one + np.exp(-pre[3 * H :]))
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
        return h_seq, gates, c_seq, tanh_c

    return _lstm_fwd


def _make_lstm_bwd(one):
    @njit
    def _lstm_bwd(x, wx, wh, h_seq, gates, c_seq, tanh_c, dh_out):
        F = x.shape[0]
        H = wh.shape[0]
        dh_out = np.ascontiguousarray(dh_out)
        wh_t = np.ascontiguousarray(wh.T)
        dpre = np.empty((F, 4 * H), dtype=x.dtype)
        dh_next = np.zeros(H, dtype=x.dtype)
        dc_next = np.zeros(H, dtype=x.dtype)
        zero_c = np.zeros(H, dtype=x.dtype)
        for t in range(F - 1, -1, -1):
            i = gates[t, :H]
            f = gates[t, H : 2 * H]
            g = gates[t, 2 * H : 3 * H]
            o = gates[t, 3 * H :]
            tc = tanh_c[t]
            dh = dh_out[t] + dh_next
            dc = dh * o * (one - tc * tc) + dc_next
            c_prev = c_seq[t - 1] if t > 0 else zero_c
            dpre[t, :H] = dc * g * i * (one - i)
            dpre[t, H : 2 * H] = dc * c_prev * f * (one - f)
            dpre[t, 2 * H : 3 * H] = dc * i * (one - g * g)
            dpre[t, 3 * H :] = dh * tc * o * (one - o)
            dh_next = np.dot(np.ascontiguousarray(dpre[t]), wh_t)
            dc_next = dc * f
        dx = np.dot(dpre, np.ascontiguousarray(wx.T))
        dwx = np.dot(np.ascontiguousarray(x.T), dpre)
        h_prev = np.empty((F, H), dtype=x.dtype)
        h_prev[0] = zero_c
        h_prev[1:] = h_seq[:-1]
        dwh = np.dot(np.ascontiguousarray(h_prev.T), dpre)
        db = dpre.sum(axis=0)
        return dx, dwx, dwh, db

    return _lstm_bwd


_lstm_fwd_impl = {
    np.float32: _make_lstm_fwd(np.float32(1.0)),
    np.float64: _make_lstm_fwd(np.float64(1.0)),
}
_lstm_bwd_impl = {
    np.float32: _make_lstm_bwd(np.float32(1.0)),
    np.float64: _make_lstm_bwd(np.float64(1.0)),
}


def lstm_fwd(x, wx, wh, b):
    return _lstm_fwd_impl[x.dtype.type](x, wx, wh, b)


def lstm_bwd(x, wx, wh, h_seq, gates, c_seq, tanh_c, dh_out):
    return _lstm_bwd_impl[x.dtype.type](x, wx, wh, h_seq, gates, c_seq, tanh_c, dh_out)
