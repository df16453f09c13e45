"""Forward/backward primitives for the post-filter.

All map activations use layout [batch, channels, feature, time].  Every
forward returns (output, cache) and every backward consumes that cache, so
the network module can mirror the graph without re-deriving shapes.  The
depthwise stage exploits stride == kernel size on the feature axis: after
ceil-mode zero padding the windows are non-overlapping, so a reshape plus
three shifted time slices covers the whole convolution.
"""

from __future__ import annotations

import numpy as np

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


def sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def elu_forward(x):
    y = np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))
    return y, y


def elu_backward(dy, cache):
    y = cache
    return dy * np.where(y > 0, 1.0, y + 1.0)


def pconv_forward(x, w, b):
    """1x1 convolution across channels of [B,C,F,T]."""
    y = np.einsum("oc,bcft->boft", w, x, optimize=True)
    y += b[None, :, None, None]
    return y, x


def pconv_backward(dy, x, w):
    db = dy.sum(axis=(0, 2, 3))
    dw = np.einsum("boft,bcft->oc", dy, x, optimize=True)
    dx = np.einsum("oc,boft->bcft", w, dy, optimize=True)
    return dx, dw, db


def dsconv_forward(x, dw, pw_w, pw_b, f_out):
    """Depthwise (stride == feature kernel, causal in time) then pointwise."""
    B, C, F, T = x.shape
    kf, kt = dw.shape[1], dw.shape[2]
    f_pad = f_out * kf - F
    xp = np.pad(x, ((0, 0), (0, 0), (0, f_pad), (kt - 1, 0)))
    xr = xp.reshape(B, C, f_out, kf, T + kt - 1)
    mid = np.zeros((B, C, f_out, T), dtype=x.dtype)
    for j in range(kt):
        mid += np.einsum("ci,bcfit->bcft", dw[:, :, j], xr[..., j:j + T], optimize=True)
    y, _ = pconv_forward(mid, pw_w, pw_b)
    return y, (xr, mid, x.shape)


def dsconv_backward(dy, cache, dw, pw_w):
    xr, mid, x_shape = cache
    B, C, F, T = x_shape
    kf, kt = dw.shape[1], dw.shape[2]
    dmid, dpw_w, dpw_b = pconv_backward(dy, mid, pw_w)
    ddw = np.zeros_like(dw)
    dxr = np.zeros_like(xr)
    for j in range(kt):
        ddw[:, :, j] = np.einsum("bcft,bcfit->ci", dmid, xr[..., j:j + T], optimize=True)
        dxr[..., j:j + T] += np.einsum(
            "ci,bcft->bcfit", dw[:, :, j], dmid, optimize=True
        )
    dxp = dxr.reshape(B, C, xr.shape[2] * kf, T + kt - 1)
    dx = dxp[:, :, :F, kt - 1:]
    return np.ascontiguousarray(dx), ddw, dpw_w, dpw_b


def bn_forward(x, gamma, beta, run_mean, run_var, training):
    """Per-channel batch norm on [B,C,F,T]; biased variance throughout."""
    if training:
        mu = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
        new_mean = (1.0 - BN_MOMENTUM) * run_mean + BN_MOMENTUM * mu
        new_var = (1.0 - BN_MOMENTUM) * run_var + BN_MOMENTUM * var
    else:
        mu, var = run_mean, run_var
        new_mean, new_var = run_mean, run_var
    inv = 1.0 / np.sqrt(var + BN_EPS)
    xhat = (x - mu[None, :, None, None]) * inv[None, :, None, None]
    y = gamma[None, :, None, None] * xhat + beta[None, :, None, None]
    n = x.size // x.shape[1]
    return y, (xhat, inv, gamma, training, n), (new_mean, new_var)


def bn_backward(dy, cache):
    xhat, inv, gamma, training, n = cache
    dgamma = np.einsum("bcft,bcft->c", dy, xhat, optimize=True)
    dbeta = dy.sum(axis=(0, 2, 3))
    dxhat = dy * gamma[None, :, None, None]
    if training:
        s1 = dxhat.sum(axis=(0, 2, 3))
        s2 = np.einsum("bcft,bcft->c", dxhat, xhat, optimize=True)
        dx = (inv[None, :, None, None] / n) * (
            n * dxhat - s1[None, :, None, None] - xhat * s2[None, :, None, None]
        )
    else:
        dx = dxhat * inv[None, :, None, None]
    return dx, dgamma, dbeta


def shuffle_forward(x, r):
    """Feature-axis pixel shuffle: [B, C*r, F, T] -> [B, C, F*r, T]."""
    B, CR, F, T = x.shape
    C = CR // r
    return x.reshape(B, C, r, F, T).transpose(0, 1, 3, 2, 4).reshape(B, C, F * r, T)


def shuffle_backward(dy, r):
    B, C, FR, T = dy.shape
    F = FR // r
    return dy.reshape(B, C, F, r, T).transpose(0, 1, 3, 2, 4).reshape(B, C * r, F, T)


def gru_forward(x, wx, wh, b, h0=None):
    """Gated recurrent unit over [B, T, In]; gate order (update, reset, new).

    n_t = tanh(W_n x_t + b_n + r_t * (U_n h_{t-1}))
    h_t = (1 - z_t) * n_t + z_t * h_{t-1}
    """
    B, T, _ = x.shape
    H = wh.shape[1]
    xz = np.einsum("bti,gi->btg", x, wx, optimize=True) + b
    whz, whr, whn = wh[:H], wh[H:2 * H], wh[2 * H:]
    h = np.zeros((B, H), dtype=x.dtype) if h0 is None else h0
    hs = np.empty((B, T, H), dtype=x.dtype)
    steps = []
    for t in range(T):
        a = xz[:, t]
        z = sigmoid(a[:, :H] + h @ whz.T)
        r = sigmoid(a[:, H:2 * H] + h @ whr.T)
        hh = h @ whn.T
        n = np.tanh(a[:, 2 * H:] + r * hh)
        steps.append((h, z, r, n, hh))
        h = (1.0 - z) * n + z * h
        hs[:, t] = h
    return hs, (x, wx, wh, steps)


def gru_backward(dhs, cache):
    x, wx, wh, steps = cache
    B, T, _ = x.shape
    H = wh.shape[1]
    whz, whr, whn = wh[:H], wh[H:2 * H], wh[2 * H:]
    dwh = np.zeros_like(wh)
    dxz = np.empty((B, T, 3 * H), dtype=x.dtype)
    carry = np.zeros((B, H), dtype=x.dtype)
    for t in range(T - 1, -1, -1):
        h_prev, z, r, n, hh = steps[t]
        dh = dhs[:, t] + carry
        dz = dh * (h_prev - n)
        dn = dh * (1.0 - z)
        carry = dh * z
        dn_pre = dn * (1.0 - n * n)
        dr = dn_pre * hh
        dhh = dn_pre * r
        dz_pre = dz * z * (1.0 - z)
        dr_pre = dr * r * (1.0 - r)
        dxz[:, t, :H] = dz_pre
        dxz[:, t, H:2 * H] = dr_pre
        dxz[:, t, 2 * H:] = dn_pre
        dwh[:H] += dz_pre.T @ h_prev
        dwh[H:2 * H] += dr_pre.T @ h_prev
        dwh[2 * H:] += dhh.T @ h_prev
        carry += dz_pre @ whz + dr_pre @ whr + dhh @ whn
    dwx = np.einsum("btg,bti->gi", dxz, x, optimize=True)
    db = dxz.sum(axis=(0, 1))
    dx = np.einsum("btg,gi->bti", dxz, wx, optimize=True)
    return dx, dwx, dwh, db
