"""Independent reference implementations used as test oracles.

These deliberately avoid the package's own kernels: the convolution oracle is
a naive quadruple loop, and the cell oracle is a straight-line transcription
of the gate equations on top of scipy's correlate2d.
"""

import numpy as np
from scipy.signal import correlate2d
from scipy.special import expit


def naive_conv2d(x, kernels, bias):
    """Direct same-padded stride-1 cross-correlation, quadruple loop."""
    n, c_in, h, w = x.shape
    c_out, _, kh, kw = kernels.shape
    ph, pw = kh // 2, kw // 2
    out = np.zeros((n, c_out, h, w), dtype=np.float64)
    for b in range(n):
        for o in range(c_out):
            for y in range(h):
                for xx in range(w):
                    acc = 0.0
                    for c in range(c_in):
                        for i in range(kh):
                            for j in range(kw):
                                sy, sx = y + i - ph, xx + j - pw
                                if 0 <= sy < h and 0 <= sx < w:
                                    acc += x[b, c, sy, sx] * kernels[o, c, i, j]
                    out[b, o, y, xx] = acc + bias[o]
    return out


def scipy_conv2d(x, kernels, bias):
    """Same contract via scipy.correlate2d (fast independent reference)."""
    n, c_in, h, w = x.shape
    c_out = kernels.shape[0]
    out = np.zeros((n, c_out, h, w), dtype=np.float64)
    for b in range(n):
        for o in range(c_out):
            for c in range(c_in):
                out[b, o] += correlate2d(x[b, c], kernels[o, c], mode="same", boundary="fill")
            out[b, o] += bias[o]
    return out


def cell_oracle(x, h_prev, c_prev, w_x, w_h, bias, filters, w_c=None):
    """Straight-line gate equations: i, f, candidate, o in packed order."""
    nf = filters
    z = scipy_conv2d(x, w_x, bias) + scipy_conv2d(h_prev, w_h, np.zeros(4 * nf))
    zi, zf, zc, zo = z[:, :nf], z[:, nf : 2 * nf], z[:, 2 * nf : 3 * nf], z[:, 3 * nf :]
    if w_c is not None:
        zi = zi + w_c[:nf] * c_prev
        zf = zf + w_c[nf : 2 * nf] * c_prev
    i = expit(zi)
    f = expit(zf)
    g = np.tanh(zc)
    c_new = f * c_prev + i * g
    if w_c is not None:
        zo = zo + w_c[2 * nf :] * c_new
    o = expit(zo)
    h_new = o * np.tanh(c_new)
    return h_new, c_new


def scalar_lstm_grads(x, h_prev, c_prev, wxi, wxf, wxc, wxo, whi, whf, whc, who,
                      bi, bf, bc, bo, dh, dc):
    """Hand-differentiated scalar (1x1 kernel, single pixel) LSTM backward."""
    sig = lambda v: 1.0 / (1.0 + np.exp(-v))
    zi = wxi * x + whi * h_prev + bi
    zf = wxf * x + whf * h_prev + bf
    zc = wxc * x + whc * h_prev + bc
    zo = wxo * x + who * h_prev + bo
    i, f, g, o = sig(zi), sig(zf), np.tanh(zc), sig(zo)
    c_new = f * c_prev + i * g
    tc = np.tanh(c_new)

    dzo = dh * tc * o * (1 - o)
    dct = dc + dh * o * (1 - tc**2)
    dzf = dct * c_prev * f * (1 - f)
    dzi = dct * g * i * (1 - i)
    dzc = dct * i * (1 - g**2)
    return {
        "dx": dzi * wxi + dzf * wxf + dzc * wxc + dzo * wxo,
        "dh_prev": dzi * whi + dzf * whf + dzc * whc + dzo * who,
        "dc_prev": dct * f,
        "dwxi": dzi * x, "dwxf": dzf * x, "dwxc": dzc * x, "dwxo": dzo * x,
        "dwhi": dzi * h_prev, "dwhf": dzf * h_prev, "dwhc": dzc * h_prev, "dwho": dzo * h_prev,
        "dbi": dzi, "dbf": dzf, "dbc": dzc, "dbo": dzo,
    }
