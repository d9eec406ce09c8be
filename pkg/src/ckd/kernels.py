"""Hot numeric kernels with numba and pure-numpy implementations.

Every kernel exists twice: ``<name>_numpy`` and ``<name>_numba``. The
unsuffixed name is bound to whichever backend :mod:`ckd._accel` selected.
Both versions are kept importable so tests and ``benchmarks/`` can compare
them directly.
"""

import numpy as np

from ckd._accel import NUMBA_ENABLED

try:
    from numba import njit as _numba_njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    _HAVE_NUMBA = False

# Spike-function modes. SMOOTH replaces the Heaviside forward by the
# antiderivative of the triangular surrogate so finite differences can
# verify the backward wiring.
HARD = 0
SMOOTH = 1


# ---------------------------------------------------------------------------
# im2col / col2im (stride 1, square kernel, symmetric zero padding)
# ---------------------------------------------------------------------------

def im2col_numpy(x, k, pad):
    """(N, C, H, W) -> (N, C*k*k, OH, OW) patch matrix, rows ordered (c, ki, kj)."""
    n, c, h, w = x.shape
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(2, 3))
    oh, ow = win.shape[2], win.shape[3]
    return np.ascontiguousarray(win.transpose(0, 1, 4, 5, 2, 3)).reshape(n, c * k * k, oh, ow)


def col2im_numpy(cols, x_shape, k, pad):
    n, c, h, w = x_shape
    hp, wp = h + 2 * pad, w + 2 * pad
    oh, ow = hp - k + 1, wp - k + 1
    cols = cols.reshape(n, c, k, k, oh, ow)
    out = np.zeros((n, c, hp, wp))
    for i in range(k):
        for j in range(k):
            out[:, :, i:i + oh, j:j + ow] += cols[:, :, i, j]
    if pad:
        out = out[:, :, pad:pad + h, pad:pad + w]
    return np.ascontiguousarray(out)


def _im2col_loops(x, k, pad):
    n, c, h, w = x.shape
    oh = h + 2 * pad - k + 1
    ow = w + 2 * pad - k + 1
    cols = np.zeros((n, c * k * k, oh, ow))
    for b in range(n):
        for ch in range(c):
            for i in range(k):
                y0, y1 = max(0, pad - i), min(oh, h + pad - i)
                for j in range(k):
                    col = (ch * k + i) * k + j
                    x0, x1 = max(0, pad - j), min(ow, w + pad - j)
                    for oy in range(y0, y1):
                        iy = oy + i - pad
                        for ox in range(x0, x1):
                            cols[b, col, oy, ox] = x[b, ch, iy, ox + j - pad]
    return cols


def _col2im_loops(cols, n, c, h, w, k, pad):
    oh = h + 2 * pad - k + 1
    ow = w + 2 * pad - k + 1
    out = np.zeros((n, c, h, w))
    for b in range(n):
        for ch in range(c):
            for i in range(k):
                y0, y1 = max(0, pad - i), min(oh, h + pad - i)
                for j in range(k):
                    col = (ch * k + i) * k + j
                    x0, x1 = max(0, pad - j), min(ow, w + pad - j)
                    for oy in range(y0, y1):
                        iy = oy + i - pad
                        for ox in range(x0, x1):
                            out[b, ch, iy, ox + j - pad] += cols[b, col, oy, ox]
    return out


# ---------------------------------------------------------------------------
# max pooling (window == stride, trailing rows/cols cropped)
# ---------------------------------------------------------------------------

def maxpool_forward_numpy(x, s):
    n, c, h, w = x.shape
    oh, ow = h // s, w // s
    xr = x[:, :, :oh * s, :ow * s].reshape(n, c, oh, s, ow, s).transpose(0, 1, 2, 4, 3, 5)
    xr = xr.reshape(n, c, oh, ow, s * s)
    idx = xr.argmax(axis=-1)
    out = np.take_along_axis(xr, idx[..., None], axis=-1)[..., 0]
    return out, idx


def maxpool_backward_numpy(grad, idx, x_shape, s):
    n, c, h, w = x_shape
    oh, ow = grad.shape[2], grad.shape[3]
    g = np.zeros((n, c, oh, ow, s * s))
    np.put_along_axis(g, idx[..., None], grad[..., None], axis=-1)
    g = g.reshape(n, c, oh, ow, s, s).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, oh * s, ow * s)
    out = np.zeros(x_shape)
    out[:, :, :oh * s, :ow * s] = g
    return out


def _maxpool_forward_loops(x, s):
    n, c, h, w = x.shape
    oh, ow = h // s, w // s
    out = np.empty((n, c, oh, ow))
    idx = np.empty((n, c, oh, ow), dtype=np.int64)
    for b in range(n):
        for ch in range(c):
            for oy in range(oh):
                for ox in range(ow):
                    best = x[b, ch, oy * s, ox * s]
                    bi = 0
                    for i in range(s):
                        for j in range(s):
                            val = x[b, ch, oy * s + i, ox * s + j]
                            if val > best:
                                best = val
                                bi = i * s + j
                    out[b, ch, oy, ox] = best
                    idx[b, ch, oy, ox] = bi
    return out, idx


def _maxpool_backward_loops(grad, idx, n, c, h, w, s):
    out = np.zeros((n, c, h, w))
    oh, ow = grad.shape[2], grad.shape[3]
    for b in range(n):
        for ch in range(c):
            for oy in range(oh):
                for ox in range(ow):
                    bi = idx[b, ch, oy, ox]
                    out[b, ch, oy * s + bi // s, ox * s + bi % s] += grad[b, ch, oy, ox]
    return out


def avgpool_forward_numpy(x, s):
    n, c, h, w = x.shape
    oh, ow = h // s, w // s
    return x[:, :, :oh * s, :ow * s].reshape(n, c, oh, s, ow, s).mean(axis=(3, 5))


def avgpool_backward_numpy(grad, x_shape, s):
    n, c, h, w = x_shape
    oh, ow = grad.shape[2], grad.shape[3]
    up = np.broadcast_to((grad / (s * s))[:, :, :, None, :, None], (n, c, oh, s, ow, s))
    out = np.zeros(x_shape)
    out[:, :, :oh * s, :ow * s] = up.reshape(n, c, oh * s, ow * s)
    return out


def _avgpool_forward_loops(x, s):
    n, c, h, w = x.shape
    oh, ow = h // s, w // s
    out = np.zeros((n, c, oh, ow))
    inv = 1.0 / (s * s)
    for b in range(n):
        for ch in range(c):
            for y in range(oh * s):
                oy = y // s
                for xx in range(ow * s):
                    out[b, ch, oy, xx // s] += x[b, ch, y, xx]
            for oy in range(oh):
                for ox in range(ow):
                    out[b, ch, oy, ox] *= inv
    return out


def _avgpool_backward_loops(grad, n, c, h, w, s):
    oh, ow = grad.shape[2], grad.shape[3]
    out = np.zeros((n, c, h, w))
    inv = 1.0 / (s * s)
    for b in range(n):
        for ch in range(c):
            for y in range(oh * s):
                oy = y // s
                for xx in range(ow * s):
                    out[b, ch, y, xx] = grad[b, ch, oy, xx // s] * inv
    return out


# ---------------------------------------------------------------------------
# LIF time scan
# ---------------------------------------------------------------------------

def _spike_numpy(x, width, mode):
    if mode == HARD:
        return (x >= 0.0).astype(np.float64)
    y = np.clip(x / width, -1.0, 1.0)
    return np.where(y <= 0.0, 0.5 * (1.0 + y) ** 2, 1.0 - 0.5 * (1.0 - y) ** 2)


def _surrogate_numpy(x, width):
    return np.maximum(0.0, 1.0 - np.abs(x) / width) / width


def lif_forward_numpy(currents, tau, vth, width, mode):
    """currents: (T, M). Returns (spikes, pre-spike potentials), both (T, M)."""
    steps = currents.shape[0]
    spikes = np.empty_like(currents)
    vs = np.empty_like(currents)
    u = np.zeros(currents.shape[1:])
    for t in range(steps):
        v = tau * u + currents[t]
        s = _spike_numpy(v - vth, width, mode)
        u = v * (1.0 - s)
        vs[t] = v
        spikes[t] = s
    return spikes, vs


def lif_backward_numpy(grad_spikes, vs, spikes, tau, vth, width):
    steps = grad_spikes.shape[0]
    grad_in = np.empty_like(grad_spikes)
    grad_u = np.zeros(grad_spikes.shape[1:])
    for t in range(steps - 1, -1, -1):
        sg = _surrogate_numpy(vs[t] - vth, width)
        gv = grad_spikes[t] * sg + grad_u * ((1.0 - spikes[t]) - vs[t] * sg)
        grad_in[t] = gv
        grad_u = tau * gv
    return grad_in


def _lif_forward_loops(currents, tau, vth, width, mode):
    steps, m = currents.shape
    spikes = np.empty_like(currents)
    vs = np.empty_like(currents)
    u = np.zeros(m)
    for t in range(steps):
        for i in range(m):
            v = tau * u[i] + currents[t, i]
            x = v - vth
            if mode == 0:
                s = 1.0 if x >= 0.0 else 0.0
            else:
                y = min(max(x / width, -1.0), 1.0)
                if y <= 0.0:
                    s = 0.5 * (1.0 + y) ** 2
                else:
                    s = 1.0 - 0.5 * (1.0 - y) ** 2
            u[i] = v * (1.0 - s)
            vs[t, i] = v
            spikes[t, i] = s
    return spikes, vs


def _lif_backward_loops(grad_spikes, vs, spikes, tau, vth, width):
    steps, m = grad_spikes.shape
    grad_in = np.empty_like(grad_spikes)
    gu = np.zeros(m)
    for t in range(steps - 1, -1, -1):
        for i in range(m):
            x = vs[t, i] - vth
            sg = max(0.0, 1.0 - abs(x) / width) / width
            gv = grad_spikes[t, i] * sg + gu[i] * ((1.0 - spikes[t, i]) - vs[t, i] * sg)
            grad_in[t, i] = gv
            gu[i] = tau * gv
    return grad_in


# ---------------------------------------------------------------------------
# event binning
# ---------------------------------------------------------------------------

def bin_events_numpy(bins, x, y, p, steps, h, w):
    """Accumulate events into (T, 2, H, W) counts given precomputed time bins."""
    counts = np.zeros((steps, 2, h, w))
    if len(bins) == 0:
        return counts
    np.add.at(counts, (np.asarray(bins, dtype=np.int64), np.asarray(p, dtype=np.int64),
                       np.asarray(y, dtype=np.int64), np.asarray(x, dtype=np.int64)), 1.0)
    return counts


def _bin_events_loops(bins, x, y, p, steps, h, w):
    counts = np.zeros((steps, 2, h, w))
    for i in range(bins.shape[0]):
        counts[bins[i], p[i], y[i], x[i]] += 1.0
    return counts


if _HAVE_NUMBA:
    _im2col_nb = _numba_njit(cache=True)(_im2col_loops)
    _col2im_nb = _numba_njit(cache=True)(_col2im_loops)
    _maxpool_fwd_nb = _numba_njit(cache=True)(_maxpool_forward_loops)
    _maxpool_bwd_nb = _numba_njit(cache=True)(_maxpool_backward_loops)
    _avgpool_fwd_nb = _numba_njit(cache=True)(_avgpool_forward_loops)
    _avgpool_bwd_nb = _numba_njit(cache=True)(_avgpool_backward_loops)
    _lif_fwd_nb = _numba_njit(cache=True)(_lif_forward_loops)
    _lif_bwd_nb = _numba_njit(cache=True)(_lif_backward_loops)
    _bin_nb = _numba_njit(cache=True)(_bin_events_loops)

    def im2col_numba(x, k, pad):
        return _im2col_nb(np.ascontiguousarray(x, dtype=np.float64), k, pad)

    def col2im_numba(cols, x_shape, k, pad):
        n, c, h, w = x_shape
        return _col2im_nb(np.ascontiguousarray(cols, dtype=np.float64), n, c, h, w, k, pad)

    def maxpool_forward_numba(x, s):
        return _maxpool_fwd_nb(np.ascontiguousarray(x, dtype=np.float64), s)

    def maxpool_backward_numba(grad, idx, x_shape, s):
        n, c, h, w = x_shape
        return _maxpool_bwd_nb(np.ascontiguousarray(grad, dtype=np.float64), idx, n, c, h, w, s)

    def avgpool_forward_numba(x, s):
        return _avgpool_fwd_nb(np.ascontiguousarray(x, dtype=np.float64), s)

    def avgpool_backward_numba(grad, x_shape, s):
        n, c, h, w = x_shape
        return _avgpool_bwd_nb(np.ascontiguousarray(grad, dtype=np.float64), n, c, h, w, s)

    def lif_forward_numba(currents, tau, vth, width, mode):
        return _lif_fwd_nb(np.ascontiguousarray(currents, dtype=np.float64),
                           float(tau), float(vth), float(width), int(mode))

    def lif_backward_numba(grad_spikes, vs, spikes, tau, vth, width):
        return _lif_bwd_nb(np.ascontiguousarray(grad_spikes, dtype=np.float64), vs, spikes,
                           float(tau), float(vth), float(width))

    def bin_events_numba(bins, x, y, p, steps, h, w):
        return _bin_nb(np.asarray(bins, dtype=np.int64), np.asarray(x, dtype=np.int64),
                       np.asarray(y, dtype=np.int64), np.asarray(p, dtype=np.int64), steps, h, w)


if NUMBA_ENABLED and _HAVE_NUMBA:
    # the strided numpy copy outruns the loop kernel for patch extraction;
    # im2col_numba stays available for benchmarks/ and equivalence tests
    im2col = im2col_numpy
    col2im = col2im_numba
    maxpool_forward = maxpool_forward_numba
    maxpool_backward = maxpool_backward_numba
    avgpool_forward = avgpool_forward_numba
    avgpool_backward = avgpool_backward_numba
    lif_forward = lif_forward_numba
    lif_backward = lif_backward_numba
    bin_events = bin_events_numba
else:
    im2col = im2col_numpy
    col2im = col2im_numpy
    maxpool_forward = maxpool_forward_numpy
    maxpool_backward = maxpool_backward_numpy
    avgpool_forward = avgpool_forward_numpy
    avgpool_backward = avgpool_backward_numpy
    lif_forward = lif_forward_numpy
    lif_backward = lif_backward_numpy
    bin_events = bin_events_numpy
