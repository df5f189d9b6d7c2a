"""Hot numeric kernels: 1-D same-padded convolution, max-pooling, and
nearest-centroid assignment.

Each kernel has a loop form (``*_loop``, compiled by numba when enabled) and a
vectorized numpy form (``*_np``).  The public names at the bottom of the module
point at whichever path :mod:`trailmark._accel` selected.  Both paths compute
the same quantities; they may differ in the last bits because summation order
differs.
"""

import numpy as np

from . import _accel

# ---------------------------------------------------------------------------
# convolution, kernel width K, zero "same" padding (K odd)
#   y[b, o, t] = bias[o] + sum_i sum_k W[o, i, k] * x[b, i, t + k - K//2]
# ---------------------------------------------------------------------------


def conv1d_forward_np(x, w, bias):
    bsz, cin, length = x.shape
    cout, _, width = w.shape
    half = width // 2
    xp = np.zeros((bsz, cin, length + 2 * half))
    xp[:, :, half:half + length] = x
    y = np.empty((bsz, cout, length))
    y[...] = bias[None, :, None]
    for k in range(width):
        y += np.einsum("oi,bit->bot", w[:, :, k], xp[:, :, k:k + length])
    return y


def conv1d_backward_np(x, w, dy):
    bsz, cin, length = x.shape
    cout, _, width = w.shape
    half = width // 2
    xp = np.zeros((bsz, cin, length + 2 * half))
    xp[:, :, half:half + length] = x
    dw = np.empty_like(w)
    dxp = np.zeros_like(xp)
    for k in range(width):
        dw[:, :, k] = np.einsum("bot,bit->oi", dy, xp[:, :, k:k + length])
        dxp[:, :, k:k + length] += np.einsum("oi,bot->bit", w[:, :, k], dy)
    db = dy.sum(axis=(0, 2))
    return dxp[:, :, half:half + length], dw, db


def conv1d_forward_loop(x, w, bias):
    bsz, cin, length = x.shape
    cout, _, width = w.shape
    half = width // 2
    y = np.empty((bsz, cout, length))
    for b in range(bsz):
        for o in range(cout):
            for t in range(length):
                acc = bias[o]
                for i in range(cin):
                    for k in range(width):
                        s = t + k - half
                        if 0 <= s < length:
                            acc += w[o, i, k] * x[b, i, s]
                y[b, o, t] = acc
    return y


def conv1d_backward_loop(x, w, dy):
    bsz, cin, length = x.shape
    cout, _, width = w.shape
    half = width // 2
    dx = np.zeros((bsz, cin, length))
    dw = np.zeros((cout, cin, width))
    db = np.zeros(cout)
    for b in range(bsz):
        for o in range(cout):
            for t in range(length):
                g = dy[b, o, t]
                db[o] += g
                if g == 0.0:
                    continue
                for i in range(cin):
                    for k in range(width):
                        s = t + k - half
                        if 0 <= s < length:
                            dw[o, i, k] += g * x[b, i, s]
                            dx[b, i, s] += g * w[o, i, k]
    return dx, dw, db


# ---------------------------------------------------------------------------
# max-pooling, window 2, stride 2, ceil mode (an odd tail pools alone)
# ---------------------------------------------------------------------------


def maxpool2_forward_np(x):
    bsz, ch, length = x.shape
    out_len = (length + 1) // 2
    padded = np.full((bsz, ch, 2 * out_len), -np.inf)
    padded[:, :, :length] = x
    pairs = padded.reshape(bsz, ch, out_len, 2)
    # argmax picks the first of equal values, matching the loop kernel
    pick = np.argmax(pairs, axis=3)
    y = np.take_along_axis(pairs, pick[..., None], axis=3)[..., 0]
    idx = 2 * np.arange(out_len)[None, None, :] + pick
    return y, idx.astype(np.int64)


def maxpool2_backward_np(dy, idx, length):
    bsz, ch, _ = dy.shape
    dx = np.zeros((bsz, ch, length))
    np.put_along_axis(dx, idx, dy, axis=2)
    return dx


def maxpool2_forward_loop(x):
    bsz, ch, length = x.shape
    out_len = (length + 1) // 2
    y = np.empty((bsz, ch, out_len))
    idx = np.empty((bsz, ch, out_len), dtype=np.int64)
    for b in range(bsz):
        for c in range(ch):
            for j in range(out_len):
                s = 2 * j
                best = x[b, c, s]
                arg = s
                if s + 1 < length and x[b, c, s + 1] > best:
                    best = x[b, c, s + 1]
                    arg = s + 1
                y[b, c, j] = best
                idx[b, c, j] = arg
    return y, idx


def maxpool2_backward_loop(dy, idx, length):
    bsz, ch, out_len = dy.shape
    dx = np.zeros((bsz, ch, length))
    for b in range(bsz):
        for c in range(ch):
            for j in range(out_len):
                dx[b, c, idx[b, c, j]] += dy[b, c, j]
    return dx


# ---------------------------------------------------------------------------
# nearest centroid (squared Euclidean), ties to the lower index
# ---------------------------------------------------------------------------


def assign_nearest_np(points, centroids):
    # exact differences rather than the |a|^2 - 2ab + |b|^2 expansion, so that
    # a point equal to a centroid has distance exactly zero
    diff = points[:, None, :] - centroids[None, :, :]
    d2 = np.einsum("nkd,nkd->nk", diff, diff)
    labels = np.argmin(d2, axis=1).astype(np.int64)
    return labels, d2[np.arange(points.shape[0]), labels]


def assign_nearest_loop(points, centroids):
    n, dim = points.shape
    k = centroids.shape[0]
    labels = np.empty(n, dtype=np.int64)
    best_d2 = np.empty(n)
    for p in range(n):
        best = np.inf
        arg = 0
        for c in range(k):
            acc = 0.0
            for j in range(dim):
                diff = points[p, j] - centroids[c, j]
                acc += diff * diff
            if acc < best:
                best = acc
                arg = c
        labels[p] = arg
        best_d2[p] = best
    return labels, best_d2


if _accel.USE_JIT:
    conv1d_forward = _accel.njit(conv1d_forward_loop)
    conv1d_backward = _accel.njit(conv1d_backward_loop)
    maxpool2_forward = _accel.njit(maxpool2_forward_loop)
    maxpool2_backward = _accel.njit(maxpool2_backward_loop)
    assign_nearest = _accel.njit(assign_nearest_loop)
    BACKEND = "numba"
else:
    conv1d_forward = conv1d_forward_np
    conv1d_backward = conv1d_backward_np
    maxpool2_forward = maxpool2_forward_np
    maxpool2_backward = maxpool2_backward_np
    assign_nearest = assign_nearest_np
    BACKEND = "numpy"
