"""Compiled inner loops for the fit objective."""

import math

import numba
import numpy as np

EXP_CLAMP = 500.0
# exp(a + b) is formed as exp(a) * exp(b) only when both factors stay finite
EXP_SPLIT_SAFE = 350.0


@numba.njit(cache=True)
def _grad_row(b, k, i, h, w, out):
    # |np.gradient| of row i of image k: central inside, one-sided at borders.
    # The interior loop is branch-free so it vectorizes.
    i0 = i - 1 if i > 0 else 0
    i1 = i + 1 if i < h - 1 else h - 1
    fy = 0.5 if (i > 0 and i < h - 1) else 1.0
    if w == 1:
        gy = (b[k, i1, 0] - b[k, i0, 0]) * fy
        out[0] = np.sqrt(gy * gy)
        return
    gy = (b[k, i1, 0] - b[k, i0, 0]) * fy
    gx = (b[k, i, 1] - b[k, i, 0]) * 1.0
    out[0] = np.sqrt(gx * gx + gy * gy)
    for j in range(1, w - 1):
        gy = (b[k, i1, j] - b[k, i0, j]) * fy
        gx = (b[k, i, j + 1] - b[k, i, j - 1]) * 0.5
        out[j] = np.sqrt(gx * gx + gy * gy)
    j = w - 1
    gy = (b[k, i1, j] - b[k, i0, j]) * fy
    gx = (b[k, i, j] - b[k, i, j - 1]) * 1.0
    out[j] = np.sqrt(gx * gx + gy * gy)


@numba.njit(cache=True)
def grad_mag_stack(b):
    n, h, w = b.shape
    out = np.empty((n, h, w))
    row = np.empty(w)
    for k in range(n):
        for i in range(h):
            _grad_row(b, k, i, h, w, row)
            for j in range(w):
                out[k, i, j] = row[j]
    return out


@numba.njit(cache=True)
def grad_mag_distance(b, target, index):
    """L2 distance between |grad b[k]| and ``target[index[k]]`` for every k."""
    n, h, w = b.shape
    out = np.empty(n)
    row = np.empty(w)
    for k in range(n):
        t = index[k]
        acc = 0.0
        for i in range(h):
            _grad_row(b, k, i, h, w, row)
            for j in range(w):
                d = row[j] - target[t, i, j]
                acc += d * d
        out[k] = np.sqrt(acc)
    return out


@numba.njit(cache=True)
def _sig(m, z):
    return m / (1.0 + math.exp(min(max(z, -EXP_CLAMP), EXP_CLAMP)))


@numba.njit(cache=True)
def _prepare(x, k, h, w, sh, zx, ex):
    """Column terms of row k; returns (split, c, shift, mv, rv, bv, md)."""
    mh, rh, bh = x[k, 0], x[k, 1], x[k, 2]
    mv, rv, bv = x[k, 3], x[k, 4], x[k, 5]
    md, rd, bd, th = x[k, 6], x[k, 7], x[k, 8], x[k, 9]
    a = rd * math.sin(th)
    c = rd * math.cos(th)
    # centre the row part of the diagonal exponent so the split stays finite
    shift = 0.5 * c * (h - 1)
    o = rd * bd - shift
    split = True
    for j in range(w):
        sh[j] = _sig(mh, rh * (j - bh))
        zx[j] = a * j - o
        if abs(zx[j]) > EXP_SPLIT_SAFE:
            split = False
        else:
            ex[j] = math.exp(zx[j])
    return split, c, shift, mv, rv, bv, md


@numba.njit(cache=True)
def _render_row(i, w, split, c, shift, mv, rv, bv, md, sh, zx, ex, row):
    sv = _sig(mv, rv * (i - bv))
    zy = c * i - shift
    if split and abs(zy) <= EXP_SPLIT_SAFE:
        ey = math.exp(zy)
        for j in range(w):
            row[j] = max(md / (1.0 + ex[j] * ey), max(sh[j], sv))
    else:
        for j in range(w):
            row[j] = max(_sig(md, zx[j] + zy), max(sh[j], sv))


@numba.njit(cache=True)
def render_stack(x, h, w):
    """Render ``(n, 10)`` triangle parameter rows to an ``(n, h, w)`` stack."""
    n = x.shape[0]
    out = np.empty((n, h, w))
    sh = np.empty(w)
    zx = np.empty(w)
    ex = np.empty(w)
    row = np.empty(w)
    for k in range(n):
        split, c, shift, mv, rv, bv, md = _prepare(x, k, h, w, sh, zx, ex)
        for i in range(h):
            _render_row(i, w, split, c, shift, mv, rv, bv, md, sh, zx, ex, row)
            for j in range(w):
                out[k, i, j] = row[j]
    return out


@numba.njit(cache=True)
def render_distance_f32(x, u, eps):
    """Fused render, L2 distance to ``u`` and flushed single-precision copy.

    Returns ``(stack32, distances)``; equal to ``render_stack`` followed by
    ``row_distances`` and ``to_float32_flushed``, in one pass over the pixels.
    """
    n = x.shape[0]
    h, w = u.shape
    out = np.empty((n, h, w), dtype=np.float32)
    dist = np.empty(n)
    sh = np.empty(w)
    zx = np.empty(w)
    ex = np.empty(w)
    row = np.empty(w)
    for k in range(n):
        split, c, shift, mv, rv, bv, md = _prepare(x, k, h, w, sh, zx, ex)
        acc = 0.0
        for i in range(h):
            _render_row(i, w, split, c, shift, mv, rv, bv, md, sh, zx, ex, row)
            for j in range(w):
                v = row[j]
                d = v - u[i, j]
                acc += d * d
                out[k, i, j] = 0.0 if abs(v) < eps else v
        dist[k] = np.sqrt(acc)
    return out, dist


@numba.njit(cache=True)
def row_distances(stack, u):
    """L2 distance of every image in ``stack`` to ``u``."""
    n, h, w = stack.shape
    out = np.empty(n)
    for k in range(n):
        acc = 0.0
        for i in range(h):
            for j in range(w):
                d = stack[k, i, j] - u[i, j]
                acc += d * d
        out[k] = np.sqrt(acc)
    return out


@numba.njit(cache=True)
def to_float32_flushed(stack, eps):
    """Single-precision copy with magnitudes below ``eps`` set to zero."""
    out = np.empty(stack.shape, dtype=np.float32)
    flat_in = stack.ravel()
    flat_out = out.ravel()
    for k in range(flat_in.size):
        v = flat_in[k]
        flat_out[k] = 0.0 if abs(v) < eps else v
    return out
