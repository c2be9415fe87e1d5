"""Numeric inner loops, in numba and numpy flavours.

Every kernel ``foo`` has ``_foo_numba`` and ``_foo_numpy`` implementations with
the same floating-point expression order; the public name dispatches on
:data:`crestfield._backend.USE_NUMBA`. Both flavours stay importable so the
benchmark and the cross-backend tests can call either directly.
"""

import numpy as np

from ._backend import USE_NUMBA, njit, prange

# ---------------------------------------------------------------------------
# finite differences along the last axis of a 2D array (lines x nodes)


@njit
def _diff1_numba(a, h):
    n_lines, m = a.shape
    out = np.empty_like(a)
    two_h = 2.0 * h
    for r in range(n_lines):
        out[r, 0] = (-3.0 * a[r, 0] + 4.0 * a[r, 1] - a[r, 2]) / two_h
        for i in range(1, m - 1):
            out[r, i] = (a[r, i + 1] - a[r, i - 1]) / two_h
        out[r, m - 1] = (3.0 * a[r, m - 1] - 4.0 * a[r, m - 2] + a[r, m - 3]) / two_h
    return out


def _diff1_numpy(a, h):
    out = np.empty_like(a)
    two_h = 2.0 * h
    out[:, 0] = (-3.0 * a[:, 0] + 4.0 * a[:, 1] - a[:, 2]) / two_h
    out[:, 1:-1] = (a[:, 2:] - a[:, :-2]) / two_h
    out[:, -1] = (3.0 * a[:, -1] - 4.0 * a[:, -2] + a[:, -3]) / two_h
    return out


@njit
def _diff2_numba(a, h):
    n_lines, m = a.shape
    out = np.empty_like(a)
    hh = h * h
    for r in range(n_lines):
        out[r, 0] = (2.0 * a[r, 0] - 5.0 * a[r, 1] + 4.0 * a[r, 2] - a[r, 3]) / hh
        for i in range(1, m - 1):
            out[r, i] = (a[r, i + 1] - 2.0 * a[r, i] + a[r, i - 1]) / hh
        out[r, m - 1] = (2.0 * a[r, m - 1] - 5.0 * a[r, m - 2] + 4.0 * a[r, m - 3] - a[r, m - 4]) / hh
    return out


def _diff2_numpy(a, h):
    out = np.empty_like(a)
    hh = h * h
    out[:, 0] = (2.0 * a[:, 0] - 5.0 * a[:, 1] + 4.0 * a[:, 2] - a[:, 3]) / hh
    out[:, 1:-1] = (a[:, 2:] - 2.0 * a[:, 1:-1] + a[:, :-2]) / hh
    out[:, -1] = (2.0 * a[:, -1] - 5.0 * a[:, -2] + 4.0 * a[:, -3] - a[:, -4]) / hh
    return out


def _along_axis(kernel, a, h, axis):
    moved = np.moveaxis(np.asarray(a, dtype=np.float64), axis, -1)
    shape = moved.shape
    flat = np.ascontiguousarray(moved.reshape(-1, shape[-1]))
    out = kernel(flat, float(h)).reshape(shape)
    return np.moveaxis(out, -1, axis)


def diff1(a, h, axis):
    """Second-order first derivative of ``a`` along ``axis`` (one-sided at the ends)."""
    return _along_axis(_diff1_numba if USE_NUMBA else _diff1_numpy, a, h, axis)


def diff2(a, h, axis):
    """Second-order second derivative of ``a`` along ``axis`` (one-sided at the ends)."""
    return _along_axis(_diff2_numba if USE_NUMBA else _diff2_numpy, a, h, axis)


# ---------------------------------------------------------------------------
# power sums: sum_i (|v_i| / scale) ** p with a fixed pairwise reduction tree

_BLOCK = 64


@njit
def _power_sum_numba(v, p, scale):
    m = v.shape[0]
    n_blocks = (m + 64 - 1) // 64
    partial = np.empty(max(n_blocks, 1))
    if m == 0:
        return 0.0
    for b in range(n_blocks):
        s = 0.0
        stop = min(m, (b + 1) * 64)
        for i in range(b * 64, stop):
            s += (abs(v[i]) / scale) ** p
        partial[b] = s
    k = n_blocks
    while k > 1:
        half = k // 2
        for i in range(half):
            partial[i] = partial[2 * i] + partial[2 * i + 1]
        if k % 2 == 1:
            partial[half] = partial[k - 1]
            k = half + 1
        else:
            k = half
    return partial[0]


def _power_sum_numpy(v, p, scale):
    m = v.shape[0]
    if m == 0:
        return 0.0
    terms = (np.abs(v) / scale) ** p
    n_blocks = (m + _BLOCK - 1) // _BLOCK
    padded = np.zeros(n_blocks * _BLOCK)
    padded[:m] = terms
    # sequential within a block, like the numba loop
    partial = np.zeros(n_blocks)
    blocks = padded.reshape(n_blocks, _BLOCK)
    for j in range(_BLOCK):
        partial = partial + blocks[:, j]
    while partial.shape[0] > 1:
        k = partial.shape[0]
        half = k // 2
        merged = partial[0:2 * half:2] + partial[1:2 * half:2]
        if k % 2 == 1:
            merged = np.append(merged, partial[k - 1])
        partial = merged
    return float(partial[0])


def power_sum(v, p, scale):
    """Deterministic pairwise sum of ``(|v| / scale) ** p`` over a flat array."""
    v = np.ascontiguousarray(np.ravel(v), dtype=np.float64)
    if USE_NUMBA:
        return float(_power_sum_numba(v, float(p), float(scale)))
    return _power_sum_numpy(v, float(p), float(scale))


# ---------------------------------------------------------------------------
# McShane envelopes over a finite set of boundary samples


@njit(parallel=True)
def _envelope_numba(points, bpoints, bvalues, lam, sign):
    m, n = points.shape
    nb = bpoints.shape[0]
    out = np.empty(m)
    for i in prange(m):
        best = np.inf
        for j in range(nb):
            d2 = 0.0
            for k in range(n):
                diff = points[i, k] - bpoints[j, k]
                d2 += diff * diff
            val = sign * bvalues[j] + lam * np.sqrt(d2)
            if val < best:
                best = val
        out[i] = sign * best
    return out


def _envelope_numpy(points, bpoints, bvalues, lam, sign):
    m = points.shape[0]
    out = np.empty(m)
    chunk = max(1, 2_000_000 // max(1, bpoints.shape[0]))
    for start in range(0, m, chunk):
        p = points[start:start + chunk, None, :]
        diff = p - bpoints[None, :, :]
        dist = np.sqrt(np.sum(diff * diff, axis=-1))
        out[start:start + chunk] = sign * np.min(sign * bvalues[None, :] + lam * dist, axis=1)
    return out


def envelope(points, bpoints, bvalues, lam, sign):
    """``sign * min_j (sign * b_j + lam * |x - y_j|)`` for every row ``x`` of ``points``.

    ``sign=+1`` is the upper (min) envelope, ``sign=-1`` the lower (max) one.
    """
    points = np.ascontiguousarray(points, dtype=np.float64)
    bpoints = np.ascontiguousarray(bpoints, dtype=np.float64)
    bvalues = np.ascontiguousarray(bvalues, dtype=np.float64)
    if USE_NUMBA:
        return _envelope_numba(points, bpoints, bvalues, float(lam), float(sign))
    return _envelope_numpy(points, bpoints, bvalues, float(lam), float(sign))
