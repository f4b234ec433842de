"""Finite-difference and quadrature helpers on uniform tensor grids."""

import numpy as np


def _take(f, sl, axis):
    if isinstance(sl, (int, np.integer)):  # keep the axis so 1-D inputs stay writable views
        sl = slice(sl, sl + 1 if sl != -1 else None)
    idx = [slice(None)] * f.ndim
    idx[axis] = sl
    return f[tuple(idx)]


def d1(f, h, axis):
    """Centered first derivative, second-order one-sided at both ends."""
    f = np.asarray(f)
    out = np.empty(f.shape, dtype=np.result_type(f.dtype, np.float64))
    n = f.shape[axis]
    if n < 3:
        raise ValueError("need at least 3 nodes along axis %d" % axis)
    t = lambda sl: _take(f, sl, axis)
    o = lambda sl: _take(out, sl, axis)
    o(slice(1, -1))[...] = (t(slice(2, None)) - t(slice(None, -2))) / (2 * h)
    o(0)[...] = (-3 * t(0) + 4 * t(1) - t(2)) / (2 * h)
    o(n - 1)[...] = (3 * t(n - 1) - 4 * t(n - 2) + t(n - 3)) / (2 * h)
    return out


def d2(f, h, axis):
    """Centered second derivative, second-order one-sided at both ends."""
    f = np.asarray(f)
    out = np.empty(f.shape, dtype=np.result_type(f.dtype, np.float64))
    n = f.shape[axis]
    if n < 4:
        raise ValueError("need at least 4 nodes along axis %d" % axis)
    t = lambda sl: _take(f, sl, axis)
    o = lambda sl: _take(out, sl, axis)
    o(slice(1, -1))[...] = (t(slice(2, None)) - 2 * t(slice(1, -1)) + t(slice(None, -2))) / h**2
    o(0)[...] = (2 * t(0) - 5 * t(1) + 4 * t(2) - t(3)) / h**2
    o(n - 1)[...] = (2 * t(n - 1) - 5 * t(n - 2) + 4 * t(n - 3) - t(n - 4)) / h**2
    return out


def dt_nodes(f, dt, axis=0):
    """Time derivative: centered inside, first-order one-sided at the endpoints."""
    f = np.asarray(f)
    out = np.empty(f.shape, dtype=np.result_type(f.dtype, np.float64))
    t = lambda sl: _take(f, sl, axis)
    o = lambda sl: _take(out, sl, axis)
    o(slice(1, -1))[...] = (t(slice(2, None)) - t(slice(None, -2))) / (2 * dt)
    o(0)[...] = (t(1) - t(0)) / dt
    o(-1)[...] = (t(-1) - t(-2)) / dt
    return out


def trapz_weights(n, h):
    w = np.full(n, float(h))
    w[0] = w[-1] = 0.5 * h
    return w


def bump(x, a, b, power=4):
    """Polynomial bump ((x-a)(b-x))^p scaled to peak 1, zero outside [a, b]."""
    x = np.asarray(x, dtype=float)
    m = 0.5 * (a + b)
    peak = ((m - a) * (b - m)) ** power
    y = np.where((x > a) & (x < b), ((x - a) * (b - x)) ** power, 0.0)
    return y / peak
