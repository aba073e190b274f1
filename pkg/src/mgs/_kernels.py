"""Compiled scalar kernels for f.

A nonlinearity travels into compiled code as ``(kind, params, cap)``:

* ``KIND_POLY``: ``params`` are ascending coefficients, evaluated by
  compensated Horner so values next to a simple root keep full relative
  accuracy.
* ``KIND_FACTORED``: ``params = [scale, r_1, ..., r_m]`` and
  ``f(s) = scale * prod(s - r_j)``.
* ``KIND_PWL``: ``params = [m, x_1..x_m, y_1..y_m]``, linear interpolation
  with the end segments extrapolated.

``cap`` implements the truncation ``f(min(s, cap))``; ``inf`` disables it.
Every kernel returns 0 for ``s <= 0``.
"""
import math

import numpy as np
from numba import njit

KIND_POLY = 0
KIND_FACTORED = 1
KIND_PWL = 2

_SPLITTER = 134217729.0  # 2**27 + 1


@njit(cache=True, inline="always")
def _two_sum(a, b):
    s = a + b
    z = s - a
    return s, (a - (s - z)) + (b - z)


@njit(cache=True, inline="always")
def _two_prod(a, b):
    p = a * b
    c = _SPLITTER * a
    ah = c - (c - a)
    al = a - ah
    c = _SPLITTER * b
    bh = c - (c - b)
    bl = b - bh
    return p, al * bl - (((p - ah * bh) - al * bh) - ah * bl)


@njit(cache=True)
def comp_horner(coeffs, x):
    n = coeffs.shape[0]
    if n == 0:
        return 0.0
    r = coeffs[n - 1]
    corr = 0.0
    for i in range(n - 2, -1, -1):
        p, pe = _two_prod(r, x)
        r, se = _two_sum(p, coeffs[i])
        corr = corr * x + (pe + se)
    return r + corr


@njit(cache=True)
def _pwl(params, s):
    m = int(params[0])
    xs = params[1:1 + m]
    ys = params[1 + m:1 + 2 * m]
    if s <= xs[0]:
        j = 0
    elif s >= xs[m - 1]:
        j = m - 2
    else:
        j = np.searchsorted(xs, s) - 1
    t = (s - xs[j]) / (xs[j + 1] - xs[j])
    return ys[j] + t * (ys[j + 1] - ys[j])


@njit(cache=True)
def f_scalar(kind, params, cap, s):
    if not s > 0.0:
        return 0.0
    if s > cap:
        s = cap
    if kind == KIND_POLY:
        return comp_horner(params, s)
    if kind == KIND_FACTORED:
        out = params[0]
        for j in range(1, params.shape[0]):
            out *= s - params[j]
        return out
    return _pwl(params, s)


@njit(cache=True)
def f_array(kind, params, cap, s):
    out = np.empty(s.shape[0])
    for i in range(s.shape[0]):
        out[i] = f_scalar(kind, params, cap, s[i])
    return out


@njit(cache=True)
def poly_array(coeffs, s):
    out = np.empty(s.shape[0])
    for i in range(s.shape[0]):
        out[i] = comp_horner(coeffs, s[i])
    return out


def finite_cap(cap):
    return math.inf if cap is None else float(cap)
