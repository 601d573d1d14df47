"""Compiled per-pixel loops behind whole-frame warping and the estimation costs.

All loops run serially in a fixed order, so results do not depend on the
number of threads available.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True, error_model="numpy")
def sample(img, x, y):
    h, w = img.shape
    x = min(max(x, 0.0), w - 1.0)
    y = min(max(y, 0.0), h - 1.0)
    x0 = min(int(math.floor(x)), w - 2)
    y0 = min(int(math.floor(y)), h - 2)
    fx = x - x0
    fy = y - y0
    top = img[y0, x0] + fx * (img[y0, x0 + 1] - img[y0, x0])
    bot = img[y0 + 1, x0] + fx * (img[y0 + 1, x0 + 1] - img[y0 + 1, x0])
    return top + fy * (bot - top)


@njit(cache=True, error_model="numpy")
def _u_of(c, u_r, v_r, v):
    den1 = c[0] * v + c[1]
    den2 = c[4] * v + c[5]
    if abs(den1) >= abs(den2):
        return (u_r - c[2] * v - c[3]) / den1
    return (v_r - c[6] * v - c[7]) / den2


@njit(cache=True, error_model="numpy")
def solve(c, u_r, v_r, n_u, n_v, tol):
    """Preimage of local reference point (u_r, v_r); returns (u, v, found)."""
    alpha = c[6] * c[0] - c[4] * c[2]
    beta = c[4] * u_r - c[0] * v_r + c[7] * c[0] - c[4] * c[3] - c[5] * c[2] + c[6] * c[1]
    gamma = c[5] * u_r - c[1] * v_r + c[7] * c[1] - c[5] * c[3]
    if abs(alpha) < 1e-12 * (abs(c[0]) + abs(c[4]) + 1.0):
        if beta == 0.0:
            return 0.0, 0.0, False
        v1 = -gamma / beta
        v2 = np.nan
    else:
        disc = beta * beta - 4.0 * alpha * gamma
        if disc < -1e-9 * (beta * beta + abs(4.0 * alpha * gamma)):
            return 0.0, 0.0, False
        sq = math.sqrt(max(disc, 0.0))
        q = -0.5 * (beta + math.copysign(sq, beta))
        v1 = q / alpha
        v2 = gamma / q if q != 0.0 else v1
    u1 = _u_of(c, u_r, v_r, v1)
    if -tol <= u1 <= n_u + tol and -tol <= v1 <= n_v + tol:
        return u1, v1, True
    if v2 == v2:
        u2 = _u_of(c, u_r, v_r, v2)
        if -tol <= u2 <= n_u + tol and -tol <= v2 <= n_v + tol:
            return u2, v2, True
    return 0.0, 0.0, False


@njit(cache=True, error_model="numpy")
def forward_positions(coef, xs, ys, qi_of_row, qj_of_col):
    h = qi_of_row.shape[0]
    w = qj_of_col.shape[0]
    xr = np.empty((h, w))
    yr = np.empty((h, w))
    for y in range(h):
        qi = qi_of_row[y]
        v = float(y - ys[qi])
        for x in range(w):
            qj = qj_of_col[x]
            u = float(x - xs[qj])
            c = coef[qi, qj]
            xr[y, x] = c[0] * u * v + c[1] * u + c[2] * v + c[3] + xs[qj]
            yr[y, x] = c[4] * u * v + c[5] * u + c[6] * v + c[7] + ys[qi]
    return xr, yr


@njit(cache=True, error_model="numpy")
def inverse_positions(coef, xs, ys, ref_x, ref_y, width, height, tol):
    """Current-frame position and owning quad for every reference pixel.

    Quads are scanned in row-major order and the first quad whose inverse
    lands inside it claims the pixel.  Unclaimed pixels keep owner -1.
    """
    nr, nc = coef.shape[0], coef.shape[1]
    xc = np.zeros((height, width))
    yc = np.zeros((height, width))
    owner = np.full((height, width), -1, dtype=np.int64)
    for qi in range(nr):
        for qj in range(nc):
            c = coef[qi, qj]
            ox = xs[qj]
            oy = ys[qi]
            n_u = float(xs[qj + 1] - ox)
            n_v = float(ys[qi + 1] - oy)
            lo_x = min(min(ref_x[qi, qj], ref_x[qi, qj + 1]), min(ref_x[qi + 1, qj], ref_x[qi + 1, qj + 1]))
            hi_x = max(max(ref_x[qi, qj], ref_x[qi, qj + 1]), max(ref_x[qi + 1, qj], ref_x[qi + 1, qj + 1]))
            lo_y = min(min(ref_y[qi, qj], ref_y[qi, qj + 1]), min(ref_y[qi + 1, qj], ref_y[qi + 1, qj + 1]))
            hi_y = max(max(ref_y[qi, qj], ref_y[qi, qj + 1]), max(ref_y[qi + 1, qj], ref_y[qi + 1, qj + 1]))
            x0 = max(int(math.ceil(lo_x - tol)), 0)
            x1 = min(int(math.floor(hi_x + tol)), width - 1)
            y0 = max(int(math.ceil(lo_y - tol)), 0)
            y1 = min(int(math.floor(hi_y + tol)), height - 1)
            for py in range(y0, y1 + 1):
                for px in range(x0, x1 + 1):
                    if owner[py, px] >= 0:
                        continue
                    u, v, found = solve(c, float(px - ox), float(py - oy), n_u, n_v, tol)
                    if found:
                        owner[py, px] = qi * nc + qj
                        xc[py, px] = u + ox
                        yc[py, px] = v + oy
    return xc, yc, owner


@njit(cache=True, error_model="numpy")
def comp_errors(reference, current, coef, xs, ys, qi_of_row, qj_of_col):
    """Per-quad squared prediction error over current-frame pixels."""
    nr, nc = coef.shape[0], coef.shape[1]
    sse = np.zeros(nr * nc)
    cnt = np.zeros(nr * nc)
    h, w = current.shape
    for y in range(h):
        qi = qi_of_row[y]
        v = float(y - ys[qi])
        for x in range(w):
            qj = qj_of_col[x]
            u = float(x - xs[qj])
            c = coef[qi, qj]
            xr = c[0] * u * v + c[1] * u + c[2] * v + c[3] + xs[qj]
            yr = c[4] * u * v + c[5] * u + c[6] * v + c[7] + ys[qi]
            e = current[y, x] - sample(reference, xr, yr)
            q = qi * nc + qj
            sse[q] += e * e
            cnt[q] += 1.0
    return sse, cnt


@njit(cache=True, error_model="numpy")
def invcomp_errors(reference, current, coef, xs, ys, ref_x, ref_y, tol):
    """Per-quad squared error of the inverse mapping over reference-frame pixels."""
    h, w = reference.shape
    xc, yc, owner = inverse_positions(coef, xs, ys, ref_x, ref_y, w, h, tol)
    nq = coef.shape[0] * coef.shape[1]
    sse = np.zeros(nq)
    cnt = np.zeros(nq)
    for y in range(h):
        for x in range(w):
            q = owner[y, x]
            if q < 0:
                continue
            e = reference[y, x] - sample(current, xc[y, x], yc[y, x])
            sse[q] += e * e
            cnt[q] += 1.0
    return sse, cnt
