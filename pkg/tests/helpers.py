"""Shared builders for the test suite."""

import numpy as np

from meshlift.core import Frame, border_violations, build_uniform_mesh, project_border, quantize_mv
from meshlift.warp import fit_bilinear, invertibility_margin, mesh_margins


def random_frame(rng, width, height, bit_depth=12):
    return Frame(rng.integers(0, 1 << bit_depth, size=(height, width)), bit_depth)


def smooth_frame(rng, width, height, bit_depth=12, blobs=12):
    y, x = np.mgrid[0:height, 0:width].astype(float)
    out = np.zeros((height, width))
    for _ in range(blobs):
        cx, cy = rng.uniform(0, width), rng.uniform(0, height)
        s = rng.uniform(3, 10)
        out += rng.uniform(-1, 1) * np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2 * s * s))
    out = (out - out.min()) / max(np.ptp(out), 1e-9)
    peak = (1 << bit_depth) - 1
    return Frame(np.round(out * peak).astype(np.int64), bit_depth)


def random_valid_mesh(rng, width, height, bs, scale=0.3, td=0.2):
    """Random mesh obeying the border constraints with every margin >= td."""
    base = build_uniform_mesh(width, height, bs)
    for _ in range(200):
        mv = rng.uniform(-scale * bs, scale * bs, size=base.mv.shape)
        mesh = base.with_mv(quantize_mv(project_border(mv)))
        if mesh_margins(mesh).min() >= td and not border_violations(mesh):
            return mesh
        scale *= 0.9
    raise RuntimeError("could not draw a valid mesh")


def random_map(rng, td=0.2, max_extent=16):
    """Random bilinear map on an n_u x n_v rectangle with margin >= td."""
    while True:
        n_u, n_v = (float(rng.integers(2, max_extent + 1)) for _ in range(2))
        cur = np.array([[0, 0], [n_u, 0], [0, n_v], [n_u, n_v]], dtype=float)
        ref = cur + rng.uniform(-0.35, 0.35, size=(4, 2)) * [n_u, n_v]
        m = fit_bilinear(cur, ref)
        if invertibility_margin(m) >= td:
            return m
