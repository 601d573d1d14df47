"""Hierarchical grid-point motion estimation for quadrilateral meshes.

Every grid point is refined by testing a 3x3 grid of candidate motion
vectors spaced ``sr`` apart.  A candidate is refused when one of the (up to
four) adjacent quads drops below the determinant threshold.  Accepted
candidates are scored by

    D11 = MSE_comp + lambda * R
    D13 = MSE_comp + MSE_invcomp + lambda * R

where ``MSE_comp`` compares the current frame with its prediction over the
current-side pixels of the adjacent quads, ``MSE_invcomp`` compares the
reference frame with the inverse-mapped current frame over the pixels
those quads cover in the reference frame, and ``R`` is the quad-size
weighted mean distance to the neighbouring motion vectors.

Grid points are split into four parity sets; no two points of one set
share a quad, so a whole set is refined against one snapshot and
committed together.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import (
    DimensionError,
    EstimationConfig,
    Frame,
    QuadMesh,
    build_uniform_mesh,
    default_schedule,
    quantize_mv,
    refine_mesh,
    validate_mesh,
)
from . import _kernels
from .warp import IN_QUAD_TOL, coefficient_stack, mesh_margins, pixel_cells

log = logging.getLogger(__name__)

# Candidate offsets in scan order: dy-major, dx-minor.
OFFSETS = tuple((dx, dy) for dy in (-1, 0, 1) for dx in (-1, 0, 1))
_NEIGHBOURS = tuple((di, dj) for di in (-1, 0, 1) for dj in (-1, 0, 1) if (di, dj) != (0, 0))


@dataclass(frozen=True)
class CandidateCost:
    mse_comp: float
    mse_invcomp: float
    reg: float
    total: float


@dataclass(frozen=True, eq=False)
class EstimationState:
    """Normalised frames plus the mesh being refined (current = even frame)."""

    reference: np.ndarray
    current: np.ndarray
    mesh: QuadMesh

    @classmethod
    def from_frames(cls, f_odd: Frame, f_even: Frame, mesh: QuadMesh) -> "EstimationState":
        return cls(_normalized(f_odd), _normalized(f_even), mesh)

    def with_mesh(self, mesh: QuadMesh) -> "EstimationState":
        return EstimationState(self.reference, self.current, mesh)


def _normalized(f) -> np.ndarray:
    if isinstance(f, Frame):
        return f.normalized
    return np.asarray(f, dtype=np.float64)


def _fixed_axes(rows: int, cols: int):
    fix_x = np.zeros((rows, cols), dtype=bool)
    fix_y = np.zeros((rows, cols), dtype=bool)
    fix_x[:, [0, -1]] = True
    fix_y[[0, -1], :] = True
    return fix_x, fix_y


def regularizer(mesh: QuadMesh, point, candidate_mv, bs: float | None = None) -> float:
    """Mean Euclidean distance from ``candidate_mv`` to the existing 8-neighbours, over ``bs``."""
    i, j = point
    bs = mesh.bs if bs is None else bs
    cand = np.asarray(candidate_mv, dtype=np.float64)
    dists = [
        np.hypot(*(mesh.mv[i + di, j + dj] - cand))
        for di, dj in _NEIGHBOURS
        if 0 <= i + di < mesh.rows and 0 <= j + dj < mesh.cols
    ]
    return float(np.mean(dists)) / bs


def _regularizers(mv: np.ndarray, I: np.ndarray, J: np.ndarray, cand: np.ndarray, bs: float) -> np.ndarray:
    rows, cols = mv.shape[:2]
    total = np.zeros(len(I))
    count = np.zeros(len(I))
    for di, dj in _NEIGHBOURS:
        ni, nj = I + di, J + dj
        ok = (ni >= 0) & (ni < rows) & (nj >= 0) & (nj < cols)
        d = mv[np.clip(ni, 0, rows - 1), np.clip(nj, 0, cols - 1)] - cand
        total += np.where(ok, np.hypot(d[:, 0], d[:, 1]), 0.0)
        count += ok
    return total / count / bs


def _adjacent_quads(rows: int, cols: int, I: np.ndarray, J: np.ndarray):
    """Flat indices (n, 4) of the quads touching each point, and a validity mask."""
    qi = np.stack([I - 1, I - 1, I, I], axis=1)
    qj = np.stack([J - 1, J, J - 1, J], axis=1)
    ok = (qi >= 0) & (qi < rows - 1) & (qj >= 0) & (qj < cols - 1)
    return np.where(ok, qi * (cols - 1) + qj, 0), ok


def quad_errors(state: EstimationState, mesh: QuadMesh, inverse: bool = True):
    """Per-quad sums of squared error and pixel counts.

    Returns ``(comp_sse, comp_n, inv_sse, inv_n)``, each of length
    ``(rows-1)*(cols-1)``; the inverse pair is ``None`` when not requested.
    """
    coef = coefficient_stack(mesh)
    qi, qj = pixel_cells(mesh)
    comp_sse, comp_n = _kernels.comp_errors(state.reference, state.current, coef, mesh.xs, mesh.ys, qi, qj)
    if not inverse:
        return comp_sse, comp_n, None, None
    xr, yr = mesh.reference_positions()
    inv_sse, inv_n = _kernels.invcomp_errors(
        state.reference, state.current, coef, mesh.xs, mesh.ys, xr, yr, IN_QUAD_TOL
    )
    return comp_sse, comp_n, inv_sse, inv_n


def _mse(sse, n, quads, ok):
    s = np.where(ok, sse[quads], 0.0).sum(axis=1)
    c = np.where(ok, n[quads], 0.0).sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(c > 0, s / np.maximum(c, 1), 0.0)


def _in_frame(mesh: QuadMesh, mv: np.ndarray) -> np.ndarray:
    xr = mesh.xs[None, :] + mv[..., 0]
    yr = mesh.ys[:, None] + mv[..., 1]
    return (xr >= 0) & (xr <= mesh.frame_width - 1) & (yr >= 0) & (yr <= mesh.frame_height - 1)


def _candidate_ok(mesh: QuadMesh, cand_mesh: QuadMesh, I, J, td):
    quads, ok = _adjacent_quads(mesh.rows, mesh.cols, I, J)
    margins = mesh_margins(cand_mesh).ravel()
    good = np.all(~ok | (margins[quads] >= td), axis=1)
    return good & _in_frame(mesh, cand_mesh.mv)[I, J]


def evaluate_candidate(
    f_odd, f_even, mesh: QuadMesh, point, candidate_mv, config: EstimationConfig, lam: float | None = None
) -> CandidateCost | None:
    """Cost of moving one grid point to ``candidate_mv``; ``None`` if refused."""
    i, j = point
    lam = config.lam if lam is None else lam
    cand = np.asarray(candidate_mv, dtype=np.float64)
    fix_x, fix_y = _fixed_axes(mesh.rows, mesh.cols)
    if (fix_x[i, j] and cand[0] != 0) or (fix_y[i, j] and cand[1] != 0):
        return None
    mv = np.array(mesh.mv)
    mv[i, j] = cand
    cand_mesh = mesh.with_mv(mv)
    I, J = np.array([i]), np.array([j])
    if not _candidate_ok(mesh, cand_mesh, I, J, config.td)[0]:
        return None
    state = EstimationState(_normalized(f_odd), _normalized(f_even), cand_mesh)
    d13 = config.metric == "D13"
    comp_sse, comp_n, inv_sse, inv_n = quad_errors(state, cand_mesh, inverse=d13)
    quads, ok = _adjacent_quads(mesh.rows, mesh.cols, I, J)
    mse_comp = float(_mse(comp_sse, comp_n, quads, ok)[0])
    mse_inv = float(_mse(inv_sse, inv_n, quads, ok)[0]) if d13 else 0.0
    reg = regularizer(mesh, point, cand)
    return CandidateCost(mse_comp, mse_inv, reg, mse_comp + mse_inv + lam * reg)


def _project(mv: np.ndarray, fix_x: np.ndarray, fix_y: np.ndarray) -> np.ndarray:
    out = mv.copy()
    out[fix_x, 0] = 0.0
    out[fix_y, 1] = 0.0
    return out


def refine_point(state: EstimationState, point, sr: float, config: EstimationConfig, lam: float | None = None):
    """Best of the 3x3 candidates around the point's current motion vector.

    Ties keep the current vector, then fall to scan order.
    """
    i, j = point
    mesh = state.mesh
    fix_x, fix_y = _fixed_axes(mesh.rows, mesh.cols)
    current = mesh.mv[i, j].copy()
    best = evaluate_candidate(state.reference, state.current, mesh, point, current, config, lam)
    best_cost = np.inf if best is None else best.total
    best_mv = current
    for dx, dy in OFFSETS:
        if (dx, dy) == (0, 0):
            continue
        cand = current + sr * np.array([0.0 if fix_x[i, j] else dx, 0.0 if fix_y[i, j] else dy])
        cost = evaluate_candidate(state.reference, state.current, mesh, point, cand, config, lam)
        if cost is not None and cost.total < best_cost:
            best_cost, best_mv = cost.total, cand
    return best_mv


def partition_into_sets(mesh: QuadMesh) -> list[list[tuple[int, int]]]:
    sets: list[list[tuple[int, int]]] = [[], [], [], []]
    for i in range(mesh.rows):
        for j in range(mesh.cols):
            sets[2 * (i % 2) + (j % 2)].append((i, j))
    return sets


def set_costs(state: EstimationState, points, sr: float, config: EstimationConfig, lam: float | None = None):
    """Candidate totals for every point of one independent set.

    Returns ``(costs, candidates)`` with shapes ``(9, n)`` and ``(9, n, 2)``
    in :data:`OFFSETS` order; refused candidates cost ``inf``.
    """
    lam = config.lam if lam is None else lam
    mesh = state.mesh
    I = np.array([p[0] for p in points])
    J = np.array([p[1] for p in points])
    fix_x, fix_y = _fixed_axes(mesh.rows, mesh.cols)
    d13 = config.metric == "D13"
    quads, ok = _adjacent_quads(mesh.rows, mesh.cols, I, J)
    current = mesh.mv[I, J]
    costs = np.full((len(OFFSETS), len(I)), np.inf)
    cands = np.empty((len(OFFSETS), len(I), 2))
    for k, (dx, dy) in enumerate(OFFSETS):
        mv = np.array(mesh.mv)
        mv[I, J] = current + sr * np.array([dx, dy])
        mv = _project(mv, fix_x, fix_y)
        cand = mv[I, J]
        cands[k] = cand
        good = _candidate_ok(mesh, mesh.with_mv(mv), I, J, config.td)
        if not good.any():
            continue
        # refused points stay put so they cannot disturb their neighbours' costs
        mv[I[~good], J[~good]] = current[~good]
        cand_mesh = mesh.with_mv(mv)
        comp_sse, comp_n, inv_sse, inv_n = quad_errors(state, cand_mesh, inverse=d13)
        total = _mse(comp_sse, comp_n, quads, ok)
        if d13:
            total = total + _mse(inv_sse, inv_n, quads, ok)
        if lam:
            total = total + lam * _regularizers(mesh.mv, I, J, cand, mesh.bs)
        costs[k] = np.where(good, total, np.inf)
    return costs, cands


def run_iteration(state: EstimationState, sr: float, config: EstimationConfig, lam: float | None = None) -> EstimationState:
    """Refine every grid point once, set by set."""
    centre = OFFSETS.index((0, 0))
    for points in partition_into_sets(state.mesh):
        if not points:
            continue
        costs, cands = set_costs(state, points, sr, config, lam)
        best_k = np.full(costs.shape[1], centre)
        best = costs[centre].copy()
        for k in range(len(OFFSETS)):
            if k == centre:
                continue
            better = costs[k] < best
            best = np.where(better, costs[k], best)
            best_k = np.where(better, k, best_k)
        new = cands[best_k, np.arange(len(points))]
        mv = np.array(state.mesh.mv)
        I = np.array([p[0] for p in points])
        J = np.array([p[1] for p in points])
        mv[I, J] = new
        state = state.with_mesh(state.mesh.with_mv(mv))
    return state


def hierarchical_estimate(
    f_odd: Frame,
    f_even: Frame,
    config: EstimationConfig | None = None,
    on_iteration: Callable[[int, float, QuadMesh], None] | None = None,
) -> QuadMesh:
    """Coarse-to-fine mesh estimation between a reference and a current frame.

    ``f_odd`` is the reference, ``f_even`` the current frame; the returned
    motion vectors point from current-frame grid points into ``f_odd``.
    ``on_iteration`` is called with ``(stage, sr, mesh)`` after every
    iteration; subpixel stages are numbered after the main schedule.
    """
    config = config or EstimationConfig()
    if f_odd.samples.shape != f_even.samples.shape:
        raise DimensionError(f"frame shapes differ: {f_odd.samples.shape} vs {f_even.samples.shape}")
    w, h = f_odd.width, f_odd.height
    schedule = config.schedule or default_schedule(w, h)
    state = EstimationState.from_frames(f_odd, f_even, build_uniform_mesh(w, h, schedule[0][0]))
    for k, (bs, sr, iterations) in enumerate(schedule):
        while state.mesh.bs > bs:
            state = state.with_mesh(refine_mesh(state.mesh, config.td))
        for _ in range(iterations):
            state = run_iteration(state, sr, config)
            if on_iteration:
                on_iteration(k, sr, state.mesh)
        log.debug("stage bs=%d sr=%g done", bs, sr)
    for k, (sr, lam) in enumerate(config.subpixel_stages, start=len(schedule)):
        state = run_iteration(state, sr, config, lam)
        if on_iteration:
            on_iteration(k, sr, state.mesh)
    mesh = state.mesh.with_mv(quantize_mv(state.mesh.mv))
    validate_mesh(mesh, config.td)
    return mesh
