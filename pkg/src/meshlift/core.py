"""Frames, quadrilateral meshes and the lattice geometry they share."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

MV_DECIMALS = 6
DEFAULT_LAMBDA = 0.0004
DEFAULT_TD = 0.2


class MeshliftError(Exception):
    """Base class for errors raised by this package."""


class DimensionError(MeshliftError, ValueError):
    pass


class InvertibilityError(MeshliftError):
    """A quadrilateral's bilinear map fails the determinant criterion."""

    def __init__(self, message, quad=None):
        super().__init__(message)
        self.quad = quad


@dataclass(frozen=True, eq=False)
class Frame:
    """Integer-intensity image of shape (height, width)."""

    samples: np.ndarray
    bit_depth: int = 12

    def __post_init__(self):
        s = np.asarray(self.samples)
        if s.ndim != 2:
            raise DimensionError(f"frame must be 2-D, got shape {s.shape}")
        if not 1 <= self.bit_depth <= 16:
            raise ValueError(f"bit_depth must lie in [1, 16], got {self.bit_depth}")
        if not np.issubdtype(s.dtype, np.integer):
            if not np.array_equal(s, np.round(s)):
                raise ValueError("frame samples must be integers")
        s = s.astype(np.int64)
        if s.size and (s.min() < 0 or s.max() >= 1 << self.bit_depth):
            raise ValueError(
                f"samples outside [0, {(1 << self.bit_depth) - 1}] for bit depth {self.bit_depth}"
            )
        s.flags.writeable = False
        object.__setattr__(self, "samples", s)

    @property
    def width(self) -> int:
        return self.samples.shape[1]

    @property
    def height(self) -> int:
        return self.samples.shape[0]

    @property
    def peak(self) -> int:
        return (1 << self.bit_depth) - 1

    @property
    def normalized(self) -> np.ndarray:
        return self.samples / float(self.peak)

    def __eq__(self, other):
        if not isinstance(other, Frame):
            return NotImplemented
        return self.bit_depth == other.bit_depth and np.array_equal(self.samples, other.samples)


@dataclass(frozen=True, eq=False)
class SignedFrame:
    """Signed integer band (lowpass or highpass) at full precision."""

    samples: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.samples)
        if s.ndim != 2:
            raise DimensionError(f"band must be 2-D, got shape {s.shape}")
        s = s.astype(np.int64)
        s.flags.writeable = False
        object.__setattr__(self, "samples", s)

    @property
    def width(self) -> int:
        return self.samples.shape[1]

    @property
    def height(self) -> int:
        return self.samples.shape[0]

    def __eq__(self, other):
        if not isinstance(other, SignedFrame):
            return NotImplemented
        return np.array_equal(self.samples, other.samples)


class GridPoint(NamedTuple):
    lattice_i: int
    lattice_j: int
    x: float
    y: float
    mv_x: float
    mv_y: float


def lattice_anchors(extent: int, bs: int) -> np.ndarray:
    """Anchor coordinates along one axis; the last anchor is clamped to ``extent - 1``."""
    n = -(-(extent - 1) // bs) + 1
    return np.minimum(np.arange(n) * bs, extent - 1).astype(np.int64)


def project_border(mv: np.ndarray) -> np.ndarray:
    """Zero the motion components that the frame border forbids.

    Left/right columns may only move vertically, top/bottom rows only
    horizontally; corners therefore stay fixed.
    """
    out = np.array(mv, dtype=np.float64, copy=True)
    out[:, 0, 0] = 0.0
    out[:, -1, 0] = 0.0
    out[0, :, 1] = 0.0
    out[-1, :, 1] = 0.0
    return out


def quantize_mv(mv: np.ndarray) -> np.ndarray:
    return np.round(np.asarray(mv, dtype=np.float64), MV_DECIMALS) + 0.0


@dataclass(frozen=True, eq=False)
class QuadMesh:
    """Lattice of grid points laid over the current frame.

    ``mv[i, j]`` holds ``(mv_x, mv_y)`` of the grid point in lattice row ``i``
    and column ``j``; its reference position is the anchor plus that vector.
    """

    frame_width: int
    frame_height: int
    bs: int
    mv: np.ndarray = field(repr=False)

    def __post_init__(self):
        mv = np.array(self.mv, dtype=np.float64)
        shape = (len(self.ys), len(self.xs), 2)
        if mv.shape != shape:
            raise DimensionError(f"motion array has shape {mv.shape}, lattice needs {shape}")
        mv.flags.writeable = False
        object.__setattr__(self, "mv", mv)

    @property
    def xs(self) -> np.ndarray:
        return lattice_anchors(self.frame_width, self.bs)

    @property
    def ys(self) -> np.ndarray:
        return lattice_anchors(self.frame_height, self.bs)

    @property
    def cols(self) -> int:
        return len(self.xs)

    @property
    def rows(self) -> int:
        return len(self.ys)

    @property
    def quad_shape(self) -> tuple[int, int]:
        return self.rows - 1, self.cols - 1

    def reference_positions(self) -> tuple[np.ndarray, np.ndarray]:
        """Grid point positions in the reference frame, each of shape (rows, cols)."""
        return self.xs[None, :] + self.mv[..., 0], self.ys[:, None] + self.mv[..., 1]

    def point(self, i: int, j: int) -> GridPoint:
        if not (0 <= i < self.rows and 0 <= j < self.cols):
            raise IndexError(f"grid point ({i}, {j}) outside {self.rows}x{self.cols} lattice")
        return GridPoint(i, j, float(self.xs[j]), float(self.ys[i]), *map(float, self.mv[i, j]))

    def points(self) -> list[GridPoint]:
        return [self.point(i, j) for i in range(self.rows) for j in range(self.cols)]

    def with_mv(self, mv: np.ndarray) -> "QuadMesh":
        return QuadMesh(self.frame_width, self.frame_height, self.bs, mv)

    def is_identity(self) -> bool:
        return not np.any(self.mv)

    def __eq__(self, other):
        if not isinstance(other, QuadMesh):
            return NotImplemented
        return (
            (self.frame_width, self.frame_height, self.bs)
            == (other.frame_width, other.frame_height, other.bs)
            and np.array_equal(self.mv, other.mv)
        )


@dataclass(frozen=True)
class EstimationConfig:
    """Parameters of the hierarchical grid-point motion estimation.

    ``schedule`` holds ``(bs, sr, iterations)`` stages from coarse to fine;
    ``subpixel_stages`` holds ``(sr, lambda)`` pairs run once each at the
    final quadrilateral size.  An empty schedule picks the default for the
    frame size at estimation time.
    """

    schedule: tuple[tuple[int, float, int], ...] = ()
    lam: float = DEFAULT_LAMBDA
    td: float = DEFAULT_TD
    metric: str = "D13"
    subpixel_stages: tuple[tuple[float, float], ...] = ((0.5, DEFAULT_LAMBDA), (0.25, DEFAULT_LAMBDA))

    def __post_init__(self):
        object.__setattr__(self, "metric", self.metric.upper())
        object.__setattr__(self, "schedule", tuple(tuple(s) for s in self.schedule))
        object.__setattr__(self, "subpixel_stages", tuple(tuple(s) for s in self.subpixel_stages))
        if self.metric not in ("D11", "D13"):
            raise ValueError(f"unknown metric {self.metric!r}")
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if self.td <= 0:
            raise ValueError("td must be positive")
        sizes = [bs for bs, _, _ in self.schedule]
        for bs in sizes:
            if bs < 2 or bs & (bs - 1):
                raise ValueError(f"schedule quadrilateral size {bs} is not a power of two")
        if any(a <= b for a, b in zip(sizes, sizes[1:])):
            raise ValueError("schedule quadrilateral sizes must be strictly decreasing")
        for stage in self.schedule:
            if stage[1] <= 0 or stage[2] < 0:
                raise ValueError(f"invalid schedule stage {stage}")
        for sr, lam in self.subpixel_stages:
            if sr <= 0 or lam < 0:
                raise ValueError(f"invalid subpixel stage {(sr, lam)}")


# Iterations per quadrilateral size for the full coarse-to-fine run.
TABLE_ITERATIONS = {256: 3, 128: 3, 64: 4, 32: 5, 16: 6, 8: 9}


def initial_block_size(width: int, height: int) -> int:
    """Largest power of two not exceeding half the shorter frame edge."""
    half = min(width, height) // 2
    if half < 2:
        raise DimensionError(f"frame {width}x{height} too small for a mesh")
    return 1 << (half.bit_length() - 1)


def default_schedule(width: int, height: int, final_bs: int = 8) -> tuple[tuple[int, float, int], ...]:
    """Coarse-to-fine schedule ending at ``final_bs``.

    The first stage absorbs the iterations of every coarser level it skips,
    so a 64 px start gets 3+3+4 = 10 iterations and the total stays 30.
    """
    bs0 = initial_block_size(width, height)
    sizes = []
    bs = bs0
    while bs >= final_bs:
        sizes.append(bs)
        bs //= 2
    if not sizes:
        sizes = [bs0]
    iters = [TABLE_ITERATIONS.get(bs, 0) for bs in sizes]
    iters[0] += sum(n for bs, n in TABLE_ITERATIONS.items() if bs > bs0)
    return tuple((bs, 1.0, n) for bs, n in zip(sizes, iters))


def build_uniform_mesh(frame_width: int, frame_height: int, bs: int) -> QuadMesh:
    if frame_width < 2 or frame_height < 2:
        raise DimensionError(f"frame {frame_width}x{frame_height} has an edge shorter than 2 px")
    if bs < 2:
        raise ValueError(f"quadrilateral size must be at least 2, got {bs}")
    rows = len(lattice_anchors(frame_height, bs))
    cols = len(lattice_anchors(frame_width, bs))
    return QuadMesh(frame_width, frame_height, bs, np.zeros((rows, cols, 2)))


def _interp_axis(new: np.ndarray, old: np.ndarray):
    """Cell index into ``old`` and fractional weight for each coordinate in ``new``."""
    k = np.clip(np.searchsorted(old, new, side="right") - 1, 0, len(old) - 2)
    w = (new - old[k]) / (old[k + 1] - old[k])
    return k, w


def refine_mesh(mesh: QuadMesh, td: float = DEFAULT_TD) -> QuadMesh:
    """Halve the quadrilateral size, interpolating motion at inserted points."""
    if mesh.bs < 4:
        raise ValueError(f"cannot refine a mesh with quadrilateral size {mesh.bs}")
    bs = mesh.bs // 2
    old_x, old_y = mesh.xs, mesh.ys
    new_x, new_y = lattice_anchors(mesh.frame_width, bs), lattice_anchors(mesh.frame_height, bs)
    kx, wx = _interp_axis(new_x, old_x)
    ky, wy = _interp_axis(new_y, old_y)
    m = mesh.mv
    wx_, wy_ = wx[None, :, None], wy[:, None, None]
    top = m[ky][:, kx] * (1 - wx_) + m[ky][:, kx + 1] * wx_
    bot = m[ky + 1][:, kx] * (1 - wx_) + m[ky + 1][:, kx + 1] * wx_
    mv = quantize_mv(project_border(top * (1 - wy_) + bot * wy_))
    # inherited points keep their vectors bit-exactly
    ix = np.searchsorted(new_x, old_x)
    iy = np.searchsorted(new_y, old_y)
    mv[np.ix_(iy, ix)] = m
    out = QuadMesh(mesh.frame_width, mesh.frame_height, bs, mv)
    validate_mesh(out, td)
    return out


def quad_corners(mesh: QuadMesh, qi: int, qj: int) -> tuple[GridPoint, GridPoint, GridPoint, GridPoint]:
    """Upper-left, upper-right, lower-left and lower-right points of quad (qi, qj)."""
    nr, nc = mesh.quad_shape
    if not (0 <= qi < nr and 0 <= qj < nc):
        raise IndexError(f"quadrilateral ({qi}, {qj}) outside {nr}x{nc} quads")
    return (
        mesh.point(qi, qj),
        mesh.point(qi, qj + 1),
        mesh.point(qi + 1, qj),
        mesh.point(qi + 1, qj + 1),
    )


def border_violations(mesh: QuadMesh) -> list[tuple[int, int]]:
    """Lattice indices whose motion breaks a border constraint or leaves the frame."""
    bad = np.any(project_border(mesh.mv) != mesh.mv, axis=-1)
    xr, yr = mesh.reference_positions()
    bad |= (xr < 0) | (xr > mesh.frame_width - 1) | (yr < 0) | (yr > mesh.frame_height - 1)
    return [tuple(map(int, p)) for p in np.argwhere(bad)]


def validate_mesh(mesh: QuadMesh, td: float = DEFAULT_TD) -> None:
    """Raise if a border constraint or the determinant criterion is violated."""
    from .warp import mesh_margins

    bad = border_violations(mesh)
    if bad:
        raise InvertibilityError(f"grid point {bad[0]} violates the border constraints")
    margins = mesh_margins(mesh)
    if margins.min() < td:
        qi, qj = map(int, np.unravel_index(np.argmin(margins), margins.shape))
        raise InvertibilityError(
            f"quadrilateral ({qi}, {qj}) has determinant margin {margins[qi, qj]:.6g} < td={td}",
            quad=(qi, qj),
        )
