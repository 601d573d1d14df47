"""Bilinear quadrilateral transforms, their inverse, and whole-frame warping.

Each quadrilateral of a mesh carries a bilinear map from local coordinates
``(u_c, v_c)`` in the current frame (origin at the quad's upper-left grid
point) to local coordinates ``(u_r, v_r)`` in the reference frame::

    u_r = a11*u_c*v_c + a12*u_c + a13*v_c + a14
    v_r = a21*u_c*v_c + a22*u_c + a23*v_c + a24

The coefficients are chosen so the four rectangle corners land exactly on
the four displaced grid points.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import _kernels
from .core import DimensionError, Frame, InvertibilityError, MeshliftError, QuadMesh, SignedFrame

IN_QUAD_TOL = 1e-6


class DegenerateQuadError(MeshliftError, ValueError):
    pass


class InverseError(MeshliftError):
    """No unique preimage inside the quadrilateral."""


class UncoveredPixelError(InvertibilityError):
    pass


@dataclass(frozen=True)
class BilinearMap:
    a11: float
    a12: float
    a13: float
    a14: float
    a21: float
    a22: float
    a23: float
    a24: float
    n_u: float
    n_v: float
    origin_x: float = 0.0
    origin_y: float = 0.0

    @property
    def coefficients(self) -> np.ndarray:
        return np.array([self.a11, self.a12, self.a13, self.a14, self.a21, self.a22, self.a23, self.a24])


@dataclass(frozen=True)
class InverseSolution:
    u_c: float
    v_c: float
    branch: str


def _coefficients(u11, v11, u12, v12, u21, v21, u22, v22, n_u, n_v):
    """Corner-interpolating coefficients; works elementwise on arrays."""
    a11 = (u22 - u12 - u21 + u11) / (n_u * n_v)
    a12 = (u12 - u11) / n_u
    a13 = (u21 - u11) / n_v
    a14 = u11
    a21 = (v22 - v12 - v21 + v11) / (n_u * n_v)
    a22 = (v12 - v11) / n_u
    a23 = (v21 - v11) / n_v
    a24 = v11
    return a11, a12, a13, a14, a21, a22, a23, a24


def fit_bilinear(current_quad, reference_quad) -> BilinearMap:
    """Fit the map taking a lattice rectangle onto its displaced corners.

    Both arguments are four ``(x, y)`` positions ordered upper-left,
    upper-right, lower-left, lower-right.
    """
    c = np.asarray(current_quad, dtype=np.float64)
    r = np.asarray(reference_quad, dtype=np.float64)
    if c.shape != (4, 2) or r.shape != (4, 2):
        raise ValueError("quads must be given as four (x, y) corners")
    x0, y0 = c[0]
    n_u, n_v = c[1, 0] - x0, c[2, 1] - y0
    if n_u <= 0 or n_v <= 0:
        raise DegenerateQuadError(f"quad extent {n_u}x{n_v} is degenerate")
    if not (c[1, 1] == y0 and c[2, 0] == x0 and c[3, 0] == c[1, 0] and c[3, 1] == c[2, 1]):
        raise ValueError("current quad must be an axis-aligned rectangle")
    loc = r - c[0]
    a = _coefficients(*loc[0], *loc[1], *loc[2], *loc[3], n_u, n_v)
    return BilinearMap(*map(float, a), float(n_u), float(n_v), float(x0), float(y0))


def forward_map(m: BilinearMap, u_c, v_c):
    u_r = m.a11 * u_c * v_c + m.a12 * u_c + m.a13 * v_c + m.a14
    v_r = m.a21 * u_c * v_c + m.a22 * u_c + m.a23 * v_c + m.a24
    return u_r, v_r


def jacobian_determinant(m: BilinearMap, u_c, v_c):
    """Jacobian determinant of the map at local current-frame coordinates."""
    du_du = m.a11 * v_c + m.a12
    du_dv = m.a11 * u_c + m.a13
    dv_du = m.a21 * v_c + m.a22
    dv_dv = m.a21 * u_c + m.a23
    return du_du * dv_dv - dv_du * du_dv


def _corner_dets(a11, a12, a13, a14, a21, a22, a23, a24, n_u, n_v):
    # det J is affine in (u, v): the u*v terms cancel
    c0 = a12 * a23 - a13 * a22
    cu = a12 * a21 - a22 * a11
    cv = a23 * a11 - a13 * a21
    return c0, c0 + cu * n_u, c0 + cv * n_v, c0 + cu * n_u + cv * n_v


def invertibility_margin(m: BilinearMap) -> float:
    """Smallest Jacobian determinant over the four quad corners (identity gives 1)."""
    return float(min(_corner_dets(*m.coefficients, m.n_u, m.n_v)))


def _solve(a, u_r, v_r, n_u, n_v, tol=IN_QUAD_TOL):
    """Vectorised inversion.

    ``a`` is a sequence of the eight coefficient arrays.  Returns ``u, v``,
    a boolean ``found`` mask, an ``ambiguous`` mask and an integer branch
    code (0 linear, 1 plus root, 2 minus root).
    """
    a11, a12, a13, a14, a21, a22, a23, a24 = a
    alpha = a23 * a11 - a21 * a13
    beta = a21 * u_r - a11 * v_r + a24 * a11 - a21 * a14 - a22 * a13 + a23 * a12
    gamma = a22 * u_r - a12 * v_r + a24 * a12 - a22 * a14
    alpha, beta, gamma = np.broadcast_arrays(alpha, beta, gamma)

    linear = np.abs(alpha) < 1e-12 * (np.abs(a11) + np.abs(a21) + 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        disc = beta * beta - 4.0 * alpha * gamma
        sq = np.sqrt(np.maximum(disc, 0.0))
        q = -0.5 * (beta + np.copysign(sq, beta))
        # the two roots in cancellation-free form
        r1 = q / alpha
        r2 = np.where(q != 0.0, gamma / q, r1)
        r_lin = -gamma / beta
        no_root = ~linear & (disc < -1e-9 * (beta * beta + np.abs(4.0 * alpha * gamma)))
        v1 = np.where(no_root, np.nan, np.where(linear, r_lin, r1))
        v2 = np.where(no_root | linear, np.nan, r2)

        def u_of(v):
            den1 = a11 * v + a12
            den2 = a21 * v + a22
            use1 = np.abs(den1) >= np.abs(den2)
            return np.where(use1, (u_r - a13 * v - a14) / den1, (v_r - a23 * v - a24) / den2)

        u1, u2 = u_of(v1), u_of(v2)

    def inside(u, v):
        return (u >= -tol) & (u <= n_u + tol) & (v >= -tol) & (v <= n_v + tol)

    in1, in2 = inside(u1, v1), inside(u2, v2)
    ambiguous = in1 & in2 & (np.abs(v1 - v2) > tol)
    pick1 = in1
    u = np.where(pick1, u1, u2)
    v = np.where(pick1, v1, v2)
    found = in1 | in2
    # root r1 = q/alpha is the "-" root when beta >= 0, the "+" root otherwise
    r1_code = np.where(beta >= 0, 2, 1)
    r2_code = 3 - r1_code
    branch = np.where(linear, 0, np.where(pick1, r1_code, r2_code))
    return u, v, found, ambiguous, branch


_BRANCHES = {0: "linear", 1: "quadratic_plus", 2: "quadratic_minus"}


def inverse_map(m: BilinearMap, u_r: float, v_r: float) -> InverseSolution:
    u, v, found, ambiguous, branch = _solve(
        [np.float64(c) for c in m.coefficients], np.float64(u_r), np.float64(v_r), m.n_u, m.n_v
    )
    if bool(ambiguous):
        raise InverseError(f"two preimages of ({u_r}, {v_r}) inside the quad; map is not invertible")
    if not bool(found):
        raise InverseError(f"no preimage of ({u_r}, {v_r}) inside the quad")
    return InverseSolution(float(u), float(v), _BRANCHES[int(branch)])


def inverse_points(m: BilinearMap, u_r, v_r) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`inverse_map` over arrays of local reference points."""
    u_r, v_r = np.broadcast_arrays(np.asarray(u_r, dtype=np.float64), np.asarray(v_r, dtype=np.float64))
    u, v, found, ambiguous, _ = _solve(list(m.coefficients), u_r, v_r, m.n_u, m.n_v)
    if np.any(ambiguous):
        raise InverseError("some points have two preimages inside the quad; map is not invertible")
    if not np.all(found):
        k = int(np.argmin(found.ravel()))
        raise InverseError(f"no preimage of ({u_r.flat[k]}, {v_r.flat[k]}) inside the quad")
    return u, v


# --- whole-mesh helpers -----------------------------------------------------


def mesh_coefficients(mesh: QuadMesh):
    """Per-quad coefficient arrays of shape (rows-1, cols-1) plus extents."""
    xs, ys = mesh.xs.astype(np.float64), mesh.ys.astype(np.float64)
    xr, yr = mesh.reference_positions()
    ox, oy = xs[None, :-1], ys[:-1, None]
    n_u = np.diff(xs)[None, :]
    n_v = np.diff(ys)[:, None]
    a = _coefficients(
        xr[:-1, :-1] - ox, yr[:-1, :-1] - oy,
        xr[:-1, 1:] - ox, yr[:-1, 1:] - oy,
        xr[1:, :-1] - ox, yr[1:, :-1] - oy,
        xr[1:, 1:] - ox, yr[1:, 1:] - oy,
        n_u, n_v,
    )
    shape = mesh.quad_shape
    return tuple(np.broadcast_to(c, shape) for c in a), np.broadcast_to(n_u, shape), np.broadcast_to(n_v, shape)


def mesh_margins(mesh: QuadMesh) -> np.ndarray:
    """Invertibility margin of every quad, shape (rows-1, cols-1)."""
    a, n_u, n_v = mesh_coefficients(mesh)
    return np.minimum.reduce(np.broadcast_arrays(*_corner_dets(*a, n_u, n_v)))


def quad_map(mesh: QuadMesh, qi: int, qj: int) -> BilinearMap:
    a, n_u, n_v = mesh_coefficients(mesh)
    return BilinearMap(
        *(float(c[qi, qj]) for c in a), float(n_u[qi, qj]), float(n_v[qi, qj]),
        float(mesh.xs[qj]), float(mesh.ys[qi]),
    )


@lru_cache(maxsize=64)
def _pixel_cells(width: int, height: int, bs: int):
    """Quad row/column owning each pixel row/column (half-open cells)."""
    from .core import lattice_anchors

    xs, ys = lattice_anchors(width, bs), lattice_anchors(height, bs)
    qj = np.clip(np.searchsorted(xs, np.arange(width), side="right") - 1, 0, len(xs) - 2)
    qi = np.clip(np.searchsorted(ys, np.arange(height), side="right") - 1, 0, len(ys) - 2)
    qj.flags.writeable = False
    qi.flags.writeable = False
    return qi, qj


def pixel_cells(mesh: QuadMesh):
    return _pixel_cells(mesh.frame_width, mesh.frame_height, mesh.bs)


def pixel_quads(mesh: QuadMesh) -> np.ndarray:
    """Flat quad index owning each current-frame pixel, shape (height, width)."""
    qi, qj = _pixel_cells(mesh.frame_width, mesh.frame_height, mesh.bs)
    return qi[:, None] * (mesh.cols - 1) + qj[None, :]


def coefficient_stack(mesh: QuadMesh) -> np.ndarray:
    """Coefficients of every quad as one contiguous (rows-1, cols-1, 8) array."""
    a, _, _ = mesh_coefficients(mesh)
    return np.ascontiguousarray(np.stack(a, axis=-1))


def forward_positions(mesh: QuadMesh):
    """Reference-frame position of every current-frame pixel."""
    qi, qj = _pixel_cells(mesh.frame_width, mesh.frame_height, mesh.bs)
    return _kernels.forward_positions(coefficient_stack(mesh), mesh.xs, mesh.ys, qi, qj)


def inverse_positions(mesh: QuadMesh):
    """Current-frame position and owning quad of every reference-frame pixel.

    Each quad scans the pixels inside the bounding box of its displaced
    shape; a pixel claimed by several quads goes to the lowest flat index.
    """
    xr, yr = mesh.reference_positions()
    xc, yc, owner = _kernels.inverse_positions(
        coefficient_stack(mesh), mesh.xs, mesh.ys, xr, yr, mesh.frame_width, mesh.frame_height, IN_QUAD_TOL
    )
    if np.any(owner < 0):
        py, px = map(int, np.argwhere(owner < 0)[0])
        raise UncoveredPixelError(f"reference pixel ({px}, {py}) is not covered by any quad")
    return xc, yc, owner


def bilinear_sample(img: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Sample ``img`` at real positions, clamping to the frame rectangle."""
    h, w = img.shape
    img = np.asarray(img, dtype=np.float64)
    x = np.clip(x, 0.0, w - 1.0)
    y = np.clip(y, 0.0, h - 1.0)
    x0 = np.minimum(np.floor(x).astype(np.int64), w - 2)
    y0 = np.minimum(np.floor(y).astype(np.int64), h - 2)
    fx = x - x0
    fy = y - y0
    # lerp form keeps constant regions exact
    top = img[y0, x0] + fx * (img[y0, x0 + 1] - img[y0, x0])
    bot = img[y0 + 1, x0] + fx * (img[y0 + 1, x0 + 1] - img[y0 + 1, x0])
    return top + fy * (bot - top)


def _as_array(frame) -> np.ndarray:
    if isinstance(frame, (Frame, SignedFrame)):
        return frame.samples
    return np.asarray(frame)


def _check_dims(img: np.ndarray, mesh: QuadMesh):
    if img.shape != (mesh.frame_height, mesh.frame_width):
        raise DimensionError(
            f"frame shape {img.shape} does not match mesh {mesh.frame_height}x{mesh.frame_width}"
        )


def warp_frame_forward(reference, mesh: QuadMesh) -> np.ndarray:
    """Predict the current frame by sampling ``reference`` through the mesh."""
    img = _as_array(reference)
    _check_dims(img, mesh)
    if mesh.is_identity():
        return img.astype(np.float64)
    xr, yr = forward_positions(mesh)
    return bilinear_sample(img, xr, yr)


def warp_frame_inverse(signal, mesh: QuadMesh) -> np.ndarray:
    """Map a current-frame signal back onto the reference frame grid."""
    img = _as_array(signal)
    _check_dims(img, mesh)
    if mesh.is_identity():
        return img.astype(np.float64)
    xc, yc, _ = inverse_positions(mesh)
    return bilinear_sample(img, xc, yc)
