"""Synthetic deforming image sequences with known displacement.

Frame ``t + 1`` is frame ``t`` resampled through ``x -> x + d_t(x)``, so
``d_t`` is exactly the motion field a mesh between the pair should find:
for a current-frame (``t + 1``) position ``x`` the matching reference-frame
(``t``) position is ``x + d_t(x)``.  The texture is an analytic function, so
frames are evaluated at the composed coordinate without any resampling
error before the final rounding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Frame, MeshliftError

MIN_DETERMINANT = 0.3


class AmplitudeTooLargeError(MeshliftError, ValueError):
    pass


@dataclass(frozen=True)
class PhantomSpec:
    width: int = 128
    height: int = 128
    frames: int = 10
    bit_depth: int = 12
    deformation: str = "radial_expansion"  # radial_expansion | uniform_shift | none
    amplitude: float = 6.0
    period: float = 10.0
    center: tuple[float, float] | None = None
    radius: float | None = None
    shift: tuple[float, float] = (0.0, 0.0)
    texture: str = "gaussian_blobs"  # gaussian_blobs | concentric_rings
    blobs: int = 80
    ring_spacing: float = 8.0
    noise_sigma: float = 0.0
    seed: int = 0

    @property
    def centre(self) -> tuple[float, float]:
        if self.center is not None:
            return self.center
        return (self.width - 1) / 2.0, (self.height - 1) / 2.0

    @property
    def peak_radius(self) -> float:
        return self.radius if self.radius is not None else min(self.width, self.height) / 5.0


def radial_profile(r, radius: float):
    """Smooth bump, 0 at the centre, peaking at 1 when ``r == radius``."""
    s = np.asarray(r, dtype=np.float64) / radius
    return s * np.exp(0.5 * (1.0 - s * s))


def _radial_profile_slope(r, radius: float):
    s = np.asarray(r, dtype=np.float64) / radius
    return np.exp(0.5 * (1.0 - s * s)) * (1.0 - s * s) / radius


def step_amplitude(spec: PhantomSpec, t: int) -> float:
    """Signed amplitude of the radial field between frames ``t`` and ``t + 1``."""
    return spec.amplitude * np.cos(2.0 * np.pi * t / spec.period)


def displacement(spec: PhantomSpec, t: int, x, y):
    """Exact field ``d_t`` evaluated at current-frame positions."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if spec.deformation == "none":
        return np.zeros_like(x + y), np.zeros_like(x + y)
    if spec.deformation == "uniform_shift":
        sx, sy = spec.shift
        return np.full_like(x + y, sx), np.full_like(x + y, sy)
    if spec.deformation == "radial_expansion":
        cx, cy = spec.centre
        dx, dy = x - cx, y - cy
        r = np.hypot(dx, dy)
        a = step_amplitude(spec, t)
        with np.errstate(invalid="ignore", divide="ignore"):
            g = np.where(r > 0, a * radial_profile(r, spec.peak_radius) / r, a * np.exp(0.5) / spec.peak_radius)
        return g * dx, g * dy
    raise ValueError(f"unknown deformation {spec.deformation!r}")


def min_determinant(spec: PhantomSpec) -> float:
    """Smallest Jacobian determinant of ``x -> x + d_t(x)`` over all steps."""
    if spec.deformation != "radial_expansion":
        return 1.0
    r = np.linspace(0.0, np.hypot(spec.width, spec.height), 20001)
    rho = radial_profile(r, spec.peak_radius)
    slope = _radial_profile_slope(r, spec.peak_radius)
    ratio = np.where(r > 0, rho / np.maximum(r, 1e-300), 1.0 / spec.peak_radius * np.exp(0.5))
    worst = np.inf
    for a in (spec.amplitude, -spec.amplitude):
        # radial map r -> r + a*rho(r): det = (1 + a rho') (1 + a rho / r)
        worst = min(worst, float(np.min((1 + a * slope) * (1 + a * ratio))))
    return worst


def make_texture(spec: PhantomSpec, rng: np.random.Generator):
    """Analytic intensity function ``(x, y) -> [0, 1]`` for the configured texture."""
    if spec.texture == "concentric_rings":
        cx, cy = spec.centre

        def rings(x, y):
            return 0.5 + 0.35 * np.cos(2.0 * np.pi * np.hypot(x - cx, y - cy) / spec.ring_spacing)

        return rings
    if spec.texture == "gaussian_blobs":
        n = spec.blobs
        bx = rng.uniform(-0.1, 1.1, n) * spec.width
        by = rng.uniform(-0.1, 1.1, n) * spec.height
        sig = rng.uniform(2.5, 7.0, n)
        amp = rng.uniform(-1.0, 1.0, n)

        def blobs(x, y):
            out = np.zeros(np.broadcast(x, y).shape)
            for k in range(n):
                out += amp[k] * np.exp(-((x - bx[k]) ** 2 + (y - by[k]) ** 2) / (2 * sig[k] ** 2))
            return 0.1 + 0.8 * (np.clip(out, -2.0, 2.0) + 2.0) / 4.0

        return blobs
    raise ValueError(f"unknown texture {spec.texture!r}")


def generate(spec: PhantomSpec):
    """Frames and per-pair truth fields.

    Returns ``(frames, truth)`` where ``truth[t]`` is an array of shape
    ``(height, width, 2)`` holding ``d_t`` at every pixel of frame ``t + 1``.
    """
    if spec.frames < 1 or spec.width < 2 or spec.height < 2:
        raise ValueError("phantom needs at least one frame of 2x2 pixels")
    det = min_determinant(spec)
    if det < MIN_DETERMINANT:
        raise AmplitudeTooLargeError(
            f"amplitude {spec.amplitude} gives determinant {det:.3f} < {MIN_DETERMINANT}"
        )
    rng = np.random.default_rng(spec.seed)
    y, x = np.mgrid[0 : spec.height, 0 : spec.width].astype(np.float64)
    peak = (1 << spec.bit_depth) - 1
    texture = make_texture(spec, np.random.default_rng(rng.integers(1 << 63)))
    noise_rng = np.random.default_rng(rng.integers(1 << 63))

    frames, truth = [], []
    # coordinates into the texture for frame t: X_t = X_{t-1} o (id + d_{t-1})
    steps = []
    for t in range(spec.frames):
        cx, cy = x.copy(), y.copy()
        for s in reversed(steps):
            dx, dy = displacement(spec, s, cx, cy)
            cx, cy = cx + dx, cy + dy
        clean = texture(cx, cy)
        noisy = clean + spec.noise_sigma * noise_rng.standard_normal(clean.shape)
        samples = np.clip(np.floor(noisy * peak + 0.5), 0, peak).astype(np.int64)
        frames.append(Frame(samples, spec.bit_depth))
        if t + 1 < spec.frames:
            dx, dy = displacement(spec, t, x, y)
            truth.append(np.stack([dx, dy], axis=-1))
        steps.append(t)
    return frames, truth


def truth_at(spec: PhantomSpec, t: int, xs, ys) -> np.ndarray:
    """Truth field of pair ``(t, t + 1)`` sampled at lattice positions, shape (rows, cols, 2)."""
    gx, gy = np.meshgrid(np.asarray(xs, dtype=np.float64), np.asarray(ys, dtype=np.float64))
    dx, dy = displacement(spec, t, gx, gy)
    return np.stack([dx, dy], axis=-1)
