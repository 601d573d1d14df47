"""Quality, smoothness and rate figures for decomposed sequences."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import DimensionError, Frame, QuadMesh, SignedFrame
from .warp import DegenerateQuadError, warp_frame_forward


@dataclass(frozen=True)
class SmoothnessReport:
    per_quad: np.ndarray
    mean: float


def _samples(x) -> np.ndarray:
    if isinstance(x, (Frame, SignedFrame)):
        return x.samples
    return np.asarray(x)


def psnr(a, b, peak: float) -> float:
    """Peak signal-to-noise ratio in dB; ``inf`` for identical inputs."""
    a, b = _samples(a), _samples(b)
    if a.shape != b.shape:
        raise DimensionError(f"shapes differ: {a.shape} vs {b.shape}")
    if peak <= 0:
        raise ValueError("peak must be positive")
    mse = np.mean((a.astype(np.float64) - b.astype(np.float64)) ** 2)
    if mse == 0:
        return math.inf
    return float(10.0 * np.log10(peak * peak / mse))


def warped_lowpass_psnr(pair, f_even: Frame, peak: float | None = None, rounding: str = "round") -> float:
    """PSNR between the current frame and the lowpass band warped onto it.

    ``rounding="round"`` rounds the warped band to integers before the
    comparison; ``"real"`` compares the real-valued warp directly.
    """
    peak = f_even.peak if peak is None else peak
    warped = warp_frame_forward(pair.lowpass, pair.mesh)
    if rounding == "round":
        warped = np.floor(warped + 0.5)
    elif rounding != "real":
        raise ValueError(f"unknown rounding mode {rounding!r}")
    return psnr(warped, f_even, peak)


def quad_smoothness(A, B, P, D) -> float:
    """Edge-length ratio times diagonal ratio of the quad A-B-P-D (1 for a square).

    Corners go round the quad: A upper-left, B upper-right, P lower-right,
    D lower-left.
    """
    A, B, P, D = (np.asarray(c, dtype=np.float64) for c in (A, B, P, D))
    edges = [math.dist(A, B), math.dist(B, P), math.dist(P, D), math.dist(D, A)]
    diags = [math.dist(A, P), math.dist(B, D)]
    if min(edges) <= 0 or min(diags) <= 0:
        raise DegenerateQuadError("quad has a zero-length edge or diagonal")
    return (min(edges) / max(edges)) * (min(diags) / max(diags))


def mesh_smoothness(mesh: QuadMesh) -> SmoothnessReport:
    xr, yr = mesh.reference_positions()
    pts = np.stack([xr, yr], axis=-1)
    A, B = pts[:-1, :-1], pts[:-1, 1:]
    D, P = pts[1:, :-1], pts[1:, 1:]

    def dist(p, q):
        return np.hypot(*(p - q).transpose(2, 0, 1))

    edges = np.stack([dist(A, B), dist(B, P), dist(P, D), dist(D, A)])
    diags = np.stack([dist(A, P), dist(B, D)])
    if edges.min() <= 0 or diags.min() <= 0:
        raise DegenerateQuadError("mesh contains a degenerate quad")
    per_quad = edges.min(0) / edges.max(0) * (diags.min(0) / diags.max(0))
    return SmoothnessReport(per_quad, float(per_quad.mean()))


def entropy_rate_proxy(band) -> float:
    """Zeroth-order empirical entropy of the sample values, in bits per pixel."""
    values = _samples(band).ravel()
    if values.size == 0:
        return 0.0
    _, counts = np.unique(values, return_counts=True)
    p = counts / values.size
    return float(max(0.0, -(p * np.log2(p)).sum()))


def highpass_energy(pair) -> float:
    h = pair.highpass.samples.astype(np.float64)
    return float((h * h).sum())
