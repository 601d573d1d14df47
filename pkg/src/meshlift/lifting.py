"""Integer Haar lifting in the temporal direction, with and without mesh compensation.

Analysis of a frame pair ``(f_odd, f_even)``::

    H = f_even - floor(W(f_odd))
    L = f_odd + floor(W^-1(H) / 2)

where ``W`` warps through the mesh and ``W^-1`` applies its exact inverse.
Synthesis undoes the update step first, then the prediction step, so the
round trip is bit-exact for any valid mesh.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from .core import DimensionError, EstimationConfig, Frame, QuadMesh, SignedFrame, build_uniform_mesh
from .warp import warp_frame_forward, warp_frame_inverse

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class SubbandPair:
    lowpass: SignedFrame
    highpass: SignedFrame
    mesh: QuadMesh
    bit_depth: int = 12


@dataclass
class DecompositionResult:
    pairs: list[SubbandPair]
    meshes: list[QuadMesh]
    passthrough: Frame | None = None

    @property
    def has_passthrough(self) -> bool:
        return self.passthrough is not None


def identity_mesh(width: int, height: int) -> QuadMesh:
    """Zero-motion mesh with a single quad covering the frame."""
    return build_uniform_mesh(width, height, max(width, height, 2))


def _check_pair(f_odd: Frame, f_even: Frame):
    if f_odd.samples.shape != f_even.samples.shape:
        raise DimensionError(f"frame shapes differ: {f_odd.samples.shape} vs {f_even.samples.shape}")


def haar_analysis(f_odd: Frame, f_even: Frame) -> SubbandPair:
    _check_pair(f_odd, f_even)
    h = f_even.samples - f_odd.samples
    low = f_odd.samples + np.floor_divide(h, 2)
    mesh = identity_mesh(f_odd.width, f_odd.height)
    return SubbandPair(SignedFrame(low), SignedFrame(h), mesh, f_odd.bit_depth)


def haar_synthesis(pair: SubbandPair) -> tuple[Frame, Frame]:
    low, h = pair.lowpass.samples, pair.highpass.samples
    if low.shape != h.shape:
        raise DimensionError(f"band shapes differ: {low.shape} vs {h.shape}")
    odd = low - np.floor_divide(h, 2)
    even = h + odd
    return Frame(odd, pair.bit_depth), Frame(even, pair.bit_depth)


def _floor_int(x: np.ndarray) -> np.ndarray:
    return np.floor(x).astype(np.int64)


def mc_analysis(f_odd: Frame, f_even: Frame, mesh: QuadMesh) -> SubbandPair:
    _check_pair(f_odd, f_even)
    h = f_even.samples - _floor_int(warp_frame_forward(f_odd, mesh))
    low = f_odd.samples + _floor_int(0.5 * warp_frame_inverse(h, mesh))
    return SubbandPair(SignedFrame(low), SignedFrame(h), mesh, f_odd.bit_depth)


def mc_synthesis(pair: SubbandPair) -> tuple[Frame, Frame]:
    low, h = pair.lowpass.samples, pair.highpass.samples
    if low.shape != h.shape:
        raise DimensionError(f"band shapes differ: {low.shape} vs {h.shape}")
    odd = low - _floor_int(0.5 * warp_frame_inverse(h, pair.mesh))
    even = h + _floor_int(warp_frame_forward(odd, pair.mesh))
    return Frame(odd, pair.bit_depth), Frame(even, pair.bit_depth)


MeshSource = Union[str, EstimationConfig, QuadMesh, Callable[[Frame, Frame], QuadMesh]]


def thread_count() -> int:
    try:
        return max(1, int(os.environ.get("MESHLIFT_THREADS", "1")))
    except ValueError:
        return 1


def _mesh_for(source: MeshSource, f_odd: Frame, f_even: Frame) -> QuadMesh:
    from .estimation import hierarchical_estimate

    if isinstance(source, QuadMesh):
        return source
    if isinstance(source, EstimationConfig):
        return hierarchical_estimate(f_odd, f_even, source)
    if source == "identity" or source is None:
        return identity_mesh(f_odd.width, f_odd.height)
    if callable(source):
        return source(f_odd, f_even)
    raise ValueError(f"unknown mesh source {source!r}")


def decompose_sequence(
    frames: Sequence[Frame],
    configs: MeshSource | Sequence[MeshSource] = "identity",
    threads: int | None = None,
) -> DecompositionResult:
    """One temporal decomposition level over consecutive frame pairs.

    ``configs`` is either a single mesh source used for every pair or one
    source per pair: ``"identity"``, an :class:`EstimationConfig`, a
    ready :class:`QuadMesh`, or a callable ``(f_odd, f_even) -> QuadMesh``.
    """
    if len(frames) < 2:
        raise ValueError("need at least two frames")
    shape = frames[0].samples.shape
    for k, f in enumerate(frames):
        if f.samples.shape != shape:
            raise DimensionError(f"frame {k} has shape {f.samples.shape}, expected {shape}")
    n = len(frames) // 2
    if isinstance(configs, (list, tuple)) and not isinstance(configs, EstimationConfig):
        if len(configs) != n:
            raise ValueError(f"expected {n} mesh sources, got {len(configs)}")
        sources = list(configs)
    else:
        sources = [configs] * n

    def one(t):
        f_odd, f_even = frames[2 * t], frames[2 * t + 1]
        mesh = _mesh_for(sources[t], f_odd, f_even)
        log.debug("pair %d: mesh bs=%d", t, mesh.bs)
        return mc_analysis(f_odd, f_even, mesh)

    threads = threads or thread_count()
    if threads > 1 and n > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            pairs = list(pool.map(one, range(n)))
    else:
        pairs = [one(t) for t in range(n)]
    passthrough = frames[-1] if len(frames) % 2 else None
    return DecompositionResult(pairs, [p.mesh for p in pairs], passthrough)


def reconstruct_sequence(result: DecompositionResult) -> list[Frame]:
    frames = []
    for pair in result.pairs:
        frames.extend(mc_synthesis(pair))
    if result.passthrough is not None:
        frames.append(result.passthrough)
    return frames
