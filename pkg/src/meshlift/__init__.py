"""Mesh-compensated integer Haar lifting for temporally scalable image sequences."""

from .core import (
    EstimationConfig,
    Frame,
    GridPoint,
    InvertibilityError,
    MeshliftError,
    QuadMesh,
    SignedFrame,
    build_uniform_mesh,
    default_schedule,
    quad_corners,
    refine_mesh,
    validate_mesh,
)
from .estimation import hierarchical_estimate
from .evaluation import entropy_rate_proxy, mesh_smoothness, psnr, quad_smoothness, warped_lowpass_psnr
from .lifting import (
    DecompositionResult,
    SubbandPair,
    decompose_sequence,
    haar_analysis,
    haar_synthesis,
    mc_analysis,
    mc_synthesis,
    reconstruct_sequence,
)
from .phantom import PhantomSpec, generate
from .warp import (
    BilinearMap,
    fit_bilinear,
    forward_map,
    inverse_map,
    invertibility_margin,
    warp_frame_forward,
    warp_frame_inverse,
)

__version__ = "0.1.0"
