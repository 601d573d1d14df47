import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from meshlift.core import DimensionError, Frame, SignedFrame, build_uniform_mesh
from meshlift.evaluation import (
    entropy_rate_proxy,
    highpass_energy,
    mesh_smoothness,
    psnr,
    quad_smoothness,
    warped_lowpass_psnr,
)
from meshlift.lifting import haar_analysis, identity_mesh, mc_analysis
from meshlift.warp import DegenerateQuadError

from helpers import random_frame, random_valid_mesh


class TestPsnr:
    def test_identical(self):
        a = Frame(np.arange(16).reshape(4, 4), 12)
        assert psnr(a, a, 4095) == math.inf

    def test_one_lsb(self):
        a = Frame(np.zeros((4, 4), dtype=np.int64), 12)
        b = Frame(np.ones((4, 4), dtype=np.int64), 12)
        assert psnr(a, b, 4095) == pytest.approx(10 * math.log10(4095**2))
        assert psnr(a, b, 4095) == pytest.approx(72.2451, abs=1e-4)

    def test_symmetric(self):
        rng = np.random.default_rng(0)
        a, b = random_frame(rng, 9, 7), random_frame(rng, 9, 7)
        assert psnr(a, b, 4095) == psnr(b, a, 4095)

    def test_errors(self):
        with pytest.raises(DimensionError):
            psnr(np.zeros((2, 2)), np.zeros((2, 3)), 1.0)
        with pytest.raises(ValueError):
            psnr(np.zeros((2, 2)), np.zeros((2, 2)), 0.0)


class TestWarpedPsnr:
    def test_identity_mesh_equals_plain_psnr(self):
        rng = np.random.default_rng(1)
        a, b = random_frame(rng, 16, 12), random_frame(rng, 16, 12)
        p = haar_analysis(a, b)
        assert warped_lowpass_psnr(p, b) == psnr(p.lowpass, b, 4095)
        assert warped_lowpass_psnr(p, b, rounding="real") == psnr(p.lowpass, b, 4095)

    def test_identical_frames(self):
        a = random_frame(np.random.default_rng(2), 16, 12)
        assert warped_lowpass_psnr(haar_analysis(a, a), a) == math.inf

    def test_rounding_modes(self):
        rng = np.random.default_rng(3)
        a, b = random_frame(rng, 33, 33), random_frame(rng, 33, 33)
        p = mc_analysis(a, b, random_valid_mesh(rng, 33, 33, 8))
        r, x = warped_lowpass_psnr(p, b), warped_lowpass_psnr(p, b, rounding="real")
        assert math.isfinite(r) and math.isfinite(x) and r != x
        with pytest.raises(ValueError):
            warped_lowpass_psnr(p, b, rounding="nearest")


class TestQuadSmoothness:
    def test_square(self):
        assert quad_smoothness((0, 0), (1, 0), (1, 1), (0, 1)) == 1.0

    def test_sheared(self):
        s = quad_smoothness((0, 0), (1, 0), (3, 2), (0, 2))
        assert s == pytest.approx((1 / 3) * (math.sqrt(5) / math.sqrt(13)), abs=1e-12)

    def test_rectangle(self):
        assert quad_smoothness((0, 0), (2, 0), (2, 1), (0, 1)) == pytest.approx(0.5, abs=1e-12)

    def test_degenerate(self):
        with pytest.raises(DegenerateQuadError):
            quad_smoothness((0, 0), (0, 0), (1, 1), (0, 1))

    @given(
        st.lists(st.floats(-10, 10), min_size=8, max_size=8),
        st.floats(0, 2 * math.pi),
        st.floats(0.1, 10),
        st.floats(-50, 50),
        st.floats(-50, 50),
    )
    def test_similarity_invariance(self, coords, angle, scale, tx, ty):
        pts = np.array(coords).reshape(4, 2)
        edges = np.linalg.norm(pts - np.roll(pts, -1, axis=0), axis=1)
        diags = [np.linalg.norm(pts[0] - pts[2]), np.linalg.norm(pts[1] - pts[3])]
        if min(edges) < 1e-3 or min(diags) < 1e-3:
            return
        rot = np.array([[math.cos(angle), -math.sin(angle)], [math.sin(angle), math.cos(angle)]])
        moved = pts @ rot.T * scale + [tx, ty]
        s0 = quad_smoothness(*pts)
        assert 0 < s0 <= 1
        assert quad_smoothness(*moved) == pytest.approx(s0, rel=1e-8)


class TestMeshSmoothness:
    def test_square_mesh(self):
        rep = mesh_smoothness(build_uniform_mesh(33, 33, 8))
        assert rep.mean == 1.0 and rep.per_quad.shape == (4, 4)

    def test_remainder_column(self):
        # quads are 8x8 except a 4x8 last column: (4 * 1 + 2 * 0.5) / 6
        rep = mesh_smoothness(build_uniform_mesh(21, 17, 8))
        assert rep.per_quad.tolist() == [[1.0, 1.0, 0.5], [1.0, 1.0, 0.5]]
        assert rep.mean == pytest.approx(5 / 6, abs=1e-15)

    def test_matches_scalar(self):
        mesh = random_valid_mesh(np.random.default_rng(4), 40, 30, 8)
        rep = mesh_smoothness(mesh)
        xr, yr = mesh.reference_positions()
        for qi in range(mesh.rows - 1):
            for qj in range(mesh.cols - 1):
                A = (xr[qi, qj], yr[qi, qj])
                B = (xr[qi, qj + 1], yr[qi, qj + 1])
                P = (xr[qi + 1, qj + 1], yr[qi + 1, qj + 1])
                D = (xr[qi + 1, qj], yr[qi + 1, qj])
                assert rep.per_quad[qi, qj] == pytest.approx(quad_smoothness(A, B, P, D), rel=1e-12)
        assert 0 < rep.mean < 1


class TestRate:
    def test_constant(self):
        assert entropy_rate_proxy(SignedFrame(np.full((4, 4), 7))) == 0.0

    def test_two_symbols(self):
        assert entropy_rate_proxy(SignedFrame(np.array([[0, 1], [1, 0]]))) == 1.0

    def test_256_symbols(self):
        band = SignedFrame(np.arange(256).reshape(16, 16) - 128)
        assert entropy_rate_proxy(band) == pytest.approx(8.0, abs=1e-12)

    def test_highpass_energy(self):
        a = Frame(np.zeros((2, 2), dtype=np.int64), 12)
        b = Frame(np.array([[1, 2], [0, 3]]), 12)
        assert highpass_energy(haar_analysis(a, b)) == 14.0
        assert identity_mesh(2, 2).bs == 2
