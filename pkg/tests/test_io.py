import math

import numpy as np
import pytest

from meshlift import io as mio
from meshlift.core import SignedFrame, build_uniform_mesh

from helpers import random_frame, random_valid_mesh


class TestVolume:
    def test_size_and_header(self):
        rng = np.random.default_rng(0)
        frames = [random_frame(rng, 64, 64) for _ in range(4)]
        data = mio.encode_volume(frames)
        # 8-byte magic, three u32 and one u8, then u16 samples
        assert mio.HEADER_SIZE == 21
        assert len(data) == 21 + 4 * 64 * 64 * 2
        assert data[:8] == b"MLIFTV01"
        assert data[8:12] == (64).to_bytes(4, "little")
        assert data[20] == 12

    def test_round_trip_and_byte_stable(self):
        rng = np.random.default_rng(1)
        frames = [random_frame(rng, 13, 7, 16) for _ in range(3)]
        data = mio.encode_volume(frames)
        back = mio.decode_volume(data)
        assert back == frames
        assert mio.encode_volume(back) == data

    def test_little_endian_samples(self):
        rng = np.random.default_rng(2)
        f = random_frame(rng, 2, 2)
        data = mio.encode_volume([f])
        assert int.from_bytes(data[21:23], "little") == f.samples[0, 0]

    def test_truncated(self):
        data = mio.encode_volume([random_frame(np.random.default_rng(3), 8, 8)])
        with pytest.raises(mio.FormatError, match=f"expected {len(data)} bytes, got {len(data) - 5}"):
            mio.decode_volume(data[:-5])
        with pytest.raises(mio.FormatError, match="21 bytes"):
            mio.decode_volume(data[:10])

    def test_bad_magic_and_range(self):
        data = bytearray(mio.encode_volume([random_frame(np.random.default_rng(4), 4, 4, 8)]))
        with pytest.raises(mio.FormatError):
            mio.decode_volume(b"XXXXXXXX" + bytes(data[8:]))
        data[21:23] = (300).to_bytes(2, "little")
        with pytest.raises(mio.FormatError, match="exceeds bit depth"):
            mio.decode_volume(bytes(data))


class TestBand:
    def test_round_trip_negative(self):
        band = SignedFrame(np.array([[-5000, 0, 7], [8191, -1, 3]]))
        data = mio.encode_band(band, 12)
        back, depth = mio.decode_band(data)
        assert back == band and depth == 12
        assert mio.encode_band(back, depth) == data
        assert len(data) == 21 + 6 * 4

    def test_rejects_volume(self):
        data = mio.encode_volume([random_frame(np.random.default_rng(5), 4, 4)])
        with pytest.raises(mio.FormatError):
            mio.decode_band(data)


class TestMesh:
    def test_format(self):
        mesh = build_uniform_mesh(9, 9, 8)
        text = mio.format_mesh(mesh)
        assert text.splitlines()[0] == "mesh bs=8 cols=2 rows=2"
        assert text.splitlines()[1] == "0 0 0.000000 0.000000"
        assert len(text.splitlines()) == 5

    def test_round_trip_exact(self):
        mesh = random_valid_mesh(np.random.default_rng(6), 61, 45, 8)
        text = mio.format_mesh(mesh)
        back = mio.parse_mesh(text, 61, 45)
        assert back == mesh
        assert mio.format_mesh(back) == text

    def test_negative_zero_prints_plain(self):
        mesh = build_uniform_mesh(9, 9, 8).with_mv(-np.zeros((2, 2, 2)))
        assert "-0.000000" not in mio.format_mesh(mesh)

    @pytest.mark.parametrize(
        "text",
        [
            "",
            "grid bs=8 cols=2 rows=2\n",
            "mesh bs=8 cols=3 rows=2\n",
            "mesh bs=8 cols=2 rows=2\n0 0 0 0\n0 1 0 0\n1 0 0 0\n",
            "mesh bs=8 cols=2 rows=2\n0 0 0 0\n0 0 0 0\n1 0 0 0\n1 1 0 0\n",
            "mesh bs=8 cols=2 rows=2\n0 0 0 0\n0 1 0 x\n1 0 0 0\n1 1 0 0\n",
        ],
    )
    def test_malformed(self, text):
        with pytest.raises(mio.FormatError):
            mio.parse_mesh(text, 9, 9)


class TestConfig:
    def test_parse_with_comments(self):
        cfg = mio.parse_config("# phantom\nwidth = 64\n\nseed=3  # pinned\nschedule=16:1:2,8:1:3\n")
        assert cfg == {"width": "64", "seed": "3", "schedule": "16:1:2,8:1:3"}

    def test_unknown_key_named(self):
        with pytest.raises(mio.ConfigError, match="'colour'"):
            mio.parse_config("width=4\ncolour=red\n")

    def test_missing_equals(self):
        with pytest.raises(mio.ConfigError):
            mio.parse_config("width 4\n")

    def test_phantom_spec(self):
        spec = mio.phantom_spec(mio.parse_config("width=40\nshift=2,-1\ndeformation=uniform_shift\nnoise_sigma=0.5"))
        assert spec.width == 40 and spec.shift == (2.0, -1.0) and spec.noise_sigma == 0.5

    def test_phantom_bad_values(self):
        with pytest.raises(mio.ConfigError):
            mio.phantom_spec({"width": "wide"})
        with pytest.raises(mio.ConfigError):
            mio.phantom_spec({"texture": "plaid"})

    def test_schedule(self):
        assert mio.parse_schedule("64:1:10, 32:0.5:5") == ((64, 1.0, 10), (32, 0.5, 5))
        with pytest.raises(mio.ConfigError):
            mio.parse_schedule("64:1")

    def test_subpixel(self):
        assert mio.parse_subpixel("0.5:0.001,0.25:0") == ((0.5, 0.001), (0.25, 0.0))
        assert mio.parse_subpixel("none") == ()

    def test_estimation_defaults_and_overrides(self):
        cfg = mio.estimation_config({}, 156, 156)
        assert cfg.schedule[0] == (64, 1.0, 10) and cfg.metric == "D13"
        cfg = mio.estimation_config({"lambda": "0.001", "metric": "D11"}, 128, 128, metric="d13", td=0.3)
        assert (cfg.lam, cfg.metric, cfg.td) == (0.001, "D13", 0.3)
        assert cfg.subpixel_stages == ((0.5, 0.001), (0.25, 0.001))
        with pytest.raises(mio.ConfigError):
            mio.estimation_config({"schedule": "8:1:2,16:1:2"}, 64, 64)

    def test_flags(self):
        assert mio.compensation_enabled({}) and not mio.compensation_enabled({"compensation": "false"})
        assert mio.rounding_mode({"rounding": "real"}) == "real"
        with pytest.raises(mio.ConfigError):
            mio.rounding_mode({"rounding": "up"})


class TestCsv:
    def test_format(self):
        text = mio.format_csv(("t", "psnr"), [{"t": 0, "psnr": math.inf}, {"t": 1, "psnr": 40.123456789}])
        assert text == "t,psnr\n0,inf\n1,40.123457\n"
        assert "\r" not in text
        assert mio.parse_csv(text)[1] == {"t": "1", "psnr": "40.123457"}
