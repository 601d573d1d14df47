import numpy as np
import pytest

from meshlift import cli
from meshlift import io as mio
from meshlift.core import Frame, InvertibilityError

from helpers import random_frame

FAST = "schedule=16:1:2,8:1:2\nsubpixel=0.5:0.0004\n"


def write(path, text):
    path.write_text(text)
    return str(path)


@pytest.fixture
def phantom_volume(tmp_path):
    cfg = write(tmp_path / "p.cfg", "width=48\nheight=40\nframes=5\namplitude=1.5\nseed=4\n")
    out = tmp_path / "vol.mlv"
    assert cli.main(["phantom", "--config", cfg, "--out", str(out)]) == 0
    return out


class TestPhantom:
    def test_file_size_and_truth(self, tmp_path):
        cfg = write(tmp_path / "p.cfg", "width=64\nheight=64\nframes=4\namplitude=2\n")
        out = tmp_path / "v.mlv"
        assert cli.main(["phantom", "--config", cfg, "--out", str(out)]) == 0
        assert out.stat().st_size == mio.HEADER_SIZE + 4 * 64 * 64 * 2
        truth = np.load(tmp_path / "v.truth.npy")
        assert truth.shape == (3, 64, 64, 2)

    def test_same_seed_same_bytes(self, tmp_path):
        cfg = write(tmp_path / "p.cfg", "width=32\nheight=32\nframes=3\namplitude=1\nnoise_sigma=0.01\nseed=9\n")
        a, b = tmp_path / "a.mlv", tmp_path / "b.mlv"
        cli.main(["phantom", "--config", cfg, "--out", str(a)])
        cli.main(["phantom", "--config", cfg, "--out", str(b)])
        assert a.read_bytes() == b.read_bytes()

    def test_bad_key(self, tmp_path, capsys):
        cfg = write(tmp_path / "p.cfg", "width=32\nwobble=1\n")
        assert cli.main(["phantom", "--config", cfg, "--out", str(tmp_path / "x.mlv")]) == 2
        assert "wobble" in capsys.readouterr().err

    def test_amplitude_too_large(self, tmp_path):
        cfg = write(tmp_path / "p.cfg", "width=32\nheight=32\namplitude=6\n")
        assert cli.main(["phantom", "--config", cfg, "--out", str(tmp_path / "x.mlv")]) == 2


class TestDecomposeReconstruct:
    def test_round_trip_bytes(self, tmp_path, phantom_volume):
        cfg = write(tmp_path / "e.cfg", FAST)
        out = tmp_path / "dec"
        assert cli.main(["decompose", str(phantom_volume), "--config", cfg, "--out", str(out)]) == 0
        rows = mio.parse_csv((out / "report.csv").read_text())
        assert len(rows) == 2
        assert list(rows[0]) == list(mio.REPORT_COLUMNS)
        assert (out / "passthrough.mlv").is_file()
        rec = tmp_path / "rec.mlv"
        assert cli.main(["reconstruct", str(out), "--out", str(rec)]) == 0
        assert rec.read_bytes() == phantom_volume.read_bytes()

    def test_identity_mode_identical_frames(self, tmp_path):
        f = random_frame(np.random.default_rng(0), 20, 16)
        vol = tmp_path / "same.mlv"
        mio.write_volume(vol, [f] * 4)
        out = tmp_path / "dec"
        assert cli.main(["decompose", str(vol), "--out", str(out), "--no-compensation"]) == 0
        for t in range(2):
            band, _ = mio.read_band(out / f"pair_{t:04d}_H.band")
            assert not band.samples.any()
        report = (out / "report.csv").read_text()
        # the identity mesh is one 19x15 quad, so S = 15/19
        assert report.splitlines()[1].startswith(f"0,inf,inf,{15 / 19:.6f},")

    def test_odd_count_passthrough(self, tmp_path):
        rng = np.random.default_rng(1)
        frames = [random_frame(rng, 10, 9) for _ in range(3)]
        vol = tmp_path / "odd.mlv"
        mio.write_volume(vol, frames)
        out = tmp_path / "dec"
        assert cli.main(["decompose", str(vol), "--out", str(out), "--no-compensation"]) == 0
        assert mio.read_volume(out / "passthrough.mlv") == [frames[-1]]
        assert cli.main(["reconstruct", str(out)]) == 0
        assert (out / "reconstructed.mlv").read_bytes() == vol.read_bytes()

    def test_flags_reach_estimator(self, tmp_path, phantom_volume, monkeypatch):
        seen = []
        real = cli.hierarchical_estimate

        def spy(a, b, config):
            seen.append(config)
            return real(a, b, config)

        monkeypatch.setattr(cli, "hierarchical_estimate", spy)
        cfg = write(tmp_path / "e.cfg", FAST)
        args = ["decompose", str(phantom_volume), "--config", cfg, "--out", str(tmp_path / "d"),
                "--metric", "d11", "--lambda", "0", "--td", "0.25"]
        assert cli.main(args) == 0
        assert {(c.metric, c.lam, c.td) for c in seen} == {("D11", 0.0, 0.25)}

    def test_estimation_failure_exit_3(self, tmp_path, phantom_volume, monkeypatch, capsys):
        def boom(a, b, config):
            raise InvertibilityError("margin too small", quad=(1, 2))

        monkeypatch.setattr(cli, "hierarchical_estimate", boom)
        assert cli.main(["decompose", str(phantom_volume), "--out", str(tmp_path / "d")]) == 3
        err = capsys.readouterr().err
        assert "pair 0" in err and "(1, 2)" in err

    def test_truncated_volume(self, tmp_path, phantom_volume, capsys):
        bad = tmp_path / "bad.mlv"
        data = phantom_volume.read_bytes()
        bad.write_bytes(data[:-100])
        assert cli.main(["decompose", str(bad), "--out", str(tmp_path / "d")]) == 2
        err = capsys.readouterr().err
        assert str(len(data)) in err and str(len(data) - 100) in err

    def test_missing_files(self, tmp_path):
        rng = np.random.default_rng(2)
        vol = tmp_path / "v.mlv"
        mio.write_volume(vol, [random_frame(rng, 10, 9) for _ in range(4)])
        out = tmp_path / "dec"
        cli.main(["decompose", str(vol), "--out", str(out), "--no-compensation"])
        (out / "pair_0001.mesh").unlink()
        assert cli.main(["reconstruct", str(out)]) == 3
        assert cli.main(["reconstruct", str(tmp_path / "nowhere")]) == 3

    def test_missing_volume(self, tmp_path):
        assert cli.main(["decompose", str(tmp_path / "none.mlv"), "--out", str(tmp_path / "d")]) == 2

    def test_figures(self, tmp_path, phantom_volume):
        cfg = write(tmp_path / "e.cfg", FAST)
        out = tmp_path / "dec"
        assert cli.main(["decompose", str(phantom_volume), "--config", cfg, "--out", str(out), "--figures"]) == 0
        pngs = sorted((out / "figures").glob("*.png"))
        assert [p.name for p in pngs] == ["pair_0000.png", "pair_0001.png"]
        assert pngs[0].read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


class TestEvalAndSmoothness:
    def test_self_is_inf(self, phantom_volume, capsys):
        assert cli.main(["eval", str(phantom_volume), str(phantom_volume)]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "t,psnr"
        assert [ln.split(",")[1] for ln in lines[1:]] == ["inf"] * 5

    def test_one_lsb(self, tmp_path):
        a = [Frame(np.full((8, 8), 100), 12) for _ in range(2)]
        b = [Frame(np.full((8, 8), 101), 12) for _ in range(2)]
        pa, pb = tmp_path / "a.mlv", tmp_path / "b.mlv"
        mio.write_volume(pa, a)
        mio.write_volume(pb, b)
        out = tmp_path / "e.csv"
        assert cli.main(["eval", str(pa), str(pb), "--out", str(out)]) == 0
        rows = mio.parse_csv(out.read_text())
        assert [float(r["psnr"]) for r in rows] == pytest.approx([72.245078] * 2, abs=1e-6)

    def test_mismatched(self, tmp_path):
        rng = np.random.default_rng(3)
        pa, pb = tmp_path / "a.mlv", tmp_path / "b.mlv"
        mio.write_volume(pa, [random_frame(rng, 8, 8)])
        mio.write_volume(pb, [random_frame(rng, 8, 9)])
        assert cli.main(["eval", str(pa), str(pb)]) == 2

    def test_smoothness(self, tmp_path, phantom_volume, capsys):
        cfg = write(tmp_path / "e.cfg", FAST)
        out = tmp_path / "dec"
        cli.main(["decompose", str(phantom_volume), "--config", cfg, "--out", str(out)])
        capsys.readouterr()
        assert cli.main(["smoothness", str(out)]) == 0
        rows = mio.parse_csv(capsys.readouterr().out)
        report = mio.parse_csv((out / "report.csv").read_text())
        assert [r["smoothness_mean"] for r in rows] == [r["smoothness_mean"] for r in report]
