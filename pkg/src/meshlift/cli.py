"""Command-line front end: ``meshlift phantom | decompose | reconstruct | eval | smoothness``.

Exit codes: 0 success, 2 bad config or input file, 3 estimation failure or
missing decomposition outputs.
"""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import io as mio
from .core import DimensionError, InvertibilityError, MeshliftError, quantize_mv, validate_mesh
from .estimation import hierarchical_estimate
from .evaluation import entropy_rate_proxy, mesh_smoothness, psnr, warped_lowpass_psnr
from .lifting import DecompositionResult, SubbandPair, decompose_sequence, identity_mesh, reconstruct_sequence, thread_count
from .phantom import AmplitudeTooLargeError, generate

log = logging.getLogger("meshlift")

MANIFEST = "manifest.txt"
REPORT = "report.csv"
PASSTHROUGH = "passthrough.mlv"


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _band_name(t: int, kind: str) -> str:
    return f"pair_{t:04d}_{kind}.band"


def _mesh_name(t: int) -> str:
    return f"pair_{t:04d}.mesh"


def _load_volume(path):
    try:
        return mio.read_volume(path)
    except OSError as exc:
        raise CliError(2, f"cannot read volume {path}: {exc.strerror or exc}") from None
    except mio.FormatError as exc:
        raise CliError(2, f"{path}: {exc}") from None


# ----------------------------------------------------------------- commands


def cmd_phantom(args) -> int:
    spec = mio.phantom_spec(mio.read_config(args.config))
    try:
        frames, truth = generate(spec)
    except AmplitudeTooLargeError as exc:
        raise CliError(2, str(exc)) from None
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    mio.write_volume(out, frames)
    truth_path = out.with_suffix(".truth.npy")
    np.save(truth_path, np.stack(truth) if truth else np.zeros((0, spec.height, spec.width, 2)))
    print(f"wrote {out} ({len(frames)} frames {spec.width}x{spec.height}) and {truth_path}")
    return 0


def _estimate_meshes(frames, cfg, args):
    n = len(frames) // 2
    w, h = frames[0].width, frames[0].height
    compensate = mio.compensation_enabled(cfg) and not args.no_compensation
    if not compensate:
        return [identity_mesh(w, h)] * n
    config = mio.estimation_config(cfg, w, h, metric=args.metric, td=args.td, **{"lambda": args.lam})

    def one(t):
        try:
            mesh = hierarchical_estimate(frames[2 * t], frames[2 * t + 1], config)
        except InvertibilityError as exc:
            quad = f" quad {exc.quad}" if exc.quad is not None else ""
            raise CliError(3, f"estimation failed for pair {t}{quad}: {exc}") from None
        # serialise and read back so analysis uses exactly what is stored
        mesh = mio.parse_mesh(mio.format_mesh(mesh.with_mv(quantize_mv(mesh.mv))), w, h)
        try:
            validate_mesh(mesh, config.td)
        except InvertibilityError as exc:
            raise CliError(3, f"estimation failed for pair {t} quad {exc.quad}: {exc}") from None
        return mesh

    threads = thread_count()
    if threads > 1 and n > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, range(n)))
    return [one(t) for t in range(n)]


def report_rows(frames, result: DecompositionResult, rounding: str = "round") -> list[dict]:
    rows = []
    for t, pair in enumerate(result.pairs):
        f_odd, f_even = frames[2 * t], frames[2 * t + 1]
        rows.append(
            {
                "t": t,
                "psnr_ref_L": psnr(f_odd, pair.lowpass, f_odd.peak),
                "warped_psnr": warped_lowpass_psnr(pair, f_even, rounding=rounding),
                "smoothness_mean": mesh_smoothness(pair.mesh).mean,
                "entropy_L": entropy_rate_proxy(pair.lowpass),
                "entropy_H": entropy_rate_proxy(pair.highpass),
            }
        )
    return rows


def cmd_decompose(args) -> int:
    cfg = mio.read_config(args.config)
    rounding = mio.rounding_mode(cfg)
    frames = _load_volume(args.volume)
    if len(frames) < 2:
        raise CliError(2, f"{args.volume}: need at least two frames, got {len(frames)}")
    meshes = _estimate_meshes(frames, cfg, args)
    result = decompose_sequence(frames, meshes)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    depth = frames[0].bit_depth
    for t, pair in enumerate(result.pairs):
        mio.write_band(out / _band_name(t, "L"), pair.lowpass, depth)
        mio.write_band(out / _band_name(t, "H"), pair.highpass, depth)
        mio.write_mesh(out / _mesh_name(t), pair.mesh)
    if result.passthrough is not None:
        mio.write_volume(out / PASSTHROUGH, [result.passthrough])
    manifest = {
        "width": frames[0].width,
        "height": frames[0].height,
        "frames": len(frames),
        "bit_depth": depth,
        "pairs": len(result.pairs),
        "passthrough": int(result.passthrough is not None),
    }
    (out / MANIFEST).write_text(mio.format_manifest(manifest), newline="\n")
    rows = report_rows(frames, result, rounding)
    (out / REPORT).write_text(mio.format_csv(mio.REPORT_COLUMNS, rows), newline="\n")

    if args.figures:
        from .plotting import save_pair_figure

        fig_dir = out / "figures"
        fig_dir.mkdir(exist_ok=True)
        for t, pair in enumerate(result.pairs):
            save_pair_figure(
                fig_dir / f"pair_{t:04d}.png",
                frames[2 * t].samples,
                pair.lowpass.samples,
                pair.highpass.samples,
                pair.mesh,
                title=f"pair {t}",
            )
    print(f"decomposed {len(frames)} frames into {len(result.pairs)} pairs in {out}")
    return 0


def load_decomposition(directory) -> DecompositionResult:
    d = Path(directory)
    try:
        manifest = mio.parse_manifest((d / MANIFEST).read_text())
        w, h = int(manifest["width"]), int(manifest["height"])
        n, depth = int(manifest["pairs"]), int(manifest["bit_depth"])
        has_passthrough = manifest.get("passthrough") == "1"
    except FileNotFoundError:
        raise CliError(3, f"missing {d / MANIFEST}") from None
    except (KeyError, ValueError) as exc:
        raise CliError(2, f"bad manifest in {d}: {exc}") from None
    pairs = []
    for t in range(n):
        paths = [d / _band_name(t, "L"), d / _band_name(t, "H"), d / _mesh_name(t)]
        for p in paths:
            if not p.is_file():
                raise CliError(3, f"missing decomposition file {p}")
        try:
            low, _ = mio.read_band(paths[0])
            high, _ = mio.read_band(paths[1])
            mesh = mio.read_mesh(paths[2], w, h)
        except mio.FormatError as exc:
            raise CliError(2, f"pair {t}: {exc}") from None
        if low.samples.shape != (h, w) or high.samples.shape != (h, w):
            raise CliError(2, f"pair {t}: band size does not match manifest {w}x{h}")
        pairs.append(SubbandPair(low, high, mesh, depth))
    passthrough = None
    if has_passthrough:
        if not (d / PASSTHROUGH).is_file():
            raise CliError(3, f"missing passthrough frame {d / PASSTHROUGH}")
        passthrough = _load_volume(d / PASSTHROUGH)[0]
    return DecompositionResult(pairs, [p.mesh for p in pairs], passthrough)


def cmd_reconstruct(args) -> int:
    result = load_decomposition(args.directory)
    try:
        frames = reconstruct_sequence(result)
    except InvertibilityError as exc:
        raise CliError(3, f"cannot invert stored mesh: {exc}") from None
    out = Path(args.out) if args.out else Path(args.directory) / "reconstructed.mlv"
    mio.write_volume(out, frames)
    print(f"wrote {out} ({len(frames)} frames)")
    return 0


def cmd_eval(args) -> int:
    a, b = _load_volume(args.a), _load_volume(args.b)
    if len(a) != len(b) or a[0].samples.shape != b[0].samples.shape:
        raise CliError(
            2,
            f"volumes differ: {len(a)}x{a[0].width}x{a[0].height} vs {len(b)}x{b[0].width}x{b[0].height}",
        )
    peak = (1 << max(a[0].bit_depth, b[0].bit_depth)) - 1
    rows = [{"t": t, "psnr": psnr(fa, fb, peak)} for t, (fa, fb) in enumerate(zip(a, b))]
    _emit(mio.format_csv(("t", "psnr"), rows), args.out)
    return 0


def cmd_smoothness(args) -> int:
    result = load_decomposition(args.directory)
    rows = []
    for t, mesh in enumerate(result.meshes):
        rep = mesh_smoothness(mesh)
        rows.append({"t": t, "smoothness_mean": rep.mean, "smoothness_min": float(rep.per_quad.min())})
    _emit(mio.format_csv(("t", "smoothness_mean", "smoothness_min"), rows), args.out)
    return 0


def _emit(text: str, out) -> None:
    if out:
        Path(out).write_text(text, newline="\n")
    else:
        sys.stdout.write(text)


# ------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="meshlift", description="Mesh-compensated temporal Haar lifting.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="generate a synthetic deforming volume")
    p.add_argument("--config", help="key=value phantom config")
    p.add_argument("--out", default="phantom.mlv", help="output volume (truth goes next to it)")
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("decompose", help="one temporal lifting level with mesh compensation")
    p.add_argument("volume")
    p.add_argument("--config", help="key=value estimation config")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--metric", choices=["d11", "d13"], type=str.lower)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--td", type=float)
    p.add_argument("--no-compensation", action="store_true", help="plain Haar lifting")
    p.add_argument("--figures", action="store_true", help="also write PNG panels per pair")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("reconstruct", help="invert a decomposition directory")
    p.add_argument("directory")
    p.add_argument("--out", help="output volume (default: <directory>/reconstructed.mlv)")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("eval", help="per-frame PSNR between two volumes")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--out", help="CSV path (default: stdout)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("smoothness", help="mesh smoothness per pair of a decomposition directory")
    p.add_argument("directory")
    p.add_argument("--out", help="CSV path (default: stdout)")
    p.set_defaults(func=cmd_smoothness)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"meshlift: error: {exc}", file=sys.stderr)
        return exc.code
    except (mio.ConfigError, mio.FormatError, DimensionError) as exc:
        print(f"meshlift: error: {exc}", file=sys.stderr)
        return 2
    except InvertibilityError as exc:
        print(f"meshlift: error: {exc}", file=sys.stderr)
        return 3
    except MeshliftError as exc:
        print(f"meshlift: error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
