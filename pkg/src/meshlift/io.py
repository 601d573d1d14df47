"""File formats: raw volumes, subband files, mesh text files, key=value configs and CSV reports.

Raw volume layout (little-endian)::

    b"MLIFTV01" | u32 width | u32 height | u32 frames | u8 bit_depth | u16 samples...

Subband files use the same header with magic ``b"MLIFTB01"`` and a single
frame of signed 32-bit samples, since lowpass and highpass values leave the
unsigned input range.
"""

from __future__ import annotations

import csv
import io
import math
import struct
from dataclasses import fields
from pathlib import Path

import numpy as np

from .core import (
    DEFAULT_LAMBDA,
    EstimationConfig,
    Frame,
    MeshliftError,
    QuadMesh,
    SignedFrame,
    default_schedule,
    lattice_anchors,
)
from .phantom import PhantomSpec

VOLUME_MAGIC = b"MLIFTV01"
BAND_MAGIC = b"MLIFTB01"
_HEADER = struct.Struct("<8sIIIB")
HEADER_SIZE = _HEADER.size

REPORT_COLUMNS = ("t", "psnr_ref_L", "warped_psnr", "smoothness_mean", "entropy_L", "entropy_H")


class FormatError(MeshliftError, ValueError):
    """Malformed or truncated file."""


class ConfigError(MeshliftError, ValueError):
    """Unknown key or unparsable value in a config file."""


# ---------------------------------------------------------------- volumes


def encode_volume(frames: list[Frame]) -> bytes:
    if not frames:
        raise ValueError("volume needs at least one frame")
    h, w = frames[0].samples.shape
    depth = frames[0].bit_depth
    for k, f in enumerate(frames):
        if f.samples.shape != (h, w) or f.bit_depth != depth:
            raise ValueError(f"frame {k} does not match the first frame's size or bit depth")
    header = _HEADER.pack(VOLUME_MAGIC, w, h, len(frames), depth)
    payload = np.stack([f.samples for f in frames]).astype("<u2").tobytes()
    return header + payload


def decode_volume(data: bytes) -> list[Frame]:
    if len(data) < HEADER_SIZE:
        raise FormatError(f"volume header needs {HEADER_SIZE} bytes, got {len(data)}")
    magic, w, h, n, depth = _HEADER.unpack_from(data)
    if magic != VOLUME_MAGIC:
        raise FormatError(f"bad volume magic {magic!r}")
    if not 1 <= depth <= 16:
        raise FormatError(f"bit depth {depth} outside 1..16")
    expected = HEADER_SIZE + n * h * w * 2
    if len(data) != expected:
        raise FormatError(f"volume payload size mismatch: expected {expected} bytes, got {len(data)}")
    arr = np.frombuffer(data, dtype="<u2", offset=HEADER_SIZE).reshape(n, h, w).astype(np.int64)
    if arr.size and arr.max() >= 1 << depth:
        raise FormatError(f"sample value {int(arr.max())} exceeds bit depth {depth}")
    return [Frame(arr[k], depth) for k in range(n)]


def write_volume(path, frames: list[Frame]) -> None:
    Path(path).write_bytes(encode_volume(frames))


def read_volume(path) -> list[Frame]:
    return decode_volume(Path(path).read_bytes())


# ------------------------------------------------------------------ bands


def encode_band(band: SignedFrame, bit_depth: int) -> bytes:
    h, w = band.samples.shape
    return _HEADER.pack(BAND_MAGIC, w, h, 1, bit_depth) + band.samples.astype("<i4").tobytes()


def decode_band(data: bytes) -> tuple[SignedFrame, int]:
    if len(data) < HEADER_SIZE:
        raise FormatError(f"band header needs {HEADER_SIZE} bytes, got {len(data)}")
    magic, w, h, n, depth = _HEADER.unpack_from(data)
    if magic != BAND_MAGIC or n != 1:
        raise FormatError(f"bad band header {magic!r} frames={n}")
    expected = HEADER_SIZE + h * w * 4
    if len(data) != expected:
        raise FormatError(f"band payload size mismatch: expected {expected} bytes, got {len(data)}")
    arr = np.frombuffer(data, dtype="<i4", offset=HEADER_SIZE).reshape(h, w).astype(np.int64)
    return SignedFrame(arr), depth


def write_band(path, band: SignedFrame, bit_depth: int) -> None:
    Path(path).write_bytes(encode_band(band, bit_depth))


def read_band(path) -> tuple[SignedFrame, int]:
    return decode_band(Path(path).read_bytes())


# ------------------------------------------------------------------ meshes


def format_mesh(mesh: QuadMesh) -> str:
    lines = [f"mesh bs={mesh.bs} cols={mesh.cols} rows={mesh.rows}"]
    for i in range(mesh.rows):
        for j in range(mesh.cols):
            mx, my = mesh.mv[i, j]
            lines.append(f"{i} {j} {mx + 0.0:.6f} {my + 0.0:.6f}")
    return "\n".join(lines) + "\n"


def parse_mesh(text: str, frame_width: int, frame_height: int) -> QuadMesh:
    """Parse a mesh file; the frame size comes from the surrounding context."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise FormatError("empty mesh file")
    head = lines[0].split()
    try:
        if head[0] != "mesh":
            raise ValueError
        kv = dict(tok.split("=", 1) for tok in head[1:])
        bs, cols, rows = int(kv["bs"]), int(kv["cols"]), int(kv["rows"])
    except (ValueError, KeyError, IndexError):
        raise FormatError(f"bad mesh header {lines[0]!r}") from None
    if len(lattice_anchors(frame_width, bs)) != cols or len(lattice_anchors(frame_height, bs)) != rows:
        raise FormatError(f"mesh lattice {cols}x{rows} at bs={bs} does not fit a {frame_width}x{frame_height} frame")
    if len(lines) - 1 != rows * cols:
        raise FormatError(f"mesh has {len(lines) - 1} points, expected {rows * cols}")
    mv = np.zeros((rows, cols, 2))
    seen = np.zeros((rows, cols), dtype=bool)
    for ln in lines[1:]:
        parts = ln.split()
        try:
            i, j, mx, my = int(parts[0]), int(parts[1]), float(parts[2]), float(parts[3])
        except (ValueError, IndexError):
            raise FormatError(f"bad mesh line {ln!r}") from None
        if len(parts) != 4 or not (0 <= i < rows and 0 <= j < cols) or seen[i, j]:
            raise FormatError(f"bad mesh line {ln!r}")
        seen[i, j] = True
        mv[i, j] = mx, my
    return QuadMesh(frame_width, frame_height, bs, mv + 0.0)


def write_mesh(path, mesh: QuadMesh) -> None:
    Path(path).write_text(format_mesh(mesh), newline="\n")


def read_mesh(path, frame_width: int, frame_height: int) -> QuadMesh:
    return parse_mesh(Path(path).read_text(), frame_width, frame_height)


# ----------------------------------------------------------------- configs

_PHANTOM_KEYS = {f.name: f for f in fields(PhantomSpec)}
_ESTIMATION_KEYS = {"schedule", "lambda", "td", "metric", "subpixel", "compensation", "rounding", "final_bs"}


def parse_config(text: str) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key=value, got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _PHANTOM_KEYS and key not in _ESTIMATION_KEYS:
            raise ConfigError(f"unknown config key {key!r} (line {n})")
        out[key] = value
    return out


def read_config(path) -> dict[str, str]:
    if path is None:
        return {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)


def _pair(value: str, key: str) -> tuple[float, float]:
    parts = value.split(",")
    if len(parts) != 2:
        raise ConfigError(f"{key}: expected 'x,y', got {value!r}")
    return float(parts[0]), float(parts[1])


def phantom_spec(cfg: dict[str, str]) -> PhantomSpec:
    kwargs = {}
    for key, value in cfg.items():
        if key not in _PHANTOM_KEYS:
            continue
        try:
            if key in ("center", "shift"):
                kwargs[key] = _pair(value, key)
            elif key in ("deformation", "texture"):
                kwargs[key] = value
            elif key in ("width", "height", "frames", "bit_depth", "blobs", "seed"):
                kwargs[key] = int(value)
            else:
                kwargs[key] = float(value)
        except ValueError:
            raise ConfigError(f"{key}: cannot parse {value!r}") from None
    spec = PhantomSpec(**kwargs)
    if spec.deformation not in ("radial_expansion", "uniform_shift", "none"):
        raise ConfigError(f"deformation: unknown value {spec.deformation!r}")
    if spec.texture not in ("gaussian_blobs", "concentric_rings"):
        raise ConfigError(f"texture: unknown value {spec.texture!r}")
    if not 1 <= spec.bit_depth <= 16:
        raise ConfigError(f"bit_depth: {spec.bit_depth} outside 1..16")
    return spec


def parse_schedule(value: str) -> tuple[tuple[int, float, int], ...]:
    """``"64:1:10,32:1:5"`` -> ``((64, 1.0, 10), (32, 1.0, 5))``."""
    stages = []
    for item in value.split(","):
        item = item.strip()
        if not item:
            continue
        parts = item.split(":")
        if len(parts) != 3:
            raise ConfigError(f"schedule: expected bs:sr:iterations, got {item!r}")
        try:
            stages.append((int(parts[0]), float(parts[1]), int(parts[2])))
        except ValueError:
            raise ConfigError(f"schedule: cannot parse {item!r}") from None
    return tuple(stages)


def parse_subpixel(value: str) -> tuple[tuple[float, float], ...]:
    """``"0.5:0.0004,0.25:0.0004"``; ``none`` disables the subpixel stages."""
    if value.strip().lower() in ("", "none"):
        return ()
    stages = []
    for item in value.split(","):
        parts = item.strip().split(":")
        if len(parts) != 2:
            raise ConfigError(f"subpixel: expected sr:lambda, got {item!r}")
        try:
            stages.append((float(parts[0]), float(parts[1])))
        except ValueError:
            raise ConfigError(f"subpixel: cannot parse {item!r}") from None
    return tuple(stages)


def _bool(value: str, key: str) -> bool:
    v = value.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {value!r}")


def estimation_config(cfg: dict[str, str], width: int, height: int, **overrides) -> EstimationConfig:
    """Build the estimator settings from config values and CLI overrides (``None`` means unset)."""
    merged = dict(cfg)
    for key, value in overrides.items():
        if value is not None:
            merged[key] = str(value)
    try:
        lam = float(merged.get("lambda", DEFAULT_LAMBDA))
        td = float(merged.get("td", 0.2))
        final_bs = int(merged.get("final_bs", 8))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if "schedule" in merged:
        schedule = parse_schedule(merged["schedule"])
    else:
        schedule = default_schedule(width, height, final_bs)
    if "subpixel" in merged:
        subpixel = parse_subpixel(merged["subpixel"])
    else:
        subpixel = ((0.5, lam), (0.25, lam))
    try:
        return EstimationConfig(schedule, lam, td, merged.get("metric", "D13"), subpixel)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def compensation_enabled(cfg: dict[str, str]) -> bool:
    return _bool(cfg.get("compensation", "true"), "compensation")


def rounding_mode(cfg: dict[str, str]) -> str:
    mode = cfg.get("rounding", "round")
    if mode not in ("round", "real"):
        raise ConfigError(f"rounding: expected 'round' or 'real', got {mode!r}")
    return mode


# ----------------------------------------------------------------- reports


def format_value(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.6f}"


def format_csv(columns, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([format_value(row[c]) if not isinstance(row[c], str) else row[c] for c in columns])
    return buf.getvalue()


def parse_csv(text: str) -> list[dict[str, str]]:
    return list(csv.DictReader(io.StringIO(text)))


# ---------------------------------------------------------------- manifest


def format_manifest(entries: dict[str, object]) -> str:
    return "".join(f"{k}={v}\n" for k, v in entries.items())


def parse_manifest(text: str) -> dict[str, str]:
    out = {}
    for ln in text.splitlines():
        if "=" in ln:
            k, v = ln.split("=", 1)
            out[k.strip()] = v.strip()
    return out
