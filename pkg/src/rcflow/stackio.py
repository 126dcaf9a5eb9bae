"""Text frame-stack files and grayscale frame export.

Stack files are plain ASCII: a `FPSTACK 1 <frames> <channels> <height>
<width>` header line followed by the row-major payload, one pixel row per
line, 9 significant digits per value. Diff-able, endian-free, and round
trips within 1e-6 relative, which is all the desk-scale experiments need.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .latent import LatentField, Mask

MAGIC = "FPSTACK"
VERSION = "1"


def format_stack(field: LatentField) -> str:
    f, c, h, w = field.data.shape
    lines = [f"{MAGIC} {VERSION} {f} {c} {h} {w}"]
    rows = field.data.reshape(f * c * h, w)
    for row in rows:
        lines.append(" ".join(f"{v:.9g}" for v in row))
    return "\n".join(lines) + "\n"


def write_stack(path: str | os.PathLike, field: LatentField) -> None:
    Path(path).write_text(format_stack(field), encoding="ascii")


def parse_stack(text: str, *, source: str = "<string>") -> LatentField:
    lines = text.split("\n")
    if not lines or not lines[0].strip():
        raise ConfigError(f"{source}: empty stack file")
    header = lines[0].split()
    if len(header) != 6 or header[0] != MAGIC or header[1] != VERSION:
        raise ConfigError(f"{source}: bad header {lines[0]!r}")
    try:
        f, c, h, w = (int(v) for v in header[2:])
    except ValueError as exc:
        raise ConfigError(f"{source}: non-integer extent in header") from exc
    if min(f, c, h, w) < 1:
        raise ConfigError(f"{source}: extents must be positive, got {f} {c} {h} {w}")
    payload = "\n".join(lines[1:]).split()
    expected = f * c * h * w
    if len(payload) != expected:
        raise ConfigError(f"{source}: header promises {expected} values, payload has {len(payload)}")
    try:
        values = np.array([float(v) for v in payload])
    except ValueError as exc:
        raise ConfigError(f"{source}: non-numeric payload value") from exc
    return LatentField(values.reshape(f, c, h, w))


def read_stack(path: str | os.PathLike) -> LatentField:
    return parse_stack(Path(path).read_text(encoding="ascii"), source=str(path))


def read_mask(path: str | os.PathLike) -> Mask:
    field = read_stack(path)
    return Mask(field.data)


def write_pgm(path: str | os.PathLike, frame: np.ndarray, lo: float, hi: float) -> None:
    """Binary P5 graymap of one (height, width) frame on a fixed value range."""
    if frame.ndim != 2:
        raise ValueError(f"frame must be 2D, got {frame.ndim} axes")
    if hi > lo:
        scaled = np.clip((frame - lo) / (hi - lo), 0.0, 1.0)
    else:
        scaled = np.zeros_like(frame)
    pixels = np.round(scaled * 255.0).astype(np.uint8)
    h, w = pixels.shape
    with open(path, "wb") as handle:
        handle.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        handle.write(pixels.tobytes())


def export_frames(
    out_dir: str | os.PathLike, field: LatentField, channel: int = 0
) -> tuple[float, float]:
    """Write one PGM per frame of the chosen channel, normalized per run.

    A single min/max over all exported frames keeps brightness comparable
    across the run; the range is returned for the metrics report.
    """
    out = Path(out_dir)
    selected = field.data[:, channel, :, :]
    lo = float(selected.min())
    hi = float(selected.max())
    for index in range(selected.shape[0]):
        write_pgm(out / f"frame_{index:04d}.pgm", selected[index], lo, hi)
    return lo, hi
