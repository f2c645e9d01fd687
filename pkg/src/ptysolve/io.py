"""On-disk formats.

A diffraction stack is a directory holding ``meta.json`` and
``patterns.bin`` (little-endian float64, pattern-major, row-major within a
pattern). Complex fields are written as raw interleaved ``(re, im)``
float64 plus 8-bit PNG previews of amplitude and phase.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import (
    ShapeError,
    StackConsistencyError,
    StackTruncatedError,
    StackVersionError,
)
from .fields import Subdomain, as_field
from .sim import DiffractionStack, ScanGeometry

FORMAT_VERSION = "1"
_F8 = np.dtype("<f8")

__all__ = [
    "FORMAT_VERSION",
    "atomic_write_bytes",
    "atomic_write_text",
    "save_stack",
    "load_stack",
    "export_field_images",
    "save_png",
    "save_field",
    "load_field",
    "load_grayscale",
    "amplitude_to_uint8",
    "phase_to_uint8",
]


def atomic_write_bytes(path, data):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text):
    atomic_write_bytes(path, text.encode("utf-8"))


def save_png(path, array):
    """Atomically write a 2D uint8 array as an 8-bit grayscale PNG."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".png")
    os.close(fd)
    try:
        Image.fromarray(np.ascontiguousarray(array, dtype=np.uint8)).save(tmp, format="PNG")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# --------------------------------------------------------------------------
# diffraction stacks


def save_stack(stack, path):
    """Write ``stack`` to directory ``path`` (created if needed)."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    g = stack.geometry
    meta = {
        "format_version": FORMAT_VERSION,
        "n_patterns": len(stack),
        "pattern_rows": g.probe_rows,
        "pattern_cols": g.probe_cols,
        "object_rows": g.object_rows,
        "object_cols": g.object_cols,
        "positions": [[p.row_offset, p.col_offset] for p in g.positions],
        "dtype": "<f8",
        "flux_per_position": stack.flux_per_position,
        "noise_seed": stack.noise_seed,
        "probe_radius": stack.probe_radius,
    }
    atomic_write_bytes(path / "patterns.bin", np.ascontiguousarray(stack.patterns, dtype=_F8).tobytes())
    atomic_write_text(path / "meta.json", json.dumps(meta, indent=2) + "\n")


def load_stack(path):
    """Read a stack written by :func:`save_stack`, validating every size field."""
    path = Path(path)
    meta = json.loads((path / "meta.json").read_text())
    version = str(meta.get("format_version"))
    if version != FORMAT_VERSION:
        raise StackVersionError(f"unsupported stack format version {version!r} "
                                f"(expected {FORMAT_VERSION!r})")
    n = int(meta["n_patterns"])
    rows, cols = int(meta["pattern_rows"]), int(meta["pattern_cols"])
    positions = meta["positions"]
    if len(positions) != n:
        raise StackConsistencyError(f"meta.json lists {len(positions)} positions for {n} patterns")

    raw = (path / "patterns.bin").read_bytes()
    per_pattern = rows * cols * _F8.itemsize
    expected = n * per_pattern
    if len(raw) != expected:
        if per_pattern and len(raw) % per_pattern == 0:
            raise StackConsistencyError(
                f"patterns.bin holds {len(raw) // per_pattern} patterns but meta.json declares {n}"
            )
        raise StackTruncatedError(
            f"patterns.bin has {len(raw)} bytes, expected {expected} "
            f"({n} x {rows} x {cols} float64)"
        )
    patterns = np.frombuffer(raw, dtype=_F8).reshape(n, rows, cols).astype(np.float64)

    try:
        geometry = ScanGeometry(
            rows, cols,
            tuple(Subdomain(int(r), int(c), rows, cols) for r, c in positions),
            int(meta["object_rows"]), int(meta["object_cols"]),
        )
        return DiffractionStack(
            geometry, patterns,
            flux_per_position=meta.get("flux_per_position"),
            noise_seed=meta.get("noise_seed"),
            probe_radius=meta.get("probe_radius"),
        )
    except (ShapeError, IndexError, ValueError) as exc:
        raise StackConsistencyError(str(exc)) from exc


# --------------------------------------------------------------------------
# complex fields


def amplitude_to_uint8(field):
    amp = np.abs(field)
    lo, hi = amp.min(), amp.max()
    if hi <= lo:
        return np.zeros(amp.shape, dtype=np.uint8)
    return np.round((amp - lo) / (hi - lo) * 255).astype(np.uint8)


def phase_to_uint8(field):
    phase = np.angle(field)
    return np.round((phase + np.pi) / (2 * np.pi) * 255).clip(0, 255).astype(np.uint8)


def save_field(field, path):
    """Raw interleaved little-endian float64 ``(re, im)``, row-major."""
    field = as_field(field)
    inter = np.empty(field.shape + (2,), dtype=_F8)
    inter[..., 0] = field.real
    inter[..., 1] = field.imag
    atomic_write_bytes(path, inter.tobytes())


def load_field(path, shape):
    raw = Path(path).read_bytes()
    rows, cols = shape
    if len(raw) != rows * cols * 2 * _F8.itemsize:
        raise ShapeError(f"{path}: {len(raw)} bytes does not hold a {rows}x{cols} complex field")
    inter = np.frombuffer(raw, dtype=_F8).reshape(rows, cols, 2)
    return inter[..., 0] + 1j * inter[..., 1]


def export_field_images(field, path_prefix):
    """Write ``<prefix>_amp.png``, ``<prefix>_phase.png`` and ``<prefix>_field.bin``.

    Returns the three paths.
    """
    field = as_field(field)
    prefix = str(path_prefix)
    amp_path = Path(prefix + "_amp.png")
    phase_path = Path(prefix + "_phase.png")
    bin_path = Path(prefix + "_field.bin")
    save_png(amp_path, amplitude_to_uint8(field))
    save_png(phase_path, phase_to_uint8(field))
    save_field(field, bin_path)
    return amp_path, phase_path, bin_path


def load_grayscale(path, shape):
    """Load an image as float grayscale in [0, 1], resized to ``shape`` (rows, cols)."""
    with Image.open(path) as img:
        img = img.convert("L")
        if img.size != (shape[1], shape[0]):
            img = img.resize((shape[1], shape[0]), Image.Resampling.BICUBIC)
        return np.asarray(img, dtype=np.float64) / 255.0
