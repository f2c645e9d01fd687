"""Complex 2D field primitives.

Fields are plain ``numpy.ndarray`` objects of dtype ``complex128`` and shape
``(rows, cols)``. Everything here is a pure function: inputs are never
modified in place.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
import scipy.fft

from .errors import BoundsError, ShapeError

__all__ = [
    "Subdomain",
    "as_field",
    "fft2",
    "ifft2",
    "extract",
    "writeback",
    "phase_factor",
    "max_sq_norm",
]


def _workers():
    value = os.environ.get("PTYSOLVE_THREADS")
    if not value:
        return None
    try:
        return max(1, int(value))
    except ValueError:
        return None


@dataclass(frozen=True)
class Subdomain:
    """Rectangular window of an object grid, addressed by its top-left pixel."""

    row_offset: int
    col_offset: int
    height: int
    width: int

    def __post_init__(self):
        for name in ("row_offset", "col_offset", "height", "width"):
            value = getattr(self, name)
            if int(value) != value:
                raise ShapeError(f"{name} must be an integer, got {value!r}")
            object.__setattr__(self, name, int(value))
        if self.row_offset < 0 or self.col_offset < 0:
            raise BoundsError(f"negative offset in {self}")
        if self.height <= 0 or self.width <= 0:
            raise ShapeError(f"empty extent in {self}")

    @property
    def slices(self):
        return (
            slice(self.row_offset, self.row_offset + self.height),
            slice(self.col_offset, self.col_offset + self.width),
        )

    def fits(self, shape):
        rows, cols = shape
        return self.row_offset + self.height <= rows and self.col_offset + self.width <= cols

    def check(self, shape):
        if not self.fits(shape):
            raise BoundsError(f"{self} does not fit inside a {shape[0]}x{shape[1]} field")


def as_field(f, *, name="field"):
    """Return ``f`` as a non-empty 2D complex128 array (no copy if already one)."""
    arr = np.asarray(f, dtype=np.complex128)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2D, got shape {arr.shape}")
    if arr.size == 0:
        raise ShapeError(f"{name} is empty")
    return arr


def fft2(f):
    """Orthonormal 2D DFT; ``ifft2(fft2(f)) == f`` and energy is preserved."""
    return scipy.fft.fft2(as_field(f), norm="ortho", workers=_workers())


def ifft2(f):
    """Inverse of :func:`fft2`."""
    return scipy.fft.ifft2(as_field(f), norm="ortho", workers=_workers())


def extract(obj, region):
    """Copy of the ``region`` window of ``obj``."""
    obj = as_field(obj, name="object")
    region.check(obj.shape)
    return obj[region.slices].copy()


def writeback(obj, region, patch):
    """Return a copy of ``obj`` with the ``region`` window replaced by ``patch``."""
    obj = as_field(obj, name="object")
    patch = as_field(patch, name="patch")
    region.check(obj.shape)
    if patch.shape != (region.height, region.width):
        raise ShapeError(
            f"patch shape {patch.shape} does not match region extent "
            f"{(region.height, region.width)}"
        )
    out = obj.copy()
    out[region.slices] = patch
    return out


def phase_factor(z):
    """Element-wise ``z/|z|``, with the convention that zero maps to ``1+0j``.

    Accepts scalars or arrays and returns the same kind.
    """
    z = np.asarray(z, dtype=np.complex128)
    mag = np.abs(z)
    out = np.ones_like(z)
    nz = mag > 0
    np.divide(z, mag, out=out, where=nz)
    if out.ndim == 0:
        return complex(out)
    return out


def max_sq_norm(f):
    """Largest squared modulus over the entries of ``f``."""
    arr = np.asarray(f)
    if arr.size == 0:
        raise ShapeError("max_sq_norm of an empty field")
    return float(np.max(arr.real**2 + arr.imag**2))
