"""Synthetic ptychography experiments.

Builds a complex test object, a hard-edged circular probe, a raster scan,
and the far-field intensity stack the scan would record, optionally with
Poisson counting noise.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import ParameterError, ShapeError
from .fields import Subdomain, as_field, extract, fft2

log = logging.getLogger(__name__)

__all__ = [
    "ScanGeometry",
    "DiffractionStack",
    "SimulatedExperiment",
    "builtin_amplitude",
    "builtin_phase",
    "make_test_object",
    "make_circular_probe",
    "raster_geometry",
    "padded_extent",
    "overlap_fraction",
    "forward_diffract",
    "add_poisson_noise",
    "sample_subset",
    "simulate_experiment",
]


@dataclass(frozen=True)
class ScanGeometry:
    """Probe window size, scan windows, and the object extent they live in."""

    probe_rows: int
    probe_cols: int
    positions: tuple
    object_rows: int
    object_cols: int

    def __post_init__(self):
        object.__setattr__(self, "positions", tuple(self.positions))
        if not self.positions:
            raise ParameterError("a scan geometry needs at least one position")
        shape = (self.object_rows, self.object_cols)
        for pos in self.positions:
            if (pos.height, pos.width) != (self.probe_rows, self.probe_cols):
                raise ShapeError(f"position {pos} does not match probe window "
                                 f"{self.probe_rows}x{self.probe_cols}")
            pos.check(shape)

    @property
    def n_positions(self):
        return len(self.positions)

    @property
    def probe_shape(self):
        return (self.probe_rows, self.probe_cols)

    @property
    def object_shape(self):
        return (self.object_rows, self.object_cols)

    def offsets(self):
        """``(N, 2)`` integer array of (row, col) offsets."""
        return np.array([(p.row_offset, p.col_offset) for p in self.positions], dtype=np.int64)

    def subset(self, indices):
        return replace(self, positions=tuple(self.positions[i] for i in indices))


@dataclass(frozen=True)
class DiffractionStack:
    """Measured (or simulated) far-field intensities, one per scan position.

    ``patterns`` has shape ``(N, probe_rows, probe_cols)``. ``probe_radius``
    is optional acquisition metadata used to build the default probe guess.
    """

    geometry: ScanGeometry
    patterns: np.ndarray
    flux_per_position: Optional[float] = None
    noise_seed: Optional[int] = None
    probe_radius: Optional[float] = None

    def __post_init__(self):
        patterns = np.asarray(self.patterns, dtype=np.float64)
        expected = (self.geometry.n_positions,) + self.geometry.probe_shape
        if patterns.shape != expected:
            raise ShapeError(f"patterns have shape {patterns.shape}, geometry implies {expected}")
        if not np.all(np.isfinite(patterns)):
            raise ShapeError("patterns contain non-finite values")
        if np.any(patterns < 0):
            raise ShapeError("patterns contain negative intensities")
        object.__setattr__(self, "patterns", patterns)

    def __len__(self):
        return self.patterns.shape[0]

    def sqrt_patterns(self):
        return np.sqrt(self.patterns)


# --------------------------------------------------------------------------
# objects and probes


def _unit_grid(rows, cols):
    y, x = np.mgrid[0:rows, 0:cols].astype(np.float64)
    return y / rows, x / cols


def builtin_amplitude(rows=128, cols=None, squares=4):
    """Procedural amplitude stand-in: horizontal gradient plus checkerboard, in [0.5, 1]."""
    cols = rows if cols is None else cols
    y, x = _unit_grid(rows, cols)
    checker = (np.floor(x * squares) + np.floor(y * squares)) % 2
    return 0.5 + 0.25 * x + 0.25 * checker


def builtin_phase(rows=128, cols=None, squares=4):
    """Procedural phase stand-in: vertical gradient plus inverted checkerboard, in [0, 1)."""
    cols = rows if cols is None else cols
    y, x = _unit_grid(rows, cols)
    checker = (np.floor(x * squares) + np.floor(y * squares)) % 2
    return 0.5 * y + 0.5 * (1 - checker)


def make_test_object(rows, cols, amp_image, phase_image, phase_scale=1.0):
    """Complex object ``amp * exp(i*pi*phase_scale*phase)``.

    Both images must already be ``rows x cols`` with values in [0, 1].
    """
    amp = np.asarray(amp_image, dtype=np.float64)
    phase = np.asarray(phase_image, dtype=np.float64)
    for name, img in (("amp_image", amp), ("phase_image", phase)):
        if img.shape != (rows, cols):
            raise ShapeError(f"{name} has shape {img.shape}, expected {(rows, cols)}")
        if img.size and (img.min() < 0 or img.max() > 1):
            raise ParameterError(f"{name} values must lie in [0, 1]")
    return amp * np.exp(1j * np.pi * phase_scale * phase)


def make_circular_probe(size, radius):
    """Binary disc of ``radius`` pixels centred on a ``size x size`` grid.

    The centre sits at ``((size-1)/2, (size-1)/2)``; pixels strictly
    closer than ``radius`` are 1, all others 0.
    """
    if radius <= 0:
        raise ParameterError(f"probe radius must be positive, got {radius}")
    if size <= 0:
        raise ShapeError(f"probe size must be positive, got {size}")
    c = (size - 1) / 2.0
    y, x = np.mgrid[0:size, 0:size]
    inside = (y - c) ** 2 + (x - c) ** 2 < radius**2
    return inside.astype(np.complex128)


# --------------------------------------------------------------------------
# scan geometry


def raster_geometry(object_rows, object_cols, probe_size, step):
    """Row-major raster of probe windows at multiples of ``step``, kept in bounds."""
    if step < 1:
        raise ParameterError(f"step must be >= 1, got {step}")
    if probe_size > object_rows or probe_size > object_cols:
        raise ParameterError(
            f"probe window {probe_size} exceeds object extent {object_rows}x{object_cols}"
        )
    row_offsets = range(0, object_rows - probe_size + 1, step)
    col_offsets = range(0, object_cols - probe_size + 1, step)
    positions = [Subdomain(r, c, probe_size, probe_size) for r in row_offsets for c in col_offsets]
    return ScanGeometry(probe_size, probe_size, tuple(positions), object_rows, object_cols)


def padded_extent(probe_size, step, scans_per_axis):
    """Object extent that holds exactly ``scans_per_axis`` windows per axis."""
    if scans_per_axis < 1:
        raise ParameterError("scans_per_axis must be >= 1")
    return probe_size + step * (scans_per_axis - 1)


def overlap_fraction(radius, step):
    """Fractional area shared by two discs of ``radius`` whose centres are ``step`` apart."""
    if radius <= 0:
        raise ParameterError(f"radius must be positive, got {radius}")
    if step < 0:
        raise ParameterError(f"step must be non-negative, got {step}")
    r, d = float(radius), float(step)
    if d >= 2 * r:
        return 0.0
    lens = 2 * r * r * math.acos(d / (2 * r)) - 0.5 * d * math.sqrt(4 * r * r - d * d)
    return lens / (math.pi * r * r)


# --------------------------------------------------------------------------
# data generation


def forward_diffract(obj, probe, geometry, probe_radius=None):
    """Noise-free intensities ``|fft2(P * O_n)|**2`` for every scan window."""
    obj = as_field(obj, name="object")
    probe = as_field(probe, name="probe")
    if obj.shape != geometry.object_shape:
        raise ShapeError(f"object shape {obj.shape} != geometry object extent {geometry.object_shape}")
    if probe.shape != geometry.probe_shape:
        raise ShapeError(f"probe shape {probe.shape} != geometry probe window {geometry.probe_shape}")
    patterns = np.empty((geometry.n_positions,) + geometry.probe_shape)
    for n, region in enumerate(geometry.positions):
        far = fft2(probe * extract(obj, region))
        patterns[n] = far.real**2 + far.imag**2
    return DiffractionStack(geometry, patterns, probe_radius=probe_radius)


def add_poisson_noise(stack, flux_per_position, seed):
    """Poisson counting noise at ``flux_per_position`` expected photons per pattern.

    Each pattern is scaled to the flux, sampled, and scaled back. Pattern
    ``n`` draws from its own stream seeded by ``(seed, n)``.
    """
    if not flux_per_position > 0:
        raise ParameterError(f"flux must be positive, got {flux_per_position}")
    noisy = np.empty_like(stack.patterns)
    for n, pattern in enumerate(stack.patterns):
        total = pattern.sum()
        if total <= 0:
            log.warning("pattern %d has zero total intensity; left unchanged", n)
            noisy[n] = pattern
            continue
        scale = flux_per_position / total
        rng = np.random.default_rng([int(seed), n])
        noisy[n] = rng.poisson(pattern * scale) / scale
    return replace(stack, patterns=noisy, flux_per_position=float(flux_per_position),
                   noise_seed=int(seed))


def sample_subset(stack, keep_fraction, seed):
    """Random subset of ``round(keep_fraction * N)`` patterns, in original order."""
    if not 0 < keep_fraction <= 1:
        raise ParameterError(f"keep_fraction must lie in (0, 1], got {keep_fraction}")
    n_total = len(stack)
    n_keep = int(round(keep_fraction * n_total))
    if n_keep < 1:
        raise ParameterError(f"keep_fraction {keep_fraction} of {n_total} patterns keeps none")
    if n_keep == n_total:
        return stack
    rng = np.random.default_rng(int(seed))
    keep = np.sort(rng.choice(n_total, size=n_keep, replace=False))
    return replace(stack, geometry=stack.geometry.subset(keep), patterns=stack.patterns[keep])


@dataclass
class SimulatedExperiment:
    """Everything a synthetic run produces: ground truth plus measurements."""

    obj: np.ndarray
    probe: np.ndarray
    geometry: ScanGeometry
    clean: DiffractionStack
    stack: DiffractionStack
    truth_region: Subdomain
    meta: dict = field(default_factory=dict)


def simulate_experiment(
    amp_image=None,
    phase_image=None,
    *,
    object_size=128,
    probe_size=128,
    probe_radius=50.0,
    step=35,
    scans_per_axis=4,
    flux=1e8,
    noise_seed=0,
    phase_scale=1.0,
    keep_fraction=1.0,
    subset_seed=0,
):
    """Simulate a raster-scanned experiment around a square ground-truth image.

    The ``object_size`` image sits centred in a free-space object (value 1)
    just large enough for ``scans_per_axis`` windows per axis. ``flux=None``
    skips the noise step.
    """
    amp = builtin_amplitude(object_size) if amp_image is None else np.asarray(amp_image, float)
    phase = builtin_phase(object_size) if phase_image is None else np.asarray(phase_image, float)
    core = make_test_object(object_size, object_size, amp, phase, phase_scale)

    extent = padded_extent(probe_size, step, scans_per_axis)
    if extent < object_size:
        raise ParameterError(
            f"scan extent {extent} is smaller than the {object_size}px ground-truth image"
        )
    offset = (extent - object_size) // 2
    truth_region = Subdomain(offset, offset, object_size, object_size)
    obj = np.ones((extent, extent), dtype=np.complex128)
    obj[truth_region.slices] = core

    probe = make_circular_probe(probe_size, probe_radius)
    geometry = raster_geometry(extent, extent, probe_size, step)
    clean = forward_diffract(obj, probe, geometry, probe_radius=probe_radius)
    stack = clean if flux is None else add_poisson_noise(clean, flux, noise_seed)
    if keep_fraction < 1:
        kept = sample_subset(stack, keep_fraction, subset_seed)
        keep_idx = [geometry.positions.index(p) for p in kept.geometry.positions]
        clean = replace(clean, geometry=kept.geometry, patterns=clean.patterns[keep_idx])
        stack = kept
    meta = dict(step=step, scans_per_axis=scans_per_axis, probe_radius=probe_radius,
                flux=flux, noise_seed=noise_seed, phase_scale=phase_scale)
    return SimulatedExperiment(obj, probe, stack.geometry, clean, stack, truth_region, meta)
