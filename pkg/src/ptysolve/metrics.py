"""Reconstruction quality measures."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, ParameterError, ShapeError
from .fields import as_field, fft2

log = logging.getLogger(__name__)

__all__ = [
    "ConvergenceTrace",
    "r_factor",
    "r_noise",
    "aligned_object_error",
    "coverage_mask",
    "normalize_probe_energy",
]


@dataclass
class ConvergenceTrace:
    """Per-epoch ``(epoch, r_factor, seconds)`` records."""

    records: list = field(default_factory=list)

    def append(self, epoch, r_factor, seconds):
        if r_factor < 0 or not np.isfinite(r_factor):
            raise ValueError(f"invalid R-factor {r_factor!r}")
        if self.records and epoch <= self.records[-1][0]:
            raise ValueError(f"epoch {epoch} does not follow {self.records[-1][0]}")
        self.records.append((int(epoch), float(r_factor), float(seconds)))

    def __len__(self):
        return len(self.records)

    @property
    def r_factors(self):
        return np.array([r for _, r, _ in self.records])

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["epoch", "r_factor", "seconds"])
            for epoch, rf, secs in self.records:
                writer.writerow([epoch, repr(rf), f"{secs:.6f}"])

    @classmethod
    def from_csv(cls, path):
        trace = cls()
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                trace.append(int(row["epoch"]), float(row["r_factor"]), float(row["seconds"]))
        return trace


def r_factor(obj, probe, stack):
    """Mean relative L1 misfit between model Fourier magnitudes and ``sqrt(I_n)``.

    Patterns with zero total intensity are skipped with a warning.
    """
    obj = as_field(obj, name="object")
    probe = as_field(probe, name="probe")
    geometry = stack.geometry
    if obj.shape != geometry.object_shape or probe.shape != geometry.probe_shape:
        raise ShapeError("model dimensions do not match the stack geometry")
    terms = []
    for n, region in enumerate(geometry.positions):
        measured = np.sqrt(stack.patterns[n])
        denom = measured.sum()
        if denom == 0:
            log.warning("pattern %d has zero total intensity; excluded from R-factor", n)
            continue
        model = np.abs(fft2(probe * obj[region.slices]))
        terms.append(np.abs(model - measured).sum() / denom)
    if not terms:
        raise InputError("every pattern in the stack has zero total intensity")
    return float(np.mean(terms))


def r_noise(noisefree_model, noisy_stack):
    """R-factor of the ground-truth ``(object, probe)`` against noisy data."""
    obj, probe = noisefree_model
    return r_factor(obj, probe, noisy_stack)


def aligned_object_error(recon, truth, mask):
    """Relative L2 error after removing the best global phase.

    Returns ``(error, phase)`` where ``exp(1j*phase) * recon`` is the
    aligned reconstruction. Only pixels where ``mask`` is true count.
    """
    recon = as_field(recon, name="recon")
    truth = as_field(truth, name="truth")
    mask = np.asarray(mask, dtype=bool)
    if recon.shape != truth.shape or mask.shape != truth.shape:
        raise ShapeError(f"shape mismatch: {recon.shape}, {truth.shape}, mask {mask.shape}")
    if not mask.any():
        raise ParameterError("mask selects no pixels")
    r, t = recon[mask], truth[mask]
    phase = float(np.angle(np.vdot(r, t)))
    err = np.linalg.norm(np.exp(1j * phase) * r - t) / np.linalg.norm(t)
    return float(err), phase


def coverage_mask(probe, geometry, threshold_fraction=0.1):
    """Object pixels whose summed illumination exceeds a fraction of its peak."""
    if not 0 < threshold_fraction < 1:
        raise ParameterError(f"threshold_fraction must lie in (0, 1), got {threshold_fraction}")
    probe = as_field(probe, name="probe")
    if probe.shape != geometry.probe_shape:
        raise ShapeError(f"probe shape {probe.shape} != geometry window {geometry.probe_shape}")
    weight = np.abs(probe) ** 2
    illum = np.zeros(geometry.object_shape)
    for region in geometry.positions:
        illum[region.slices] += weight
    return illum > threshold_fraction * illum.max()


def normalize_probe_energy(obj, probe, reference_probe):
    """Rescale ``(obj, probe)`` so the probe has the reference probe's energy.

    Exit waves ``probe * obj`` are unchanged, which removes the
    reciprocal amplitude ambiguity before comparing objects.
    """
    probe = as_field(probe, name="probe")
    norm = np.linalg.norm(probe)
    if norm == 0:
        raise ParameterError("cannot normalize an all-zero probe")
    alpha = np.linalg.norm(as_field(reference_probe, name="reference_probe")) / norm
    return as_field(obj, name="object") / alpha, probe * alpha
