"""Ptychographic reconstruction: ePIE, rPIE and sir-DR.

All three engines share one sequential epoch loop. For each scan window
they form a corrected exit wave ``psi`` (a Fourier magnitude projection for
the PIE family, a relaxed Douglas-Rachford step with per-window Fourier
memory for sir-DR), update the object patch, then take a gradient step on
the probe with the freshly updated patch.
"""

from __future__ import annotations

import enum
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import (
    DegenerateObjectError,
    DegenerateProbeError,
    DivergenceError,
    InputError,
    ParameterError,
    ShapeError,
)
from .fields import as_field, fft2, ifft2, phase_factor
from .metrics import ConvergenceTrace, r_factor
from .sim import make_circular_probe

log = logging.getLogger(__name__)

__all__ = [
    "Algorithm",
    "AlgoParams",
    "ReconState",
    "project_magnitude",
    "relaxed_fourier_step",
    "sirdr_exitwave_update",
    "semi_implicit_object_update",
    "epie_object_update",
    "rpie_object_update",
    "pie_probe_update",
    "beta_p_schedule",
    "initial_object",
    "run_reconstruction",
]

# Relative floor added to weighted-average denominators so that exact-zero
# probe pixels leave the object untouched instead of producing 0/0.
DENOM_EPS = 1e-12


class Algorithm(str, enum.Enum):
    EPIE = "epie"
    RPIE = "rpie"
    SIRDR = "sirdr"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).lower().replace("-", "").replace("_", "")
        for member in cls:
            if member.value == key:
                return member
        raise ParameterError(f"unknown algorithm {value!r}; expected one of epie, rpie, sirdr")


@dataclass(frozen=True)
class AlgoParams:
    """Engine selector and step-size settings.

    ``sigma`` and ``tau`` only affect sir-DR. The probe step decays
    linearly from ``beta_P_start`` to ``beta_P_end`` over the run.
    """

    algorithm: Algorithm = Algorithm.SIRDR
    sigma: float = 0.5
    tau: float = 0.1
    beta_O: float = 0.9
    beta_P_start: float = 1.0
    beta_P_end: float = 0.1
    epochs: int = 100
    shuffle_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "algorithm", Algorithm.parse(self.algorithm))
        checks = [
            ("sigma", 0 <= self.sigma <= 1, "[0, 1]"),
            ("tau", 0 <= self.tau <= 1, "[0, 1]"),
            ("beta_O", 0 < self.beta_O <= 1, "(0, 1]"),
            ("beta_P_start", 0 < self.beta_P_start <= 1, "(0, 1]"),
            ("beta_P_end", 0 <= self.beta_P_end <= 1, "[0, 1]"),
        ]
        for name, ok, interval in checks:
            if not ok:
                raise ParameterError(f"{name}={getattr(self, name)} outside {interval}")
        if self.beta_P_end > self.beta_P_start:
            raise ParameterError("beta_P_end must not exceed beta_P_start")
        if int(self.epochs) != self.epochs or self.epochs < 1:
            raise ParameterError(f"epochs must be a positive integer, got {self.epochs}")
        object.__setattr__(self, "epochs", int(self.epochs))


@dataclass
class ReconState:
    obj: np.ndarray
    probe: np.ndarray
    z_store: Optional[np.ndarray] = None
    epoch: int = 0
    trace: ConvergenceTrace = field(default_factory=ConvergenceTrace)


# --------------------------------------------------------------------------
# exit-wave updates


def _check_sqrt_intensity(sqrt_intensity, shape):
    sqrt_intensity = np.asarray(sqrt_intensity, dtype=np.float64)
    if sqrt_intensity.shape != shape:
        raise ShapeError(f"magnitude shape {sqrt_intensity.shape} != field shape {shape}")
    if sqrt_intensity.min() < 0:
        raise InputError("measured magnitudes must be non-negative")
    return sqrt_intensity


def project_magnitude(psi, sqrt_intensity):
    """Replace the Fourier magnitude of ``psi`` by ``sqrt_intensity``, keeping its phase."""
    psi = as_field(psi, name="psi")
    sqrt_intensity = _check_sqrt_intensity(sqrt_intensity, psi.shape)
    return ifft2(sqrt_intensity * phase_factor(fft2(psi)))


def relaxed_fourier_step(zhat, sqrt_intensity, tau):
    """``(1 - tau) * sqrtI * phase(zhat) + tau * zhat``, all in the Fourier domain."""
    zhat = as_field(zhat, name="zhat")
    if not 0 <= tau <= 1:
        raise ParameterError(f"tau={tau} outside [0, 1]")
    sqrt_intensity = _check_sqrt_intensity(sqrt_intensity, zhat.shape)
    return (1 - tau) * sqrt_intensity * phase_factor(zhat) + tau * zhat


def sirdr_exitwave_update(obj_patch, probe, z_prev, sqrt_intensity, sigma, tau):
    """One relaxed Douglas-Rachford step on a single window's Fourier memory.

    Returns ``(psi_new, z_new)``: the new real-space exit wave and the
    Fourier-domain iterate to store for the next visit of this window.
    """
    obj_patch = as_field(obj_patch, name="object patch")
    probe = as_field(probe, name="probe")
    z_prev = as_field(z_prev, name="z")
    if not (obj_patch.shape == probe.shape == z_prev.shape):
        raise ShapeError(
            f"shape mismatch: patch {obj_patch.shape}, probe {probe.shape}, z {z_prev.shape}"
        )
    if not 0 <= sigma <= 1:
        raise ParameterError(f"sigma={sigma} outside [0, 1]")
    z_s = fft2(probe * obj_patch)
    z_hat = (1 + sigma) * z_s - sigma * z_prev
    z_t = relaxed_fourier_step(z_hat, sqrt_intensity, tau)
    z_new = z_t + sigma * (z_prev - z_s)
    return ifft2(z_new), z_new


# --------------------------------------------------------------------------
# object and probe updates


def _probe_weights(probe):
    weight = probe.real**2 + probe.imag**2
    peak = float(weight.max())
    if peak == 0:
        raise DegenerateProbeError("probe is identically zero")
    return weight, peak


def semi_implicit_object_update(obj_patch, probe, psi, beta_O):
    """Closed-form proximal object update (weighted average of old patch and ``psi/P``)."""
    obj_patch = as_field(obj_patch, name="object patch")
    probe = as_field(probe, name="probe")
    psi = as_field(psi, name="psi")
    if not (obj_patch.shape == probe.shape == psi.shape):
        raise ShapeError("object patch, probe and psi must share one shape")
    if not 0 < beta_O <= 1:
        raise ParameterError(f"beta_O={beta_O} outside (0, 1]")
    weight, peak = _probe_weights(probe)
    keep = (1 - beta_O) * peak
    num = keep * obj_patch + beta_O * np.conj(probe) * psi
    den = keep + beta_O * weight + DENOM_EPS * peak
    return num / den


def epie_object_update(obj_patch, probe, psi, beta_O):
    """ePIE gradient step on the object, normalised by the probe's peak intensity."""
    obj_patch = as_field(obj_patch, name="object patch")
    probe = as_field(probe, name="probe")
    psi = as_field(psi, name="psi")
    if not (obj_patch.shape == probe.shape == psi.shape):
        raise ShapeError("object patch, probe and psi must share one shape")
    _, peak = _probe_weights(probe)
    return obj_patch - beta_O * np.conj(probe) * (probe * obj_patch - psi) / peak


def rpie_object_update(obj_patch, probe, psi, beta_O):
    """rPIE object step: full-size correction over a mixed peak/local denominator."""
    obj_patch = as_field(obj_patch, name="object patch")
    probe = as_field(probe, name="probe")
    psi = as_field(psi, name="psi")
    if not (obj_patch.shape == probe.shape == psi.shape):
        raise ShapeError("object patch, probe and psi must share one shape")
    if not 0 < beta_O <= 1:
        raise ParameterError(f"beta_O={beta_O} outside (0, 1]")
    weight, peak = _probe_weights(probe)
    den = (1 - beta_O) * peak + beta_O * weight + DENOM_EPS * peak
    return obj_patch + np.conj(probe) * (psi - probe * obj_patch) / den


def pie_probe_update(probe, obj_patch, psi, beta_P):
    """Gradient step on the probe, normalised by the patch's peak intensity."""
    probe = as_field(probe, name="probe")
    obj_patch = as_field(obj_patch, name="object patch")
    psi = as_field(psi, name="psi")
    if not (obj_patch.shape == probe.shape == psi.shape):
        raise ShapeError("object patch, probe and psi must share one shape")
    if beta_P == 0:
        return probe.copy()
    peak = float(np.max(obj_patch.real**2 + obj_patch.imag**2))
    if peak == 0:
        raise DegenerateObjectError("object patch is identically zero")
    return probe - beta_P * np.conj(obj_patch) * (probe * obj_patch - psi) / peak


def beta_p_schedule(epoch, epochs, start, end):
    """Linearly decaying probe step; ``start`` at epoch 0, ``end`` at the last epoch."""
    if epochs <= 1:
        return float(start)
    return float(start + (end - start) * epoch / (epochs - 1))


# --------------------------------------------------------------------------
# driver


def initial_object(shape, kind="ones", seed=0):
    """Starting object guess.

    ``"ones"`` is flat free space. ``"random"`` perturbs it with seeded
    Gaussian noise: 10% in amplitude and 0.2 rad in phase.
    """
    if kind == "ones":
        return np.ones(shape, dtype=np.complex128)
    if kind == "random":
        rng = np.random.default_rng(int(seed))
        amp = 1 + 0.1 * rng.standard_normal(shape)
        phase = 0.2 * rng.standard_normal(shape)
        return amp * np.exp(1j * phase)
    raise ParameterError(f"unknown initial object kind {kind!r}")


def _default_init(stack):
    geometry = stack.geometry
    if stack.probe_radius is None:
        raise ParameterError("stack has no probe_radius metadata; pass an initial probe")
    if geometry.probe_rows != geometry.probe_cols:
        raise ParameterError("default circular probe needs a square window; pass an initial probe")
    return initial_object(geometry.object_shape), make_circular_probe(geometry.probe_rows,
                                                                      stack.probe_radius)


def epoch_permutation(n_patterns, shuffle_seed, epoch):
    return np.random.default_rng([int(shuffle_seed), int(epoch)]).permutation(n_patterns)


def run_reconstruction(stack, params, init=None, callback=None):
    """Run ``params.epochs`` randomized sweeps over the stack.

    ``init`` is an optional ``(object, probe)`` pair; either entry may be
    ``None`` to take the default (flat object, disc probe from the stack
    metadata). ``callback(state)`` is invoked after every epoch.
    """
    geometry = stack.geometry
    default_obj = default_probe = None
    if init is None or init[0] is None or init[1] is None:
        if init is None or init[1] is None:
            default_obj, default_probe = _default_init(stack)
        else:
            default_obj = initial_object(geometry.object_shape)
    obj0 = default_obj if init is None or init[0] is None else init[0]
    probe0 = default_probe if init is None or init[1] is None else init[1]
    obj = as_field(obj0, name="initial object").copy()
    probe = as_field(probe0, name="initial probe").copy()
    if obj.shape != geometry.object_shape:
        raise ShapeError(f"initial object {obj.shape} != object extent {geometry.object_shape}")
    if probe.shape != geometry.probe_shape:
        raise ShapeError(f"initial probe {probe.shape} != probe window {geometry.probe_shape}")

    algo = params.algorithm
    sqrt_i = stack.sqrt_patterns()
    slices = [region.slices for region in geometry.positions]
    z_store = None
    if algo is Algorithm.SIRDR:
        z_store = np.stack([fft2(probe * obj[s]) for s in slices])

    state = ReconState(obj, probe, z_store)
    t0 = time.perf_counter()
    for epoch in range(params.epochs):
        beta_p = beta_p_schedule(epoch, params.epochs, params.beta_P_start, params.beta_P_end)
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            for n in epoch_permutation(len(slices), params.shuffle_seed, epoch):
                win = slices[n]
                patch = obj[win]
                if algo is Algorithm.SIRDR:
                    psi, z_store[n] = sirdr_exitwave_update(
                        patch, probe, z_store[n], sqrt_i[n], params.sigma, params.tau
                    )
                    new_patch = semi_implicit_object_update(patch, probe, psi, params.beta_O)
                else:
                    psi = project_magnitude(probe * patch, sqrt_i[n])
                    if algo is Algorithm.EPIE:
                        new_patch = epie_object_update(patch, probe, psi, params.beta_O)
                    else:
                        new_patch = rpie_object_update(patch, probe, psi, params.beta_O)
                probe = pie_probe_update(probe, new_patch, psi, beta_p)
                obj[win] = new_patch
        state.probe = probe
        state.epoch = epoch + 1
        if not (np.all(np.isfinite(obj)) and np.all(np.isfinite(probe))):
            raise DivergenceError(epoch + 1)
        with np.errstate(over="ignore", invalid="ignore"):
            rf = r_factor(obj, probe, stack)
        if not np.isfinite(rf):
            raise DivergenceError(epoch + 1)
        state.trace.append(epoch + 1, rf, time.perf_counter() - t0)
        if callback is not None:
            callback(state)
    return state
