import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ptysolve.errors import InputError, ParameterError, ShapeError
from ptysolve.fields import Subdomain
from ptysolve.metrics import (
    ConvergenceTrace,
    aligned_object_error,
    coverage_mask,
    normalize_probe_energy,
    r_factor,
    r_noise,
)
from ptysolve.sim import (
    DiffractionStack,
    ScanGeometry,
    add_poisson_noise,
    forward_diffract,
    make_circular_probe,
    raster_geometry,
)

from conftest import random_field
from oracles import r_factor_direct


@pytest.fixture
def problem(rng):
    obj = random_field(rng, (40, 40))
    probe = make_circular_probe(24, 9) * np.exp(0.3j)
    geom = raster_geometry(40, 40, 24, 8)
    return obj, probe, forward_diffract(obj, probe, geom, probe_radius=9)


class TestRFactor:
    def test_exact_model_is_zero(self, problem):
        obj, probe, stack = problem
        assert r_factor(obj, probe, stack) < 1e-12

    def test_zero_model_is_one(self, problem):
        obj, probe, stack = problem
        assert r_factor(np.zeros_like(obj), probe, stack) == pytest.approx(1.0, abs=1e-15)

    def test_matches_direct_loop(self, problem, rng):
        obj, probe, stack = problem
        model = obj + 0.2 * random_field(rng, obj.shape)
        offsets = [(p.row_offset, p.col_offset) for p in stack.geometry.positions]
        expected = r_factor_direct(model, probe, offsets, stack.patterns)
        assert abs(r_factor(model, probe, stack) - expected) < 1e-12

    def test_global_phase(self, problem, rng):
        obj, probe, stack = problem
        model = obj + 0.3 * random_field(rng, obj.shape)
        base = r_factor(model, probe, stack)
        assert abs(r_factor(model * np.exp(1.1j), probe, stack) - base) < 1e-14

    def test_reciprocal_scaling(self, problem, rng):
        obj, probe, stack = problem
        model = obj + 0.3 * random_field(rng, obj.shape)
        base = r_factor(model, probe, stack)
        assert abs(r_factor(2.5 * model, probe / 2.5, stack) - base) < 1e-12

    def test_zero_pattern_excluded(self, problem, caplog):
        obj, probe, stack = problem
        patterns = stack.patterns.copy()
        patterns[2] = 0
        with_zero = DiffractionStack(stack.geometry, patterns)
        with caplog.at_level(logging.WARNING, logger="ptysolve"):
            val = r_factor(obj, probe, with_zero)
        assert val < 1e-12
        assert "pattern 2" in caplog.text

    def test_all_zero_patterns(self, problem):
        obj, probe, stack = problem
        with pytest.raises(InputError):
            r_factor(obj, probe, DiffractionStack(stack.geometry, np.zeros_like(stack.patterns)))

    def test_shape_checked(self, problem):
        obj, probe, stack = problem
        with pytest.raises(ShapeError):
            r_factor(obj[:-1], probe, stack)


class TestRNoise:
    def test_high_flux_is_small(self, problem):
        obj, probe, stack = problem
        noisy = add_poisson_noise(stack, 1e12, seed=0)
        assert r_noise((obj, probe), noisy) < 1e-3

    def test_decreases_with_flux(self, problem):
        obj, probe, stack = problem
        for seed in range(10):
            vals = [r_noise((obj, probe), add_poisson_noise(stack, f, seed)) for f in (1e6, 1e8, 1e10)]
            assert vals[0] > vals[1] > vals[2]

    def test_roughly_inverse_sqrt_flux(self, problem):
        # shot-noise misfit scales as flux**-0.5 once every pixel carries many counts
        obj, probe, stack = problem
        a = r_noise((obj, probe), add_poisson_noise(stack, 1e9, 0))
        b = r_noise((obj, probe), add_poisson_noise(stack, 1e11, 0))
        assert a / b == pytest.approx(10, rel=0.1)


class TestAlignedError:
    def test_identity(self, rng):
        x = random_field(rng, (16, 16))
        err, phase = aligned_object_error(x, x, np.ones((16, 16), bool))
        assert err < 1e-15 and abs(phase) < 1e-15

    @pytest.mark.parametrize("theta", [0.4, -2.0, 3.0])
    def test_removes_global_phase(self, rng, theta):
        x = random_field(rng, (16, 16))
        err, phase = aligned_object_error(x * np.exp(1j * theta), x, np.ones((16, 16), bool))
        assert err < 1e-14
        assert abs(np.exp(1j * phase) - np.exp(-1j * theta)) < 1e-14

    def test_orthogonal_perturbation(self, rng):
        x = random_field(rng, (16, 16))
        d = random_field(rng, (16, 16))
        d -= np.vdot(x, d) / np.vdot(x, x) * x
        d *= 0.1 * np.linalg.norm(x) / np.linalg.norm(d)
        err, _ = aligned_object_error(x + d, x, np.ones((16, 16), bool))
        assert err == pytest.approx(0.1, rel=1e-10)

    def test_mask_restricts(self, rng):
        x = random_field(rng, (8, 8))
        y = x.copy()
        y[0] = 100
        mask = np.ones((8, 8), bool)
        mask[0] = False
        assert aligned_object_error(y, x, mask)[0] < 1e-15

    def test_empty_mask(self, rng):
        x = random_field(rng, (4, 4))
        with pytest.raises(ParameterError):
            aligned_object_error(x, x, np.zeros((4, 4), bool))

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**31), theta=st.floats(-np.pi, np.pi))
    def test_phase_invariant(self, seed, theta):
        rng = np.random.default_rng(seed)
        x, y = random_field(rng, (6, 6)), random_field(rng, (6, 6))
        mask = np.ones((6, 6), bool)
        a, _ = aligned_object_error(y, x, mask)
        b, _ = aligned_object_error(y * np.exp(1j * theta), x, mask)
        assert abs(a - b) < 1e-12
        assert a <= np.linalg.norm(y - x) / np.linalg.norm(x) + 1e-12


class TestCoverageMask:
    def test_single_position_is_disc(self):
        probe = make_circular_probe(32, 10)
        geom = ScanGeometry(32, 32, (Subdomain(4, 6, 32, 32),), 40, 40)
        mask = coverage_mask(probe, geom)
        expected = np.zeros((40, 40), bool)
        expected[4:36, 6:38] = probe != 0
        np.testing.assert_array_equal(mask, expected)

    def test_dense_scan_covers_central_region(self):
        probe = make_circular_probe(128, 50)
        geom = raster_geometry(233, 233, 128, 35)
        mask = coverage_mask(probe, geom)
        assert mask[52:180, 52:180].mean() >= 0.95

    def test_high_threshold_keeps_peaks(self, rng):
        probe = random_field(rng, (8, 8))
        geom = raster_geometry(16, 16, 8, 4)
        illum = np.zeros((16, 16))
        for r in geom.positions:
            illum[r.slices] += np.abs(probe) ** 2
        mask = coverage_mask(probe, geom, threshold_fraction=1 - 1e-12)
        np.testing.assert_array_equal(mask, illum >= illum.max() * (1 - 1e-12))

    def test_bad_threshold(self):
        with pytest.raises(ParameterError):
            coverage_mask(np.ones((4, 4)), raster_geometry(8, 8, 4, 2), 1.0)


def test_normalize_probe_energy_keeps_exit_waves(rng):
    obj, probe, ref = random_field(rng, (8, 8)), random_field(rng, (4, 4)), random_field(rng, (4, 4))
    obj2, probe2 = normalize_probe_energy(obj, probe, ref)
    assert np.linalg.norm(probe2) == pytest.approx(np.linalg.norm(ref), rel=1e-14)
    np.testing.assert_allclose(obj2[:4, :4] * probe2, obj[:4, :4] * probe, rtol=1e-13)


class TestTrace:
    def test_csv_round_trip(self, tmp_path):
        trace = ConvergenceTrace()
        for k, rf in enumerate([0.5, 0.123456789012345678, 1e-9], start=1):
            trace.append(k, rf, 0.01 * k)
        trace.to_csv(tmp_path / "t.csv")
        back = ConvergenceTrace.from_csv(tmp_path / "t.csv")
        np.testing.assert_array_equal(back.r_factors, trace.r_factors)
        assert (tmp_path / "t.csv").read_text().splitlines()[0] == "epoch,r_factor,seconds"

    @pytest.mark.parametrize("epoch, rf", [(1, -0.1), (1, float("nan")), (0, 0.1)])
    def test_rejects_bad_records(self, epoch, rf):
        trace = ConvergenceTrace()
        trace.append(1, 0.2, 0.0) if epoch == 0 else None
        with pytest.raises(ValueError):
            trace.append(epoch, rf, 0.0)
