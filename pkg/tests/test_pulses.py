"""Trap modulation pulse: dip shape, phase root, waveforms, stability."""

import io
import math
import warnings

import numpy as np
import pytest

from phonondd import (
    BFunctionParams,
    DEFAULT_SECULAR_FREQUENCY,
    PulseInfeasibleError,
    TrapParams,
    TrapStabilityError,
    check_stability,
    design_pulse,
    ermakov_residual,
    omega_squared,
    phase_excess,
    sample_pulse,
    scale_factor,
    scale_factor_derivatives,
    solve_strength,
    stability_parameters,
    waveform_table,
)
from phonondd.pulses import dc_to_omega_sq, dc_waveform, rf_to_omega_sq, rf_waveform

T0 = 1.0 / 2.2e6  # one secular period


@pytest.fixture(scope="module")
def long_pulse():
    return design_pulse(8.8 * T0, ramp_up=4.4 * T0, ramp_down=4.4 * T0)


@pytest.fixture(scope="module")
def short_pulse():
    return design_pulse(2.2 * T0, ramp_up=1.0 * T0, ramp_down=1.0 * T0)


class TestScaleFactor:
    def test_endpoints_near_unity(self, long_pulse, short_pulse):
        for pulse in (long_pulse, short_pulse):
            p = pulse.params
            for t in (0.0, p.total_duration):
                assert scale_factor(t, p) == pytest.approx(1.0, abs=1e-4)

    def test_plateau_depth(self, long_pulse):
        # flat bottom of the dip sits at 1 - k up to the erf tails
        p = long_pulse.params
        mid = scale_factor(p.total_duration / 2, p)
        assert mid == pytest.approx(1.0 - p.depth, abs=1e-4)

    def test_scale_stays_positive(self, short_pulse):
        p = short_pulse.params
        t = np.linspace(0, p.total_duration, 4001)
        assert np.all(scale_factor(t, p) > 0)

    @pytest.mark.parametrize("which", ["long", "short"])
    def test_analytic_derivatives_match_finite_differences(
            self, which, long_pulse, short_pulse):
        pulse = long_pulse if which == "long" else short_pulse
        p = pulse.params
        t = np.linspace(0.05 * p.total_duration, 0.95 * p.total_duration, 101)
        b, db, ddb = scale_factor_derivatives(t, p)
        h = 1e-4 * p.ramp_up  # balances truncation against roundoff
        fd1 = (scale_factor(t + h, p) - scale_factor(t - h, p)) / (2 * h)
        fd2 = (scale_factor(t + h, p) - 2 * b + scale_factor(t - h, p)) / h ** 2
        assert np.max(np.abs(db - fd1)) / np.max(np.abs(db)) < 1e-6
        assert np.max(np.abs(ddb - fd2)) / np.max(np.abs(ddb)) < 1e-6

    def test_params_validation(self):
        with pytest.raises(ValueError):
            BFunctionParams(0.0, 1e-6, 1e-6)
        with pytest.raises(ValueError):
            BFunctionParams(4e-6, -1e-6, 1e-6)
        with pytest.raises(ValueError):
            BFunctionParams(4e-6, 1e-6, 1e-6, depth=1.0)
        with pytest.raises(ValueError):
            BFunctionParams(4e-6, 1e-6, 1e-6, sharpness=0.0)


class TestPhaseRoot:
    def test_phase_strictly_increasing_in_depth(self):
        ks = np.linspace(0.02, 0.9, 23)
        phis = [phase_excess(BFunctionParams(8.8 * T0, 4.4 * T0, 4.4 * T0,
                                             depth=k),
                             DEFAULT_SECULAR_FREQUENCY) for k in ks]
        assert all(b > a for a, b in zip(phis, phis[1:]))

    def test_frozen_roots(self):
        k_long = solve_strength(8.8 * T0, 4.4 * T0, 4.4 * T0)
        k_half = solve_strength(2.2 * T0, 1.0 * T0, 1.0 * T0)
        assert k_long == pytest.approx(0.052922561665665786, rel=1e-9)
        assert k_half == pytest.approx(0.16358236219036065, rel=1e-9)

    def test_achieved_phase_hits_target(self, long_pulse, short_pulse):
        for pulse in (long_pulse, short_pulse):
            assert pulse.achieved_phase() == pytest.approx(math.pi, abs=1e-9)

    def test_custom_target_phase(self):
        pulse = design_pulse(8.8 * T0, target_phase=math.pi / 2)
        assert pulse.achieved_phase() == pytest.approx(math.pi / 2, abs=1e-9)
        assert pulse.params.depth < 0.0529  # shallower dip for half the phase

    def test_infeasible_when_dip_too_weak(self):
        # soft, very short window cannot accumulate a pi of extra phase
        with pytest.raises(PulseInfeasibleError):
            solve_strength(0.5 * T0, 0.25 * T0, 0.25 * T0, sharpness=0.5)

    def test_rejects_nonpositive_target(self):
        with pytest.raises(ValueError):
            solve_strength(8.8 * T0, 4.4 * T0, 4.4 * T0, target_phase=0.0)


class TestDesignedPulse:
    def test_default_ramps_split_evenly(self):
        pulse = design_pulse(8.8 * T0)
        assert pulse.params.ramp_up == pytest.approx(4.4 * T0)
        assert pulse.params.ramp_down == pytest.approx(4.4 * T0)

    def test_plateau_excursion_long(self, long_pulse):
        excursion = long_pulse.plateau_excursion()
        assert excursion == pytest.approx(1587967.1566977762, rel=1e-6)
        assert 2 * math.pi * 245e3 < excursion < 2 * math.pi * 255e3

    def test_drive_vanishes_at_edges(self, long_pulse):
        # drive is the quadratic coefficient seen by the propagator
        assert abs(long_pulse.drive(0.0)) < 1e-4 * abs(
            long_pulse.drive(long_pulse.duration / 2))

    def test_omega_squared_consistent_with_drive(self, long_pulse):
        t = np.linspace(0, long_pulse.duration, 101)
        w0 = DEFAULT_SECULAR_FREQUENCY
        wsq = omega_squared(t, long_pulse.params, w0)
        np.testing.assert_allclose(long_pulse.drive(t), wsq - w0 ** 2,
                                   rtol=1e-12, atol=1e-3)

    @pytest.mark.parametrize("which", ["long", "short"])
    def test_ermakov_residual_small(self, which, long_pulse, short_pulse):
        pulse = long_pulse if which == "long" else short_pulse
        assert ermakov_residual(pulse) <= 1e-9


class TestWaveforms:
    def test_sampling_grid(self, long_pulse):
        wf = sample_pulse(long_pulse, sample_interval=1e-9)
        assert wf.times[0] == 0.0
        assert wf.times[-1] == pytest.approx(long_pulse.duration)
        assert np.all(np.diff(wf.times) > 0)
        assert np.all(wf.scale > 0)
        assert np.all(wf.omega > 0)

    def test_voltage_round_trips(self, long_pulse):
        trap = TrapParams()
        wf = sample_pulse(long_pulse, sample_interval=2e-9)
        wsq = wf.omega ** 2
        u0 = dc_waveform(wsq, trap)
        v0 = rf_waveform(wsq, trap)
        back_dc = dc_to_omega_sq(u0, trap)
        back_rf = rf_to_omega_sq(v0, trap)
        scale = np.max(np.abs(wsq))
        assert np.max(np.abs(back_dc - wsq)) / scale <= 1e-10
        assert np.max(np.abs(back_rf - wsq)) / scale <= 1e-10

    def test_static_voltages_frozen(self):
        trap = TrapParams()
        u0, v0 = trap.static_voltages()
        assert u0 == pytest.approx(1.841242344807103, rel=1e-9)
        assert v0 == pytest.approx(365.57922267970207, rel=1e-9)
        assert trap.rf_parameter() == pytest.approx(0.19855030149113906, rel=1e-9)

    def test_table_format(self, long_pulse):
        text = waveform_table(long_pulse, TrapParams(), sample_interval=4e-9)
        lines = text.strip().splitlines()
        assert lines[0] == "t_s,b,omega_rad_s,omega_sq_excess,U0_V,V0_V"
        first = lines[1].split(",")
        assert float(first[0]) == 0.0
        assert float(first[1]) == pytest.approx(1.0, abs=1e-4)
        # parseable and rectangular
        data = np.loadtxt(io.StringIO(text), delimiter=",", skiprows=1)
        assert data.shape[1] == 6

    def test_stability_zones(self):
        check_stability(0.01, 0.2)  # quiet
        with pytest.warns(UserWarning):
            check_stability(0.06, 0.2)
        with pytest.raises(TrapStabilityError):
            check_stability(0.2, 0.2)
        with pytest.raises(TrapStabilityError):
            check_stability(0.01, 0.95)

    def test_pulse_waveforms_stay_stable(self, long_pulse, short_pulse):
        trap = TrapParams()
        for pulse in (long_pulse, short_pulse):
            wf = sample_pulse(pulse, sample_interval=2e-9)
            a, q = stability_parameters(trap, dc_waveform(wf.omega ** 2, trap),
                                        trap.static_voltages()[1])
            with warnings.catch_warnings():
                warnings.simplefilter("error")
                check_stability(a, q)

    def test_trap_params_validation(self):
        with pytest.raises(ValueError):
            TrapParams(drive_frequency=0.0)
        with pytest.raises(ValueError):
            TrapParams(axial_frequency=-1.0)
