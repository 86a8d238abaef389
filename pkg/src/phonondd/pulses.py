"""Trap modulation pulse that imprints a pi phase shift on a local mode.

The trap frequency of the target ion is modulated so that the mode evolves
as a time dependent oscillator whose scale factor returns to one while the
accumulated phase, relative to a mode left at the bare frequency, reaches
pi.  The scale factor is shaped by a smooth dip

    b(t) = 1 - (k/2) * (erf(u1) - erf(u2))

with ramp coordinates u1 = (t/T_u - 1/2) s and
u2 = ((t - (T_P - T_d))/T_d - 1/2) s, so the dip depth k is the single
free parameter once the durations and sharpness s are fixed.  The required
drive follows from the scale factor equation

    b'' + w(t)^2 b = w0^2 / b^3

which pins w(t)^2 = (w0^2 / b^3 - b'') / b, realized in hardware by
modulating either the dc endcap voltage or the rf amplitude of the trap.
Because b and its derivatives return to their initial values at both ends,
every Fock state |n> picks up exactly exp(-i phi (n + 1/2)) with
phi = w0 * integral dt / b^2, and the design solves for the depth k that
makes the phase excess over free evolution equal to pi.
"""

from __future__ import annotations

import io
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq
from scipy.special import erf

from .model import (
    CONSTANTS,
    DEFAULT_ION_MASS,
    DEFAULT_SECULAR_FREQUENCY,
    PhysicalConstants,
)


class PulseDesignError(Exception):
    """Base class for pulse design failures."""


class PulseInvalidError(PulseDesignError):
    """The scale factor or the drive it implies is unphysical."""


class PulseInfeasibleError(PulseDesignError):
    """No dip depth below one reaches the requested phase."""


class TrapStabilityError(PulseDesignError):
    """The voltage waveform leaves the stable operating region."""


@dataclass(frozen=True)
class BFunctionParams:
    """Scale factor shape: total duration, ramp times, sharpness, depth.

    Parameters
    ----------
    total_duration:
        Pulse length T_P in seconds.
    ramp_up, ramp_down:
        Durations T_u and T_d of the entry and exit ramps.  They may
        overlap (their sum may exceed the total duration); the dip is then
        shallower than the nominal depth.
    sharpness:
        Dimensionless steepness of the erf ramps.
    depth:
        Dip depth k.  Must stay below one so the scale factor is positive.
    """

    total_duration: float
    ramp_up: float
    ramp_down: float
    sharpness: float = 6.0
    depth: float = 0.0

    def __post_init__(self) -> None:
        if self.total_duration <= 0:
            raise ValueError("total_duration must be positive")
        if self.ramp_up <= 0 or self.ramp_down <= 0:
            raise ValueError("ramp times must be positive")
        if self.sharpness <= 0:
            raise ValueError("sharpness must be positive")
        if not 0.0 <= self.depth < 1.0:
            raise ValueError("depth must lie in [0, 1)")


def _ramp_coords(t, params: BFunctionParams):
    s = params.sharpness
    u1 = (t / params.ramp_up - 0.5) * s
    u2 = ((t - (params.total_duration - params.ramp_down)) / params.ramp_down - 0.5) * s
    return u1, u2


def scale_factor(t, params: BFunctionParams):
    """b(t); accepts scalars or arrays."""
    u1, u2 = _ramp_coords(np.asarray(t, dtype=float), params)
    return 1.0 - 0.5 * params.depth * (erf(u1) - erf(u2))


def scale_factor_derivatives(t, params: BFunctionParams):
    """Return (b, b', b'') evaluated analytically."""
    t = np.asarray(t, dtype=float)
    s = params.sharpness
    r1 = s / params.ramp_up
    r2 = s / params.ramp_down
    u1, u2 = _ramp_coords(t, params)
    g1 = np.exp(-u1 * u1)
    g2 = np.exp(-u2 * u2)
    b = 1.0 - 0.5 * params.depth * (erf(u1) - erf(u2))
    c = params.depth / math.sqrt(math.pi)
    bd = -c * (r1 * g1 - r2 * g2)
    bdd = 2.0 * c * (u1 * r1 * r1 * g1 - u2 * r2 * r2 * g2)
    return b, bd, bdd


def omega_squared(t, params: BFunctionParams,
                  secular_frequency: float = DEFAULT_SECULAR_FREQUENCY):
    """Instantaneous squared trap frequency that realizes the scale factor."""
    b, _, bdd = scale_factor_derivatives(t, params)
    w0sq = secular_frequency ** 2
    return (w0sq / b ** 3 - bdd) / b


def omega_sq_excess(t, params: BFunctionParams,
                    secular_frequency: float = DEFAULT_SECULAR_FREQUENCY):
    """w(t)^2 - w0^2, the drive strength seen by the mode."""
    return omega_squared(t, params, secular_frequency) - secular_frequency ** 2


def phase_excess(params: BFunctionParams,
                 secular_frequency: float = DEFAULT_SECULAR_FREQUENCY) -> float:
    """Accumulated phase beyond free evolution, w0 * int (1/b^2 - 1) dt."""
    tp = params.total_duration

    def integrand(t: float) -> float:
        b = float(scale_factor(t, params))
        return 1.0 / (b * b) - 1.0

    pts = sorted({p for p in (params.ramp_up, tp - params.ramp_down, 0.5 * tp)
                  if 0.0 < p < tp})
    # epsabs keeps the returned phase accurate to ~1e-11 rad without
    # pushing the quadrature into roundoff territory
    val, _ = quad(integrand, 0.0, tp, points=pts, limit=300,
                  epsabs=1e-18, epsrel=1e-12)
    return secular_frequency * val


def solve_strength(total_duration: float, ramp_up: float, ramp_down: float,
                sharpness: float = 6.0,
                secular_frequency: float = DEFAULT_SECULAR_FREQUENCY,
                target_phase: float = math.pi) -> float:
    """Find the dip depth whose phase excess equals ``target_phase``.

    The phase excess grows monotonically with depth (a deeper dip means a
    smaller scale factor, hence a faster rotating mode), so the root is
    unique when it exists.  Raises :class:`PulseInfeasibleError` when even
    a depth of one is not enough.
    """
    if target_phase <= 0:
        raise ValueError("target_phase must be positive")

    def f(k: float) -> float:
        p = BFunctionParams(total_duration, ramp_up, ramp_down, sharpness, k)
        return phase_excess(p, secular_frequency) - target_phase

    lo, hi = 1e-6, 0.999999
    if f(hi) < 0:
        raise PulseInfeasibleError(
            "requested phase unreachable with scale factor dip below one")
    if f(lo) > 0:
        raise PulseInvalidError("phase excess already above target at zero depth")
    return float(brentq(f, lo, hi, xtol=1e-15, rtol=8.9e-16, maxiter=200))


@dataclass(frozen=True)
class ShapedPulse:
    """A solved modulation pulse: shape parameters plus the phase it imprints."""

    params: BFunctionParams
    secular_frequency: float = DEFAULT_SECULAR_FREQUENCY
    target_phase: float = math.pi

    @property
    def duration(self) -> float:
        return self.params.total_duration

    def scale(self, t):
        return scale_factor(t, self.params)

    def omega(self, t):
        return np.sqrt(omega_squared(t, self.params, self.secular_frequency))

    def drive(self, t):
        """Squared frequency excess at time ``t`` from the pulse start."""
        return omega_sq_excess(t, self.params, self.secular_frequency)

    def achieved_phase(self) -> float:
        return phase_excess(self.params, self.secular_frequency)

    def peak_excursion(self, samples: int = 2001) -> float:
        """Largest angular frequency shift from the bare value (rad/s)."""
        t = np.linspace(0.0, self.duration, samples)
        w = np.sqrt(omega_squared(t, self.params, self.secular_frequency))
        return float(np.max(np.abs(w - self.secular_frequency)))

    def plateau_excursion(self, samples: int = 2001) -> float:
        """Frequency shift at the bottom of the dip (rad/s).

        Slightly below the sampled peak, which overshoots during the ramps.
        """
        t = np.linspace(0.0, self.duration, samples)
        b = scale_factor(t, self.params)
        bottom = t[int(np.argmin(b))]
        w = math.sqrt(float(omega_squared(bottom, self.params,
                                          self.secular_frequency)))
        return w - self.secular_frequency


def design_pulse(total_duration: float,
                 ramp_up: float | None = None,
                 ramp_down: float | None = None,
                 sharpness: float = 6.0,
                 secular_frequency: float = DEFAULT_SECULAR_FREQUENCY,
                 target_phase: float = math.pi,
                 validate: bool = True) -> ShapedPulse:
    """Solve for the dip depth and return the finished pulse.

    Ramp durations default to half the total duration each, which makes
    the dip a single symmetric well.  With ``validate`` the waveform is
    sampled on a nanosecond grid and rejected if the scale factor or the
    squared frequency ever leaves the physical region.
    """
    if ramp_up is None:
        ramp_up = 0.5 * total_duration
    if ramp_down is None:
        ramp_down = 0.5 * total_duration
    depth = solve_strength(total_duration, ramp_up, ramp_down, sharpness,
                        secular_frequency, target_phase)
    pulse = ShapedPulse(
        params=BFunctionParams(total_duration, ramp_up, ramp_down, sharpness, depth),
        secular_frequency=secular_frequency,
        target_phase=target_phase,
    )
    if validate:
        sample_pulse(pulse)
    return pulse


@dataclass(frozen=True)
class PulseWaveform:
    """Sampled pulse: times, scale factor, frequency, drive strength."""

    times: np.ndarray
    scale: np.ndarray
    omega: np.ndarray
    omega_sq_excess: np.ndarray


def sample_pulse(pulse: ShapedPulse, sample_interval: float = 1e-9) -> PulseWaveform:
    """Sample the pulse and check it is physical everywhere.

    Raises
    ------
    PulseInvalidError
        If the scale factor drops to zero or below, or the squared trap
        frequency goes negative anywhere on the grid.
    """
    if sample_interval <= 0:
        raise ValueError("sample_interval must be positive")
    n = max(2, int(round(pulse.duration / sample_interval)) + 1)
    t = np.linspace(0.0, pulse.duration, n)
    b, _, _ = scale_factor_derivatives(t, pulse.params)
    if np.any(b <= 0.0):
        raise PulseInvalidError("scale factor is not positive over the pulse")
    wsq = omega_squared(t, pulse.params, pulse.secular_frequency)
    if np.any(wsq < 0.0):
        raise PulseInvalidError("squared trap frequency goes negative")
    return PulseWaveform(times=t, scale=b, omega=np.sqrt(wsq),
                         omega_sq_excess=wsq - pulse.secular_frequency ** 2)


def ermakov_residual(pulse: ShapedPulse, samples: int = 2001) -> float:
    """Worst relative violation of b'' + w^2 b = w0^2 / b^3 on a grid.

    The second derivative is recomputed numerically from the sampled scale
    factor (fourth order five point stencil, accurate enough in double
    precision even for the sharp short pulse), so this checks the drive
    against the shape it is supposed to realize rather than restating the
    construction.
    """
    t = np.linspace(0.0, pulse.duration, samples)
    h = t[1] - t[0]
    b = np.asarray(scale_factor(t, pulse.params))
    wsq = omega_squared(t, pulse.params, pulse.secular_frequency)
    w0sq = pulse.secular_frequency ** 2
    bdd = (-b[:-4] + 16.0 * b[1:-3] - 30.0 * b[2:-2] + 16.0 * b[3:-1]
           - b[4:]) / (12.0 * h * h)
    mid = slice(2, -2)
    resid = bdd + wsq[mid] * b[mid] - w0sq / b[mid] ** 3
    return float(np.max(np.abs(resid)) / w0sq)


# trap electrode model: radial confinement from an rf quadrupole with a dc
# offset, axial confinement from endcaps.  Stability parameters follow the
# standard quadrupole conventions
#   a = 4 e U0 / (m W^2 r0^2),  q = 2 e V0 / (m W^2 r0^2)
# and the radial secular frequency obeys
#   w^2 = (a + q^2 / 2) W^2 / 4 - wz^2 / 2.

STABILITY_WARN_A = 0.05
STABILITY_WARN_Q = 0.5
STABILITY_MAX_A = 0.1
STABILITY_MAX_Q = 0.9


@dataclass(frozen=True)
class TrapParams:
    """Electrode geometry and operating point of the trap."""

    ion_mass: float = DEFAULT_ION_MASS
    drive_frequency: float = 2.0 * math.pi * 30e6
    electrode_radius: float = 5e-4
    axial_frequency: float = 2.0 * math.pi * 0.3e6
    dc_parameter: float = 0.002
    constants: PhysicalConstants = CONSTANTS

    def __post_init__(self) -> None:
        if min(self.ion_mass, self.drive_frequency, self.electrode_radius) <= 0:
            raise ValueError("trap parameters must be positive")
        if self.axial_frequency < 0:
            raise ValueError("axial_frequency must be non-negative")

    # voltage scale m W^2 r0^2 / e shared by both stability parameters
    @property
    def _voltage_scale(self) -> float:
        return (self.ion_mass * self.drive_frequency ** 2
                * self.electrode_radius ** 2 / self.constants.elementary_charge)

    def rf_parameter(self, secular_frequency: float = DEFAULT_SECULAR_FREQUENCY) -> float:
        """q that yields the given radial secular frequency at this dc point."""
        wsq = secular_frequency ** 2
        arg = (4.0 * (wsq + 0.5 * self.axial_frequency ** 2)
               / self.drive_frequency ** 2 - self.dc_parameter)
        if arg <= 0:
            raise PulseInvalidError("secular frequency unreachable at this dc point")
        return math.sqrt(2.0 * arg)

    def static_voltages(self, secular_frequency: float = DEFAULT_SECULAR_FREQUENCY
                        ) -> tuple[float, float]:
        """(U0, V0) in volts that realize the secular frequency."""
        u0 = self.dc_parameter * self._voltage_scale / 4.0
        v0 = self.rf_parameter(secular_frequency) * self._voltage_scale / 2.0
        return u0, v0


def stability_parameters(trap: TrapParams, dc_voltage, rf_voltage):
    """(a, q) for the given voltages; accepts scalars or arrays."""
    scale = trap._voltage_scale
    a = 4.0 * np.asarray(dc_voltage, dtype=float) / scale
    q = 2.0 * np.asarray(rf_voltage, dtype=float) / scale
    return a, q


def check_stability(a, q) -> None:
    """Warn outside the comfortable region, raise outside the stable one."""
    amax = float(np.max(np.abs(a)))
    qmax = float(np.max(np.abs(q)))
    if amax > STABILITY_MAX_A or qmax > STABILITY_MAX_Q:
        raise TrapStabilityError(
            f"waveform unstable: |a| up to {amax:.4f}, |q| up to {qmax:.4f}")
    if amax > STABILITY_WARN_A or qmax > STABILITY_WARN_Q:
        warnings.warn(
            f"waveform close to instability: |a| up to {amax:.4f},"
            f" |q| up to {qmax:.4f}", stacklevel=2)


def dc_waveform(omega_sq, trap: TrapParams,
                secular_frequency: float = DEFAULT_SECULAR_FREQUENCY):
    """Endcap voltage U0(t) realizing w(t)^2 with the rf amplitude held fixed."""
    q = trap.rf_parameter(secular_frequency)
    wsq = np.asarray(omega_sq, dtype=float)
    a = (4.0 * (wsq + 0.5 * trap.axial_frequency ** 2) / trap.drive_frequency ** 2
         - 0.5 * q * q)
    return a * trap._voltage_scale / 4.0


def dc_to_omega_sq(dc_voltage, trap: TrapParams,
                   secular_frequency: float = DEFAULT_SECULAR_FREQUENCY):
    """Inverse of :func:`dc_waveform`."""
    q = trap.rf_parameter(secular_frequency)
    a = 4.0 * np.asarray(dc_voltage, dtype=float) / trap._voltage_scale
    return ((a + 0.5 * q * q) * trap.drive_frequency ** 2 / 4.0
            - 0.5 * trap.axial_frequency ** 2)


def rf_waveform(omega_sq, trap: TrapParams):
    """Rf amplitude V0(t) realizing w(t)^2 with the dc point held fixed."""
    wsq = np.asarray(omega_sq, dtype=float)
    arg = (4.0 * (wsq + 0.5 * trap.axial_frequency ** 2) / trap.drive_frequency ** 2
           - trap.dc_parameter)
    if np.any(arg <= 0):
        raise PulseInvalidError("rf amplitude would vanish along the waveform")
    q = np.sqrt(2.0 * arg)
    return q * trap._voltage_scale / 2.0


def rf_to_omega_sq(rf_voltage, trap: TrapParams):
    """Inverse of :func:`rf_waveform`."""
    q = 2.0 * np.asarray(rf_voltage, dtype=float) / trap._voltage_scale
    return ((trap.dc_parameter + 0.5 * q * q) * trap.drive_frequency ** 2 / 4.0
            - 0.5 * trap.axial_frequency ** 2)


def waveform_table(pulse: ShapedPulse, trap: TrapParams | None = None,
                   sample_interval: float = 1e-9) -> str:
    """CSV text with the sampled pulse and both voltage waveforms.

    Columns: t_s, b, omega_rad_s, omega_sq_excess, U0_V, V0_V.  The dc
    column modulates the endcaps at fixed rf amplitude, the rf column
    modulates the amplitude at the fixed dc point; either alone realizes
    the pulse.  Stability of both is checked before anything is written.
    """
    if trap is None:
        trap = TrapParams()
    wf = sample_pulse(pulse, sample_interval)
    wsq = wf.omega ** 2
    u0 = dc_waveform(wsq, trap, pulse.secular_frequency)
    v0 = rf_waveform(wsq, trap)
    a_dc, _ = stability_parameters(trap, u0, np.zeros_like(u0))
    _, q_rf = stability_parameters(trap, np.zeros_like(v0), v0)
    check_stability(a_dc, trap.rf_parameter(pulse.secular_frequency))
    check_stability(trap.dc_parameter, q_rf)
    out = io.StringIO()
    out.write("t_s,b,omega_rad_s,omega_sq_excess,U0_V,V0_V\n")
    for row in zip(wf.times, wf.scale, wf.omega, wf.omega_sq_excess, u0, v0):
        out.write(",".join(repr(float(x)) for x in row) + "\n")
    return out.getvalue()
