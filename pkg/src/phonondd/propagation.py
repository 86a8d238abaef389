"""Executes pulse schedules on phonon states in the interaction picture.

Free segments evolve under the number conserving hopping Hamiltonian, which
is constant in the frame rotating at the secular frequency, so they reduce
to one cached eigendecomposition.  Ideal pulses are instantaneous parity
phases.  Shaped pulses open a window in which the trap drive of the pulsed
modes acts without the rotating wave reduction,

    H_I(t)/hbar = H_hop/hbar
        + sum_j g_j(t) (a_j^2 e^{-2 i w0 t} + a_j^dag^2 e^{+2 i w0 t} + 2 n_j + 1)

with g_j(t) the squared frequency excess over 4 w0; the window is handed to
an adaptive high order integrator with certified local error.  By default a
window replaces the trailing portion of its preceding free segment, so the
wall clock of the schedule is unchanged; the alternative placement inserts
the window and stretches the timeline.  The counter rotating part of the
Coulomb coupling can optionally be kept during windows.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp
from scipy.linalg import eigh

from .model import (
    CONSTANTS,
    DEFAULT_SECULAR_FREQUENCY,
    CouplingMatrix,
    FockSpace,
    OperatorMatrix,
    PhononState,
    hopping_hamiltonian,
    ladder_operator,
)
from .pulses import ShapedPulse
from .sequences import Evolve, PhaseShift, PulseSchedule


class PropagationError(Exception):
    """Raised when a schedule cannot be executed as specified."""


@dataclass(frozen=True)
class PropagatorConfig:
    """Numerical knobs for schedule execution.

    ``max_step`` is capped at one twentieth of the half period of the
    secular rotation, the fastest scale in the window dynamics; ``None``
    means exactly that cap.  ``record_stride`` requests population samples
    on a uniform grid; ``None`` records endpoints only.
    """

    local_error_tolerance: float = 1e-12
    absolute_tolerance: float = 1e-14
    max_step: float | None = None
    interaction_picture_frequency: float | None = None
    record_stride: float | None = None
    window_placement: str = "carve"
    window_coupling: str = "rwa"

    def __post_init__(self) -> None:
        if self.local_error_tolerance <= 0 or self.absolute_tolerance <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_step is not None and self.max_step <= 0:
            raise ValueError("max_step must be positive")
        if self.record_stride is not None and self.record_stride <= 0:
            raise ValueError("record_stride must be positive")
        if self.window_placement not in ("carve", "insert"):
            raise ValueError("window_placement must be 'carve' or 'insert'")
        if self.window_coupling not in ("rwa", "full"):
            raise ValueError("window_coupling must be 'rwa' or 'full'")

    def step_cap(self, frame_frequency: float) -> float:
        cap = (math.pi / frame_frequency) / 20.0
        if self.max_step is None:
            return cap
        return min(self.max_step, cap)


@dataclass
class SimulationResult:
    """Timeline record of one schedule execution."""

    times: np.ndarray
    populations: np.ndarray
    space: FockSpace
    final_state: PhononState
    norm_drift: float
    boundary_leakage: float
    wall_time: float
    error_E: float | None = None
    error_EB: float | None = None

    def populations_map(self, index: int) -> dict[str, float]:
        row = self.populations[index]
        return {self.space.label(i): float(p) for i, p in enumerate(row)}


def evolve_constant(state: PhononState, hamiltonian: OperatorMatrix,
                    duration: float,
                    constants=CONSTANTS) -> PhononState:
    """exp(-i duration H / hbar) applied through an eigendecomposition."""
    if duration < 0:
        raise ValueError("duration must be non-negative")
    h = hamiltonian.toarray() if sp.issparse(hamiltonian) else np.asarray(hamiltonian)
    if h.shape != (state.space.dimension, state.space.dimension):
        raise ValueError("Hamiltonian dimension does not match the state")
    vals, vecs = eigh(h)
    phases = np.exp(-1j * vals * duration / constants.hbar)
    amps = vecs @ (phases * (vecs.conj().T @ state.amplitudes))
    return PhononState(state.space, amps)


def apply_ideal_phase(state: PhononState, modes: Iterable[int]) -> PhononState:
    """Instantaneous pi phase shift: amplitudes pick up exp(-i pi sum n_j)."""
    modes = set(modes)
    if any(not 0 <= q < state.space.mode_count for q in modes):
        raise ValueError("mode index out of range")
    total = np.zeros(state.space.dimension)
    for q in modes:
        total = total + state.space.mode_occupations(q)
    return PhononState(state.space, state.amplitudes * np.exp(-1j * math.pi * total))


@dataclass(frozen=True)
class StaircaseDrive:
    """Piecewise constant squared frequency excess, for cross checks."""

    levels: tuple[tuple[float, float], ...]

    @property
    def duration(self) -> float:
        return sum(d for d, _ in self.levels)

    @property
    def breakpoints(self) -> tuple[float, ...]:
        acc, out = 0.0, []
        for d, _ in self.levels[:-1]:
            acc += d
            out.append(acc)
        return tuple(out)

    def drive(self, tau):
        edges = np.cumsum([d for d, _ in self.levels])
        vals = np.array([v for _, v in self.levels])
        idx = np.minimum(np.searchsorted(edges, np.asarray(tau, dtype=float),
                                         side="right"), len(vals) - 1)
        return vals[idx]


class SchedulePropagator:
    """Engine bound to one Fock space and coupling matrix.

    Precomputes the hopping eigensystem, per mode parity phases, and the
    window operators, then replays any schedule on that chain.
    """

    def __init__(self, space: FockSpace, couplings: CouplingMatrix,
                 config: PropagatorConfig | None = None,
                 secular_frequency: float = DEFAULT_SECULAR_FREQUENCY):
        if couplings.mode_count != space.mode_count:
            raise ValueError("coupling matrix does not match the Fock space")
        self.space = space
        self.couplings = couplings
        self.config = config or PropagatorConfig()
        self.frame_frequency = (self.config.interaction_picture_frequency
                                or secular_frequency)
        hop = hopping_hamiltonian(space, couplings, form="rwa") / CONSTANTS.hbar
        self._hop = sp.csr_matrix(hop.astype(complex))
        self._evals, self._evecs = eigh(self._hop.toarray())
        self._numbers = [space.mode_occupations(q).astype(float)
                         for q in range(space.mode_count)]
        lowers = [ladder_operator(space, q) for q in range(space.mode_count)]
        self._sq = [sp.csr_matrix((a @ a).astype(complex)) for a in lowers]
        self._sq_dag = [m.conj().T.tocsr() for m in self._sq]
        self._boundary = space.boundary_mask()
        self._window_ops: dict[frozenset[int], tuple] = {}
        self._counter_rotating = None
        if self.config.window_coupling == "full":
            cr = sp.csr_matrix((space.dimension, space.dimension), dtype=complex)
            for j in range(space.mode_count):
                for k in range(j):
                    rate = couplings.rate(j, k)
                    if rate:
                        cr = cr + 0.5 * rate * (lowers[j].conj().T @ lowers[k].conj().T)
            self._counter_rotating = (cr.tocsr(), cr.conj().T.tocsr())

    # free evolution through the cached eigensystem, sampled at offsets dts
    def _free_states(self, amps: np.ndarray, dts: np.ndarray) -> np.ndarray:
        coeff = self._evecs.conj().T @ amps
        phases = np.exp(-1j * np.outer(self._evals, dts))
        return self._evecs @ (phases * coeff[:, None])

    def _free(self, amps: np.ndarray, duration: float) -> np.ndarray:
        return self._evecs @ (np.exp(-1j * self._evals * duration)
                              * (self._evecs.conj().T @ amps))

    def _parity(self, modes: frozenset[int]) -> np.ndarray:
        total = sum(self._numbers[q] for q in modes)
        return np.exp(-1j * math.pi * total)

    def _ops_for(self, modes: frozenset[int]) -> tuple:
        if modes not in self._window_ops:
            lower_sq = sum(self._sq[q] for q in modes).tocsr()
            raise_sq = sum(self._sq_dag[q] for q in modes).tocsr()
            diag = sum(2.0 * self._numbers[q] + 1.0 for q in modes)
            self._window_ops[modes] = (lower_sq, raise_sq, diag)
        return self._window_ops[modes]

    def _window(self, amps: np.ndarray, start: float, modes: frozenset[int],
                pulse: ShapedPulse, t_eval: Sequence[float] = ()) -> tuple[np.ndarray, np.ndarray]:
        """Integrate one shaped window starting at absolute time ``start``."""
        lower_sq, raise_sq, diag = self._ops_for(modes)
        hop = self._hop
        w0 = self.frame_frequency
        cr = self._counter_rotating

        def rhs(t, y):
            g = pulse.drive(t - start) / (4.0 * w0)
            ph = np.exp(2j * w0 * t)
            out = hop.dot(y)
            out = out + g * (ph * raise_sq.dot(y) + np.conj(ph) * lower_sq.dot(y)
                             + diag * y)
            if cr is not None:
                out = out + ph * cr[0].dot(y) + np.conj(ph) * cr[1].dot(y)
            return -1j * out

        stops = [start, start + pulse.duration]
        for bp in getattr(pulse, "breakpoints", ()):
            if 0.0 < bp < pulse.duration:
                stops.insert(-1, start + bp)
        eval_pts = sorted(set(t_eval))
        states = []
        for lo, hi in zip(stops[:-1], stops[1:]):
            inner = [t for t in eval_pts if lo < t < hi]
            sol = solve_ivp(rhs, (lo, hi), amps, method="DOP853",
                            rtol=self.config.local_error_tolerance,
                            atol=self.config.absolute_tolerance,
                            max_step=self.config.step_cap(w0),
                            t_eval=inner + [hi] if inner else None,
                            dense_output=False)
            if not sol.success:
                raise PropagationError(f"window integration failed: {sol.message}")
            for col, tc in zip(sol.y.T, sol.t):
                if tc in inner:
                    states.append(col)
            amps = sol.y[:, -1]
        return amps, np.asarray(states)

    def run(self, schedule: PulseSchedule, initial: PhononState,
            reference: PhononState | None = None) -> SimulationResult:
        """Execute the schedule and collect the error metrics.

        ``error_E`` is one minus the overlap magnitude with the initial
        state; ``error_EB`` the same against ``reference`` when given.
        """
        if initial.space != self.space:
            raise ValueError("initial state lives in a different Fock space")
        shaped = schedule.pulse_model == "shaped"
        pulse = schedule.shaped_pulse
        if shaped and pulse is None:
            raise PropagationError("shaped schedule carries no pulse")
        carve = self.config.window_placement == "carve"
        started = time.perf_counter()

        wall = schedule.total_evolve_time
        if shaped and not carve:
            windows = sum(isinstance(ev, PhaseShift) for ev in schedule.events)
            wall += windows * pulse.duration

        if self.config.record_stride is not None:
            grid = list(np.arange(0.0, wall, self.config.record_stride))
            if not grid or grid[-1] < wall:
                grid.append(wall)
        else:
            grid = [0.0, wall]
        grid = sorted(set(grid))

        amps = initial.amplitudes.copy()
        records: list[tuple[float, np.ndarray]] = [(0.0, amps.copy())]
        norm_drift = abs(np.linalg.norm(amps) - 1.0)
        leakage = float(np.sum(np.abs(amps[self._boundary]) ** 2))

        def note(t_now: float, vec: np.ndarray) -> None:
            nonlocal norm_drift, leakage
            norm_drift = max(norm_drift, abs(np.linalg.norm(vec) - 1.0))
            leakage = max(leakage, float(np.sum(np.abs(vec[self._boundary]) ** 2)))

        def record_free(t0: float, dur: float, start_amps: np.ndarray) -> None:
            inner = [t for t in grid if t0 < t < t0 + dur]
            if inner:
                cols = self._free_states(start_amps, np.asarray(inner) - t0)
                for t_s, col in zip(inner, cols.T):
                    records.append((t_s, col))

        events = schedule.events
        i = 0
        t = 0.0
        while i < len(events):
            ev = events[i]
            if isinstance(ev, Evolve):
                next_pulse = (i + 1 < len(events)
                              and isinstance(events[i + 1], PhaseShift)
                              and shaped)
                if next_pulse and carve:
                    lead = ev.duration - pulse.duration
                    if lead < -1e-12 * ev.duration:
                        raise PropagationError(
                            "pulse window does not fit inside its segment")
                    lead = max(lead, 0.0)
                    record_free(t, lead, amps)
                    amps = self._free(amps, lead)
                    t += lead
                    inner = [s for s in grid if t < s < t + pulse.duration]
                    amps, sampled = self._window(amps, t, events[i + 1].modes,
                                                 pulse, inner)
                    for t_s, col in zip(inner, sampled):
                        records.append((t_s, col))
                    t += pulse.duration
                    note(t, amps)
                    i += 2
                else:
                    record_free(t, ev.duration, amps)
                    amps = self._free(amps, ev.duration)
                    t += ev.duration
                    note(t, amps)
                    i += 1
            else:
                if shaped:
                    if carve:
                        raise PropagationError(
                            "pulse event has no preceding segment to carve")
                    inner = [s for s in grid if t < s < t + pulse.duration]
                    amps, sampled = self._window(amps, t, ev.modes, pulse, inner)
                    for t_s, col in zip(inner, sampled):
                        records.append((t_s, col))
                    t += pulse.duration
                    note(t, amps)
                else:
                    amps = amps * self._parity(ev.modes)
                i += 1

        records.append((t, amps.copy()))
        seen: dict[float, np.ndarray] = {}
        for t_s, vec in records:
            seen[t_s] = vec
        times = np.array(sorted(seen))
        pops = np.array([np.abs(seen[t_s]) ** 2 for t_s in times])
        final = PhononState(self.space, amps)
        err = error_overlap(initial, final)
        err_b = error_overlap(reference, final) if reference is not None else None
        return SimulationResult(times=times, populations=pops, space=self.space,
                                final_state=final, norm_drift=norm_drift,
                                boundary_leakage=leakage,
                                wall_time=time.perf_counter() - started,
                                error_E=err, error_EB=err_b)


def run_schedule(initial: PhononState, schedule: PulseSchedule,
                 couplings: CouplingMatrix,
                 config: PropagatorConfig | None = None,
                 secular_frequency: float = DEFAULT_SECULAR_FREQUENCY,
                 reference: PhononState | None = None) -> SimulationResult:
    """One-shot convenience wrapper around :class:`SchedulePropagator`."""
    engine = SchedulePropagator(initial.space, couplings, config, secular_frequency)
    return engine.run(schedule, initial, reference)


def evolve_shaped(state: PhononState, pulse, target_modes: Iterable[int],
                  background: OperatorMatrix | None = None,
                  config: PropagatorConfig | None = None,
                  secular_frequency: float | None = None,
                  start_time: float = 0.0) -> PhononState:
    """Propagate one shaped window outside any schedule.

    ``pulse`` needs a ``duration`` and a ``drive(tau)`` giving the squared
    frequency excess ``tau`` seconds into the window; both the designed
    pulse and :class:`StaircaseDrive` qualify.  ``background`` is a bare
    Hamiltonian in joules, defaulting to no coupling at all.
    """
    config = config or PropagatorConfig()
    space = state.space
    if secular_frequency is None:
        secular_frequency = getattr(pulse, "secular_frequency",
                                    DEFAULT_SECULAR_FREQUENCY)
    w0 = config.interaction_picture_frequency or secular_frequency
    modes = frozenset(target_modes)
    if any(not 0 <= q < space.mode_count for q in modes):
        raise ValueError("target mode out of range")
    if background is None:
        hop = sp.csr_matrix((space.dimension, space.dimension), dtype=complex)
    else:
        hop = sp.csr_matrix(background, dtype=complex) / CONSTANTS.hbar
    lower_sq = raise_sq = None
    diag = np.zeros(space.dimension)
    for q in modes:
        a = ladder_operator(space, q)
        asq = sp.csr_matrix((a @ a).astype(complex))
        lower_sq = asq if lower_sq is None else lower_sq + asq
        raise_sq = asq.conj().T if raise_sq is None else raise_sq + asq.conj().T
        diag = diag + 2.0 * space.mode_occupations(q) + 1.0

    def rhs(t, y):
        g = pulse.drive(t - start_time) / (4.0 * w0)
        ph = np.exp(2j * w0 * t)
        out = hop.dot(y)
        if modes:
            out = out + g * (ph * raise_sq.dot(y) + np.conj(ph) * lower_sq.dot(y)
                             + diag * y)
        return -1j * out

    stops = [start_time]
    for bp in getattr(pulse, "breakpoints", ()):
        if 0.0 < bp < pulse.duration:
            stops.append(start_time + bp)
    stops.append(start_time + pulse.duration)
    amps = state.amplitudes.copy()
    for lo, hi in zip(stops[:-1], stops[1:]):
        sol = solve_ivp(rhs, (lo, hi), amps, method="DOP853",
                        rtol=config.local_error_tolerance,
                        atol=config.absolute_tolerance,
                        max_step=config.step_cap(w0))
        if not sol.success:
            raise PropagationError(f"window integration failed: {sol.message}")
        amps = sol.y[:, -1]
    return PhononState(space, amps)


def lab_frame_oscillator(space: FockSpace, mode: int, omega_sq_excess: float,
                         secular_frequency: float = DEFAULT_SECULAR_FREQUENCY,
                         constants=CONSTANTS) -> np.ndarray:
    """Lab picture Hamiltonian of one mode under a constant drive (joules).

    hbar w0 (n + 1/2) plus the quadratic drive; used to cross check the
    interaction picture window against plain constant evolution.
    """
    a = ladder_operator(space, mode).toarray()
    n = a.conj().T @ a
    x = a + a.conj().T
    g = omega_sq_excess / (4.0 * secular_frequency)
    return constants.hbar * (secular_frequency * (n + 0.5 * np.eye(space.dimension))
                             + g * (x @ x))


def frame_rotation(space: FockSpace, duration: float,
                   secular_frequency: float = DEFAULT_SECULAR_FREQUENCY) -> np.ndarray:
    """Diagonal that maps a lab picture state into the rotating frame."""
    total = np.zeros(space.dimension)
    for q in range(space.mode_count):
        total = total + space.mode_occupations(q) + 0.5
    return np.exp(1j * secular_frequency * duration * total)


def error_overlap(initial: PhononState, final: PhononState) -> float:
    """1 - |<initial|final>|, insensitive to global phase."""
    if initial.space.dimension != final.space.dimension:
        raise ValueError("states live in different spaces")
    return 1.0 - abs(np.vdot(initial.amplitudes, final.amplitudes))


def beam_splitter_reference(state: PhononState, pair: tuple[int, int],
                            angle: float = math.pi / 4.0) -> PhononState:
    """Exact 50:50 target: exp(-i angle (a_j^dag a_k + a_k^dag a_j)) |state>."""
    j, k = pair
    if j == k:
        raise ValueError("pair must name two distinct modes")
    aj = ladder_operator(state.space, j)
    ak = ladder_operator(state.space, k)
    mixer = (aj.conj().T @ ak + ak.conj().T @ aj).toarray()
    vals, vecs = eigh(mixer)
    amps = vecs @ (np.exp(-1j * angle * vals) * (vecs.conj().T @ state.amplitudes))
    return PhononState(state.space, amps)


def error_beam_splitter(initial: PhononState, final: PhononState,
                        pair: tuple[int, int],
                        angle: float = math.pi / 4.0) -> float:
    """1 - |<target|final>| against the exact pair beam splitter output."""
    return error_overlap(beam_splitter_reference(initial, pair, angle), final)


def number_expectation(state: PhononState) -> float:
    """Total phonon number expectation of the state."""
    pops = np.abs(state.amplitudes) ** 2
    total = np.zeros(state.space.dimension)
    for q in range(state.space.mode_count):
        total = total + state.space.mode_occupations(q)
    return float(np.dot(total, pops))
