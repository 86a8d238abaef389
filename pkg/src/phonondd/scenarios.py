"""Named experiment scenarios, sweeps, and report generation.

Each scenario bundles a chain geometry, an initial Fock state, a schedule
recipe, and propagator settings; running one synthesizes the schedule,
designs the modulation pulse when the schedule is shaped, propagates, and
returns a deterministic result record plus an optional populations CSV.
The built-in catalog pins the reference configurations used for regression
against stored expected values; reports compare computed errors with those
references and attach a pass or fail verdict per stored tolerance.
"""

from __future__ import annotations

import io
import json
import math
import os
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .model import (
    DEFAULT_ION_MASS,
    DEFAULT_SECULAR_FREQUENCY,
    FockSpace,
    IonChainConfig,
    basis_state,
    build_coupling_matrix,
    coupling_rate,
)
from .propagation import (
    PropagatorConfig,
    SchedulePropagator,
    SimulationResult,
    beam_splitter_reference,
)
from .pulses import ShapedPulse, design_pulse
from .sequences import DDSpec, PulseSchedule, synthesize

POPULATION_COLUMN_THRESHOLD = 1e-4
LEAKAGE_LIMIT = 1e-6
DEFAULT_RECORD_SAMPLES = 512

# cycle time of one bare secular oscillation, the natural pulse length unit
SECULAR_PERIOD = 2.0 * math.pi / DEFAULT_SECULAR_FREQUENCY


class ScenarioError(Exception):
    """A scenario could not be built or executed."""


@dataclass(frozen=True)
class ScenarioConfig:
    """Complete, immutable description of one experiment run."""

    name: str
    mode_count: int
    spacing: float
    per_mode_cutoff: int
    initial_occupations: tuple[int, ...]
    pulse_model: str = "ideal"
    repetitions: int = 1
    protected_set: frozenset[int] = frozenset()
    level_role_swap: tuple[bool, ...] | None = None
    truncation_distance: int | None = None
    total_time: float | None = None
    pulse_duration: float | None = None
    pulse_ramp_up: float | None = None
    pulse_ramp_down: float | None = None
    pulse_sharpness: float = 6.0
    target_phase: float = math.pi
    secular_frequency: float = DEFAULT_SECULAR_FREQUENCY
    ion_mass: float = DEFAULT_ION_MASS
    window_placement: str = "carve"
    window_coupling: str = "rwa"
    local_error_tolerance: float = 1e-12
    record_samples: int = DEFAULT_RECORD_SAMPLES
    beam_splitter_pair: tuple[int, int] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "protected_set", frozenset(self.protected_set))
        object.__setattr__(self, "initial_occupations",
                           tuple(self.initial_occupations))
        if len(self.initial_occupations) != self.mode_count:
            raise ScenarioError(f"{self.name}: initial state names "
                                f"{len(self.initial_occupations)} modes, chain has "
                                f"{self.mode_count}")
        if any(n > self.per_mode_cutoff for n in self.initial_occupations):
            raise ScenarioError(f"{self.name}: initial occupation exceeds the cutoff")
        if self.pulse_model == "shaped" and self.pulse_duration is None:
            raise ScenarioError(f"{self.name}: shaped model needs a pulse duration")
        if self.record_samples < 2:
            raise ScenarioError(f"{self.name}: record_samples must be at least 2")

    def hop_time(self) -> float:
        """Nearest neighbor 50:50 exchange time, the default cycle length."""
        kappa = coupling_rate(self.spacing, self.ion_mass, self.secular_frequency)
        return math.pi / (2.0 * kappa)


@dataclass(frozen=True)
class ResultRecord:
    """Deterministic summary of one run, CSV friendly."""

    scenario: str
    parameters: tuple[tuple[str, str], ...]
    error_E: float | None
    error_EB: float | None
    norm_drift: float | None
    boundary_leakage: float | None
    wall_time: float | None
    failure: str | None = None


def _long_pulse(cfg: ScenarioConfig) -> ShapedPulse:
    ramp_up = cfg.pulse_ramp_up if cfg.pulse_ramp_up is not None \
        else 0.5 * cfg.pulse_duration
    ramp_down = cfg.pulse_ramp_down if cfg.pulse_ramp_down is not None \
        else 0.5 * cfg.pulse_duration
    return design_pulse(cfg.pulse_duration, ramp_up, ramp_down,
                        cfg.pulse_sharpness, cfg.secular_frequency,
                        cfg.target_phase)


def build_scenario(cfg: ScenarioConfig):
    """Materialize (space, couplings, schedule, initial state, engine)."""
    chain = IonChainConfig.equidistant(cfg.mode_count, cfg.spacing,
                                       ion_mass=cfg.ion_mass,
                                       secular_frequency=cfg.secular_frequency,
                                       truncation_distance=cfg.truncation_distance)
    couplings = build_coupling_matrix(chain)
    space = FockSpace(cfg.mode_count, cfg.per_mode_cutoff)
    initial = basis_state(space, cfg.initial_occupations)
    total = cfg.total_time if cfg.total_time is not None else cfg.hop_time()
    pulse = _long_pulse(cfg) if cfg.pulse_model == "shaped" else None
    spec = DDSpec(mode_count=cfg.mode_count, total_time=total,
                  repetitions=cfg.repetitions, protected_set=cfg.protected_set,
                  truncation_distance=cfg.truncation_distance,
                  level_role_swap=cfg.level_role_swap,
                  pulse_model=cfg.pulse_model, shaped_pulse=pulse)
    schedule = synthesize(spec)
    wall = schedule.total_evolve_time
    if cfg.pulse_model == "shaped" and cfg.window_placement == "insert":
        wall += pulse.duration * sum(1 for ev in schedule.events
                                     if not hasattr(ev, "duration"))
    prop_cfg = PropagatorConfig(
        local_error_tolerance=cfg.local_error_tolerance,
        record_stride=wall / (cfg.record_samples - 1),
        window_placement=cfg.window_placement,
        window_coupling=cfg.window_coupling,
    )
    engine = SchedulePropagator(space, couplings, prop_cfg, cfg.secular_frequency)
    return space, couplings, schedule, initial, engine


def execute_scenario(cfg: ScenarioConfig) -> tuple[ResultRecord, SimulationResult]:
    """Run one scenario and return both the record and the full timeline."""
    try:
        space, couplings, schedule, initial, engine = build_scenario(cfg)
        reference = None
        if cfg.beam_splitter_pair is not None:
            reference = beam_splitter_reference(initial, cfg.beam_splitter_pair)
        result = engine.run(schedule, initial, reference)
    except ScenarioError:
        raise
    except Exception as exc:
        raise ScenarioError(f"{cfg.name}: {exc}") from exc
    if result.boundary_leakage > LEAKAGE_LIMIT:
        raise ScenarioError(
            f"{cfg.name}: population leaked to the Fock cutoff boundary"
            f" ({result.boundary_leakage:.3e} > {LEAKAGE_LIMIT:.0e});"
            " raise per_mode_cutoff")
    params = (
        ("modes", str(cfg.mode_count)),
        ("spacing_um", repr(cfg.spacing * 1e6)),
        ("n_max", str(cfg.per_mode_cutoff)),
        ("repetitions", str(cfg.repetitions)),
        ("model", cfg.pulse_model),
        ("placement", cfg.window_placement),
        ("coupling", cfg.window_coupling),
        ("total_time_us", repr((cfg.total_time if cfg.total_time is not None
                                else cfg.hop_time()) * 1e6)),
        ("pulse_us", repr(cfg.pulse_duration * 1e6)
         if cfg.pulse_duration is not None else ""),
        ("initial", "".join(str(n) for n in cfg.initial_occupations)),
    )
    record = ResultRecord(scenario=cfg.name, parameters=params,
                          error_E=float(result.error_E),
                          error_EB=(None if result.error_EB is None
                                    else float(result.error_EB)),
                          norm_drift=float(result.norm_drift),
                          boundary_leakage=float(result.boundary_leakage),
                          wall_time=float(result.wall_time))
    return record, result


def run_scenario(cfg: ScenarioConfig, output_dir: str | Path | None = None,
                 full_populations: bool = False) -> ResultRecord:
    """Run a scenario; write its populations CSV when a directory is given."""
    record, result = execute_scenario(cfg)
    if output_dir is not None:
        out = Path(output_dir)
        out.mkdir(parents=True, exist_ok=True)
        csv_text = populations_csv(result, cfg, full=full_populations)
        (out / f"{cfg.name}_populations.csv").write_text(csv_text)
    return record


def _hom_labels(cfg: ScenarioConfig, space: FockSpace) -> list[str]:
    """Beam splitter output states reached by moving one quantum in the pair."""
    if cfg.beam_splitter_pair is None:
        return []
    j, k = cfg.beam_splitter_pair
    occ = list(reversed(cfg.initial_occupations))  # label order -> mode order
    labels = []
    for src, dst in ((j, k), (k, j)):
        moved = occ.copy()
        if moved[src] == 0:
            continue
        moved[src] -= 1
        moved[dst] += 1
        if max(moved) <= space.per_mode_cutoff:
            labels.append(space.label(space.index(tuple(reversed(moved)))))
    return labels


def populations_csv(result: SimulationResult, cfg: ScenarioConfig,
                    full: bool = False) -> str:
    """Serialize the recorded populations.

    By default only states whose population ever exceeds the plotting
    threshold are kept as columns, together with the initial state and the
    beam splitter outputs; everything dropped is accumulated in a trailing
    ``residual`` column so each row still sums to the squared state norm.
    """
    space = result.space
    labels = [space.label(i) for i in range(space.dimension)]
    if full:
        keep = list(range(space.dimension))
        drop: list[int] = []
    else:
        forced = {space.index(cfg.initial_occupations)}
        forced.update(labels.index(lab) for lab in _hom_labels(cfg, space))
        peaks = result.populations.max(axis=0)
        keep = [i for i in range(space.dimension)
                if peaks[i] > POPULATION_COLUMN_THRESHOLD or i in forced]
        drop = [i for i in range(space.dimension) if i not in set(keep)]
    out = io.StringIO()
    header = ["t_us"] + [labels[i] for i in keep]
    if not full:
        header.append("residual")
    out.write(",".join(header) + "\n")
    for row_i, t in enumerate(result.times):
        row = result.populations[row_i]
        cells = [repr(float(t * 1e6))] + [repr(float(row[i])) for i in keep]
        if not full:
            cells.append(repr(float(row[drop].sum()) if drop else 0.0))
        out.write(",".join(cells) + "\n")
    return out.getvalue()


def scenario_catalog() -> list[ScenarioConfig]:
    """Built-in reference scenarios.

    Names are the catalog keys used by the stored reference values: the
    two-mode shaped runs (fig1a, fig1b, fig2), the three-mode schedules
    under both grouping orderings (fig3, fig4a/b, fig5a/b), and the
    protected-pair beam splitter runs (fig6a/b, fig7a/b).
    """
    t0 = SECULAR_PERIOD
    near, far = 27.6e-6, 43.8e-6
    long_pulse = dict(pulse_duration=8.8 * t0, pulse_ramp_up=4.4 * t0,
                      pulse_ramp_down=4.4 * t0)
    short_pulse = dict(pulse_duration=2.2 * t0, pulse_ramp_up=1.0 * t0,
                       pulse_ramp_down=1.0 * t0)
    plain = dict(level_role_swap=(False, False))
    two = (2, 1)
    three = (2, 1, 0)
    ones = (1, 1, 1)
    bs = dict(protected_set=frozenset({0, 1}), beam_splitter_pair=(0, 1))
    return [
        ScenarioConfig("fig1a", 2, near, 12, two, "shaped", **long_pulse),
        ScenarioConfig("fig1b", 2, near, 14, two, "shaped", **short_pulse),
        ScenarioConfig("fig2", 2, far, 12, two, "shaped", **long_pulse),
        ScenarioConfig("fig3", 3, far, 8, three, "ideal", **plain),
        ScenarioConfig("fig4a", 3, far, 8, three, "ideal"),
        ScenarioConfig("fig4b", 3, far, 10, three, "shaped", **long_pulse),
        ScenarioConfig("fig5a", 3, far, 8, three, "ideal", repetitions=5),
        ScenarioConfig("fig5b", 3, far, 10, three, "shaped", repetitions=5,
                       **long_pulse),
        ScenarioConfig("fig6a", 3, far, 10, ones, "ideal", **bs),
        ScenarioConfig("fig6b", 3, far, 10, ones, "shaped", **bs, **long_pulse),
        ScenarioConfig("fig7a", 3, far, 10, ones, "ideal", repetitions=5, **bs),
        ScenarioConfig("fig7b", 3, far, 10, ones, "shaped", repetitions=5,
                       **bs, **long_pulse),
    ]


def get_scenario(name: str) -> ScenarioConfig:
    for cfg in scenario_catalog():
        if cfg.name == name:
            return cfg
    raise ScenarioError(f"unknown scenario {name!r}")


def convergence_check(cfg: ScenarioConfig, step: int = 2,
                      limit: float = 0.05) -> dict:
    """Accept a cutoff only if raising it barely moves the reported error.

    Runs the scenario at its cutoff and again ``step`` higher; the result
    is converged when the tracked error metric changes by less than
    ``limit`` relative.
    """
    rec_lo, _ = execute_scenario(cfg)
    rec_hi, _ = execute_scenario(replace(
        cfg, per_mode_cutoff=cfg.per_mode_cutoff + step,
        initial_occupations=cfg.initial_occupations))
    lo = rec_lo.error_EB if rec_lo.error_EB is not None else rec_lo.error_E
    hi = rec_hi.error_EB if rec_hi.error_EB is not None else rec_hi.error_E
    change = abs(hi - lo) / abs(hi) if hi else 0.0
    return {"error": lo, "error_raised_cutoff": hi, "relative_change": change,
            "converged": change < limit}


SWEEP_AXES = ("n_r", "d", "T_P", "n_max")


def _apply_axis(cfg: ScenarioConfig, axis: str, value) -> ScenarioConfig:
    if axis == "n_r":
        return replace(cfg, repetitions=int(value))
    if axis == "d":
        return replace(cfg, spacing=float(value))
    if axis == "T_P":
        if cfg.pulse_duration is None:
            raise ScenarioError("T_P sweep needs a shaped scenario")
        factor = float(value) / cfg.pulse_duration
        return replace(cfg, pulse_duration=float(value),
                       pulse_ramp_up=None if cfg.pulse_ramp_up is None
                       else cfg.pulse_ramp_up * factor,
                       pulse_ramp_down=None if cfg.pulse_ramp_down is None
                       else cfg.pulse_ramp_down * factor)
    if axis == "n_max":
        return replace(cfg, per_mode_cutoff=int(value))
    raise ScenarioError(f"unknown sweep axis {axis!r}; choose from {SWEEP_AXES}")


def sweep(base: ScenarioConfig, axis: str, values) -> list[ResultRecord]:
    """Run the base scenario once per axis value, collecting failures."""
    if not values:
        raise ScenarioError("sweep needs at least one value")
    records = []
    for value in sorted(values):
        variant = _apply_axis(base, axis, value)
        variant = replace(variant, name=f"{base.name}_{axis}={value}")
        try:
            record, _ = execute_scenario(variant)
        except ScenarioError as exc:
            record = ResultRecord(scenario=variant.name,
                                  parameters=((axis, str(value)),),
                                  error_E=None, error_EB=None, norm_drift=None,
                                  boundary_leakage=None, wall_time=None,
                                  failure=str(exc))
        records.append(record)
    return records


def records_csv(records) -> str:
    """Stable CSV for a set of result records (wall time omitted)."""
    out = io.StringIO()
    out.write("scenario,error_E,error_EB,norm_drift,boundary_leakage,"
              "failure,parameters\n")
    for rec in records:
        params = ";".join(f"{k}={v}" for k, v in rec.parameters)
        cells = [rec.scenario,
                 "" if rec.error_E is None else repr(rec.error_E),
                 "" if rec.error_EB is None else repr(rec.error_EB),
                 "" if rec.norm_drift is None else repr(rec.norm_drift),
                 "" if rec.boundary_leakage is None else repr(rec.boundary_leakage),
                 rec.failure or "",
                 params]
        out.write(",".join(cells) + "\n")
    return out.getvalue()


def load_reference_values() -> dict:
    """Stored expected errors and tolerances, shipped as versioned data."""
    text = resources.files("phonondd").joinpath("data/reference_values.json") \
        .read_text()
    return json.loads(text)


def _within(value: float, reference: float, tolerance: dict) -> bool:
    kind = tolerance["kind"]
    bound = tolerance["value"]
    if kind == "factor":
        return reference / bound <= value <= reference * bound
    if kind == "fraction":
        return abs(value - reference) <= bound * reference
    if kind == "order_of_magnitude":
        return reference / 10.0 ** bound <= value <= reference * 10.0 ** bound
    raise ScenarioError(f"unknown tolerance kind {kind!r}")


def emit_report(records, references: dict | None = None) -> tuple[str, bool]:
    """Compare records against stored reference values.

    Returns the report text and an overall pass flag.  Scenarios without a
    stored reference get empty comparison columns and do not affect the
    flag.
    """
    if references is None:
        references = load_reference_values()
    table = references["metrics"]
    lines = ["scenario,metric,computed,reference,ratio,verdict"]
    all_ok = True
    for rec in sorted(records, key=lambda r: r.scenario):
        entry = table.get(rec.scenario)
        if rec.failure is not None:
            lines.append(f"{rec.scenario},,,,,error")
            all_ok = False
            continue
        if entry is None:
            value = rec.error_EB if rec.error_EB is not None else rec.error_E
            lines.append(f"{rec.scenario},error,{value!r},,,")
            continue
        value = rec.error_EB if entry["metric"] == "error_EB" else rec.error_E
        ok = _within(value, entry["value"], entry["tolerance"])
        all_ok = all_ok and ok
        ratio = value / entry["value"]
        lines.append(f"{rec.scenario},{entry['metric']},{value!r},"
                     f"{entry['value']!r},{ratio:.3f},"
                     f"{'pass' if ok else 'FAIL'}")
    return "\n".join(lines) + "\n", all_ok


_TIME_KEYS_US = {"total_time_us": "total_time", "pulse_us": "pulse_duration",
                 "ramp_up_us": "pulse_ramp_up", "ramp_down_us": "pulse_ramp_down"}


def parse_config_text(text: str, name: str = "custom") -> ScenarioConfig:
    """Parse the flat ``section.key = value`` scenario format.

    Recognized keys: scenario.name; chain.modes, chain.spacing_um,
    chain.truncation; state.occupations (comma separated, highest mode
    first, matching the basis labels); schedule.repetitions,
    schedule.protected, schedule.role_swap, schedule.total_time_us;
    pulse.model, pulse.total_us, pulse.ramp_up_us, pulse.ramp_down_us,
    pulse.sharpness, pulse.target_phase; propagator.n_max,
    propagator.placement, propagator.coupling, propagator.tolerance;
    output.samples, output.beam_splitter_pair.
    """
    entries: dict[str, str] = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ScenarioError(f"bad config line: {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        entries[key] = value
    try:
        kwargs: dict = {
            "name": entries.pop("scenario.name", name),
            "mode_count": int(entries.pop("chain.modes")),
            "spacing": float(entries.pop("chain.spacing_um")) * 1e-6,
            "per_mode_cutoff": int(entries.pop("propagator.n_max", "10")),
            "initial_occupations": tuple(
                int(x) for x in entries.pop("state.occupations").split(",")),
        }
    except KeyError as exc:
        raise ScenarioError(f"config is missing required key {exc}") from exc
    converters = {
        "chain.truncation": ("truncation_distance", int),
        "schedule.repetitions": ("repetitions", int),
        "schedule.protected": ("protected_set", lambda v: frozenset(
            int(x) for x in v.split(",") if x != "")),
        "schedule.role_swap": ("level_role_swap", lambda v: tuple(
            x.strip().lower() == "true" for x in v.split(","))),
        "schedule.total_time_us": ("total_time", lambda v: float(v) * 1e-6),
        "pulse.model": ("pulse_model", str),
        "pulse.total_us": ("pulse_duration", lambda v: float(v) * 1e-6),
        "pulse.ramp_up_us": ("pulse_ramp_up", lambda v: float(v) * 1e-6),
        "pulse.ramp_down_us": ("pulse_ramp_down", lambda v: float(v) * 1e-6),
        "pulse.sharpness": ("pulse_sharpness", float),
        "pulse.target_phase": ("target_phase", float),
        "propagator.placement": ("window_placement", str),
        "propagator.coupling": ("window_coupling", str),
        "propagator.tolerance": ("local_error_tolerance", float),
        "output.samples": ("record_samples", int),
        "output.beam_splitter_pair": ("beam_splitter_pair", lambda v: tuple(
            int(x) for x in v.split(","))),
    }
    for key, value in entries.items():
        if key not in converters:
            raise ScenarioError(f"unknown config key {key!r}")
        target, conv = converters[key]
        try:
            kwargs[target] = conv(value)
        except ValueError as exc:
            raise ScenarioError(f"bad value for {key}: {value!r}") from exc
    return ScenarioConfig(**kwargs)


def parse_config_file(path: str | Path) -> ScenarioConfig:
    p = Path(path)
    return parse_config_text(p.read_text(), name=p.stem)


def output_directory(explicit: str | None = None) -> Path:
    """Resolve the output directory: flag, PHONONDD_OUT, or cwd."""
    if explicit:
        return Path(explicit)
    return Path(os.environ.get("PHONONDD_OUT", "."))
