"""Command line harness: scenario runs, sweeps, reports, pulse export.

Exit codes: 0 when everything passed, 1 when a stored tolerance failed,
2 on configuration or propagation errors.  Output lands in --out, the
PHONONDD_OUT environment variable, or the working directory.
"""

from __future__ import annotations

import math
import sys
from pathlib import Path

import click

from .pulses import (
    PulseDesignError,
    TrapParams,
    design_pulse,
    waveform_table,
)
from .scenarios import (
    ScenarioError,
    emit_report,
    execute_scenario,
    get_scenario,
    load_reference_values,
    output_directory,
    parse_config_file,
    populations_csv,
    records_csv,
    scenario_catalog,
    sweep as run_sweep,
)


@click.group()
def main() -> None:
    """Phonon hopping decoupling toolkit."""


def _resolve(token: str):
    path = Path(token)
    if path.suffix and path.exists():
        return parse_config_file(path)
    return get_scenario(token)


@main.command()
@click.argument("scenario")
@click.option("--out", default=None, help="Output directory for CSV files.")
@click.option("--full-populations", is_flag=True,
              help="Dump every basis state column instead of the filtered set.")
def run(scenario: str, out: str | None, full_populations: bool) -> None:
    """Run a catalog scenario or a key=value config file."""
    try:
        cfg = _resolve(scenario)
        record, result = execute_scenario(cfg)
    except ScenarioError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    out_dir = output_directory(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / f"{cfg.name}_populations.csv").write_text(
        populations_csv(result, cfg, full=full_populations))
    (out_dir / f"{cfg.name}_result.csv").write_text(records_csv([record]))
    metric = record.error_EB if record.error_EB is not None else record.error_E
    click.echo(f"{cfg.name}: error={metric:.6e} norm_drift={record.norm_drift:.2e}"
               f" leakage={record.boundary_leakage:.2e}"
               f" wall={record.wall_time:.1f}s")
    references = load_reference_values()["metrics"]
    if cfg.name in references:
        text, ok = emit_report([record])
        click.echo(text.splitlines()[1])
        sys.exit(0 if ok else 1)


@main.command()
@click.argument("scenario")
@click.option("--axis", required=True,
              type=click.Choice(["n_r", "d", "T_P", "n_max"]))
@click.option("--values", required=True,
              help="Comma separated values; d in um, T_P in us.")
@click.option("--out", default=None)
def sweep(scenario: str, axis: str, values: str, out: str | None) -> None:
    """Re-run a scenario along one axis and tabulate the errors."""
    try:
        cfg = _resolve(scenario)
        raw = [v.strip() for v in values.split(",") if v.strip()]
        if axis in ("n_r", "n_max"):
            parsed = [int(v) for v in raw]
        elif axis == "d":
            parsed = [float(v) * 1e-6 for v in raw]
        else:
            parsed = [float(v) * 1e-6 for v in raw]
        records = run_sweep(cfg, axis, parsed)
    except (ScenarioError, ValueError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    out_dir = output_directory(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    text = records_csv(records)
    (out_dir / f"{cfg.name}_sweep_{axis}.csv").write_text(text)
    click.echo(text, nl=False)
    if any(rec.failure for rec in records):
        sys.exit(2)


@main.command()
def catalog() -> None:
    """List the built-in scenarios."""
    click.echo("name     modes  spacing_um  n_max  n_r  model   schedule")
    for cfg in scenario_catalog():
        kind = "protected" if cfg.protected_set else "concatenated"
        click.echo(f"{cfg.name:<8} {cfg.mode_count:>5}  {cfg.spacing * 1e6:>10.1f}"
                   f"  {cfg.per_mode_cutoff:>5}  {cfg.repetitions:>3}"
                   f"  {cfg.pulse_model:<6}  {kind}")


@main.command()
@click.option("--scenarios", default=None,
              help="Comma separated subset; default is the whole catalog.")
@click.option("--out", default=None)
def report(scenarios: str | None, out: str | None) -> None:
    """Run scenarios and compare against the stored reference values."""
    names = ([s.strip() for s in scenarios.split(",") if s.strip()]
             if scenarios else [cfg.name for cfg in scenario_catalog()])
    records = []
    try:
        for name in names:
            record, _ = execute_scenario(get_scenario(name))
            click.echo(f"ran {name}: "
                       f"{record.error_EB if record.error_EB is not None else record.error_E:.6e}")
            records.append(record)
    except ScenarioError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    text, ok = emit_report(records)
    out_dir = output_directory(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.csv").write_text(text)
    click.echo(text, nl=False)
    sys.exit(0 if ok else 1)


@main.group()
def pulse() -> None:
    """Trap modulation pulse design."""


@pulse.command("design")
@click.option("--tp-us", required=True, type=float, help="Pulse duration in us.")
@click.option("--tud-us", default=None, type=float,
              help="Ramp duration in us (both ramps); default half the pulse.")
@click.option("--sigma", default=6.0, type=float, help="Ramp sharpness.")
@click.option("--omega0-mhz", default=2.2, type=float,
              help="Secular frequency over 2 pi, in MHz.")
@click.option("--target-phase", default=math.pi, type=float,
              help="Phase excess to imprint, radians.")
@click.option("--export", default=None, type=click.Path(),
              help="Write the sampled waveform (with voltages) to this CSV.")
def pulse_design(tp_us: float, tud_us: float | None, sigma: float,
                 omega0_mhz: float, target_phase: float,
                 export: str | None) -> None:
    """Solve the modulation depth for a pi phase shift pulse."""
    w0 = 2.0 * math.pi * omega0_mhz * 1e6
    tp = tp_us * 1e-6
    ramp = tud_us * 1e-6 if tud_us is not None else 0.5 * tp
    try:
        shaped = design_pulse(tp, ramp, ramp, sigma, w0, target_phase)
    except PulseDesignError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    click.echo(f"depth k = {shaped.params.depth:.6f}")
    click.echo(f"achieved phase = {shaped.achieved_phase():.9f} rad"
               f" (target {target_phase:.9f})")
    click.echo(f"peak excursion = {shaped.peak_excursion() / (2e3 * math.pi):.3f} kHz")
    if export:
        trap = TrapParams()
        try:
            text = waveform_table(shaped, trap)
        except PulseDesignError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(2)
        Path(export).write_text(text)
        click.echo(f"waveform written to {export}")


if __name__ == "__main__":
    main()
