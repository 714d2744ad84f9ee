"""Command-line harness: generate scenarios, run simulations, sweep matrices.

Reports go to files or stdout; diagnostics go to stderr.  Exit codes: 0
success, 1 partial sweep failure or I/O trouble, 2 configuration errors,
3 data errors.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import click

from .admission import PRESET_ALPHAS, AdmissionPolicy
from .errors import (
    ConfigError,
    DataError,
    GridMismatch,
    InvalidProfile,
    InvariantViolation,
    ManifestError,
    ParseError,
    QuantileUnavailable,
)
from .power import PowerModel
from .scenario import (
    DEFAULT_FORECAST_CADENCE,
    DEFAULT_HORIZON_STEPS,
    DEFAULT_START,
    DEFAULT_STEP,
    SITE_PROFILES,
    WORKLOAD_KINDS,
    SiteProfile,
    build_scenario,
    save_scenario,
)
from .simulator import MatrixCellResult, RunMetrics, SimulationConfig, run_matrix
from .simulator import run as run_simulation

EXIT_PARTIAL = 1
EXIT_CONFIG = 2
EXIT_DATA = 3

_DATA_ERRORS = (
    DataError,
    ParseError,
    ManifestError,
    GridMismatch,
    InvariantViolation,
    QuantileUnavailable,
    InvalidProfile,
)

POLICY_CHOICES = [
    "optimal-no-ree",
    "optimal-ree-aware",
    "naive",
    "cucumber",
    *PRESET_ALPHAS,
]

CSV_COLUMNS = [
    "fingerprint",
    "scenario",
    "policy",
    "alpha",
    "seed",
    "requests_total",
    "accepted",
    "acceptance_rate",
    "ree_energy_j",
    "grid_energy_j",
    "ree_coverage",
    "deadline_misses",
    "error",
]


def _fail(code: int, message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _policy_from_flags(name: str, alpha: float | None) -> AdmissionPolicy:
    if name in PRESET_ALPHAS and alpha is not None:
        raise ConfigError(f"policy preset {name!r} fixes alpha; drop --alpha")
    return AdmissionPolicy.from_name(name, alpha)


def _cell_dict(config: SimulationConfig, scenario_label: str) -> dict:
    return {
        "scenario": scenario_label,
        "policy": config.policy.kind,
        "alpha": config.policy.alpha,
        "seed": config.seed,
        "sample_count": config.sample_count,
        "reduction_alpha": config.reduction_alpha,
        "p_static": config.power_model.p_static,
        "p_max": config.power_model.p_max,
        "step_duration": config.step_duration,
        "horizon_steps": config.horizon_steps,
        "forecast_refresh": config.forecast_refresh,
        "perfect_forecasts": config.perfect_forecasts,
    }


def _fingerprint(cell: dict) -> str:
    canonical = json.dumps(cell, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:12]


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _rows_to_csv(rows: list[dict]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow([_format_cell(row.get(column)) for column in CSV_COLUMNS])
    return buffer.getvalue()


def _result_row(result: MatrixCellResult, scenario_label: str) -> dict:
    cell = _cell_dict(result.config, scenario_label)
    row = {
        "fingerprint": _fingerprint(cell),
        "scenario": scenario_label,
        "policy": result.config.policy.label(),
        "alpha": result.config.policy.alpha,
        "seed": result.config.seed,
        "error": result.error,
    }
    if result.metrics is not None:
        row.update(result.metrics.summary())
    return row


def _result_json(result: MatrixCellResult, scenario_label: str) -> dict:
    cell = _cell_dict(result.config, scenario_label)
    return {
        "config": cell,
        "fingerprint": _fingerprint(cell),
        "metrics": result.metrics.to_dict() if result.metrics is not None else None,
        "error": result.error,
    }


def _emit(text: str, out: str | None) -> None:
    if out is None:
        click.echo(text, nl=False)
    else:
        Path(out).write_text(text)


def _write_plot_data(metrics: RunMetrics, directory: str) -> None:
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    steps = metrics.steps
    with open(root / "accepted_per_hour.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["hour_start", "accepted"])
        if steps is not None:
            start = steps.grid.start
            hours = int((steps.grid.end - start) // 3600)
            counts = [0] * max(hours, 1)
            for record in metrics.jobs:
                if record.accepted:
                    bucket = int((record.arrival - start) // 3600)
                    if 0 <= bucket < len(counts):
                        counts[bucket] += 1
            for k, count in enumerate(counts):
                ts = datetime.fromtimestamp(start + 3600 * k, tz=timezone.utc)
                writer.writerow([ts.isoformat(), count])
    with open(root / "power_trace.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["timestamp", "production_w", "baseload_w", "job_w", "job_ree_w", "job_grid_w"]
        )
        if steps is not None:
            dt = steps.grid.step
            for i in range(steps.grid.num_steps):
                ts = datetime.fromtimestamp(steps.grid.start + dt * i, tz=timezone.utc)
                writer.writerow(
                    [
                        ts.isoformat(),
                        repr(float(steps.production_w[i])),
                        repr(float(steps.baseload_w[i])),
                        repr(float(steps.job_energy_j[i] / dt)),
                        repr(float(steps.job_ree_j[i] / dt)),
                        repr(float(steps.job_grid_j[i] / dt)),
                    ]
                )


def _summary_table(rows: list[dict]) -> str:
    header = f"{'scenario':<32} {'policy':<24} {'accept%':>8} {'ree%':>7} {'misses':>7}"
    lines = [header, "-" * len(header)]
    for row in rows:
        if row.get("error"):
            lines.append(f"{row['scenario']:<32} {row['policy']:<24} failed: {row['error']}")
            continue
        rate = row.get("acceptance_rate")
        coverage = row.get("ree_coverage")
        lines.append(
            f"{row['scenario']:<32} {row['policy']:<24} "
            f"{'' if rate is None else format(100 * rate, '.1f'):>8} "
            f"{'' if coverage is None else format(100 * coverage, '.1f'):>7} "
            f"{row.get('deadline_misses', ''):>7}"
        )
    return "\n".join(lines) + "\n"


@click.group()
@click.version_option()
def main() -> None:
    """Renewable-aware admission control simulator."""


@main.command()
@click.option("--site", type=click.Choice(sorted(SITE_PROFILES)), default="cape-town-like",
              show_default=True, help="Solar site preset.")
@click.option("--kind", type=click.Choice(list(WORKLOAD_KINDS)), default="relaxed",
              show_default=True, help="Workload kind: next-midnight or short deadlines.")
@click.option("--days", type=int, default=3, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True, envvar="CUCUMBER_SIM_SEED")
@click.option("--requests-per-day", type=int, default=None,
              help="Workload requests per simulated day (kind-specific default).")
@click.option("--peak-watts", type=float, default=None, help="Override panel peak production.")
@click.option("--step-seconds", type=float, default=DEFAULT_STEP, show_default=True)
@click.option("--horizon-steps", type=int, default=DEFAULT_HORIZON_STEPS, show_default=True)
@click.option("--forecast-cadence", type=float, default=DEFAULT_FORECAST_CADENCE,
              show_default=True, help="Seconds between issued forecasts.")
@click.option("--start-time", type=float, default=DEFAULT_START, show_default=True,
              help="Run start, seconds since epoch UTC.")
@click.option("--out-dir", required=True, type=click.Path(), help="Scenario directory to write.")
def generate(site, kind, days, seed, requests_per_day, peak_watts, step_seconds,
             horizon_steps, forecast_cadence, start_time, out_dir) -> None:
    """Generate a synthetic scenario directory."""
    try:
        profile = SITE_PROFILES[site]
        if peak_watts is not None:
            profile = SiteProfile(profile.daylight_hours, profile.sunshine_hours, peak_watts)
        scenario = build_scenario(
            name=f"{kind}-{site}",
            kind=kind,
            site_profile=profile,
            days=days,
            seed=seed,
            requests_per_day=requests_per_day,
            start_time=start_time,
            step_duration=step_seconds,
            horizon_steps=horizon_steps,
            forecast_cadence=forecast_cadence,
        )
        save_scenario(scenario, out_dir)
    except ConfigError as exc:
        _fail(EXIT_CONFIG, str(exc))
    except _DATA_ERRORS as exc:
        _fail(EXIT_DATA, str(exc))
    except OSError as exc:
        _fail(EXIT_PARTIAL, f"cannot write scenario: {exc}")
    click.echo(f"wrote scenario {out_dir}", err=True)


def _build_config(scenario_dir, policy, alpha, seed, sample_count, p_static, p_max,
                  step_seconds, horizon_steps, refresh_seconds, perfect_forecasts,
                  reduction_alpha=0.5) -> SimulationConfig:
    return SimulationConfig(
        policy=_policy_from_flags(policy, alpha),
        scenario_dir=str(scenario_dir),
        power_model=PowerModel(p_static, p_max),
        step_duration=step_seconds,
        horizon_steps=horizon_steps,
        forecast_refresh=refresh_seconds,
        sample_count=sample_count,
        reduction_alpha=reduction_alpha,
        seed=seed,
        perfect_forecasts=perfect_forecasts,
    )


@main.command(name="run")
@click.argument("scenario_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--policy", type=click.Choice(POLICY_CHOICES), required=True)
@click.option("--alpha", type=float, default=None, help="Cucumber confidence level in (0, 1).")
@click.option("--sample-count", type=int, default=1000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True, envvar="CUCUMBER_SIM_SEED")
@click.option("--p-static", type=float, default=30.0, show_default=True)
@click.option("--p-max", type=float, default=180.0, show_default=True)
@click.option("--step-seconds", type=float, default=DEFAULT_STEP, show_default=True)
@click.option("--horizon-steps", type=int, default=DEFAULT_HORIZON_STEPS, show_default=True)
@click.option("--refresh-seconds", type=float, default=600.0, show_default=True)
@click.option("--perfect-forecasts", is_flag=True, default=False,
              help="Feed the policy the actuals instead of issued forecasts.")
@click.option("--out", type=click.Path(), default=None, help="Report file (default: stdout).")
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="json",
              show_default=True)
@click.option("--plot-data", type=click.Path(), default=None,
              help="Directory for tidy per-hour and per-step CSVs.")
def run_cmd(scenario_dir, policy, alpha, sample_count, seed, p_static, p_max, step_seconds,
            horizon_steps, refresh_seconds, perfect_forecasts, out, fmt, plot_data) -> None:
    """Run one simulation and write its metrics report."""
    try:
        config = _build_config(scenario_dir, policy, alpha, seed, sample_count, p_static,
                               p_max, step_seconds, horizon_steps, refresh_seconds,
                               perfect_forecasts)
        metrics = run_simulation(config)
    except ConfigError as exc:
        _fail(EXIT_CONFIG, str(exc))
    except _DATA_ERRORS as exc:
        _fail(EXIT_DATA, str(exc))

    label = Path(scenario_dir).name
    result = MatrixCellResult(config, metrics)
    try:
        if fmt == "csv":
            _emit(_rows_to_csv([_result_row(result, label)]), out)
        else:
            _emit(json.dumps(_result_json(result, label), indent=2, sort_keys=True) + "\n", out)
        if plot_data is not None:
            _write_plot_data(metrics, plot_data)
    except OSError as exc:
        _fail(EXIT_PARTIAL, f"cannot write report: {exc}")


@main.command()
@click.argument("matrix_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--scenario-root", type=click.Path(), default=".", show_default=True,
              help="Base directory for relative scenario paths in the matrix.")
@click.option("--jobs", type=int, default=1, show_default=True,
              help="Concurrent runs; 1 keeps log order reproducible.")
@click.option("--seed", type=int, default=0, show_default=True, envvar="CUCUMBER_SIM_SEED",
              help="Default seed for cells that do not set one.")
@click.option("--sample-count", type=int, default=1000, show_default=True)
@click.option("--p-static", type=float, default=30.0, show_default=True)
@click.option("--p-max", type=float, default=180.0, show_default=True)
@click.option("--step-seconds", type=float, default=DEFAULT_STEP, show_default=True)
@click.option("--horizon-steps", type=int, default=DEFAULT_HORIZON_STEPS, show_default=True)
@click.option("--refresh-seconds", type=float, default=600.0, show_default=True)
@click.option("--out", type=click.Path(), default=None, help="Combined report file.")
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv",
              show_default=True)
def sweep(matrix_file, scenario_root, jobs, seed, sample_count, p_static, p_max,
          step_seconds, horizon_steps, refresh_seconds, out, fmt) -> None:
    """Run every cell of a matrix config and print a summary table."""
    try:
        cells = json.loads(Path(matrix_file).read_text())
        if not isinstance(cells, list) or not cells:
            raise ConfigError(f"{matrix_file}: matrix must be a non-empty JSON list of cells")
        configs: list[SimulationConfig] = []
        labels: list[str] = []
        seen: set[str] = set()
        for i, cell in enumerate(cells):
            if not isinstance(cell, dict) or "scenario" not in cell or "policy" not in cell:
                raise ConfigError(f"{matrix_file}: cell {i} needs 'scenario' and 'policy'")
            config = _build_config(
                Path(scenario_root) / cell["scenario"],
                cell["policy"],
                cell.get("alpha"),
                int(cell.get("seed", seed)),
                int(cell.get("sample_count", sample_count)),
                float(cell.get("p_static", p_static)),
                float(cell.get("p_max", p_max)),
                float(cell.get("step_duration", step_seconds)),
                int(cell.get("horizon_steps", horizon_steps)),
                float(cell.get("forecast_refresh", refresh_seconds)),
                bool(cell.get("perfect_forecasts", False)),
            )
            fingerprint = _fingerprint(_cell_dict(config, cell["scenario"]))
            if fingerprint in seen:
                click.echo(f"warning: duplicate cell {i} ({cell['scenario']}, "
                           f"{config.policy.label()}) skipped", err=True)
                continue
            seen.add(fingerprint)
            configs.append(config)
            labels.append(cell["scenario"])
    except json.JSONDecodeError as exc:
        _fail(EXIT_CONFIG, f"{matrix_file}: invalid JSON: {exc}")
    except ConfigError as exc:
        _fail(EXIT_CONFIG, str(exc))

    results = run_matrix(configs, jobs=jobs)
    rows = [_result_row(result, label) for result, label in zip(results, labels)]
    for result, label in zip(results, labels):
        if result.failed:
            click.echo(f"cell failed ({label}, {result.config.policy.label()}): "
                       f"{result.error}", err=True)
    try:
        if out is not None or fmt == "json":
            payload = (
                _rows_to_csv(rows)
                if fmt == "csv"
                else json.dumps(
                    {"cells": [_result_json(r, l) for r, l in zip(results, labels)]},
                    indent=2,
                    sort_keys=True,
                )
                + "\n"
            )
            if out is None:
                _emit(payload, None)
            else:
                Path(out).write_text(payload)
    except OSError as exc:
        _fail(EXIT_PARTIAL, f"cannot write report: {exc}")
    if out is not None or fmt == "csv":
        click.echo(_summary_table(rows), nl=False)
    if any(result.failed for result in results):
        sys.exit(EXIT_PARTIAL)


@main.command()
@click.argument("report_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--format", "fmt", type=click.Choice(["csv", "table"]), default="table",
              show_default=True)
@click.option("--out", type=click.Path(), default=None)
def report(report_file, fmt, out) -> None:
    """Re-render a JSON report produced by run or sweep."""
    try:
        payload = json.loads(Path(report_file).read_text())
    except json.JSONDecodeError as exc:
        _fail(EXIT_DATA, f"{report_file}: invalid JSON: {exc}")
    entries = payload["cells"] if isinstance(payload, dict) and "cells" in payload else [payload]
    rows = []
    for entry in entries:
        config = entry.get("config", {})
        metrics = entry.get("metrics") or {}
        alpha = config.get("alpha")
        policy = config.get("policy", "")
        rows.append(
            {
                "fingerprint": entry.get("fingerprint"),
                "scenario": config.get("scenario"),
                "policy": f"cucumber(alpha={alpha:g})" if policy == "cucumber" else policy,
                "alpha": alpha,
                "seed": config.get("seed"),
                "error": entry.get("error"),
                **{k: metrics.get(k) for k in (
                    "requests_total", "accepted", "acceptance_rate", "ree_energy_j",
                    "grid_energy_j", "ree_coverage", "deadline_misses",
                )},
            }
        )
    text = _rows_to_csv(rows) if fmt == "csv" else _summary_table(rows)
    try:
        _emit(text, out)
    except OSError as exc:
        _fail(EXIT_PARTIAL, f"cannot write report: {exc}")


if __name__ == "__main__":
    main()
