"""Command-line entry point: simulate, describe, and study subcommands.

``simulate`` runs the configured experiment (block evolution, or a static
trial-state positivity check in ansatz mode) and writes the artifact
files.  ``describe`` prints the resolved configuration, stability bounds,
and work estimates without computing anything.  ``study`` runs the
width sweep.  Exit codes: 0 for a clean run, 2 when a positivity
violation was detected (a finding, not a failure), 1 for configuration
errors or numerical breakdown.
"""

from __future__ import annotations

import argparse
import os
import sys

from .phase_space import NumericalBreakdownError, PhaseSpaceError
from .hybrid import diagnose
from .collapse import (
    ENTROPY_DROP_TOL,
    MeasurementScenario,
    ansatz_correlated,
    catalog_points,
    catalog_trajectories,
    collapsed_state,
    delta_limit_study,
    detect_violation,
    run_measurement,
)
from .config import ConfigError, RunConfig, describe, parse_config
from . import output

__all__ = ["main", "run"]

EXIT_CLEAN = 0
EXIT_BREAKDOWN = 1
EXIT_VIOLATION = 2


def _emit(path_parts, writer, *args) -> None:
    path = os.path.join(*path_parts)
    try:
        writer(path, *args)
    except OSError as exc:
        raise NumericalBreakdownError(f"cannot write {path}: {exc}") from exc


def _snapshot_hook(config: RunConfig):
    """Per-branch snapshot writer honoring the configured cadence."""

    if config.snapshot_cadence == 0:
        return None, None
    counters: dict[str, int] = {}
    pending: dict[str, tuple] = {}

    def hook(branch, t, state, diag):
        k = counters.get(branch, 0)
        counters[branch] = k + 1
        pending[branch] = (t, state)
        if config.snapshot_cadence > 0 and k % config.snapshot_cadence == 0:
            name = f"snapshot_{branch}_{k:06d}.txt"
            _emit((config.directory, name), output.write_state_snapshot, state, t)

    def finish():
        if config.snapshot_cadence == -1:
            for branch, (t, state) in sorted(pending.items()):
                name = f"snapshot_{branch}_final.txt"
                _emit((config.directory, name), output.write_state_snapshot, state, t)

    return hook, finish


def _print_report(report, stream=None) -> None:
    if stream is None:
        stream = sys.stdout
    if report.found:
        stream.write(
            f"positivity violation: onset t={report.onset_time!r} at "
            f"(q={report.onset_q!r}, p={report.onset_p!r}), "
            f"worst eigenvalue {report.worst_value!r} "
            f"(threshold {report.threshold!r})\n"
        )
    else:
        stream.write(
            f"no positivity violation (worst eigenvalue {report.worst_value!r}, "
            f"threshold {report.threshold!r})\n"
        )


def _run_evolve(config: RunConfig) -> int:
    scenario = config.scenario()
    hook, finish = _snapshot_hook(config)
    run = run_measurement(scenario, config.tol_psd, on_sample=hook)
    if finish is not None:
        finish()
    if config.emit_diagnostics:
        _emit((config.directory, config.emit_diagnostics),
              output.write_diagnostics_csv, run.diagnostics)
        if run.projected:
            _emit((config.directory, "projected_" + config.emit_diagnostics),
                  output.write_diagnostics_csv, run.projected)
    if config.emit_violation:
        _emit((config.directory, config.emit_violation),
              output.write_violation_csv, run.report)
    if config.emit_margins:
        _emit((config.directory, config.emit_margins),
              output.write_margins_csv, run.report)
    drop = run.max_entropy_drop
    if drop > ENTROPY_DROP_TOL:
        sys.stderr.write(
            f"warning: quantum-marginal entropy decreased by {drop!r} during the run\n"
        )
    _print_report(run.report)
    sys.stdout.write(f"final purity ratio: {run.final_purity_ratio!r}\n")
    return EXIT_VIOLATION if run.report.found else EXIT_CLEAN


def _build_ansatz_state(config: RunConfig, scenario: MeasurementScenario):
    t = config.ansatz_time
    if config.ansatz == "correlated":
        points = catalog_points(scenario, t)
        return ansatz_correlated(scenario.amplitudes, points,
                                 scenario.sigma_q, scenario.sigma_p,
                                 scenario.grid, scenario.hbar)
    trajectories = catalog_trajectories(scenario, t)
    return collapsed_state(scenario.amplitudes, trajectories, t,
                           scenario.sigma_q, scenario.sigma_p,
                           scenario.grid, scenario.hbar)


def _run_ansatz(config: RunConfig) -> int:
    scenario = config.scenario()
    state = _build_ansatz_state(config, scenario)
    diag = diagnose(state, config.ansatz_time)
    report = detect_violation([diag], config.tol_psd)
    if config.emit_diagnostics:
        _emit((config.directory, config.emit_diagnostics),
              output.write_diagnostics_csv, [diag])
    if config.emit_violation:
        _emit((config.directory, config.emit_violation),
              output.write_violation_csv, report)
    if config.emit_margins:
        _emit((config.directory, config.emit_margins),
              output.write_margins_csv, report)
    if config.snapshot_cadence != 0:
        _emit((config.directory, f"snapshot_{config.ansatz}_ansatz.txt"),
              output.write_state_snapshot, state, config.ansatz_time)
    _print_report(report)
    return EXIT_VIOLATION if report.found else EXIT_CLEAN


def _run_study(config: RunConfig) -> int:
    if not config.sigma_list:
        sys.stderr.write("error: study needs a sigma_list in [run]\n")
        return EXIT_BREAKDOWN
    scenario = config.scenario()
    study = delta_limit_study(scenario, config.sigma_list,
                              config.tol_psd, config.grid_cap)
    if config.emit_study:
        _emit((config.directory, config.emit_study), output.write_study_csv, study)
    sys.stdout.write(output.STUDY_HEADER + "\n")
    for row in study.rows:
        sys.stdout.write(
            f"{row.sigma!r},{row.onset_time!r},{row.half_time!r},{study.fit_exponent!r}\n"
        )
    for skip in study.skipped:
        sys.stderr.write(f"warning: sigma={skip.sigma!r} skipped: {skip.reason}\n")
    return EXIT_CLEAN


def run(config: RunConfig) -> int:
    """Execute a validated configuration; returns the process exit code."""

    os.makedirs(config.directory, exist_ok=True)
    for notice in config.notices:
        sys.stderr.write(f"notice: {notice}\n")
    if config.mode == "study":
        return _run_study(config)
    if config.mode == "ansatz":
        return _run_ansatz(config)
    return _run_evolve(config)


def _load_config(path: str) -> RunConfig:
    try:
        with open(path) as stream:
            text = stream.read()
    except OSError as exc:
        raise ConfigError([f"cannot read {path}: {exc}"]) from exc
    return parse_config(text)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="hybridqc",
        description=("Hybrid quantum-classical measurement simulator: block "
                     "evolution on a phase-space grid with pointwise "
                     "positivity certificates."),
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for command, help_text in (
        ("simulate", "run the configured experiment and write artifacts"),
        ("describe", "print the resolved configuration and work estimates"),
        ("study", "run the width sweep toward the point-particle limit"),
    ):
        p = sub.add_parser(command, help=help_text)
        p.add_argument("config", help="path to an INI-style run configuration")
    args = parser.parse_args(argv)

    try:
        config = _load_config(args.config)
    except ConfigError as exc:
        sys.stderr.write("configuration errors:\n")
        for error in exc.errors:
            sys.stderr.write(f"  - {error}\n")
        return EXIT_BREAKDOWN

    try:
        if args.command == "describe":
            sys.stdout.write(describe(config))
            return EXIT_CLEAN
        if args.command == "study":
            os.makedirs(config.directory, exist_ok=True)
            for notice in config.notices:
                sys.stderr.write(f"notice: {notice}\n")
            return _run_study(config)
        return run(config)
    except (NumericalBreakdownError, PhaseSpaceError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_BREAKDOWN


if __name__ == "__main__":
    sys.exit(main())
