"""Hybrid quantum-classical dynamics on a phase-space grid.

A desk-scale simulator for the coupled evolution of a finite-level
quantum system and a classical phase-space density.  The composite state
is a matrix of phase-space fields evolved block by block (phase rotation
plus semi-Lagrangian transport), with pointwise positivity certificates
that exhibit how requiring non-negativity of the composite state forces
collapse during a measurement.
"""

from . import backend  # noqa: F401  (must run first: sets thread env before JIT import)
from .backend import NUMBA_ENABLED, backend_name, thread_count
from .phase_space import (
    ClassicalDensity,
    ClassicalHamiltonian,
    NumericalBreakdownError,
    PhaseGrid,
    PhaseSpaceError,
    Trajectory,
    evolve_classical,
    flow_trajectory,
    gaussian_state,
    liouville_step,
    make_grid,
    mean_observable,
    mean_observable_trace_form,
)
from .quantum import (
    MeasuredObservable,
    QuantumDensity,
    QuantumStateError,
    min_eigenvalue,
    pure_from_amplitudes,
    purity,
    von_neumann_entropy,
)
from .hybrid import (
    Diagnostics,
    HybridState,
    HybridStepper,
    StabilityBounds,
    hybrid_step,
    block_integrals,
    classical_marginal,
    diagnose,
    evolve,
    hybrid_purity,
    pointwise_min_eigenvalue,
    product_state,
    quantum_marginal,
    stability_bounds,
)
from .collapse import (
    DeltaLimitStudy,
    MeasurementRun,
    MeasurementScenario,
    ViolationReport,
    ansatz_correlated,
    build_initial,
    catalog_points,
    catalog_trajectories,
    collapse_project,
    collapsed_state,
    decoherence_curve,
    delta_limit_study,
    detect_violation,
    run_measurement,
)
from .config import ConfigError, RunConfig, describe, parse_config

__version__ = "0.1.0"

__all__ = [
    "NUMBA_ENABLED", "backend_name", "thread_count",
    "PhaseGrid", "make_grid", "ClassicalDensity", "gaussian_state",
    "ClassicalHamiltonian", "mean_observable", "mean_observable_trace_form",
    "liouville_step", "evolve_classical", "flow_trajectory", "Trajectory",
    "PhaseSpaceError", "NumericalBreakdownError",
    "QuantumDensity", "QuantumStateError", "MeasuredObservable",
    "pure_from_amplitudes", "purity", "von_neumann_entropy", "min_eigenvalue",
    "HybridState", "HybridStepper", "StabilityBounds", "product_state",
    "hybrid_step", "evolve", "diagnose", "Diagnostics",
    "stability_bounds", "block_integrals", "quantum_marginal",
    "classical_marginal", "pointwise_min_eigenvalue", "hybrid_purity",
    "MeasurementScenario", "MeasurementRun", "ViolationReport",
    "DeltaLimitStudy", "build_initial", "catalog_points",
    "catalog_trajectories", "ansatz_correlated", "collapsed_state",
    "collapse_project", "detect_violation", "decoherence_curve",
    "run_measurement", "delta_limit_study",
    "RunConfig", "ConfigError", "parse_config", "describe",
]
