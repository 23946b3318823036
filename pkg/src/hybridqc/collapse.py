"""Measurement scenarios: violation detection, collapse, and the width sweep.

A measurement couples a d-level system (observable eigenvalues v_i) to a
classical pointer through a product interaction.  Starting from an
uncorrelated state, the block dynamics separates the diagonal packets
(one per eigenvalue) while the coherence blocks stay behind and dephase.
The composite state then fails pointwise positivity: the node matrices
acquire negative eigenvalues wherever coherence outweighs the geometric
mean of the separated diagonal packets.  Requiring non-negativity forces
the off-diagonal blocks to die -- the collapse.  This module provides:

* trial-state builders: the correlated form (each block a Gaussian at its
  own phase-space point) and the collapsed form (diagonal-only mixture of
  packets riding the per-eigenvalue characteristics);
* :func:`detect_violation`, scanning an evolution's diagnostics for the
  first certified positivity failure;
* :func:`collapse_project`, the projection that zeroes the coherence
  blocks (idempotent, never decreases the pointwise minimum eigenvalue);
* :func:`run_measurement`, the full experiment: evolve, detect, project
  at onset, continue the projected branch, monitor entropy;
* :func:`delta_limit_study`, sweeping the regularization width toward the
  point-particle limit to show onset and decoherence times scaling with
  the width (collapse becomes instantaneous in the limit).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from .phase_space import (
    ClassicalHamiltonian,
    PhaseGrid,
    PhaseSpaceError,
    Trajectory,
    flow_trajectory,
    gaussian_state,
    make_grid,
)
from .quantum import MeasuredObservable, pure_from_amplitudes
from .hybrid import (
    Diagnostics,
    HybridState,
    evolve,
    product_state,
    stability_bounds,
)

__all__ = [
    "MeasurementScenario",
    "build_initial",
    "catalog_points",
    "catalog_trajectories",
    "ansatz_correlated",
    "collapsed_state",
    "trajectory_point",
    "ViolationReport",
    "detect_violation",
    "collapse_project",
    "decoherence_curve",
    "fit_gaussian_decay",
    "half_time_from_rate",
    "entropy_drop",
    "MeasurementRun",
    "run_measurement",
    "StudyRow",
    "StudySkip",
    "DeltaLimitStudy",
    "delta_limit_study",
]

DEFAULT_TOL_PSD = 1e-6        # violation threshold as a fraction of peak density
BOUNDARY_SIGMAS = 3.0         # required clearance between mass and domain edge
STUDY_PAD_SIGMAS = 10.0       # grid half-width padding beyond the trajectory extent
STUDY_POINTS_PER_SIGMA = 10.0
STUDY_GRID_FLOOR = 64
ENTROPY_DROP_TOL = 1e-3


# ---------------------------------------------------------------------------
# scenario
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MeasurementScenario:
    """Complete description of one measurement run."""

    amplitudes: np.ndarray
    observable: MeasuredObservable
    coupling: ClassicalHamiltonian
    q0: float
    p0: float
    sigma_q: float
    sigma_p: float
    grid: PhaseGrid
    dt: float
    t_final: float
    cadence: int = 1
    hbar: float = 1.0
    interpolation: str | None = None

    def __post_init__(self):
        c = np.asarray(self.amplitudes, dtype=np.complex128).ravel()
        if c.size != self.observable.dim:
            raise PhaseSpaceError(
                f"{c.size} amplitudes for a {self.observable.dim}-level observable"
            )
        norm2 = float(np.sum(np.abs(c) ** 2))
        if abs(norm2 - 1.0) > 1e-12:
            raise PhaseSpaceError(
                f"amplitudes must be normalized: sum |c_i|^2 = {norm2!r}"
            )
        c.setflags(write=False)
        object.__setattr__(self, "amplitudes", c)
        if not self.grid.contains(self.q0, self.p0):
            raise PhaseSpaceError(f"start point ({self.q0}, {self.p0}) outside the grid")
        if not (self.dt > 0.0 and np.isfinite(self.dt)):
            raise PhaseSpaceError(f"dt must be positive and finite, got {self.dt!r}")
        if self.t_final < 0.0 or not np.isfinite(self.t_final):
            raise PhaseSpaceError(f"t_final must be non-negative, got {self.t_final!r}")
        if self.cadence < 1:
            raise PhaseSpaceError(f"cadence must be >= 1, got {self.cadence}")

    @property
    def dim(self) -> int:
        return self.observable.dim

    def boundary_margin(self) -> tuple[float, float]:
        return (BOUNDARY_SIGMAS * self.sigma_q, BOUNDARY_SIGMAS * self.sigma_p)

    def check_span(self, t_final: float | None = None) -> None:
        """Verify every block's characteristic keeps clear of the boundary.

        Runs the per-pair point trajectories over the horizon and requires
        each to stay ``BOUNDARY_SIGMAS`` packet widths inside the domain,
        so the periodic wrap never contaminates a run that passes.
        """

        horizon = self.t_final if t_final is None else t_final
        if horizon == 0.0:
            trajectories = []
        else:
            trajectories = [
                pair_trajectory(self, i, j, horizon)
                for i in range(self.dim) for j in range(i, self.dim)
            ]
        margin_q, margin_p = self.boundary_margin()
        g = self.grid
        lo_q, hi_q = g.q_min + margin_q, g.q_max - margin_q
        lo_p, hi_p = g.p_min + margin_p, g.p_max - margin_p
        if not (lo_q <= self.q0 <= hi_q and lo_p <= self.p0 <= hi_p):
            raise PhaseSpaceError(
                f"start point ({self.q0}, {self.p0}) is within {BOUNDARY_SIGMAS} widths "
                f"of the domain boundary"
            )
        for traj in trajectories:
            q, p = traj.points[:, 0], traj.points[:, 1]
            if q.min() < lo_q or q.max() > hi_q or p.min() < lo_p or p.max() > hi_p:
                k = int(np.argmax((q < lo_q) | (q > hi_q) | (p < lo_p) | (p > hi_p)))
                raise PhaseSpaceError(
                    f"a transported packet center reaches ({q[k]:.4g}, {p[k]:.4g}) at "
                    f"t={traj.times[k]:.4g}, closer than {BOUNDARY_SIGMAS} widths to the "
                    f"boundary; enlarge the grid or shorten the horizon"
                )


def _trajectory_step(t_final: float) -> float:
    # Small enough for 1e-6-level accuracy of quadratic flows over t ~ O(1).
    return max(t_final / 100.0, min(1e-3, t_final))


def pair_trajectory(scenario: MeasurementScenario, i: int, j: int,
                    t_final: float, dt: float | None = None) -> Trajectory:
    """Characteristic followed by block (i, j): the eigenvalue-mean flow."""

    mean = float(scenario.observable.means[i, j])
    hamiltonian = scenario.coupling.scaled(mean)
    step = dt if dt is not None else _trajectory_step(t_final)
    return flow_trajectory(hamiltonian, scenario.q0, scenario.p0, t_final, step)


def catalog_trajectories(scenario: MeasurementScenario, t_final: float,
                         dt: float | None = None) -> list[Trajectory]:
    """Per-eigenvalue pointer characteristics (the diagonal-block flows)."""

    return [pair_trajectory(scenario, i, i, t_final, dt) for i in range(scenario.dim)]


def catalog_points(scenario: MeasurementScenario, t: float,
                   dt: float | None = None) -> np.ndarray:
    """(d, d, 2) table of block centers at time t.

    Block (i, j) rides the flow of the eigenvalue-mean coupling, so its
    center is the endpoint of that characteristic; the table is symmetric
    by construction.
    """

    d = scenario.dim
    points = np.empty((d, d, 2))
    for i in range(d):
        for j in range(i, d):
            if t == 0.0:
                q, p = scenario.q0, scenario.p0
            else:
                q, p = pair_trajectory(scenario, i, j, t, dt).final
            points[i, j] = points[j, i] = (q, p)
    return points


def build_initial(scenario: MeasurementScenario) -> HybridState:
    """Uncorrelated start: pure superposition (x) Gaussian pointer packet."""

    rho_qm = pure_from_amplitudes(scenario.amplitudes)
    rho_cm = gaussian_state(scenario.grid, scenario.q0, scenario.p0,
                            scenario.sigma_q, scenario.sigma_p)
    return product_state(rho_qm, rho_cm, scenario.hbar)


# ---------------------------------------------------------------------------
# trial states
# ---------------------------------------------------------------------------


def ansatz_correlated(amplitudes: Sequence[complex], points: np.ndarray,
                      sigma_q: float, sigma_p: float, grid: PhaseGrid,
                      hbar: float = 1.0) -> HybridState:
    """Correlated trial state: f[i,j] = c_i conj(c_j) * Gaussian at (q_ij, p_ij).

    ``points`` is a (d, d, 2) table of block centers and must be symmetric
    under (i, j) swap, which makes the result Hermitian by construction.
    """

    c = np.asarray(amplitudes, dtype=np.complex128).ravel()
    pts = np.asarray(points, dtype=np.float64)
    d = c.size
    if pts.shape != (d, d, 2):
        raise PhaseSpaceError(f"point table must have shape ({d}, {d}, 2), got {pts.shape}")
    if not np.array_equal(pts, pts.transpose(1, 0, 2)):
        raise PhaseSpaceError("asymmetric point table: (q_ij, p_ij) must equal (q_ji, p_ji)")
    norm = float(np.linalg.norm(c))
    if norm == 0.0:
        raise PhaseSpaceError("amplitudes are all zero")
    c = c / norm
    blocks = np.empty((d, d, *grid.shape), dtype=np.complex128)
    for i in range(d):
        for j in range(i, d):
            envelope = gaussian_state(grid, pts[i, j, 0], pts[i, j, 1],
                                      sigma_q, sigma_p).values
            blocks[i, j] = (c[i] * np.conj(c[j])) * envelope
            if i != j:
                blocks[j, i] = np.conj(blocks[i, j])
    return HybridState(grid, blocks, hbar)


def trajectory_point(trajectory: Trajectory, t: float) -> tuple[float, float]:
    """Linearly interpolated trajectory sample at time t (within its range)."""

    times = trajectory.times
    if t < times[0] - 1e-12 or t > times[-1] + 1e-12:
        raise PhaseSpaceError(
            f"t={t!r} outside the trajectory range [{times[0]!r}, {times[-1]!r}]"
        )
    q = float(np.interp(t, times, trajectory.points[:, 0]))
    p = float(np.interp(t, times, trajectory.points[:, 1]))
    return q, p


def collapsed_state(amplitudes: Sequence[complex], trajectories: Sequence[Trajectory],
                    t: float, sigma_q: float, sigma_p: float, grid: PhaseGrid,
                    hbar: float = 1.0) -> HybridState:
    """Diagonal-only mixture: weight |c_i|^2 Gaussians riding their own flows.

    This is the positivity-respecting end state of a measurement: packet i
    sits at trajectory i's position at time t, all coherence blocks are
    zero, so every node matrix is diagonal with non-negative entries.
    """

    c = np.asarray(amplitudes, dtype=np.complex128).ravel()
    d = c.size
    if len(trajectories) != d:
        raise PhaseSpaceError(f"need {d} trajectories, got {len(trajectories)}")
    norm = float(np.linalg.norm(c))
    if norm == 0.0:
        raise PhaseSpaceError("amplitudes are all zero")
    c = c / norm
    blocks = np.zeros((d, d, *grid.shape), dtype=np.complex128)
    for i in range(d):
        q_i, p_i = trajectory_point(trajectories[i], t)
        weight = float(np.abs(c[i]) ** 2)
        if weight > 0.0:
            blocks[i, i] = weight * gaussian_state(grid, q_i, p_i, sigma_q, sigma_p).values
    return HybridState(grid, blocks, hbar)


def collapse_project(state: HybridState) -> HybridState:
    """Zero every off-diagonal block and restore unit trace.

    Idempotent; never decreases the pointwise minimum eigenvalue, because
    each node's diagonal entries dominate its smallest eigenvalue.
    """

    d = state.dim
    blocks = np.zeros_like(state.blocks)
    for i in range(d):
        blocks[i, i] = np.clip(state.blocks[i, i].real, 0.0, None)
    total = sum(float(state.grid.quadrature(blocks[i, i]).real) for i in range(d))
    blocks /= total
    return HybridState(state.grid, blocks, state.hbar)


# ---------------------------------------------------------------------------
# violation detection
# ---------------------------------------------------------------------------


def _as_diagnostics(run: Iterable) -> list[Diagnostics]:
    out = []
    for item in run:
        if isinstance(item, Diagnostics):
            out.append(item)
        else:
            out.append(item[-1])
    return out


@dataclass(frozen=True)
class ViolationReport:
    """Outcome of scanning one evolution for positivity failure.

    ``onset_time`` is the first diagnostics tick whose minimum node
    eigenvalue fell below ``-threshold`` (None when the run stayed
    positive); ticks are not interpolated.  ``worst_value`` is the most
    negative minimum over the whole run, in density units.  The margin
    history tracks, per block pair, the worst geometric-mean defect
    max(|f_ij| - sqrt(f_ii f_jj)) at every tick: positive entries prove a
    negative node eigenvalue through the 2x2 minor test.
    """

    tol_psd: float            # relative tolerance this scan used
    threshold: float          # absolute eigenvalue threshold (density units)
    onset_time: float | None
    onset_q: float | None
    onset_p: float | None
    worst_value: float
    margin_times: np.ndarray
    margin_history: np.ndarray   # (n_ticks, d, d) pair defects

    def __post_init__(self):
        self.margin_times.setflags(write=False)
        self.margin_history.setflags(write=False)

    @property
    def found(self) -> bool:
        return self.onset_time is not None


def detect_violation(run: Iterable, tol_psd: float = DEFAULT_TOL_PSD) -> ViolationReport:
    """Scan evolution output for the first certified positivity failure.

    ``run`` is a sequence of Diagnostics or of (t, state, Diagnostics)
    tuples as produced by :func:`hybridqc.hybrid.evolve`.  The absolute
    threshold is ``tol_psd`` times the peak diagonal density at the first
    tick, which separates interpolation-level noise from genuine
    violations (coherence-sized negativity).
    """

    history = _as_diagnostics(run)
    if not history:
        raise PhaseSpaceError("cannot scan an empty diagnostics sequence")
    threshold = tol_psd * history[0].peak_density
    onset_time = onset_q = onset_p = None
    for diag in history:
        if diag.min_eig_raw < -threshold:
            onset_time = diag.t
            onset_q = diag.min_eig_q
            onset_p = diag.min_eig_p
            break
    worst = min(diag.min_eig_raw for diag in history)
    times = np.array([diag.t for diag in history])
    margins = np.stack([diag.pair_defect for diag in history])
    return ViolationReport(
        tol_psd=tol_psd,
        threshold=threshold,
        onset_time=onset_time,
        onset_q=onset_q,
        onset_p=onset_p,
        worst_value=worst,
        margin_times=times,
        margin_history=margins,
    )


# ---------------------------------------------------------------------------
# decoherence analysis
# ---------------------------------------------------------------------------


def decoherence_curve(run: Iterable, i: int = 0, j: int = 1) -> np.ndarray:
    """(n, 2) array of (t, |quad f_ij|(t) / |quad f_ij|(0)) samples."""

    if i == j:
        raise PhaseSpaceError("decoherence curve needs an off-diagonal pair (i != j)")
    history = _as_diagnostics(run)
    if not history:
        raise PhaseSpaceError("cannot scan an empty diagnostics sequence")
    initial = history[0].coherence(i, j)
    if initial <= 0.0:
        raise PhaseSpaceError(
            f"block ({i}, {j}) starts with zero coherence; the curve is undefined"
        )
    return np.array([[diag.t, diag.coherence(i, j) / initial] for diag in history])


def fit_gaussian_decay(curve: np.ndarray) -> float:
    """Least-squares rate a of -log(ratio) = a * t^2 through the origin.

    Samples with ratio outside (0.05, 1] are ignored: deep decay is
    quadrature-noise dominated and early overshoot above 1 is impossible
    for the model.
    """

    t = np.asarray(curve)[:, 0]
    ratio = np.asarray(curve)[:, 1]
    keep = (t > 0.0) & (ratio > 0.05) & (ratio <= 1.0)
    if not np.any(keep):
        raise PhaseSpaceError("no usable samples to fit a decay rate")
    y = -np.log(ratio[keep])
    t2 = t[keep] ** 2
    denom = float(np.sum(t2 * t2))
    if denom == 0.0:
        raise PhaseSpaceError("no usable samples to fit a decay rate")
    return float(np.sum(t2 * y) / denom)


def half_time_from_rate(rate: float) -> float:
    """Time at which exp(-rate * t^2) reaches one half (inf for rate <= 0)."""

    if rate <= 0.0:
        return math.inf
    return math.sqrt(math.log(2.0) / rate)


def entropy_drop(history: Sequence[Diagnostics]) -> float:
    """Largest tick-to-tick decrease of the marginal entropy (0 if monotone)."""

    entropies = np.array([diag.qm_entropy for diag in history])
    if entropies.size < 2:
        return 0.0
    drops = entropies[:-1] - entropies[1:]
    return float(max(0.0, drops.max()))


# ---------------------------------------------------------------------------
# full measurement experiment
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MeasurementRun:
    """Everything one measurement experiment produced.

    ``diagnostics`` traces the uninterrupted block evolution.  When that
    evolution certifiably lost positivity, ``report.onset_time`` marks the
    tick, ``onset_state`` is the state there, and ``projected`` traces the
    collapsed branch: the onset state with coherence blocks removed,
    evolved to the same horizon with the purity ratio still anchored to
    the original initial state.  The raw branch answers "what does the
    equation do"; the projected branch answers "what does the positive
    continuation look like" -- the state the positivity requirement forces.
    """

    scenario: MeasurementScenario
    report: ViolationReport
    diagnostics: list[Diagnostics]
    projected: list[Diagnostics] = field(default_factory=list)
    onset_state: HybridState | None = None
    final_state: HybridState | None = None
    projected_final_state: HybridState | None = None

    @property
    def final_purity_ratio(self) -> float:
        """Purity ratio of the experiment's end state (projected branch if any)."""

        branch = self.projected if self.projected else self.diagnostics
        return branch[-1].purity_ratio

    @property
    def max_entropy_drop(self) -> float:
        """Worst entropy decrease across the raw-then-projected timeline."""

        timeline = list(self.diagnostics)
        if self.projected and self.report.onset_time is not None:
            timeline = [d for d in timeline if d.t <= self.report.onset_time]
            timeline += list(self.projected)
        return entropy_drop(timeline)


def run_measurement(scenario: MeasurementScenario,
                    tol_psd: float = DEFAULT_TOL_PSD, *,
                    project: bool = True,
                    boundary_check: bool = True,
                    on_sample: Callable[[str, float, HybridState, Diagnostics], None]
                    | None = None) -> MeasurementRun:
    """Run one measurement scenario end to end.

    Evolves the uncorrelated initial state over the horizon, scans for the
    first positivity violation, and (when one is found and ``project`` is
    set) restarts the projected state from the onset tick so the run ends
    on the positive branch.  ``on_sample(branch, t, state, diagnostics)``
    is invoked at every emitted tick with branch "raw" or "projected" --
    the hook the CLI uses for snapshots.
    """

    scenario.check_span()
    margin = scenario.boundary_margin() if boundary_check else None
    initial = build_initial(scenario)

    history: list[Diagnostics] = []
    onset_state: HybridState | None = None
    onset_threshold = None
    final_state: HybridState | None = None
    for t, state, diag in evolve(initial, scenario.observable, scenario.coupling,
                                 scenario.dt, scenario.t_final, scenario.cadence,
                                 interpolation=scenario.interpolation,
                                 boundary_margin=margin):
        history.append(diag)
        if onset_threshold is None:
            onset_threshold = tol_psd * diag.peak_density
        if onset_state is None and diag.min_eig_raw < -onset_threshold:
            onset_state = state
        final_state = state
        if on_sample is not None:
            on_sample("raw", t, state, diag)

    report = detect_violation(history, tol_psd)
    projected_history: list[Diagnostics] = []
    projected_final: HybridState | None = None
    if report.found and project and onset_state is not None:
        projected = collapse_project(onset_state)
        anchor = history[0].hybrid_purity
        for t, state, diag in evolve(projected, scenario.observable, scenario.coupling,
                                     scenario.dt, scenario.t_final, scenario.cadence,
                                     interpolation=scenario.interpolation,
                                     t0=report.onset_time,
                                     purity_reference=anchor,
                                     boundary_margin=margin):
            projected_history.append(diag)
            projected_final = state
            if on_sample is not None:
                on_sample("projected", t, state, diag)

    return MeasurementRun(
        scenario=scenario,
        report=report,
        diagnostics=history,
        projected=projected_history,
        onset_state=onset_state,
        final_state=final_state,
        projected_final_state=projected_final,
    )


# ---------------------------------------------------------------------------
# width sweep (point-particle limit)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StudyRow:
    sigma: float
    onset_time: float
    half_time: float


@dataclass(frozen=True)
class StudySkip:
    sigma: float
    reason: str


@dataclass(frozen=True)
class DeltaLimitStudy:
    """Width-sweep results: one row per resolvable width, in input order."""

    rows: list[StudyRow]
    skipped: list[StudySkip]
    fit_exponent: float       # slope of log(onset_time) against log(sigma)


def _separation_rate(scenario: MeasurementScenario) -> tuple[float, float]:
    """(q-rate, p-rate) at which the extreme diagonal packets separate."""

    gap = float(np.max(np.abs(scenario.observable.gaps)))
    dq_rate = gap * abs(float(scenario.coupling.partial_p().evaluate(scenario.q0, scenario.p0)))
    dp_rate = gap * abs(float(scenario.coupling.partial_q().evaluate(scenario.q0, scenario.p0)))
    return dq_rate, dp_rate


def _study_grid(scenario: MeasurementScenario, sigma: float, horizon: float,
                grid_cap: int) -> PhaseGrid:
    """Grid sized to the trajectory extents plus a wide Gaussian pad.

    Resolution targets ``STUDY_POINTS_PER_SIGMA`` cells per width on each
    axis, floored at ``STUDY_GRID_FLOOR`` and capped at ``grid_cap`` --
    beyond the cap the width may fall under the resolvability limit, which
    the caller reports as a skip.
    """

    extents_q = [scenario.q0]
    extents_p = [scenario.p0]
    d = scenario.dim
    for i in range(d):
        for j in range(i, d):
            traj = pair_trajectory(scenario, i, j, horizon)
            extents_q += [float(traj.points[:, 0].min()), float(traj.points[:, 0].max())]
            extents_p += [float(traj.points[:, 1].min()), float(traj.points[:, 1].max())]
    pad = STUDY_PAD_SIGMAS * sigma
    q_lo, q_hi = min(extents_q) - pad, max(extents_q) + pad
    p_lo, p_hi = min(extents_p) - pad, max(extents_p) + pad
    n_q = int(np.clip(math.ceil((q_hi - q_lo) * STUDY_POINTS_PER_SIGMA / sigma),
                      STUDY_GRID_FLOOR, grid_cap))
    n_p = int(np.clip(math.ceil((p_hi - p_lo) * STUDY_POINTS_PER_SIGMA / sigma),
                      STUDY_GRID_FLOOR, grid_cap))
    return make_grid(q_lo, q_hi, p_lo, p_hi, n_q, n_p)


class _UnderResolved(Exception):
    pass


def _study_scenario(base: MeasurementScenario, sigma: float, horizon: float,
                    dt: float, grid_cap: int, cadence: int = 1) -> MeasurementScenario:
    grid = _study_grid(base, sigma, horizon, grid_cap)
    if sigma < 2.0 * grid.dq or sigma < 2.0 * grid.dp:
        raise _UnderResolved(
            f"sigma={sigma:g} needs finer than {max(grid.dq, grid.dp):.4g} cells but the "
            f"grid cap limits resolution; skipping"
        )
    bounds = stability_bounds(grid, base.observable, base.coupling, base.hbar)
    dt_safe = min(dt, 0.8 * bounds.dt_max)
    return replace(base, grid=grid, sigma_q=sigma, sigma_p=sigma,
                   dt=dt_safe, t_final=horizon, cadence=cadence)


def _onset_for_sigma(base: MeasurementScenario, sigma: float, tol_psd: float,
                     grid_cap: int) -> float | None:
    """Phase one: fine-cadence short run to catch the violation onset."""

    rate_q, rate_p = _separation_rate(base)
    rate = math.hypot(rate_q / sigma, rate_p / sigma)
    if rate == 0.0:
        raise PhaseSpaceError(
            "the scenario's packets do not separate; a width sweep is meaningless"
        )
    onset_estimate = (2.0 / rate) * math.sqrt(2.0 * tol_psd)
    horizon = 6.0 * onset_estimate
    for _ in range(3):
        scenario = _study_scenario(base, sigma, horizon, onset_estimate / 12.0, grid_cap)
        run = run_measurement(scenario, tol_psd, project=False)
        if run.report.found:
            return run.report.onset_time
        horizon *= 4.0
    return None


def _half_time_for_sigma(base: MeasurementScenario, sigma: float,
                         grid_cap: int) -> float:
    """Phase two: coarse run long enough to fit the coherence decay rate."""

    gap = float(np.max(np.abs(base.observable.gaps)))
    if gap == 0.0:
        return math.inf
    horizon = 0.2 * base.hbar / (gap * sigma)
    scenario = _study_scenario(base, sigma, horizon, horizon, grid_cap)
    n_steps = max(1, round(horizon / scenario.dt))
    scenario = replace(scenario, cadence=max(1, n_steps // 64))
    run = run_measurement(scenario, project=False)
    d = scenario.dim
    gaps = np.abs(scenario.observable.gaps)
    c = np.abs(scenario.amplitudes)
    best, pair = -1.0, (0, 1)
    for i in range(d):
        for j in range(i + 1, d):
            if c[i] * c[j] > 0.0 and gaps[i, j] > best:
                best, pair = gaps[i, j], (i, j)
    curve = decoherence_curve(run.diagnostics, *pair)
    return half_time_from_rate(fit_gaussian_decay(curve))


def delta_limit_study(base: MeasurementScenario, sigmas: Sequence[float],
                      tol_psd: float = DEFAULT_TOL_PSD,
                      grid_cap: int = 512) -> DeltaLimitStudy:
    """Sweep the packet width toward zero and tabulate the collapse scales.

    For each width (strictly decreasing input, one row each) the sweep
    measures the positivity-violation onset time on a fine-cadence run and
    the coherence half-time extrapolated from a fitted Gaussian decay.
    Both shrink with the width's own scales, so the point limit collapses
    instantaneously.  Grids are rebuilt per width (resolution scales with
    1/sigma up to ``grid_cap``); widths the cap cannot resolve are skipped
    with a warning record.  Entries run independently and merge in input
    order, so the table is deterministic.
    """

    sig = [float(s) for s in sigmas]
    if not sig:
        raise PhaseSpaceError("the width list is empty")
    if any(s <= 0.0 or not np.isfinite(s) for s in sig):
        raise PhaseSpaceError("widths must be positive and finite")
    if any(b >= a for a, b in zip(sig, sig[1:])):
        raise PhaseSpaceError("widths must be strictly decreasing")

    rows: list[StudyRow] = []
    skipped: list[StudySkip] = []
    for sigma in sig:
        try:
            onset = _onset_for_sigma(base, sigma, tol_psd, grid_cap)
            if onset is None:
                reason = (f"no positivity violation detected for sigma={sigma:g} "
                          f"within the extended onset horizon")
                warnings.warn(reason, stacklevel=2)
                skipped.append(StudySkip(sigma, reason))
                continue
            half = _half_time_for_sigma(base, sigma, grid_cap)
        except _UnderResolved as exc:
            warnings.warn(str(exc), stacklevel=2)
            skipped.append(StudySkip(sigma, str(exc)))
            continue
        rows.append(StudyRow(sigma, onset, half))

    if len(rows) >= 2:
        x = np.log([row.sigma for row in rows])
        y = np.log([row.onset_time for row in rows])
        x_c = x - x.mean()
        fit = float(np.sum(x_c * (y - y.mean())) / np.sum(x_c * x_c))
    else:
        fit = math.nan
    return DeltaLimitStudy(rows=rows, skipped=skipped, fit_exponent=fit)
