"""Coupled quantum-classical states and their split-step time evolution.

The joint state of a d-level quantum system and one classical degree of
freedom is a d x d matrix of phase-space fields f[i, j](q, p), Hermitian
under (i, j) swap + conjugation, with non-negative diagonal fields whose
total mass is one.  Working in the eigenbasis of the measured quantum
observable A = diag(v_1..v_d), the coupled dynamics under the product
interaction A (x) V(q, p) splits per block:

    d(f[i,j])/dt = (v_i - v_j) V f[i,j] / (i*hbar)
                   + {mean(v_i, v_j) V , f[i,j]}_Poisson

i.e. every block sees a local phase rotation at the eigenvalue gap and a
classical Liouville transport at the eigenvalue mean.  (For a single block
this is exactly the classical Liouville equation; for an uncorrelated
state it reproduces the usual commutator + Poisson-bracket combination.)
One step of :class:`HybridStepper` applies Strang splitting: half phase,
one semi-Lagrangian transport step, half phase -- second order in dt, and
the stiff phase factor is integrated exactly pointwise.  Only blocks with
i <= j are computed; the lower triangle is mirrored by conjugation, so
Hermiticity holds to the last bit.

Diagonal blocks go through exactly the same transport helper as the
classical solver (including the clamp and per-block mass restoration), so
a one-level hybrid run reproduces the classical solver bit for bit.
Off-diagonal blocks are never clamped or rescaled: their dephasing, and
the pointwise negativity it induces, is the physical signal this package
exists to certify.

Positivity certificate: the grid-node basis diagonalizes every classical
field simultaneously, so the composite state is block-diagonal over nodes
and its spectrum is the union over nodes (q, p) of the spectra of the
d x d matrices M(q, p) = [f[i,j](q, p)].  The state is positive exactly
when every node matrix is positive semidefinite, which
:func:`pointwise_min_eigenvalue` checks by direct per-node eigensolves.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from . import kernels
from .phase_space import (
    AdvectionStencil,
    ClassicalDensity,
    ClassicalHamiltonian,
    NumericalBreakdownError,
    PhaseGrid,
    PhaseSpaceError,
    NEG_FRACTION,
    advance_real_field,
    build_stencil,
    transport,
)
from .quantum import MeasuredObservable, QuantumDensity, entropy_of_spectrum

__all__ = [
    "HybridState",
    "product_state",
    "StabilityBounds",
    "stability_bounds",
    "HybridStepper",
    "hybrid_step",
    "Diagnostics",
    "diagnose",
    "evolve",
    "quantum_marginal",
    "block_integrals",
    "classical_marginal",
    "pointwise_min_eigenvalue",
    "hybrid_purity",
    "pair_defects",
]

PAIRING_TOL = 1e-12          # Hermitian-pairing defect tolerance, relative to peak
TRACE_TOL = 1e-8
PHASE_ANGLE_LIMIT = 0.5      # largest per-step phase rotation (radians) allowed
INTERIOR_MIN_FRACTION = 0.9999


# ---------------------------------------------------------------------------
# state container
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HybridState:
    """d x d array of complex phase-space fields, shape (d, d, n_q, n_p).

    Invariants enforced here: Hermitian pairing f[j,i] = conj(f[i,j]),
    real non-negative diagonal blocks (within the scheme's clamp floor),
    and unit total mass of the trace field.  Pointwise positivity of the
    node matrices is *not* an invariant -- certifying where it fails is
    the point -- so it is computed on demand by
    :func:`pointwise_min_eigenvalue`.
    """

    grid: PhaseGrid
    blocks: np.ndarray
    hbar: float = 1.0

    def __post_init__(self):
        if not (self.hbar > 0.0 and np.isfinite(self.hbar)):
            raise PhaseSpaceError(f"hbar must be positive and finite, got {self.hbar!r}")
        b = np.asarray(self.blocks, dtype=np.complex128)
        if b.ndim != 4 or b.shape[0] != b.shape[1] or b.shape[2:] != self.grid.shape:
            raise PhaseSpaceError(
                f"blocks must have shape (d, d, {self.grid.n_q}, {self.grid.n_p}), got {b.shape}"
            )
        if not np.all(np.isfinite(b.view(np.float64))):
            raise NumericalBreakdownError("hybrid state has non-finite entries")
        peak = max(float(np.max(np.abs(b))), np.finfo(np.float64).tiny)
        defect = float(np.max(np.abs(b - b.conj().transpose(1, 0, 2, 3))))
        if defect > PAIRING_TOL * peak:
            raise PhaseSpaceError(
                f"blocks break Hermitian pairing (defect {defect:.3e} at peak {peak:.3e})"
            )
        d = b.shape[0]
        diag_low = min(float(b[i, i].real.min()) for i in range(d))
        if diag_low < -NEG_FRACTION * peak:
            raise NumericalBreakdownError(
                f"diagonal block negativity {diag_low:.3e} exceeds the clamp floor"
            )
        tr = sum(float(self.grid.quadrature(b[i, i]).real) for i in range(d))
        if abs(tr - 1.0) > TRACE_TOL:
            raise PhaseSpaceError(f"trace mass is {tr!r}, expected 1 within {TRACE_TOL}")
        b.setflags(write=False)
        object.__setattr__(self, "blocks", b)

    @property
    def dim(self) -> int:
        return self.blocks.shape[0]

    @property
    def trace_field(self) -> np.ndarray:
        """Sum of the diagonal fields: the classical density before wrapping."""

        d = self.dim
        return sum(self.blocks[i, i].real for i in range(d))

    @property
    def trace(self) -> float:
        return float(self.grid.quadrature(self.trace_field))

    def block_mass(self) -> np.ndarray:
        """Mass of each diagonal field (the outcome weights)."""

        return np.array([
            float(self.grid.quadrature(self.blocks[i, i]).real) for i in range(self.dim)
        ])


def product_state(rho_qm: QuantumDensity, rho_cm: ClassicalDensity,
                  hbar: float = 1.0) -> HybridState:
    """Uncorrelated state f[i,j](q,p) = rho_qm[i,j] * rho_cm(q,p)."""

    d = rho_qm.dim
    blocks = np.empty((d, d, *rho_cm.grid.shape), dtype=np.complex128)
    for i in range(d):
        for j in range(d):
            blocks[i, j] = rho_qm.matrix[i, j] * rho_cm.values
    return HybridState(rho_cm.grid, blocks, hbar)


# ---------------------------------------------------------------------------
# stability bounds
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StabilityBounds:
    """Largest stable step per mechanism and the overall binding bound."""

    dt_transport_q: float     # q-axis displacement bound over all blocks
    dt_transport_p: float     # p-axis displacement bound over all blocks
    dt_phase: float           # per-step phase angle bound over all pairs
    binding: str

    @property
    def dt_max(self) -> float:
        return min(self.dt_transport_q, self.dt_transport_p, self.dt_phase)


def stability_bounds(grid: PhaseGrid, observable: MeasuredObservable,
                     coupling: ClassicalHamiltonian, hbar: float = 1.0) -> StabilityBounds:
    """Step-size limits for the split integrator on this scenario.

    Transport: each block moves at most one cell per step on each axis
    (max|v_i| max|dV/dp| dt <= dq and likewise for p).  Phase: the largest
    per-step rotation angle max|v_i - v_j| max|V| dt / hbar stays below
    ``PHASE_ANGLE_LIMIT`` so the oscillation is resolved.
    """

    if not (hbar > 0.0 and np.isfinite(hbar)):
        raise PhaseSpaceError(f"hbar must be positive and finite, got {hbar!r}")
    vel_q = coupling.partial_p().max_abs_on(grid)
    vel_p = coupling.partial_q().max_abs_on(grid)
    v_extreme = float(np.max(np.abs(observable.values)))
    dt_q = grid.dq / (v_extreme * vel_q) if v_extreme * vel_q > 0.0 else np.inf
    dt_p = grid.dp / (v_extreme * vel_p) if v_extreme * vel_p > 0.0 else np.inf
    max_gap = float(np.max(np.abs(observable.gaps)))
    v_max = coupling.max_abs_on(grid)
    dt_phase = (PHASE_ANGLE_LIMIT * hbar / (max_gap * v_max)
                if max_gap * v_max > 0.0 else np.inf)
    bounds = {"transport (q axis)": dt_q, "transport (p axis)": dt_p,
              "phase rotation": dt_phase}
    binding = min(bounds, key=bounds.get)
    return StabilityBounds(dt_q, dt_p, dt_phase, binding)


# ---------------------------------------------------------------------------
# stepper
# ---------------------------------------------------------------------------


class HybridStepper:
    """Precompiled split-step map for one (grid, observable, coupling, dt).

    Builds one advection stencil per distinct eigenvalue mean and one phase
    table per eigenvalue pair up front; stepping is then pure array work.
    """

    def __init__(self, grid: PhaseGrid, observable: MeasuredObservable,
                 coupling: ClassicalHamiltonian, dt: float, hbar: float = 1.0,
                 interpolation: str | None = None):
        if not (dt > 0.0 and np.isfinite(dt)):
            raise PhaseSpaceError(f"dt must be positive and finite, got {dt!r}")
        bounds = stability_bounds(grid, observable, coupling, hbar)
        if dt > bounds.dt_max * (1.0 + 1e-12):
            raise PhaseSpaceError(
                f"dt={dt:.6g} exceeds the stable step {bounds.dt_max:.6g} "
                f"(binding constraint: {bounds.binding})"
            )
        self.grid = grid
        self.observable = observable
        self.coupling = coupling
        self.dt = float(dt)
        self.hbar = float(hbar)
        self.bounds = bounds

        d = observable.dim
        means = observable.means
        self._stencils: dict[float, AdvectionStencil] = {}
        for i in range(d):
            for j in range(i, d):
                mean = float(means[i, j])
                if mean not in self._stencils:
                    self._stencils[mean] = build_stencil(
                        grid, coupling.scaled(mean), dt, interpolation
                    )
        self._stencil_of: dict[tuple[int, int], AdvectionStencil] = {
            (i, j): self._stencils[float(means[i, j])]
            for i in range(d) for j in range(i, d)
        }
        coupling_field = coupling.evaluate(grid.q_mesh, grid.p_mesh)
        gaps = observable.gaps
        self._phase_half: dict[tuple[int, int], np.ndarray | None] = {}
        for i in range(d):
            for j in range(i + 1, d):
                gap = float(gaps[i, j])
                if gap == 0.0:
                    self._phase_half[(i, j)] = None
                else:
                    self._phase_half[(i, j)] = np.exp(
                        (-0.5j * gap * dt / self.hbar) * coupling_field
                    )

    def step(self, blocks: np.ndarray) -> np.ndarray:
        """One Strang step on the raw block array; returns a new array."""

        d = blocks.shape[0]
        if d != self.observable.dim:
            raise PhaseSpaceError(
                f"state has {d} levels but the observable has {self.observable.dim}"
            )
        out = np.empty_like(blocks)
        for i in range(d):
            stencil = self._stencil_of[(i, i)]
            out[i, i] = advance_real_field(
                blocks[i, i].real, stencil, context=f"diagonal block ({i}, {i})"
            )
            for j in range(i + 1, d):
                work = blocks[i, j]
                phase = self._phase_half[(i, j)]
                if phase is not None:
                    work = work * phase
                work = transport(work, self._stencil_of[(i, j)])
                if phase is not None:
                    work = work * phase
                out[i, j] = work
                out[j, i] = work.conj()
        return out


def hybrid_step(state: HybridState, observable: MeasuredObservable,
                coupling: ClassicalHamiltonian, dt: float,
                interpolation: str | None = None) -> HybridState:
    """One split step of the coupled bracket dynamics (convenience wrapper).

    Repeated stepping should go through :func:`evolve`, which reuses the
    precomputed stencils across steps.
    """

    stepper = HybridStepper(state.grid, observable, coupling, dt, state.hbar,
                            interpolation)
    return HybridState(state.grid, stepper.step(state.blocks), state.hbar)


# ---------------------------------------------------------------------------
# functionals
# ---------------------------------------------------------------------------


def block_integrals(state: HybridState) -> np.ndarray:
    """d x d matrix of raw block quadratures (Hermitized)."""

    d = state.dim
    m = np.empty((d, d), dtype=np.complex128)
    for i in range(d):
        m[i, i] = state.grid.quadrature(state.blocks[i, i])
        for j in range(i + 1, d):
            m[i, j] = state.grid.quadrature(state.blocks[i, j])
            m[j, i] = np.conj(m[i, j])
    return m


def quantum_marginal(state: HybridState) -> QuantumDensity:
    """Reduced quantum state: entry (i, j) = quadrature(f[i,j]), normalized.

    Positivity is intentionally not enforced here -- mid-run marginals of a
    measurement scenario may carry genuine negativity, and reporting it is
    the point -- so the result skips the density-matrix PSD gate and its
    minimum eigenvalue travels in the diagnostics instead.
    """

    m = block_integrals(state)
    m = m / m.trace().real
    return QuantumDensity(m, eig_floor=None)


def classical_marginal(state: HybridState) -> ClassicalDensity:
    """Reduced classical density: the trace field, renormalized exactly."""

    field = state.trace_field
    field = np.clip(field, 0.0, None)
    field = field / state.grid.quadrature(field)
    return ClassicalDensity(state.grid, field)


def pointwise_min_eigenvalue(state: HybridState) -> tuple[float, tuple[float, float], np.ndarray]:
    """Per-node positivity certificate of the composite state.

    Returns ``(minimum, (q, p), field)`` where ``field[k, l]`` is the
    smallest eigenvalue of the d x d node matrix [f[i,j](q_k, p_l)] in
    density units, ``(q, p)`` locates the global minimum, and ``minimum``
    is that value scaled by cell_area (the mass-weighted eigenvalue, unit
    consistent with the dimensionless quantum spectrum).  The state is
    positive exactly when ``field`` is non-negative.
    """

    field = kernels.pointwise_min_eig(state.blocks)
    k, l = np.unravel_index(int(np.argmin(field)), field.shape)
    location = (float(state.grid.q_centers[k]), float(state.grid.p_centers[l]))
    return float(field[k, l]) * state.grid.cell_area, location, field


def hybrid_purity(state: HybridState) -> float:
    """Dimensionless purity functional sum_ij quadrature(|f_ij|^2) * cell_area / trace^2.

    For an uncorrelated state rho_qm (x) rho_cm this factorizes as
    Tr(rho_qm^2) * (quadrature(rho_cm^2) * cell_area), so its ratio against
    the initial value isolates the quantum factor: unimodular phases and
    rigid transport preserve it, while discarding coherence blocks cuts it
    to the classical-mixture value sum |c_i|^4.
    """

    total = 0.0
    d = state.dim
    for i in range(d):
        total += float(state.grid.quadrature(np.abs(state.blocks[i, i].real) ** 2))
        for j in range(i + 1, d):
            total += 2.0 * float(state.grid.quadrature(np.abs(state.blocks[i, j]) ** 2))
    return total * state.grid.cell_area / state.trace**2


def pair_defects(state: HybridState) -> np.ndarray:
    """Worst geometric-mean defect per block pair.

    Entry (i, j), i != j, is max over nodes of |f_ij| - sqrt(f_ii * f_jj):
    positive exactly when the 2 x 2 principal minor test fails somewhere,
    which proves a negative node eigenvalue.  Diagonal entries are -inf
    (no pair).  This is the cheap per-pair converse of
    :func:`pointwise_min_eigenvalue`.
    """

    d = state.dim
    out = np.full((d, d), -np.inf)
    for i in range(d):
        for j in range(i + 1, d):
            bound = np.sqrt(np.clip(state.blocks[i, i].real, 0.0, None)
                            * np.clip(state.blocks[j, j].real, 0.0, None))
            defect = float(np.max(np.abs(state.blocks[i, j]) - bound))
            out[i, j] = out[j, i] = defect
    return out


# ---------------------------------------------------------------------------
# diagnostics / evolution
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Diagnostics:
    """Scalar observables sampled at one output tick."""

    t: float
    trace: float
    hybrid_purity: float
    purity_ratio: float
    min_eig: float             # global minimum eigenvalue scaled by cell_area
    min_eig_raw: float         # same minimum in density units; drives detection
    min_eig_q: float
    min_eig_p: float
    peak_density: float        # max over nodes of the largest diagonal field
    qm_purity: float
    qm_entropy: float
    marginal: QuantumDensity   # normalized reduced quantum state (PSD ungated)
    offdiag_mass: np.ndarray   # (d, d) |quadrature(f_ij)|, raw (unnormalized)
    pair_defect: np.ndarray    # (d, d) worst |f_ij| - sqrt(f_ii f_jj) per pair
    block_mass: np.ndarray     # (d,)
    mean_q: np.ndarray         # (d,) conditional pointer means, nan for empty blocks
    mean_p: np.ndarray
    interior_fraction: float

    def __post_init__(self):
        for arr in (self.offdiag_mass, self.pair_defect, self.block_mass,
                    self.mean_q, self.mean_p):
            arr.setflags(write=False)

    def coherence(self, i: int, j: int) -> float:
        """|quadrature(f_ij)|: magnitude of one reduced off-diagonal entry."""

        return float(self.offdiag_mass[i, j])


def diagnose(state: HybridState, t: float, purity_reference: float | None = None,
             interior_mask: np.ndarray | None = None) -> Diagnostics:
    """Compute the full diagnostic record for one state.

    The entropy reported here clips any negative marginal eigenvalues to
    zero rather than erroring: during a measurement run the marginal can
    be genuinely non-positive, and that is reported through the positivity
    certificates, not by aborting the diagnostics.
    """

    grid = state.grid
    d = state.dim
    min_scaled, (loc_q, loc_p), min_field = pointwise_min_eigenvalue(state)
    min_raw = float(min_field.min())
    purity_val = hybrid_purity(state)
    integrals = block_integrals(state)
    marginal = QuantumDensity(integrals / integrals.trace().real, eig_floor=None)
    block_mass = state.block_mass()
    mean_q = np.full(d, np.nan)
    mean_p = np.full(d, np.nan)
    for i in range(d):
        if block_mass[i] > 1e-14:
            diag = state.blocks[i, i].real
            mean_q[i] = float(grid.quadrature(grid.q_mesh * diag)) / block_mass[i]
            mean_p[i] = float(grid.quadrature(grid.p_mesh * diag)) / block_mass[i]
    trace_field = state.trace_field
    trace = float(grid.quadrature(trace_field))
    if interior_mask is None:
        interior = 1.0
    else:
        interior = float(grid.quadrature(trace_field * interior_mask)) / trace
    peak = max(float(state.blocks[i, i].real.max()) for i in range(d))
    reference = purity_reference if purity_reference is not None else purity_val
    return Diagnostics(
        t=float(t),
        trace=trace,
        hybrid_purity=purity_val,
        purity_ratio=purity_val / reference,
        min_eig=min_scaled,
        min_eig_raw=min_raw,
        min_eig_q=loc_q,
        min_eig_p=loc_p,
        peak_density=peak,
        qm_purity=float(np.sum(np.abs(marginal.matrix) ** 2)),
        qm_entropy=entropy_of_spectrum(marginal.eigenvalues(), clamp=None),
        marginal=marginal,
        offdiag_mass=np.abs(integrals),
        pair_defect=pair_defects(state),
        block_mass=block_mass,
        mean_q=mean_q,
        mean_p=mean_p,
        interior_fraction=interior,
    )


def _interior_mask(grid: PhaseGrid, margin_q: float, margin_p: float) -> np.ndarray:
    mask = ((grid.q_mesh >= grid.q_min + margin_q)
            & (grid.q_mesh <= grid.q_max - margin_q)
            & (grid.p_mesh >= grid.p_min + margin_p)
            & (grid.p_mesh <= grid.p_max - margin_p))
    return mask.astype(np.float64)


def evolve(state: HybridState, observable: MeasuredObservable,
           coupling: ClassicalHamiltonian, dt: float, t_final: float,
           cadence: int = 1, *, interpolation: str | None = None,
           t0: float = 0.0, purity_reference: float | None = None,
           boundary_margin: tuple[float, float] | None = None,
           ) -> Iterator[tuple[float, HybridState, Diagnostics]]:
    """Generate (t, state, diagnostics) at t0, every ``cadence`` steps, and t_final.

    The step is adjusted to land on ``t_final`` exactly (within half a
    requested step).  When ``boundary_margin = (margin_q, margin_p)`` is
    given, each emitted tick checks that at least ``INTERIOR_MIN_FRACTION``
    of the mass stays that far from the domain edges; periodic wrap-around
    of real mass is a breakdown, not physics.

    ``purity_reference`` anchors the reported purity ratio; by default the
    initial state of *this* generator is the anchor.  A restart (for
    example from a projected state) should pass the original anchor so the
    ratio stays comparable across the whole experiment.
    """

    if cadence < 1:
        raise PhaseSpaceError(f"cadence must be >= 1, got {cadence}")
    if t_final < t0 or not np.isfinite(t_final):
        raise PhaseSpaceError(f"t_final={t_final!r} must be finite and >= t0={t0!r}")

    mask = None
    if boundary_margin is not None:
        mask = _interior_mask(state.grid, *boundary_margin)

    def checked(diag: Diagnostics) -> Diagnostics:
        if mask is not None and diag.interior_fraction < INTERIOR_MIN_FRACTION:
            raise NumericalBreakdownError(
                f"at t={diag.t:.6g} only {diag.interior_fraction:.6f} of the mass keeps "
                f"the required distance from the domain boundary; enlarge the grid"
            )
        return diag

    first = diagnose(state, t0, purity_reference, mask)
    reference = purity_reference if purity_reference is not None else first.hybrid_purity
    yield t0, state, checked(first)
    span = t_final - t0
    if span == 0.0:
        return

    n = max(1, int(round(span / dt)))
    dt_eff = span / n
    stepper = HybridStepper(state.grid, observable, coupling, dt_eff, state.hbar,
                            interpolation)
    blocks = state.blocks
    for k in range(1, n + 1):
        blocks = stepper.step(blocks)
        if k % cadence == 0 or k == n:
            t = t0 + k * dt_eff
            current = HybridState(state.grid, blocks, state.hbar)
            yield t, current, checked(diagnose(current, t, reference, mask))
