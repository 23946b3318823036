"""Classical mechanics on a periodic phase-space grid.

Classical states are non-negative densities rho(q, p) sampled at the cell
centers of a uniform rectangular grid with periodic wrap-around.
Observables are real polynomials in q and p (total degree <= 4), which
covers the named Hamiltonians ``linear_p`` (H = v*p) and ``harmonic``
(H = (q^2 + p^2)/2).  Expectation values are plain midpoint-rule
quadratures; :func:`mean_observable_trace_form` evaluates the same number
through an explicit diagonal-operator contraction so the two routes can be
checked against each other.

Time evolution follows the Liouville equation

    d(rho)/dt = dH/dq * d(rho)/dp - d(rho)/dq * dH/dp

integrated semi-Lagrangian: each node traces one backward symplectic
substep along the Hamiltonian characteristics, and the incoming field is
evaluated there by bicubic interpolation (prefiltered cubic B-spline by
default, classic 4-point cubic Lagrange available).  Mass is restored
exactly after every step; if the restoring correction ever exceeds
``MASS_STEP_TOL`` the run fails instead of hiding a broken scheme.
Interpolation undershoot more negative than ``NEG_FRACTION`` times the
field maximum likewise fails the run, while shallower undershoot is
clamped to zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import kernels

__all__ = [
    "PhaseSpaceError",
    "NumericalBreakdownError",
    "PhaseGrid",
    "make_grid",
    "ClassicalDensity",
    "gaussian_state",
    "ClassicalHamiltonian",
    "mean_observable",
    "mean_observable_trace_form",
    "AdvectionStencil",
    "build_stencil",
    "transport",
    "liouville_step",
    "Trajectory",
    "flow_trajectory",
]

MIN_CELLS = 8                 # fewest cells per axis that still support a 4-point stencil
MIN_SIGMA_CELLS = 2.0         # Gaussians narrower than this many cells are unresolvable
MASS_STEP_TOL = 1e-8          # largest per-step mass correction applied silently
NEG_FRACTION = 1e-12          # clamp floor as a fraction of the field maximum
NORM_TOL = 1e-8               # how closely a density must integrate to one
MAX_POLY_DEGREE = 4

DEFAULT_INTERPOLATION = "bspline"
_INTERPOLATIONS = ("bspline", "lagrange")


class PhaseSpaceError(ValueError):
    """A precondition on grids, states or observables was violated."""


class NumericalBreakdownError(RuntimeError):
    """The scheme left its validity regime (mass drift, negativity, boundary)."""


# ---------------------------------------------------------------------------
# grid
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PhaseGrid:
    """Uniform periodic grid over [q_min, q_max) x [p_min, p_max).

    Nodes sit at cell centers; ``quadrature`` is the midpoint rule, which
    integrates the constant field to the exact domain area.
    """

    q_min: float
    q_max: float
    p_min: float
    p_max: float
    n_q: int
    n_p: int

    def __post_init__(self):
        for name in ("q_min", "q_max", "p_min", "p_max"):
            if not np.isfinite(getattr(self, name)):
                raise PhaseSpaceError(f"grid bound {name} must be finite")
        if not (self.q_max > self.q_min and self.p_max > self.p_min):
            raise PhaseSpaceError("grid bounds must satisfy q_min < q_max and p_min < p_max")
        if self.n_q < MIN_CELLS or self.n_p < MIN_CELLS:
            raise PhaseSpaceError(
                f"grid needs at least {MIN_CELLS} cells per axis, got {self.n_q} x {self.n_p}"
            )
        q_centers = self.q_min + (np.arange(self.n_q) + 0.5) * self.dq
        p_centers = self.p_min + (np.arange(self.n_p) + 0.5) * self.dp
        q_mesh, p_mesh = np.meshgrid(q_centers, p_centers, indexing="ij")
        for name, arr in (
            ("_q_centers", q_centers),
            ("_p_centers", p_centers),
            ("_q_mesh", q_mesh),
            ("_p_mesh", p_mesh),
        ):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def dq(self) -> float:
        return (self.q_max - self.q_min) / self.n_q

    @property
    def dp(self) -> float:
        return (self.p_max - self.p_min) / self.n_p

    @property
    def cell_area(self) -> float:
        return self.dq * self.dp

    @property
    def q_centers(self) -> np.ndarray:
        return self._q_centers

    @property
    def p_centers(self) -> np.ndarray:
        return self._p_centers

    @property
    def q_mesh(self) -> np.ndarray:
        """q coordinate of every node, shape (n_q, n_p)."""
        return self._q_mesh

    @property
    def p_mesh(self) -> np.ndarray:
        return self._p_mesh

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_q, self.n_p)

    def contains(self, q: float, p: float) -> bool:
        return self.q_min <= q <= self.q_max and self.p_min <= p <= self.p_max

    def quadrature(self, values: np.ndarray):
        """Midpoint-rule integral of a nodal field (real or complex)."""

        if values.shape != self.shape:
            raise PhaseSpaceError(f"field shape {values.shape} does not match grid {self.shape}")
        return values.sum() * self.cell_area


def make_grid(q_min: float, q_max: float, p_min: float, p_max: float,
              n_q: int, n_p: int) -> PhaseGrid:
    """Build a periodic phase-space grid, validating bounds and cell counts."""

    return PhaseGrid(float(q_min), float(q_max), float(p_min), float(p_max),
                     int(n_q), int(n_p))


# ---------------------------------------------------------------------------
# densities
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ClassicalDensity:
    """Normalized, (numerically) non-negative density on a :class:`PhaseGrid`."""

    grid: PhaseGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.shape != self.grid.shape:
            raise PhaseSpaceError(
                f"density shape {vals.shape} does not match grid {self.grid.shape}"
            )
        peak = float(vals.max(initial=0.0))
        floor = NEG_FRACTION * max(peak, np.finfo(np.float64).tiny)
        if float(vals.min()) < -floor:
            raise NumericalBreakdownError(
                f"density has values below -{floor:.3e}; genuine negativity is a failure"
            )
        mass = self.grid.quadrature(vals)
        if abs(mass - 1.0) > NORM_TOL:
            raise PhaseSpaceError(f"density integrates to {mass!r}, expected 1 within {NORM_TOL}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def mass(self) -> float:
        return float(self.grid.quadrature(self.values))


def gaussian_state(grid: PhaseGrid, q0: float, p0: float,
                   sigma_q: float, sigma_p: float) -> ClassicalDensity:
    """Normalized Gaussian density centered at (q0, p0).

    This is the regularized stand-in for a phase-space point state; the
    point limit is reached by shrinking sigma, never by sampling an actual
    delta.  Widths below ``MIN_SIGMA_CELLS`` cells are rejected because the
    interpolation stencil cannot resolve them.
    """

    if not grid.contains(q0, p0):
        raise PhaseSpaceError(f"center ({q0}, {p0}) lies outside the grid")
    min_sq = MIN_SIGMA_CELLS * grid.dq
    min_sp = MIN_SIGMA_CELLS * grid.dp
    if sigma_q < min_sq:
        raise PhaseSpaceError(
            f"sigma_q={sigma_q} is below the minimum resolvable width {min_sq:.6g} "
            f"({MIN_SIGMA_CELLS} cells of dq={grid.dq:.6g})"
        )
    if sigma_p < min_sp:
        raise PhaseSpaceError(
            f"sigma_p={sigma_p} is below the minimum resolvable width {min_sp:.6g} "
            f"({MIN_SIGMA_CELLS} cells of dp={grid.dp:.6g})"
        )
    values = np.exp(
        -((grid.q_mesh - q0) ** 2) / (2.0 * sigma_q**2)
        - ((grid.p_mesh - p0) ** 2) / (2.0 * sigma_p**2)
    )
    values /= grid.quadrature(values)
    return ClassicalDensity(grid, values)


# ---------------------------------------------------------------------------
# observables / Hamiltonians
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ClassicalHamiltonian:
    """Real polynomial observable sum_{a,b} c[a,b] q^a p^b with a+b <= 4.

    Doubles as the classical Hamiltonian driving Liouville transport; the
    partial derivatives needed for the characteristics are exact table
    shifts, never finite differences.
    """

    kind: str
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=np.float64)
        if c.shape != (MAX_POLY_DEGREE + 1, MAX_POLY_DEGREE + 1):
            raise PhaseSpaceError("coefficient table must be 5 x 5")
        if not np.all(np.isfinite(c)):
            raise PhaseSpaceError("coefficients must be finite")
        for a in range(c.shape[0]):
            for b in range(c.shape[1]):
                if a + b > MAX_POLY_DEGREE and c[a, b] != 0.0:
                    raise PhaseSpaceError(
                        f"monomial q^{a} p^{b} exceeds total degree {MAX_POLY_DEGREE}"
                    )
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    # -- constructors -------------------------------------------------

    @classmethod
    def polynomial(cls, terms: Mapping[tuple[int, int], float]) -> "ClassicalHamiltonian":
        c = np.zeros((MAX_POLY_DEGREE + 1, MAX_POLY_DEGREE + 1))
        for (a, b), coeff in terms.items():
            if not (0 <= a <= MAX_POLY_DEGREE and 0 <= b <= MAX_POLY_DEGREE):
                raise PhaseSpaceError(f"monomial exponents ({a}, {b}) out of range")
            c[a, b] = coeff
        return cls("polynomial", c)

    @classmethod
    def linear_p(cls, v: float = 1.0) -> "ClassicalHamiltonian":
        obj = cls.polynomial({(0, 1): float(v)})
        object.__setattr__(obj, "kind", "linear_p")
        return obj

    @classmethod
    def linear_q(cls, v: float = 1.0) -> "ClassicalHamiltonian":
        obj = cls.polynomial({(1, 0): float(v)})
        object.__setattr__(obj, "kind", "linear_q")
        return obj

    @classmethod
    def harmonic(cls) -> "ClassicalHamiltonian":
        obj = cls.polynomial({(2, 0): 0.5, (0, 2): 0.5})
        object.__setattr__(obj, "kind", "harmonic")
        return obj

    # -- algebra ------------------------------------------------------

    def scaled(self, factor: float) -> "ClassicalHamiltonian":
        return ClassicalHamiltonian(self.kind, self.coeffs * float(factor))

    def partial_q(self) -> "ClassicalHamiltonian":
        out = np.zeros_like(self.coeffs)
        for a in range(1, self.coeffs.shape[0]):
            out[a - 1, :] = a * self.coeffs[a, :]
        return ClassicalHamiltonian("polynomial", out)

    def partial_p(self) -> "ClassicalHamiltonian":
        out = np.zeros_like(self.coeffs)
        for b in range(1, self.coeffs.shape[1]):
            out[:, b - 1] = b * self.coeffs[:, b]
        return ClassicalHamiltonian("polynomial", out)

    @property
    def is_zero(self) -> bool:
        return not np.any(self.coeffs)

    @property
    def is_separable(self) -> bool:
        """True when no monomial mixes q and p (explicit leapfrog applies)."""

        mixed = self.coeffs[1:, 1:]
        return not np.any(mixed)

    def evaluate(self, q, p):
        """Evaluate the polynomial on arrays (or scalars) q, p."""

        q = np.asarray(q, dtype=np.float64)
        p = np.asarray(p, dtype=np.float64)
        total = np.zeros(np.broadcast(q, p).shape)
        for a in range(self.coeffs.shape[0]):
            for b in range(self.coeffs.shape[1]):
                c = self.coeffs[a, b]
                if c != 0.0:
                    total += c * q**a * p**b
        return total

    def max_abs_on(self, grid: PhaseGrid) -> float:
        return float(np.max(np.abs(self.evaluate(grid.q_mesh, grid.p_mesh))))


def mean_observable(observable: ClassicalHamiltonian, rho: ClassicalDensity) -> float:
    """Expectation value as the quadrature of the pointwise field product."""

    vals = observable.evaluate(rho.grid.q_mesh, rho.grid.p_mesh)
    return float(rho.grid.quadrature(vals * rho.values))


def mean_observable_trace_form(observable: ClassicalHamiltonian,
                               rho: ClassicalDensity) -> float:
    """Expectation value as a trace of diagonal-kernel operators.

    On the grid both the observable and the state are diagonal operators
    (one value per node, node measure = cell area); the mean value is
    Tr(F R) / Tr(R).  Routing the arithmetic through an explicit sparse
    operator product keeps this path independent of
    :func:`mean_observable` so the two can be compared.
    """

    from scipy import sparse

    grid = rho.grid
    f_diag = observable.evaluate(grid.q_mesh, grid.p_mesh).ravel()
    r_diag = rho.values.ravel()
    f_op = sparse.diags_array(f_diag)
    r_op = sparse.diags_array(r_diag)
    numerator = (f_op @ r_op).diagonal().sum() * grid.cell_area
    denominator = r_op.diagonal().sum() * grid.cell_area
    return float(numerator / denominator)


# ---------------------------------------------------------------------------
# characteristics
# ---------------------------------------------------------------------------


def _reverse_flow_substep(hamiltonian: ClassicalHamiltonian, q, p, dt: float):
    """One symplectic substep of the time-reversed characteristic flow.

    Separable Hamiltonians take an explicit kick-drift-kick (Verlet) step;
    mixed q-p monomials fall back to the implicit midpoint rule solved by
    fixed-point iteration, which is symplectic for any smooth Hamiltonian.
    Both variants are second-order accurate in dt.
    """

    h_q = hamiltonian.partial_q()
    h_p = hamiltonian.partial_p()
    if hamiltonian.is_separable:
        p_half = p + (0.5 * dt) * h_q.evaluate(q, p)
        q_dep = q - dt * h_p.evaluate(q, p_half)
        p_dep = p_half + (0.5 * dt) * h_q.evaluate(q_dep, p_half)
        return q_dep, p_dep

    q_dep = np.array(q, dtype=np.float64, copy=True)
    p_dep = np.array(p, dtype=np.float64, copy=True)
    scale = max(float(np.max(np.abs(q))), float(np.max(np.abs(p))), 1.0)
    for _ in range(200):
        q_mid = 0.5 * (q + q_dep)
        p_mid = 0.5 * (p + p_dep)
        q_next = q - dt * h_p.evaluate(q_mid, p_mid)
        p_next = p + dt * h_q.evaluate(q_mid, p_mid)
        delta = max(float(np.max(np.abs(q_next - q_dep))),
                    float(np.max(np.abs(p_next - p_dep))))
        q_dep, p_dep = q_next, p_next
        if delta <= 1e-14 * scale:
            break
    else:
        raise NumericalBreakdownError("implicit midpoint substep did not converge; reduce dt")
    return q_dep, p_dep


def check_cfl(grid: PhaseGrid, hamiltonian: ClassicalHamiltonian, dt: float,
              label: str = "transport") -> None:
    """Enforce the advective step bounds max|dH/dp| dt <= dq, max|dH/dq| dt <= dp."""

    if not (dt > 0.0 and np.isfinite(dt)):
        raise PhaseSpaceError(f"dt must be positive and finite, got {dt!r}")
    vel_q = hamiltonian.partial_p().max_abs_on(grid)
    vel_p = hamiltonian.partial_q().max_abs_on(grid)
    if vel_q * dt > grid.dq:
        raise PhaseSpaceError(
            f"{label}: dt={dt:.6g} violates the q-axis step bound "
            f"dq/max|dH/dp| = {grid.dq / vel_q:.6g}"
        )
    if vel_p * dt > grid.dp:
        raise PhaseSpaceError(
            f"{label}: dt={dt:.6g} violates the p-axis step bound "
            f"dp/max|dH/dq| = {grid.dp / vel_p:.6g}"
        )


# ---------------------------------------------------------------------------
# semi-Lagrangian transport
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AdvectionStencil:
    """Precomputed interpolation data for one (Hamiltonian, dt) pair.

    The departure points, wrapped source indices, and per-node weights do
    not change between steps, so one stencil serves an entire run.
    ``identity`` marks the zero-displacement case, for which transport is a
    verbatim copy.
    """

    grid: PhaseGrid
    interpolation: str
    identity: bool
    iq: np.ndarray            # (4, n_q, n_p) int32, wrapped source rows
    ip: np.ndarray            # (4, n_q, n_p) int32, wrapped source cols
    wq: np.ndarray            # (4, n_q, n_p) float64 row weights
    wp: np.ndarray            # (4, n_q, n_p) float64 col weights
    prefilter: np.ndarray | None   # spectral divisor for the B-spline prefilter


def _fractional_index(coord, origin, h, n):
    """Map departure coordinates to wrapped base index and fraction."""

    x = (coord - origin) / h - 0.5
    x_wrapped = np.mod(x, n)
    base = np.floor(x_wrapped)
    frac = x_wrapped - base
    idx = base.astype(np.int64) % n
    return idx, frac


def _lagrange_weights(s):
    w0 = -s * (s - 1.0) * (s - 2.0) / 6.0
    w1 = (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0
    w2 = -(s + 1.0) * s * (s - 2.0) / 2.0
    w3 = (s + 1.0) * s * (s - 1.0) / 6.0
    return np.stack([w0, w1, w2, w3])


def _bspline_weights(s):
    one = 1.0 - s
    w0 = one**3 / 6.0
    w1 = (4.0 - 6.0 * s**2 + 3.0 * s**3) / 6.0
    w2 = (1.0 + 3.0 * s + 3.0 * s**2 - 3.0 * s**3) / 6.0
    w3 = s**3 / 6.0
    return np.stack([w0, w1, w2, w3])


def _bspline_divisor(n: int) -> np.ndarray:
    # Spectrum of the circulant nodal matrix (1/6, 4/6, 1/6).
    k = np.arange(n)
    return (4.0 + 2.0 * np.cos(2.0 * np.pi * k / n)) / 6.0


def build_stencil(grid: PhaseGrid, hamiltonian: ClassicalHamiltonian, dt: float,
                  interpolation: str | None = None) -> AdvectionStencil:
    """Precompute the semi-Lagrangian stencil for one transport substep."""

    interpolation = interpolation or DEFAULT_INTERPOLATION
    if interpolation not in _INTERPOLATIONS:
        raise PhaseSpaceError(f"unknown interpolation {interpolation!r}")
    check_cfl(grid, hamiltonian, dt)

    q_dep, p_dep = _reverse_flow_substep(hamiltonian, grid.q_mesh, grid.p_mesh, dt)
    moved = (float(np.max(np.abs(q_dep - grid.q_mesh))) != 0.0
             or float(np.max(np.abs(p_dep - grid.p_mesh))) != 0.0)

    iq0, s_q = _fractional_index(q_dep, grid.q_min, grid.dq, grid.n_q)
    ip0, s_p = _fractional_index(p_dep, grid.p_min, grid.dp, grid.n_p)
    weights = _bspline_weights if interpolation == "bspline" else _lagrange_weights
    wq = weights(s_q)
    wp = weights(s_p)
    iq = np.stack([(iq0 + (a - 1)) % grid.n_q for a in range(4)]).astype(np.int32)
    ip = np.stack([(ip0 + (a - 1)) % grid.n_p for a in range(4)]).astype(np.int32)

    prefilter = None
    if interpolation == "bspline":
        prefilter = np.outer(_bspline_divisor(grid.n_q), _bspline_divisor(grid.n_p))

    return AdvectionStencil(grid, interpolation, not moved, iq, ip, wq, wp, prefilter)


def transport(values: np.ndarray, stencil: AdvectionStencil) -> np.ndarray:
    """Advect one complex field a single step along the stencil.

    The caller owns clamping/renormalization; this is the bare linear map.
    """

    work = np.ascontiguousarray(values, dtype=np.complex128)
    if stencil.identity:
        return work.copy()
    if stencil.prefilter is not None:
        work = np.fft.ifft2(np.fft.fft2(work) / stencil.prefilter)
    return kernels.apply_stencil(work, stencil.iq, stencil.ip, stencil.wq, stencil.wp)


def clamp_and_renormalize(values: np.ndarray, target_mass: float, grid: PhaseGrid,
                          context: str = "density") -> np.ndarray:
    """Shared post-transport treatment of real non-negative fields.

    Undershoot within the clamp floor is zeroed; anything deeper, or a mass
    correction larger than ``MASS_STEP_TOL``, aborts the run.  On success the
    field integrates to ``target_mass`` exactly (up to one final rounding).
    """

    peak = float(values.max(initial=0.0))
    floor = NEG_FRACTION * max(peak, np.finfo(np.float64).tiny)
    low = float(values.min())
    if low < -floor:
        raise NumericalBreakdownError(
            f"{context}: negativity {low:.6e} exceeds the clamp floor {-floor:.6e}; "
            f"interpolation undershoot this deep usually means the field is not "
            f"numerically periodic -- keep packet tails about 7 widths clear of "
            f"the domain boundary, or widen the grid"
        )
    values = np.clip(values, 0.0, None)
    mass = float(grid.quadrature(values))
    if abs(mass - target_mass) > MASS_STEP_TOL * max(1.0, abs(target_mass)):
        raise NumericalBreakdownError(
            f"{context}: per-step mass correction {mass - target_mass:.6e} exceeds "
            f"{MASS_STEP_TOL}; the scheme has broken down"
        )
    if mass != target_mass and mass > 0.0:
        values = values * (target_mass / mass)
    return values


def advance_real_field(values: np.ndarray, stencil: AdvectionStencil,
                       context: str = "density") -> np.ndarray:
    """Transport + clamp + exact mass restoration for one real field.

    This single code path serves both the classical solver and the diagonal
    blocks of the hybrid state, which keeps the one-level hybrid reduction
    bit-for-bit identical to the classical solver.
    """

    target = float(stencil.grid.quadrature(values))
    moved = transport(values, stencil).real
    return clamp_and_renormalize(moved, target, stencil.grid, context)


def liouville_step(rho: ClassicalDensity, hamiltonian: ClassicalHamiltonian,
                   dt: float, interpolation: str | None = None) -> ClassicalDensity:
    """Advance a classical density one step under the Liouville equation."""

    stencil = build_stencil(rho.grid, hamiltonian, dt, interpolation)
    new_values = advance_real_field(rho.values, stencil)
    return ClassicalDensity(rho.grid, new_values)


def evolve_classical(rho: ClassicalDensity, hamiltonian: ClassicalHamiltonian,
                     dt: float, n_steps: int,
                     interpolation: str | None = None) -> ClassicalDensity:
    """Repeatedly apply :func:`liouville_step`, reusing one stencil."""

    stencil = build_stencil(rho.grid, hamiltonian, dt, interpolation)
    values = rho.values
    for _ in range(n_steps):
        values = advance_real_field(values, stencil)
    return ClassicalDensity(rho.grid, values)


# ---------------------------------------------------------------------------
# point trajectories
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Trajectory:
    """Sampled Hamiltonian flow of a single phase-space point."""

    times: np.ndarray
    points: np.ndarray      # (n_samples, 2) columns (q, p)

    def __post_init__(self):
        self.times.setflags(write=False)
        self.points.setflags(write=False)

    @property
    def final(self) -> tuple[float, float]:
        return (float(self.points[-1, 0]), float(self.points[-1, 1]))

    def energies(self, hamiltonian: ClassicalHamiltonian) -> np.ndarray:
        return np.array([
            float(hamiltonian.evaluate(q, p)) for q, p in self.points
        ])

    def energy_drift(self, hamiltonian: ClassicalHamiltonian) -> float:
        """Max relative deviation of H along the trajectory."""

        e = self.energies(hamiltonian)
        scale = max(abs(float(e[0])), 1.0)
        return float(np.max(np.abs(e - e[0]))) / scale


def _verlet_forward(hamiltonian: ClassicalHamiltonian, q: float, p: float, dt: float):
    h_q = hamiltonian.partial_q()
    h_p = hamiltonian.partial_p()
    if hamiltonian.is_separable:
        p_half = p - (0.5 * dt) * float(h_q.evaluate(q, p))
        q_new = q + dt * float(h_p.evaluate(q, p_half))
        p_new = p_half - (0.5 * dt) * float(h_q.evaluate(q_new, p_half))
        return q_new, p_new
    q_new, p_new = q, p
    scale = max(abs(q), abs(p), 1.0)
    for _ in range(200):
        q_mid = 0.5 * (q + q_new)
        p_mid = 0.5 * (p + p_new)
        q_next = q + dt * float(h_p.evaluate(q_mid, p_mid))
        p_next = p - dt * float(h_q.evaluate(q_mid, p_mid))
        delta = max(abs(q_next - q_new), abs(p_next - p_new))
        q_new, p_new = q_next, p_next
        if delta <= 1e-15 * scale:
            break
    else:
        raise NumericalBreakdownError("implicit midpoint step did not converge; reduce dt")
    return q_new, p_new


def flow_trajectory(hamiltonian: ClassicalHamiltonian, q0: float, p0: float,
                    t_final: float, dt: float) -> Trajectory:
    """Integrate dq/dt = dH/dp, dp/dt = -dH/dq with a second-order symplectic step.

    The step count is rounded so the trajectory lands on ``t_final``
    exactly; the effective step stays within one half-step of the request.
    """

    if not (dt > 0.0 and np.isfinite(dt)):
        raise PhaseSpaceError(f"dt must be positive and finite, got {dt!r}")
    if t_final < 0.0 or not np.isfinite(t_final):
        raise PhaseSpaceError(f"t_final must be non-negative and finite, got {t_final!r}")
    if t_final == 0.0:
        return Trajectory(np.array([0.0]), np.array([[float(q0), float(p0)]]))
    n = max(1, int(round(t_final / dt)))
    dt_eff = t_final / n
    times = np.empty(n + 1)
    points = np.empty((n + 1, 2))
    times[0] = 0.0
    points[0] = (float(q0), float(p0))
    q, p = float(q0), float(p0)
    for k in range(1, n + 1):
        q, p = _verlet_forward(hamiltonian, q, p, dt_eff)
        if not (np.isfinite(q) and np.isfinite(p)):
            raise NumericalBreakdownError(f"trajectory diverged at t={k * dt_eff:.6g}")
        times[k] = k * dt_eff
        points[k] = (q, p)
    return Trajectory(times, points)
