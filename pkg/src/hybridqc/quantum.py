"""Finite-dimensional quantum states and the diagnostics computed from them.

A quantum state is a d x d Hermitian, unit-trace, positive-semidefinite
density matrix (d <= 16 here; the measurement scenarios use 2 to 4
levels).  The module provides the handful of matrix functionals the rest
of the package reports: purity Tr(rho^2), von Neumann entropy
-Tr(rho ln rho), and the minimum eigenvalue that certifies positivity.

Marginals of an evolving coupled state can carry per-entry quadrature
noise, so :class:`QuantumDensity` accepts a small negative eigenvalue
tolerance rather than demanding exact positivity; diagnostics that need
a spectrum (entropy) clamp that same tolerance band to zero and fail on
anything deeper.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "QuantumStateError",
    "MAX_LEVELS",
    "QuantumDensity",
    "pure_from_amplitudes",
    "purity",
    "von_neumann_entropy",
    "min_eigenvalue",
    "MeasuredObservable",
]

MAX_LEVELS = 16
HERMITICITY_TOL = 1e-12      # largest tolerated asymmetry, relative to matrix scale
TRACE_TOL = 1e-10
EIG_CLAMP = 1e-10            # spectrum noise band clamped to zero in entropy


class QuantumStateError(ValueError):
    """A matrix failed the density-matrix preconditions."""


def _check_square_matrix(matrix: np.ndarray) -> np.ndarray:
    m = np.asarray(matrix, dtype=np.complex128)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise QuantumStateError(f"density matrix must be square, got shape {m.shape}")
    if not (1 <= m.shape[0] <= MAX_LEVELS):
        raise QuantumStateError(
            f"dimension {m.shape[0]} outside the supported range 1..{MAX_LEVELS}"
        )
    if not np.all(np.isfinite(m.view(np.float64))):
        raise QuantumStateError("density matrix has non-finite entries")
    return m


def _hermiticity_defect(matrix: np.ndarray) -> float:
    scale = max(float(np.max(np.abs(matrix))), 1.0)
    return float(np.max(np.abs(matrix - matrix.conj().T))) / scale


@dataclass(frozen=True)
class QuantumDensity:
    """Validated d x d density matrix.

    ``eig_floor`` is the most negative eigenvalue accepted at construction;
    the default admits only rounding-level negativity.  Passing ``None``
    skips the positivity gate entirely: reduced states of an evolving
    coupled system can carry real negativity mid-run, and reporting it is
    this package's job, so those are wrapped ungated and their minimum
    eigenvalue is published as a diagnostic instead.
    """

    matrix: np.ndarray
    eig_floor: float | None = 1e-10

    def __post_init__(self):
        m = _check_square_matrix(self.matrix)
        defect = _hermiticity_defect(m)
        if defect > HERMITICITY_TOL:
            raise QuantumStateError(f"matrix is not Hermitian (relative defect {defect:.3e})")
        m = 0.5 * (m + m.conj().T)
        tr = float(m.trace().real)
        if abs(tr - 1.0) > TRACE_TOL:
            raise QuantumStateError(f"trace is {tr!r}, expected 1 within {TRACE_TOL}")
        if self.eig_floor is not None:
            lo = float(np.linalg.eigvalsh(m)[0])
            if lo < -self.eig_floor:
                raise QuantumStateError(
                    f"minimum eigenvalue {lo:.6e} is below the accepted floor "
                    f"{-self.eig_floor:.6e}"
                )
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)

    def populations(self) -> np.ndarray:
        return self.matrix.diagonal().real.copy()


def pure_from_amplitudes(amplitudes: Sequence[complex]) -> QuantumDensity:
    """Rank-one density matrix |c><c| from a complex amplitude vector.

    The vector is normalized exactly, and the outer product is symmetrized
    so the result is Hermitian to the last bit.
    """

    c = np.asarray(amplitudes, dtype=np.complex128).ravel()
    if c.size < 1 or c.size > MAX_LEVELS:
        raise QuantumStateError(f"need 1..{MAX_LEVELS} amplitudes, got {c.size}")
    norm = float(np.linalg.norm(c))
    if norm == 0.0 or not np.isfinite(norm):
        raise QuantumStateError("amplitude vector has zero or non-finite norm")
    c = c / norm
    outer = np.outer(c, c.conj())
    outer = 0.5 * (outer + outer.conj().T)
    return QuantumDensity(outer)


def purity(state: QuantumDensity) -> float:
    """Tr(rho^2), computed as the squared Frobenius norm of a Hermitian rho."""

    return float(np.sum(np.abs(state.matrix) ** 2))


def von_neumann_entropy(state: QuantumDensity) -> float:
    """-Tr(rho ln rho) in nats, with 0 ln 0 = 0.

    Eigenvalues in [-EIG_CLAMP, 0) are treated as quadrature noise and
    clamped to zero; anything more negative raises, because entropy of a
    genuinely non-positive matrix is meaningless.
    """

    eigs = state.eigenvalues()
    return entropy_of_spectrum(eigs)


def entropy_of_spectrum(eigs: np.ndarray, clamp: float | None = EIG_CLAMP) -> float:
    """Shannon entropy (nats) of an eigenvalue list with a noise clamp.

    ``clamp=None`` clips any negativity silently; monitoring code uses this
    so a state whose positivity has genuinely failed still yields a number,
    with the failure reported through the eigenvalue diagnostics instead.
    """

    eigs = np.asarray(eigs, dtype=np.float64)
    if clamp is not None:
        lo = float(eigs.min())
        if lo < -clamp:
            raise QuantumStateError(
                f"cannot take entropy: eigenvalue {lo:.6e} below the noise clamp {-clamp:.6e}"
            )
    eigs = np.clip(eigs, 0.0, None)
    positive = eigs[eigs > 0.0]
    # + 0.0 turns the pure-state result -0.0 into a plain 0.0.
    return float(-np.sum(positive * np.log(positive))) + 0.0


def min_eigenvalue(matrix: np.ndarray | QuantumDensity) -> float:
    """Smallest eigenvalue of a Hermitian matrix (positivity certificate)."""

    if isinstance(matrix, QuantumDensity):
        m = matrix.matrix
    else:
        m = _check_square_matrix(matrix)
        defect = _hermiticity_defect(m)
        if defect > HERMITICITY_TOL:
            raise QuantumStateError(
                f"min_eigenvalue needs a Hermitian matrix (relative defect {defect:.3e})"
            )
        m = 0.5 * (m + m.conj().T)
    return float(np.linalg.eigvalsh(m)[0])


@dataclass(frozen=True)
class MeasuredObservable:
    """Hermitian observable fixed to its eigenbasis: diagonal(values).

    The measurement coupling used throughout assumes the quantum operator
    is already diagonal; distinct eigenvalues give distinct pointer
    velocities.
    """

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64).ravel()
        if v.size < 1 or v.size > MAX_LEVELS:
            raise QuantumStateError(f"need 1..{MAX_LEVELS} eigenvalues, got {v.size}")
        if not np.all(np.isfinite(v)):
            raise QuantumStateError("eigenvalues must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.values.size

    @property
    def gaps(self) -> np.ndarray:
        """Matrix of eigenvalue differences values[i] - values[j]."""

        return self.values[:, None] - self.values[None, :]

    @property
    def means(self) -> np.ndarray:
        """Matrix of pairwise means (values[i] + values[j]) / 2."""

        return 0.5 * (self.values[:, None] + self.values[None, :])

    def matrix(self) -> np.ndarray:
        return np.diag(self.values.astype(np.complex128))
