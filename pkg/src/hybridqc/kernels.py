"""Hot inner loops shared by the classical and hybrid steppers.

Two kernels dominate the runtime of a simulation:

* ``apply_stencil`` -- the gather/multiply/accumulate step of the
  semi-Lagrangian transport: every output node sums sixteen weighted
  source values picked by a precomputed 4x4 interpolation stencil.
* ``pointwise_min_eig`` -- the positivity certificate: an exact Hermitian
  eigensolve of the d x d block matrix at every grid node, keeping the
  smallest eigenvalue.

Each kernel has a numba-jitted implementation (parallel over grid rows)
and a pure-numpy one; :mod:`hybridqc.backend` decides which is bound to
the public name.  The stencil kernels accumulate their sixteen terms in
the same fixed order in both implementations, so transported fields are
bit-identical across backends and across thread counts (every parallel
iteration writes a disjoint output element; there are no parallel
reductions anywhere).  The eigensolve kernels may differ between backends
in the last floating-point bit because they call LAPACK through different
wrappers; within one backend they are deterministic.

``benchmarks/compare_backends.py`` times the two implementations against
each other.
"""

from __future__ import annotations

import numpy as np

from .backend import NUMBA_ENABLED, njit, prange

# ---------------------------------------------------------------------------
# stencil application
# ---------------------------------------------------------------------------


def _apply_stencil_numpy(coeffs, iq, ip, wq, wp):
    """Gather the 4x4 stencil for every node and accumulate in fixed order."""

    out = np.zeros_like(coeffs)
    for a in range(4):
        for b in range(4):
            out += (wq[a] * wp[b]) * coeffs[iq[a], ip[b]]
    return out


@njit(cache=True, parallel=True)
def _apply_stencil_jit(coeffs, iq, ip, wq, wp, out):  # pragma: no cover - jitted
    n_q, n_p = coeffs.shape
    for k in prange(n_q):
        for l in range(n_p):
            acc = coeffs[0, 0] - coeffs[0, 0]
            for a in range(4):
                for b in range(4):
                    w = wq[a, k, l] * wp[b, k, l]
                    acc = acc + w * coeffs[iq[a, k, l], ip[b, k, l]]
            out[k, l] = acc


def _apply_stencil_numba(coeffs, iq, ip, wq, wp):
    out = np.empty_like(coeffs)
    _apply_stencil_jit(coeffs, iq, ip, wq, wp, out)
    return out


# ---------------------------------------------------------------------------
# pointwise minimum eigenvalue of the block matrix
# ---------------------------------------------------------------------------


def _pointwise_min_eig_numpy(blocks):
    """Smallest eigenvalue of blocks[:, :, k, l] for every node (k, l)."""

    d = blocks.shape[0]
    n_q, n_p = blocks.shape[2], blocks.shape[3]
    stacked = np.ascontiguousarray(
        np.moveaxis(blocks.reshape(d, d, n_q * n_p), 2, 0)
    )
    eigs = np.linalg.eigvalsh(stacked)
    return eigs[:, 0].reshape(n_q, n_p)


@njit(cache=True, parallel=True)
def _pointwise_min_eig_jit(blocks, out):  # pragma: no cover - jitted
    d = blocks.shape[0]
    n_q, n_p = blocks.shape[2], blocks.shape[3]
    for k in prange(n_q):
        mat = np.empty((d, d), np.complex128)
        for l in range(n_p):
            for i in range(d):
                for j in range(d):
                    mat[i, j] = blocks[i, j, k, l]
            eigs = np.linalg.eigvalsh(mat)
            out[k, l] = eigs[0]


def _pointwise_min_eig_numba(blocks):
    out = np.empty(blocks.shape[2:], np.float64)
    _pointwise_min_eig_jit(blocks, out)
    return out


# ---------------------------------------------------------------------------
# backend binding
# ---------------------------------------------------------------------------

if NUMBA_ENABLED:
    apply_stencil = _apply_stencil_numba
    pointwise_min_eig = _pointwise_min_eig_numba
else:
    apply_stencil = _apply_stencil_numpy
    pointwise_min_eig = _pointwise_min_eig_numpy
