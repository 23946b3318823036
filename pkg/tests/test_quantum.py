"""Density-matrix construction, purity, entropy, and positivity certificates."""

import numpy as np
import numpy.testing as npt
import pytest

from hybridqc import (
    MeasuredObservable,
    QuantumDensity,
    QuantumStateError,
    min_eigenvalue,
    pure_from_amplitudes,
    purity,
    von_neumann_entropy,
)
from hybridqc.quantum import entropy_of_spectrum

RNG_SEED = 20240818


def random_unitary(rng, d):
    z = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    q, r = np.linalg.qr(z)
    return q * (np.diagonal(r) / np.abs(np.diagonal(r)))


def random_density(rng, d):
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    m = a @ a.conj().T
    return QuantumDensity(m / m.trace().real)


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------


def test_pure_basis_state():
    rho = pure_from_amplitudes([1.0, 0.0])
    npt.assert_array_equal(rho.matrix, np.diag([1.0 + 0j, 0.0]))


def test_pure_equal_superposition():
    rho = pure_from_amplitudes([1.0, 1.0])
    npt.assert_allclose(rho.matrix, np.full((2, 2), 0.5), rtol=0, atol=1e-15)


def test_pure_complex_amplitudes():
    rho = pure_from_amplitudes([1.0, 2.0j])      # normalized to (1, 2i)/sqrt(5)
    assert abs(rho.matrix[0, 0] - 0.2) <= 1e-15
    assert abs(rho.matrix[1, 1] - 0.8) <= 1e-15
    assert abs(rho.matrix[0, 1] - (-0.4j)) <= 1e-15
    assert abs(rho.matrix[1, 0] - 0.4j) <= 1e-15


def test_pure_normalizes_input():
    rho = pure_from_amplitudes([3.0, 4.0])
    assert abs(rho.matrix.trace().real - 1.0) <= 1e-12
    assert abs(rho.matrix[0, 0] - 9 / 25) <= 1e-15


def test_pure_rejects_zero_vector():
    with pytest.raises(QuantumStateError):
        pure_from_amplitudes([0.0, 0.0])


def test_density_rejects_non_hermitian():
    with pytest.raises(QuantumStateError, match="Hermitian"):
        QuantumDensity(np.array([[0.5, 0.3], [0.0, 0.5]]))


def test_density_rejects_wrong_trace():
    with pytest.raises(QuantumStateError, match="trace"):
        QuantumDensity(np.eye(2))


def test_density_rejects_negative_spectrum():
    m = np.array([[1.2, 0.0], [0.0, -0.2]])
    with pytest.raises(QuantumStateError, match="eigenvalue"):
        QuantumDensity(m)


def test_density_floor_none_admits_indefinite_matrix():
    m = np.array([[1.2, 0.0], [0.0, -0.2]])
    rho = QuantumDensity(m, eig_floor=None)
    assert min_eigenvalue(rho) == pytest.approx(-0.2, abs=1e-14)


# ---------------------------------------------------------------------------
# purity
# ---------------------------------------------------------------------------


def test_purity_of_pure_states_is_one():
    rng = np.random.default_rng(RNG_SEED)
    for d in (1, 2, 3, 4):
        for _ in range(5):
            c = rng.normal(size=d) + 1j * rng.normal(size=d)
            assert abs(purity(pure_from_amplitudes(c)) - 1.0) <= 1e-12


def test_purity_of_maximally_mixed_qubit():
    rho = QuantumDensity(np.eye(2) / 2)
    assert purity(rho) == pytest.approx(0.5, abs=1e-15)


def test_purity_of_dephased_superposition():
    # |c|^2 = (1/5, 4/5) dephased: purity = 1/25 + 16/25 = 0.68.
    rho = QuantumDensity(np.diag([0.2, 0.8]))
    assert purity(rho) == pytest.approx(0.68, abs=1e-15)


def test_purity_one_iff_idempotent():
    rng = np.random.default_rng(RNG_SEED + 1)
    for _ in range(20):
        d = int(rng.integers(2, 5))
        rho = random_density(rng, d)
        m = rho.matrix
        idem_defect = float(np.max(np.abs(m @ m - m)))
        if abs(purity(rho) - 1.0) <= 1e-8:
            assert idem_defect <= 1e-6
        if idem_defect <= 1e-10:
            assert abs(purity(rho) - 1.0) <= 1e-8
    # and a guaranteed-pure draw to exercise the first branch
    c = rng.normal(size=3) + 1j * rng.normal(size=3)
    rho = pure_from_amplitudes(c)
    m = rho.matrix
    assert float(np.max(np.abs(m @ m - m))) <= 1e-12


# ---------------------------------------------------------------------------
# entropy
# ---------------------------------------------------------------------------


def test_entropy_of_pure_state_is_zero():
    rho = pure_from_amplitudes([1.0, 2.0j, -0.5])
    assert abs(von_neumann_entropy(rho)) <= 1e-9
    # the two-level pure state lands on exactly 0.0 (no signed zero)
    assert von_neumann_entropy(pure_from_amplitudes([1.0, 0.0])) == 0.0


def test_entropy_of_maximally_mixed_qubit():
    rho = QuantumDensity(np.eye(2) / 2)
    assert abs(von_neumann_entropy(rho) - np.log(2)) <= 1e-12


def test_entropy_of_biased_mixture():
    rho = QuantumDensity(np.diag([0.2, 0.8]))
    expected = -(0.2 * np.log(0.2) + 0.8 * np.log(0.8))   # 0.500402...
    assert abs(von_neumann_entropy(rho) - expected) <= 1e-9
    assert abs(expected - 0.5004024) <= 1e-7


def test_entropy_rejects_deep_negative_eigenvalue():
    with pytest.raises(QuantumStateError, match="entropy"):
        entropy_of_spectrum(np.array([1.1, -0.1]))


def test_entropy_clamp_none_clips_silently():
    s = entropy_of_spectrum(np.array([1.1, -0.1]), clamp=None)
    assert s == pytest.approx(-1.1 * np.log(1.1), abs=1e-12)


def test_entropy_is_basis_invariant():
    rng = np.random.default_rng(RNG_SEED + 2)
    for d in (2, 3, 4):
        rho = random_density(rng, d)
        s0 = von_neumann_entropy(rho)
        for _ in range(3):
            u = random_unitary(rng, d)
            rotated = QuantumDensity(u @ rho.matrix @ u.conj().T)
            assert abs(von_neumann_entropy(rotated) - s0) <= 1e-9


# ---------------------------------------------------------------------------
# minimum eigenvalue
# ---------------------------------------------------------------------------


def test_min_eigenvalue_examples():
    assert min_eigenvalue(np.eye(3)) == pytest.approx(1.0, abs=1e-14)
    assert min_eigenvalue(np.array([[0.0, 0.3], [0.3, 0.0]])) == pytest.approx(-0.3, abs=1e-14)
    assert min_eigenvalue(np.diag([0.68, 0.32])) == pytest.approx(0.32, abs=1e-14)


def test_min_eigenvalue_rejects_non_hermitian():
    with pytest.raises(QuantumStateError, match="Hermitian"):
        min_eigenvalue(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_min_eigenvalue_of_pure_states_nonnegative():
    rng = np.random.default_rng(RNG_SEED + 3)
    for _ in range(20):
        d = int(rng.integers(1, 6))
        c = rng.normal(size=d) + 1j * rng.normal(size=d)
        assert min_eigenvalue(pure_from_amplitudes(c)) >= -1e-12


def test_2x2_positivity_iff_determinant_condition():
    # [[a, x], [conj(x), b]] with a,b >= 0 is PSD iff |x|^2 <= a b.
    rng = np.random.default_rng(RNG_SEED + 4)
    for _ in range(200):
        a, b = rng.uniform(0, 1, size=2)
        x = rng.uniform(-1, 1) + 1j * rng.uniform(-1, 1)
        m = np.array([[a, x], [np.conj(x), b]])
        lo = min_eigenvalue(m)
        if abs(x) ** 2 <= a * b - 1e-12:
            assert lo >= -1e-12
        if abs(x) ** 2 >= a * b + 1e-12:
            assert lo < 1e-12
        det_condition = abs(x) ** 2 <= a * b
        assert (lo >= -1e-12) == det_condition or abs(abs(x) ** 2 - a * b) <= 1e-10


# ---------------------------------------------------------------------------
# measured observable
# ---------------------------------------------------------------------------


def test_observable_gaps_and_means():
    obs = MeasuredObservable(np.array([1.0, -1.0]))
    npt.assert_array_equal(obs.gaps, np.array([[0.0, 2.0], [-2.0, 0.0]]))
    npt.assert_array_equal(obs.means, np.array([[1.0, 0.0], [0.0, -1.0]]))
    npt.assert_array_equal(obs.matrix(), np.diag([1.0 + 0j, -1.0]))


def test_observable_level_count_bounds():
    with pytest.raises(QuantumStateError):
        MeasuredObservable(np.array([]))
    with pytest.raises(QuantumStateError):
        MeasuredObservable(np.arange(17, dtype=float))
    assert MeasuredObservable(np.arange(16, dtype=float)).dim == 16


def test_observable_rejects_non_finite():
    with pytest.raises(QuantumStateError):
        MeasuredObservable(np.array([1.0, np.inf]))
