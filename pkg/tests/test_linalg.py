"""Matrix algebra and entropy functional tests."""

from __future__ import annotations

import numpy as np
import pytest
from scipy.linalg import logm

from captool.errors import DomainError, ShapeError, SupportError
from captool.linalg import (
    binary_entropy,
    check_density,
    hermitian_eig,
    hermitize,
    hs_inner,
    kron,
    matrix_log2_on_support,
    partial_trace,
    project_psd,
    relative_entropy,
    von_neumann_entropy,
)
from conftest import random_density, random_hermitian, random_unitary

I2 = np.eye(2, dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
PHI_PLUS = np.zeros((4, 4), dtype=complex)
_psi = np.array([1, 0, 0, 1], dtype=complex) / np.sqrt(2)
PHI_PLUS[:] = np.outer(_psi, _psi.conj())


class TestKron:
    def test_identity(self):
        assert np.allclose(kron(I2, I2), np.eye(4))

    def test_sz_identity(self):
        assert np.allclose(kron(SZ, I2), np.diag([1, 1, -1, -1]))

    def test_projector_product(self):
        p0 = np.array([[1, 0], [0, 0]], dtype=complex)
        out = kron(p0, p0)
        expected = np.zeros((4, 4))
        expected[0, 0] = 1
        assert np.allclose(out, expected)


class TestHermitianEig:
    def test_pauli_spectrum(self):
        w, _ = hermitian_eig(SX)
        assert np.allclose(w, [1, -1])

    def test_identity(self):
        w, _ = hermitian_eig(np.eye(4, dtype=complex))
        assert np.allclose(w, np.ones(4))

    def test_diagonal(self):
        w, v = hermitian_eig(np.diag([0.7, 0.3]).astype(complex))
        assert np.allclose(w, [0.7, 0.3])
        assert np.allclose(np.abs(v), np.eye(2))

    def test_reconstruction_1000_random(self):
        rng = np.random.default_rng(42)
        for _ in range(1000):
            dim = int(rng.integers(2, 17))
            m = random_hermitian(rng, dim)
            w, v = hermitian_eig(m)
            scale = 1.0 + float(np.max(np.abs(m)))
            assert np.max(np.abs((v * w) @ v.conj().T - m)) <= 1e-9 * scale
            assert np.max(np.abs(v.conj().T @ v - np.eye(dim))) <= 1e-10
            assert np.all(np.diff(w) <= 1e-12)  # descending


class TestMatrixLog:
    def test_identity_is_zero(self):
        assert np.allclose(matrix_log2_on_support(np.eye(4, dtype=complex), 1e-12), 0)

    def test_half_half(self):
        out = matrix_log2_on_support(np.diag([0.5, 0.5]).astype(complex), 1e-12)
        assert np.allclose(out, np.diag([-1, -1]))

    def test_rank_deficient_entropy_path(self):
        # S(diag(1, 0)) through the floored log must come out exactly 0
        rho = np.diag([1.0, 0.0]).astype(complex)
        logs = matrix_log2_on_support(rho, 1e-12)
        assert abs(logs[1, 1] - np.log2(1e-12)) < 1e-6
        assert abs(-hs_inner(rho, logs)) <= 1e-9

    def test_matches_scipy_on_full_rank(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            rho = random_density(rng, 5) + 0.2 * np.eye(5)
            ours = matrix_log2_on_support(rho, 1e-12)
            ref = logm(rho) / np.log(2.0)
            assert np.max(np.abs(ours - ref)) < 1e-8

    def test_negative_eigenvalue_rejected(self):
        with pytest.raises(DomainError):
            matrix_log2_on_support(np.diag([1.0, -1e-3]).astype(complex), 1e-12)


class TestProjectPsd:
    def test_clipping(self):
        out = project_psd(np.diag([0.8, 0.4, -0.2]).astype(complex))
        assert np.allclose(out, np.diag([0.8, 0.4, 0.0]))

    def test_fixed_point(self):
        rng = np.random.default_rng(0)
        rho = random_density(rng, 4)
        assert np.max(np.abs(project_psd(rho) - rho)) <= 1e-10

    def test_negative_identity(self):
        assert np.allclose(project_psd(-np.eye(2, dtype=complex)), 0)

    def test_idempotent(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            m = random_hermitian(rng, 6)
            once = project_psd(m)
            assert np.max(np.abs(project_psd(once) - once)) <= 1e-10


class TestHsInner:
    def test_identity(self):
        assert hs_inner(I2, I2) == pytest.approx(2.0)

    def test_pauli_orthogonality(self):
        assert hs_inner(SX, SZ) == pytest.approx(0.0, abs=1e-14)

    def test_direct_trace(self):
        assert hs_inner(SZ, np.diag([0.9, 0.1]).astype(complex)) == pytest.approx(0.8)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            hs_inner(I2, np.eye(4, dtype=complex))


class TestPartialTrace:
    def test_bell_marginal(self):
        out = partial_trace(PHI_PLUS, [2, 2], keep=[1])
        assert np.allclose(out, I2 / 2)

    def test_product_state(self):
        rng = np.random.default_rng(5)
        a = random_density(rng, 2)
        b = random_hermitian(rng, 3)
        out = partial_trace(kron(a, b), [2, 3], keep=[0])
        assert np.allclose(out, a * np.trace(b))

    def test_trace_preserved(self):
        rng = np.random.default_rng(6)
        m = random_hermitian(rng, 8)
        out = partial_trace(m, [2, 4], keep=[0])
        assert np.trace(out) == pytest.approx(np.trace(m).real)

    def test_composition(self):
        rng = np.random.default_rng(7)
        m = random_hermitian(rng, 12)
        joint = partial_trace(m, [2, 3, 2], keep=[2])
        step1 = partial_trace(m, [2, 3, 2], keep=[1, 2])
        step2 = partial_trace(step1, [3, 2], keep=[1])
        assert np.max(np.abs(joint - step2)) <= 1e-10

    def test_bad_dims(self):
        with pytest.raises(ShapeError):
            partial_trace(np.eye(6, dtype=complex), [2, 2], keep=[0])


class TestBinaryEntropy:
    def test_endpoints(self):
        assert binary_entropy(0.0) == 0.0
        assert binary_entropy(1.0) == 0.0

    def test_maximum(self):
        assert binary_entropy(0.5) == pytest.approx(1.0)

    def test_at_011(self):
        assert binary_entropy(0.11) == pytest.approx(0.49991, abs=1e-5)

    def test_domain(self):
        with pytest.raises(DomainError):
            binary_entropy(1.5)
        with pytest.raises(DomainError):
            binary_entropy(-0.01)


class TestVonNeumann:
    def test_pure_state(self):
        assert von_neumann_entropy(PHI_PLUS) == pytest.approx(0.0, abs=1e-12)

    def test_maximally_mixed_qubit(self):
        assert von_neumann_entropy(I2 / 2) == pytest.approx(1.0)

    def test_matches_binary_entropy(self):
        rho = np.diag([0.89, 0.11]).astype(complex)
        assert von_neumann_entropy(rho) == pytest.approx(0.49991, abs=1e-5)

    def test_basis_invariance(self):
        rng = np.random.default_rng(11)
        for _ in range(30):
            rho = random_density(rng, 5)
            u = random_unitary(rng, 5)
            s1 = von_neumann_entropy(rho)
            s2 = von_neumann_entropy(u @ rho @ u.conj().T)
            assert abs(s1 - s2) <= 1e-9


class TestRelativeEntropy:
    def test_self_is_zero(self):
        rng = np.random.default_rng(12)
        rho = random_density(rng, 4)
        assert relative_entropy(rho, rho) == pytest.approx(0.0, abs=1e-9)

    def test_pure_vs_mixed(self):
        rho = np.diag([1.0, 0.0]).astype(complex)
        sigma = np.diag([0.5, 0.5]).astype(complex)
        assert relative_entropy(rho, sigma) == pytest.approx(1.0, abs=1e-9)

    def test_bell_vs_pinched(self):
        pinched = np.zeros((4, 4), dtype=complex)
        pinched[0, 0] = pinched[3, 3] = 0.5
        assert relative_entropy(PHI_PLUS, pinched) == pytest.approx(1.0, abs=1e-9)

    def test_nonnegative_equal_trace(self):
        rng = np.random.default_rng(13)
        for _ in range(100):
            rho = random_density(rng, 4)
            sigma = random_density(rng, 4) + 1e-6 * np.eye(4)
            sigma /= np.trace(sigma).real
            assert relative_entropy(rho, sigma) >= -1e-9

    def test_support_violation(self):
        rho = I2 / 2
        sigma = np.diag([1.0, 0.0]).astype(complex)
        with pytest.raises(SupportError):
            relative_entropy(rho, sigma)


class TestHermitize:
    def test_symmetrization(self):
        m = np.array([[1.0, 1.0 + 1e-12j], [1.0 - 1e-12j, 2.0]])
        h = hermitize(m)
        assert np.allclose(h, h.conj().T)

    def test_check_density_accepts_valid(self):
        rng = np.random.default_rng(14)
        check_density(random_density(rng, 4))

    def test_check_density_rejects_trace(self):
        with pytest.raises(DomainError):
            check_density(np.eye(2, dtype=complex))
