"""Dense complex-Hermitian matrix algebra and entropy functionals.

All entropies are in bits (log base 2) so downstream capacities come out
in bits per channel use. Matrices here are small (dim <= 16), so plain
dense LAPACK routines are used throughout.
"""

from __future__ import annotations

from typing import Iterable, NamedTuple

import numpy as np

from .errors import DomainError, NumericalFailure, ShapeError, SupportError

HERM_TOL = 1e-10
PSD_TOL = 1e-9
DEFAULT_REG = 1e-12


def hermitize(m: np.ndarray) -> np.ndarray:
    """Hermitian part (M + M^dag)/2; absorbs floating-point drift."""
    m = np.asarray(m, dtype=complex)
    return (m + m.conj().T) / 2.0


def check_hermitian(m: np.ndarray, tol: float = HERM_TOL) -> np.ndarray:
    """Validate the Hermiticity invariant and return the symmetrized matrix."""
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ShapeError(f"expected a square matrix, got shape {m.shape}")
    scale = 1.0 + float(np.max(np.abs(m))) if m.size else 1.0
    drift = float(np.max(np.abs(m - m.conj().T))) if m.size else 0.0
    if drift > tol * scale:
        raise DomainError(f"matrix is not Hermitian: max |M - M^dag| = {drift:.3e}")
    return hermitize(m)


def check_density(rho: np.ndarray, trace_tol: float = 1e-9, eig_tol: float = PSD_TOL) -> np.ndarray:
    """Validate unit trace and positive semidefiniteness of a state."""
    rho = check_hermitian(rho)
    tr = float(np.trace(rho).real)
    if abs(tr - 1.0) > trace_tol:
        raise DomainError(f"density operator trace {tr} deviates from 1 beyond {trace_tol}")
    wmin = float(np.linalg.eigvalsh(rho)[0])
    if wmin < -eig_tol:
        raise DomainError(f"density operator has eigenvalue {wmin:.3e} below -{eig_tol}")
    return rho


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Tensor product of two operators."""
    return np.kron(np.asarray(a, dtype=complex), np.asarray(b, dtype=complex))


class SpectralDecomposition(NamedTuple):
    """Eigendecomposition of a Hermitian matrix, eigenvalues descending."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # unitary; column k pairs with eigenvalues[k]


def hermitian_eig(m: np.ndarray) -> SpectralDecomposition:
    """Spectral decomposition of a Hermitian matrix.

    Backed by LAPACK; re-raised as NumericalFailure on the (rare)
    non-convergence of the underlying iteration.
    """
    m = hermitize(m)
    try:
        w, v = np.linalg.eigh(m)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"eigensolver did not converge: {exc}") from exc
    return SpectralDecomposition(w[::-1].copy(), v[:, ::-1].copy())


def project_psd(m: np.ndarray) -> np.ndarray:
    """Nearest PSD matrix in Frobenius norm: clip negative eigenvalues."""
    w, v = hermitian_eig(m)
    if w.size and w[-1] >= 0.0:
        return hermitize(m)
    wc = np.maximum(w, 0.0)
    return hermitize((v * wc) @ v.conj().T)


def matrix_log2_on_support(m: np.ndarray, reg: float = DEFAULT_REG) -> np.ndarray:
    """log2 of a PSD matrix with eigenvalues floored at reg.

    Eigenvalues below the floor map to log2(reg); callers only ever trace
    the result against states supported inside m's support, so the floored
    directions never contribute materially.
    """
    if not (0.0 <= reg <= 1e-6):
        raise DomainError(f"spectral floor reg={reg} outside [0, 1e-6]")
    w, v = hermitian_eig(m)
    if w.size and w[-1] < -PSD_TOL:
        raise DomainError(f"matrix_log2_on_support: eigenvalue {w[-1]:.3e} below -{PSD_TOL}")
    if reg == 0.0 and w.size and w[-1] <= 0.0:
        raise DomainError("zero spectral floor with a singular input")
    lw = np.log2(np.maximum(w, reg))
    return hermitize((v * lw) @ v.conj().T)


def hs_inner(a: np.ndarray, b: np.ndarray) -> float:
    """Hilbert-Schmidt inner product Re tr(a^dag b)."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape != b.shape:
        raise ShapeError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.real(np.sum(a.conj() * b)))


def partial_trace(m: np.ndarray, dims: Iterable[int], keep: Iterable[int]) -> np.ndarray:
    """Trace out the tensor factors not listed in keep.

    dims gives the dimension of each factor in order; keep is a set of
    factor indices to retain (original relative order preserved).
    """
    m = np.asarray(m, dtype=complex)
    dims = [int(d) for d in dims]
    keep = sorted(set(int(k) for k in keep))
    n = len(dims)
    if any(k < 0 or k >= n for k in keep):
        raise ShapeError(f"keep indices {keep} out of range for {n} factors")
    total = int(np.prod(dims))
    if m.shape != (total, total):
        raise ShapeError(f"operator shape {m.shape} inconsistent with dims {dims}")
    t = m.reshape(dims + dims)
    row = [chr(ord("a") + i) for i in range(n)]
    col = [chr(ord("a") + n + i) for i in range(n)]
    for i in range(n):
        if i not in keep:
            col[i] = row[i]  # contract traced factors
    out = "".join(row[i] for i in keep) + "".join(col[i] for i in keep)
    res = np.einsum("".join(row) + "".join(col) + "->" + out, t)
    d_keep = int(np.prod([dims[i] for i in keep])) if keep else 1
    return res.reshape(d_keep, d_keep)


def binary_entropy(q: float) -> float:
    """h(q) = -q log2 q - (1-q) log2(1-q), continuous at the endpoints."""
    q = float(q)
    if q < -1e-12 or q > 1.0 + 1e-12:
        raise DomainError(f"binary_entropy argument {q} outside [0, 1]")
    q = min(max(q, 0.0), 1.0)
    if q == 0.0 or q == 1.0:
        return 0.0
    return float(-q * np.log2(q) - (1.0 - q) * np.log2(1.0 - q))


def von_neumann_entropy(rho: np.ndarray) -> float:
    """S(rho) = -sum lambda log2 lambda over the positive spectrum, in bits."""
    rho = check_density(rho)
    w = np.linalg.eigvalsh(rho)
    w = w[w > 0.0]
    return float(-np.sum(w * np.log2(w)))


def relative_entropy(rho: np.ndarray, sigma: np.ndarray, reg: float = DEFAULT_REG) -> float:
    """S(rho||sigma) = tr rho log2 rho - tr rho log2 sigma, in bits.

    Requires support(rho) inside support(sigma) up to the spectral floor;
    nonnegative whenever both arguments carry equal trace.
    """
    rho = check_hermitian(rho)
    sigma = check_hermitian(sigma)
    if rho.shape != sigma.shape:
        raise ShapeError(f"dimension mismatch: {rho.shape} vs {sigma.shape}")
    wr = np.linalg.eigvalsh(rho)
    if wr[0] < -PSD_TOL:
        raise DomainError(f"relative_entropy: rho eigenvalue {wr[0]:.3e} below -{PSD_TOL}")
    ws, vs = np.linalg.eigh(sigma)
    if ws[0] < -PSD_TOL:
        raise DomainError(f"relative_entropy: sigma eigenvalue {ws[0]:.3e} below -{PSD_TOL}")
    kernel = vs[:, ws <= reg]
    if kernel.size:
        leak = float(np.real(np.einsum("ja,jk,ka->", kernel.conj(), rho, kernel)))
        if leak > 1e-8:
            raise SupportError(f"support violation: tr(rho P_ker(sigma)) = {leak:.3e}")
    wpos = wr[wr > reg]
    term_rho = float(np.sum(wpos * np.log2(wpos)))
    term_sigma = hs_inner(rho, matrix_log2_on_support(sigma, reg))
    return term_rho - term_sigma
