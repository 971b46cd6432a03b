"""
Dense Linear Algebra Module for VRD

Small dense N x N routines used by the VRD layer:
1. Symmetric eigendecomposition (descending eigenvalues)
2. Cholesky-based inversion of SPD matrices
3. A real Schur factorization for matrices similar to SPD ones
4. The symmetric matrix exponential and its derivative
5. The chain rule through the symmetric parameterization A = R + R^T
"""

import logging
from typing import NamedTuple, Optional

import numpy as np
import scipy.linalg

from .config import TOLERANCES
from .exceptions import ConvergenceError, NotPositiveDefiniteError

logger = logging.getLogger(__name__)


class SymEig(NamedTuple):
    """Eigendecomposition A = vectors @ diag(values) @ vectors.T, values descending."""
    vectors: np.ndarray
    values: np.ndarray


class SchurForm(NamedTuple):
    """Factorization A = v @ u @ v.T with v orthonormal and u upper triangular."""
    v: np.ndarray
    u: np.ndarray


def _as_square(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix contains non-finite entries")
    return a


def symmetrize(a, name: str = "matrix") -> np.ndarray:
    """
    Check a matrix is symmetric to tolerance and return its symmetric part.

    Raises:
        ValueError: if max|A - A^T| exceeds TOLERANCES["symmetry"] * max|A|
    """
    a = _as_square(a)
    scale = np.max(np.abs(a)) if a.size else 0.0
    asym = np.max(np.abs(a - a.T)) if a.size else 0.0
    if asym > TOLERANCES["symmetry"] * max(scale, np.finfo(float).tiny):
        raise ValueError(f"{name} is not symmetric (max asymmetry {asym:.3e})")
    return 0.5 * (a + a.T)


def sym_eig(a) -> SymEig:
    """
    Eigendecomposition of a symmetric matrix.

    Args:
        a: symmetric n x n matrix

    Returns:
        SymEig with orthonormal eigenvector columns and eigenvalues sorted descending
    """
    a = symmetrize(a)
    try:
        values, vectors = np.linalg.eigh(a)
    except np.linalg.LinAlgError as e:
        raise ConvergenceError(f"symmetric eigensolver did not converge: {e}") from e
    order = np.argsort(values)[::-1]
    return SymEig(vectors=vectors[:, order], values=values[order])


def cholesky_lower(a) -> np.ndarray:
    """Lower Cholesky factor C with A = C C^T."""
    a = symmetrize(a)
    try:
        return scipy.linalg.cholesky(a, lower=True)
    except np.linalg.LinAlgError as e:
        raise NotPositiveDefiniteError("not positive definite") from e


def chol_inverse(a) -> np.ndarray:
    """
    Inverse of a symmetric positive-definite matrix via Cholesky.

    Raises:
        NotPositiveDefiniteError: on a non-positive pivot
    """
    a = symmetrize(a)
    try:
        factor = scipy.linalg.cho_factor(a, lower=True)
    except np.linalg.LinAlgError as e:
        raise NotPositiveDefiniteError("not positive definite") from e
    pivots = np.abs(np.diag(factor[0]))
    if pivots.min() < 1e-6 * pivots.max():
        logger.warning("ill-conditioned SPD matrix (pivot ratio %.3e)", pivots.min() / pivots.max())
    inverse = scipy.linalg.cho_solve(factor, np.eye(a.shape[0]))
    return 0.5 * (inverse + inverse.T)


def _triangularize(eigvecs: np.ndarray, eigvals: np.ndarray) -> SchurForm:
    # A = X diag(eigvals) X^-1 and X = V R  =>  A = V (R diag R^-1) V^T
    v, r = np.linalg.qr(eigvecs)
    u = r @ np.diag(eigvals) @ scipy.linalg.solve_triangular(r, np.eye(r.shape[0]))
    u = np.triu(u)
    # Diagonal of R diag R^-1 is exactly the eigenvalues
    np.fill_diagonal(u, eigvals)
    return SchurForm(v=v, u=u)


def schur_real(a, b_chol: Optional[np.ndarray] = None) -> SchurForm:
    """
    Real Schur factorization a = v u v^T of a = (B^o)^-1 Q^o.

    With b_chol (the lower Cholesky factor C of B^o) the factorization goes
    through the symmetric similar matrix S = C^T a C^-T = C^-1 Q^o C^-T, whose
    eigenvectors W give the eigenvectors C^-T W of a. Without it the
    eigenvectors of a are computed directly and must be real.

    Args:
        a: n x n matrix, (B^o)^-1 Q^o for SPD B^o, Q^o
        b_chol: optional lower Cholesky factor of B^o

    Returns:
        SchurForm with diag(u) strictly positive and sorted descending

    Raises:
        NotPositiveDefiniteError: complex or non-positive eigenvalues
    """
    a = _as_square(a)
    n = a.shape[0]
    if b_chol is not None:
        c = np.asarray(b_chol, dtype=np.float64)
        s = c.T @ a @ scipy.linalg.solve_triangular(c, np.eye(n), lower=True).T
        scale = max(np.max(np.abs(s)), np.finfo(float).tiny)
        if np.max(np.abs(s - s.T)) > 1e-8 * scale:
            raise NotPositiveDefiniteError("parameters not positive definite")
        eig = sym_eig(0.5 * (s + s.T))
        values = eig.values
        vectors = scipy.linalg.solve_triangular(c.T, eig.vectors, lower=False)
    else:
        values, vectors = np.linalg.eig(a)
        if np.any(np.abs(values.imag) > 1e-10 * max(np.max(np.abs(values)), 1.0)):
            raise NotPositiveDefiniteError("parameters not positive definite")
        values, vectors = values.real, vectors.real
        order = np.argsort(values)[::-1]
        values, vectors = values[order], vectors[:, order]
    if np.any(values <= 0.0):
        raise NotPositiveDefiniteError("parameters not positive definite")
    return _triangularize(vectors, values)


def expm_sym(abar) -> np.ndarray:
    """
    Matrix exponential of a symmetric matrix.

    Returns:
        U diag(exp(lambda)) U^T, which is symmetric positive definite
    """
    eig = sym_eig(abar)
    out = (eig.vectors * np.exp(eig.values)) @ eig.vectors.T
    return 0.5 * (out + out.T)


def phi_matrix(values: np.ndarray) -> np.ndarray:
    """
    Divided differences of exp over the eigenvalues.

    Phi_ij = (e^li - e^lj) / (li - lj), and e^li when li = lj. Evaluated as
    e^((li+lj)/2) sinh(d/2) / (d/2) with d = li - lj, which is free of
    cancellation for nearby eigenvalues.
    """
    li = values[:, np.newaxis]
    lj = values[np.newaxis, :]
    half = 0.5 * (li - lj)
    near = np.abs(li - lj) < TOLERANCES["phi_degenerate"]
    safe = np.where(near, 1.0, half)
    ratio = np.where(near, 1.0 + half * half / 6.0, np.sinh(safe) / safe)
    return np.exp(0.5 * (li + lj)) * ratio


def expm_grad(abar, dl_da) -> np.ndarray:
    """
    Back-propagate dL/dA through A = exp(abar) for symmetric abar.

    Args:
        abar: symmetric n x n matrix
        dl_da: dL/dA as an arbitrary n x n matrix (entry ij is dL/dA_ij)

    Returns:
        dL/dabar = U ((U^T dL/dA U) * Phi) U^T
    """
    eig = sym_eig(abar)
    g = np.asarray(dl_da, dtype=np.float64)
    u = eig.vectors
    return u @ ((u.T @ g @ u) * phi_matrix(eig.values)) @ u.T


def symmetrize_param_grad(dl_dabar) -> np.ndarray:
    """dL/dR for abar = R + R^T."""
    g = np.asarray(dl_dabar, dtype=np.float64)
    return g + g.T
