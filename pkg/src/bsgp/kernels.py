"""Squared-exponential kernels and Kronecker-structured covariance algebra.

The factored path never materializes the full grid covariance: a draw with
covariance K2 (x) K1 is obtained by multiplying a standard-normal matrix by
the two Cholesky factors (``sample_grid_gp``). The dense projected kernel is
provided for tests and small instances only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ValidationError
from .splines import BasisMatrix

DEFAULT_JITTER = 1e-9

# test hook: counts scalar kernel evaluations performed by sqexp
_EVAL_COUNT = 0


def kernel_eval_count() -> int:
    return _EVAL_COUNT


def reset_kernel_eval_count() -> None:
    global _EVAL_COUNT
    _EVAL_COUNT = 0


@dataclass(frozen=True)
class SqExpKernel:
    """Squared-exponential kernel with variance scale zeta^2 and lengthscale."""

    variance_scale: float
    lengthscale: float

    def __post_init__(self) -> None:
        if self.variance_scale <= 0:
            raise ValidationError("variance_scale must be > 0")
        if self.lengthscale <= 0:
            raise ValidationError("lengthscale must be > 0")


def sqexp(points_a, points_b, kernel: SqExpKernel) -> np.ndarray:
    """Dense kernel matrix: zeta^2 * exp(-(a_i - b_j)^2 / (2 gamma^2))."""
    global _EVAL_COUNT
    a = np.asarray(points_a, dtype=float).ravel()
    b = np.asarray(points_b, dtype=float).ravel()
    _EVAL_COUNT += a.size * b.size
    sq = (a[:, None] - b[None, :]) ** 2
    return kernel.variance_scale * np.exp(-sq / (2.0 * kernel.lengthscale**2))


def kron_mvprod(A: np.ndarray, B: np.ndarray, V: np.ndarray) -> np.ndarray:
    """Compute (A (x) B) vec(V) in matrix form, i.e. (A @ (B @ V).T).T."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    V = np.asarray(V, dtype=float)
    if B.shape[1] != V.shape[0] or A.shape[1] != V.shape[1]:
        raise ValidationError(
            f"incompatible shapes A{A.shape}, B{B.shape}, V{V.shape}"
        )
    return (A @ (B @ V).T).T


def chol_psd(K: np.ndarray, jitter: float = DEFAULT_JITTER) -> np.ndarray:
    """Lower Cholesky factor of K + jitter * I.

    Raises a numerical error carrying the minimum-eigenvalue estimate when
    the jittered matrix is still not positive definite.
    """
    K = np.asarray(K, dtype=float)
    try:
        return np.linalg.cholesky(K + jitter * np.eye(K.shape[0]))
    except np.linalg.LinAlgError as exc:
        min_eig = float(np.linalg.eigvalsh(K).min())
        raise NumericalError(
            f"Cholesky failed after jitter {jitter}; min eigenvalue {min_eig:.3e}"
        ) from exc


@dataclass(frozen=True)
class KroneckerCov:
    """Kronecker-factored covariance K2 (x) K1 with cached Cholesky factors."""

    K1: np.ndarray
    K2: np.ndarray
    L1: np.ndarray
    L2: np.ndarray
    jitter: float = DEFAULT_JITTER

    @classmethod
    def from_factors(cls, K1, K2, jitter: float = DEFAULT_JITTER) -> "KroneckerCov":
        K1 = np.asarray(K1, dtype=float)
        K2 = np.asarray(K2, dtype=float)
        for name, K in (("K1", K1), ("K2", K2)):
            if not np.allclose(K, K.T, atol=1e-10):
                raise ValidationError(f"{name} must be symmetric")
        return cls(K1=K1, K2=K2, L1=chol_psd(K1, jitter), L2=chol_psd(K2, jitter), jitter=jitter)


def factored_sqexp_cov(
    points_rows,
    points_cols,
    kernel_rows: SqExpKernel,
    kernel_cols: SqExpKernel,
    jitter: float = DEFAULT_JITTER,
) -> KroneckerCov:
    """Grid covariance K_cols (x) K_rows from axis-wise kernels.

    Touches O(n^2 + m^2) kernel evaluations, never O((nm)^2).
    """
    K1 = sqexp(points_rows, points_rows, kernel_rows)
    K2 = sqexp(points_cols, points_cols, kernel_cols)
    return KroneckerCov.from_factors(K1, K2, jitter)


def sample_grid_gp(K1_chol: np.ndarray, K2_chol: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Non-centered draw with covariance K2 (x) K1 from standard normals z."""
    z = np.asarray(z, dtype=float)
    if z.shape != (K1_chol.shape[0], K2_chol.shape[0]):
        raise ValidationError(
            f"z has shape {z.shape}, expected {(K1_chol.shape[0], K2_chol.shape[0])}"
        )
    return kron_mvprod(K2_chol, K1_chol, z)


def projected_kernel(
    basis_rows: BasisMatrix, basis_cols: BasisMatrix, K_beta: np.ndarray
) -> np.ndarray:
    """Dense (nm)x(nm) covariance (B2 (x) B1)' K_beta (B2 (x) B1).

    Materializes the Kronecker product; small instances and tests only.
    """
    K_beta = np.asarray(K_beta, dtype=float)
    M = basis_rows.basis_count * basis_cols.basis_count
    if K_beta.shape != (M, M):
        raise ValidationError(f"K_beta has shape {K_beta.shape}, expected {(M, M)}")
    P = np.kron(basis_cols.values, basis_rows.values)  # (IJ) x (nm)
    return P.T @ K_beta @ P
