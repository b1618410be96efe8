"""The four interchangeable priors on the latent surface.

Each prior exposes the same contract: a raw unconstrained parameter vector
of known length maps to (log prior density, realized n x m surface). The
two GP variants use the non-centered parameterisation through Kronecker
Cholesky factors; hyperparameters enter on the log scale with their
Jacobian terms included.

Hyperprior registry: lengthscales ~ Inv-Gamma(5, 5), variance scale and
GMRF scale ~ half-Cauchy(0, 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import jax.numpy as jnp
import numpy as np

from .errors import NumericalError, ValidationError
from .kernels import DEFAULT_JITTER
from .splines import BasisMatrix

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def std_normal_logpdf(z):
    return jnp.sum(-0.5 * z * z - _LOG_SQRT_2PI)


def inv_gamma_logpdf(x, shape: float = 5.0, scale: float = 5.0):
    return shape * jnp.log(scale) - math.lgamma(shape) - (shape + 1.0) * jnp.log(x) - scale / x


def half_cauchy_logpdf(x, scale: float = 1.0):
    return math.log(2.0 / math.pi) - jnp.log(scale) - jnp.log1p((x / scale) ** 2)


def _sqexp_jnp(points: jnp.ndarray, zeta, gamma):
    sq = (points[:, None] - points[None, :]) ** 2
    return zeta**2 * jnp.exp(-sq / (2.0 * gamma**2))


def _chol_cov(points: jnp.ndarray, zeta, gamma, jitter: float):
    K = _sqexp_jnp(points, zeta, gamma) + jitter * jnp.eye(points.shape[0])
    return jnp.linalg.cholesky(K)


def _kron_mvprod(A, B, V):
    return (A @ (B @ V).T).T


def _gp_hyper_logprior(log_zeta, log_gamma1, log_gamma2):
    zeta = jnp.exp(log_zeta)
    g1 = jnp.exp(log_gamma1)
    g2 = jnp.exp(log_gamma2)
    lp = half_cauchy_logpdf(zeta) + log_zeta
    lp += inv_gamma_logpdf(g1) + log_gamma1
    lp += inv_gamma_logpdf(g2) + log_gamma2
    return lp, zeta, g1, g2


class SurfacePrior:
    """Common contract of all surface priors."""

    kind: str
    hyper_names: tuple[str, ...]
    n_rows: int
    n_cols: int

    @property
    def n_raw(self) -> int:
        raise NotImplementedError

    def logprior_and_surface(self, raw):
        """Map the unconstrained vector to (log density, n x m surface)."""
        raise NotImplementedError

    def _check_raw(self, raw):
        raw = jnp.asarray(raw)
        if raw.shape != (self.n_raw,):
            raise ValidationError(
                f"{self.kind} expects raw vector of length {self.n_raw}, got shape {raw.shape}"
            )
        return raw


class Standard2DGP(SurfacePrior):
    """Zero-mean 2D GP on the grid with a separable squared-exponential kernel."""

    kind = "gp2d"
    hyper_names = ("zeta", "gamma1", "gamma2")

    def __init__(self, points_rows, points_cols, jitter: float = DEFAULT_JITTER):
        self.points_rows = jnp.asarray(points_rows, dtype=jnp.float64)
        self.points_cols = jnp.asarray(points_cols, dtype=jnp.float64)
        self.n_rows = self.points_rows.size
        self.n_cols = self.points_cols.size
        self.jitter = jitter

    @property
    def n_raw(self) -> int:
        return 3 + self.n_rows * self.n_cols

    def logprior_and_surface(self, raw):
        raw = self._check_raw(raw)
        lp, zeta, g1, g2 = _gp_hyper_logprior(raw[0], raw[1], raw[2])
        z = raw[3:].reshape(self.n_rows, self.n_cols)
        lp += std_normal_logpdf(z)
        L1 = _chol_cov(self.points_rows, zeta, g1, self.jitter)
        L2 = _chol_cov(self.points_cols, zeta, g2, self.jitter)
        surface = _kron_mvprod(L2, L1, z)
        return lp, surface


class StandardBSplines(SurfacePrior):
    """Tensor-product B-spline surface with i.i.d. standard-normal coefficients."""

    kind = "bsplines"
    hyper_names = ()

    def __init__(self, basis_rows: BasisMatrix, basis_cols: BasisMatrix):
        self.basis_rows = basis_rows
        self.basis_cols = basis_cols
        self.B1 = jnp.asarray(basis_rows.values)
        self.B2 = jnp.asarray(basis_cols.values)
        self.I = basis_rows.basis_count
        self.J = basis_cols.basis_count
        self.n_rows = basis_rows.grid.size
        self.n_cols = basis_cols.grid.size

    @property
    def n_raw(self) -> int:
        return self.I * self.J

    def coeff_logprior(self, raw):
        raw = self._check_raw(raw)
        beta = raw.reshape(self.I, self.J)
        return std_normal_logpdf(beta), beta

    def logprior_and_surface(self, raw):
        lp, beta = self.coeff_logprior(raw)
        return lp, self.B1.T @ beta @ self.B2


@dataclass(frozen=True)
class GmrfGraph:
    """First-order neighbor structure of the I x J coefficient lattice."""

    n_rows: int
    n_cols: int
    edges_u: np.ndarray  # flat (row-major) indices, one entry per edge
    edges_v: np.ndarray
    degrees: np.ndarray

    @classmethod
    def lattice(cls, n_rows: int, n_cols: int) -> "GmrfGraph":
        idx = np.arange(n_rows * n_cols).reshape(n_rows, n_cols)
        horiz = np.stack([idx[:, :-1].ravel(), idx[:, 1:].ravel()])
        vert = np.stack([idx[:-1, :].ravel(), idx[1:, :].ravel()])
        edges = np.concatenate([horiz, vert], axis=1)
        degrees = np.zeros(n_rows * n_cols, dtype=int)
        np.add.at(degrees, edges[0], 1)
        np.add.at(degrees, edges[1], 1)
        return cls(n_rows, n_cols, edges[0], edges[1], degrees)


class BayesianPSplines(SurfacePrior):
    """GMRF (pairwise-difference) prior on the B-spline coefficients.

    The pairwise-difference form has one flat direction (adding a constant
    to all coefficients); a soft sum-to-zero term pins it so the raw vector
    stays unconstrained. The tau-dependent normalizing constant
    -(IJ - 1) log tau is included so tau is identified.
    """

    kind = "psplines"
    hyper_names = ("tau",)
    soft_zero_sd = 0.001

    def __init__(self, basis_rows: BasisMatrix, basis_cols: BasisMatrix):
        self.basis_rows = basis_rows
        self.basis_cols = basis_cols
        self.B1 = jnp.asarray(basis_rows.values)
        self.B2 = jnp.asarray(basis_cols.values)
        self.I = basis_rows.basis_count
        self.J = basis_cols.basis_count
        self.n_rows = basis_rows.grid.size
        self.n_cols = basis_cols.grid.size
        self.graph = GmrfGraph.lattice(self.I, self.J)

    @property
    def n_raw(self) -> int:
        return 1 + self.I * self.J

    def coeff_logprior(self, raw):
        raw = self._check_raw(raw)
        log_tau = raw[0]
        tau = jnp.exp(log_tau)
        beta = raw[1:]
        diffs = beta[self.graph.edges_u] - beta[self.graph.edges_v]
        M = self.I * self.J
        lp = -0.5 * jnp.sum(diffs**2) / tau**2 - (M - 1) * log_tau
        # soft sum-to-zero on the flat direction
        mean_beta = jnp.mean(beta)
        lp += -0.5 * (mean_beta / self.soft_zero_sd) ** 2
        lp += half_cauchy_logpdf(tau) + log_tau
        return lp, beta.reshape(self.I, self.J)

    def logprior_and_surface(self, raw):
        lp, beta = self.coeff_logprior(raw)
        return lp, self.B1.T @ beta @ self.B2


class ProjectedGP(SurfacePrior):
    """2D GP over B-spline coefficients, projected onto the grid surface.

    The coefficient GP is indexed by integer basis indices 1..I and 1..J.
    """

    kind = "projected-gp"
    hyper_names = ("zeta", "gamma1", "gamma2")

    def __init__(self, basis_rows: BasisMatrix, basis_cols: BasisMatrix, jitter: float = DEFAULT_JITTER):
        self.basis_rows = basis_rows
        self.basis_cols = basis_cols
        self.B1 = jnp.asarray(basis_rows.values)
        self.B2 = jnp.asarray(basis_cols.values)
        self.I = basis_rows.basis_count
        self.J = basis_cols.basis_count
        self.n_rows = basis_rows.grid.size
        self.n_cols = basis_cols.grid.size
        self.idx_rows = jnp.arange(1.0, self.I + 1.0)
        self.idx_cols = jnp.arange(1.0, self.J + 1.0)
        self.jitter = jitter

    @property
    def n_raw(self) -> int:
        return 3 + self.I * self.J

    def coeff_logprior(self, raw):
        raw = self._check_raw(raw)
        lp, zeta, g1, g2 = _gp_hyper_logprior(raw[0], raw[1], raw[2])
        z = raw[3:].reshape(self.I, self.J)
        lp += std_normal_logpdf(z)
        L1 = _chol_cov(self.idx_rows, zeta, g1, self.jitter)
        L2 = _chol_cov(self.idx_cols, zeta, g2, self.jitter)
        return lp, _kron_mvprod(L2, L1, z)

    def logprior_and_surface(self, raw):
        lp, beta = self.coeff_logprior(raw)
        return lp, self.B1.T @ beta @ self.B2

    def coefficients(self, raw):
        """The realized coefficient matrix for a raw vector (diagnostics)."""
        raw = self._check_raw(raw)
        zeta, g1, g2 = jnp.exp(raw[0]), jnp.exp(raw[1]), jnp.exp(raw[2])
        z = raw[3:].reshape(self.I, self.J)
        L1 = _chol_cov(self.idx_rows, zeta, g1, self.jitter)
        L2 = _chol_cov(self.idx_cols, zeta, g2, self.jitter)
        return _kron_mvprod(L2, L1, z)


def penalty_decomposition(
    prior: ProjectedGP, f_vec: np.ndarray, K_beta: np.ndarray
) -> tuple[float, float]:
    """Split the projected-GP log prior into quadratic data-fit and log|K_beta|.

    Returns (quadratic term, penalty term) where the quadratic term is
    vec(f)' (B2 (x) B1)' K_beta (B2 (x) B1) vec(f), evaluated through the
    factored projection, and the penalty is the log determinant of K_beta.
    """
    f_vec = np.asarray(f_vec, dtype=float)
    n, m = prior.n_rows, prior.n_cols
    if f_vec.shape != (n * m,):
        raise ValidationError(f"f_vec must have length {n * m}, got {f_vec.shape}")
    M = prior.I * prior.J
    K_beta = np.asarray(K_beta, dtype=float)
    if K_beta.shape != (M, M):
        raise ValidationError(f"K_beta has shape {K_beta.shape}, expected {(M, M)}")
    F = f_vec.reshape(m, n).T  # column-stacked vec back to n x m
    B1 = np.asarray(prior.B1)
    B2 = np.asarray(prior.B2)
    u = (B1 @ F @ B2.T).T.ravel()  # (B2 (x) B1) vec(f), column-stacked
    quad = float(u @ K_beta @ u)
    sign, logdet = np.linalg.slogdet(K_beta)
    if sign <= 0 or not np.isfinite(logdet):
        raise NumericalError("K_beta is singular or not positive definite")
    return quad, float(logdet)


def make_prior(
    kind: str,
    grid_rows,
    grid_cols,
    knots_rows: int = 12,
    knots_cols: int = 10,
    degree: int = 3,
) -> SurfacePrior:
    """Build a prior variant from config-style keys."""
    from .splines import uniform_basis

    grid_rows = np.asarray(grid_rows, dtype=float)
    grid_cols = np.asarray(grid_cols, dtype=float)
    if kind == "gp2d":
        return Standard2DGP(grid_rows, grid_cols)
    basis_rows = uniform_basis(knots_rows, grid_rows, degree)
    basis_cols = uniform_basis(knots_cols, grid_cols, degree)
    if kind == "bsplines":
        return StandardBSplines(basis_rows, basis_cols)
    if kind == "psplines":
        return BayesianPSplines(basis_rows, basis_cols)
    if kind == "projected-gp":
        return ProjectedGP(basis_rows, basis_cols)
    raise ValidationError(f"unknown prior kind {kind!r}")
