"""Fitting targets for the simulation study and the scattered benchmark.

Both wrap a surface prior inside a simple observation model and expose the
(log density, gradient) interface the sampler expects: a Negative Binomial
model for 2D count grids, and a Gaussian model with free observation noise
for scattered continuous data evaluated through the coefficient view of the
spline priors.
"""

from __future__ import annotations

import math

import jax
import jax.numpy as jnp
import numpy as np

from .errors import ValidationError
from .kernels import SqExpKernel, factored_sqexp_cov, sample_grid_gp
from .likelihoods import gaussian_loglik, negbin_logpmf
from .priors import SurfacePrior, half_cauchy_logpdf
from .splines import BasisMatrix

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


class CountGridTarget:
    """NB-observed count grid with mean surface exp(f) and free overdispersion.

    Parameter layout: [prior raw | log nu^(-1/2)].
    """

    def __init__(self, prior: SurfacePrior, obs_rows, obs_cols, y):
        self.prior = prior
        self.obs_rows = jnp.asarray(obs_rows, dtype=jnp.int32)
        self.obs_cols = jnp.asarray(obs_cols, dtype=jnp.int32)
        y = np.asarray(y)
        if np.any(y < 0):
            raise ValidationError("counts must be non-negative")
        self.y = jnp.asarray(y, dtype=jnp.float64)
        self.dimension = prior.n_raw + 1
        self._value_and_grad = jax.jit(jax.value_and_grad(self._logp))

    def _logp(self, x):
        raw, log_invsqrt_nu = x[:-1], x[-1]
        invsqrt_nu = jnp.exp(log_invsqrt_nu)
        nu = invsqrt_nu ** (-2.0)
        theta = nu / (1.0 + nu)
        lp, f = self.prior.logprior_and_surface(raw)
        mean = jnp.exp(f[self.obs_rows, self.obs_cols])
        lp += jnp.sum(negbin_logpmf(self.y, mean / nu, theta))
        lp += -0.5 * invsqrt_nu**2 - _LOG_SQRT_2PI + math.log(2.0) + log_invsqrt_nu
        return lp

    def evaluate(self, x):
        value, grad = self._value_and_grad(jnp.asarray(x, dtype=jnp.float64))
        return float(value), np.asarray(grad)

    def mean_surface(self, x) -> np.ndarray:
        _, f = self.prior.logprior_and_surface(jnp.asarray(x[:-1]))
        return np.exp(np.asarray(f))


class GaussianScatterTarget:
    """Gaussian-observed scattered data with a spline-coefficient surface.

    The prior must expose ``coeff_logprior``; the surface is evaluated at
    the scattered locations through per-point basis columns. Parameter
    layout: [prior raw | log sigma].
    """

    def __init__(self, prior, basis_x: BasisMatrix, basis_y: BasisMatrix, y):
        if not hasattr(prior, "coeff_logprior"):
            raise ValidationError(f"prior {prior.kind} has no coefficient view")
        if basis_x.basis_count != prior.I or basis_y.basis_count != prior.J:
            raise ValidationError("point bases do not match the prior's basis counts")
        if basis_x.grid.size != basis_y.grid.size:
            raise ValidationError("x and y point bases must cover the same points")
        self.prior = prior
        self.Bx = jnp.asarray(basis_x.values)  # I x N
        self.By = jnp.asarray(basis_y.values)  # J x N
        self.y = jnp.asarray(y, dtype=jnp.float64)
        if self.y.shape != (basis_x.grid.size,):
            raise ValidationError("y length must match the number of points")
        self.dimension = prior.n_raw + 1
        self._value_and_grad = jax.jit(jax.value_and_grad(self._logp))

    def _surface_at_points(self, beta):
        return jnp.sum(self.Bx * (beta @ self.By), axis=0)

    def _logp(self, x):
        raw, log_sigma = x[:-1], x[-1]
        sigma = jnp.exp(log_sigma)
        lp, beta = self.prior.coeff_logprior(raw)
        f = self._surface_at_points(beta)
        lp += jnp.sum(gaussian_loglik(self.y, f, sigma))
        lp += half_cauchy_logpdf(sigma) + log_sigma
        return lp

    def evaluate(self, x):
        value, grad = self._value_and_grad(jnp.asarray(x, dtype=jnp.float64))
        return float(value), np.asarray(grad)

    def surface_at(self, x, basis_x: BasisMatrix, basis_y: BasisMatrix) -> np.ndarray:
        _, beta = self.prior.coeff_logprior(jnp.asarray(x[:-1]))
        beta = np.asarray(beta)
        return np.sum(np.asarray(basis_x.values) * (beta @ np.asarray(basis_y.values)), axis=0)


def simulate_count_grid(
    grid_size: int,
    lengthscale: float,
    nu: float,
    rng: np.random.Generator,
    variance_scale: float = 1.0,
):
    """Simulated NB counts whose mean is the exponential of a 2D GP draw.

    Returns (points, true mean surface, counts).
    """
    pts = np.linspace(0.0, 1.0, grid_size)
    kern = SqExpKernel(variance_scale=variance_scale, lengthscale=lengthscale)
    cov = factored_sqexp_cov(pts, pts, kern, kern)
    z = rng.standard_normal((grid_size, grid_size))
    f = sample_grid_gp(cov.L1, cov.L2, z)
    mean = np.exp(f)
    # NB with mean mu and variance mu (1 + nu)
    shape = mean / nu
    p = 1.0 / (1.0 + nu)
    counts = rng.negative_binomial(shape, p)
    return pts, mean, counts


def train_test_split_cells(
    grid_size: int, train_fraction: float, rng: np.random.Generator
):
    """Uniformly sampled training cells on a square grid."""
    if not 0.0 < train_fraction < 1.0:
        raise ValidationError("train fraction must be in (0, 1)")
    n_cells = grid_size * grid_size
    n_train = int(round(train_fraction * n_cells))
    perm = rng.permutation(n_cells)
    train = np.zeros(n_cells, dtype=bool)
    train[perm[:n_train]] = True
    return train.reshape(grid_size, grid_size)
