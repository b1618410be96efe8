"""The full mortality model: latent surface -> age composition -> censored
Negative-Binomial observation model, with posterior-predictive rescaling.

The unconstrained parameter vector is laid out as
``[surface raw params | log lambda (W) | log nu^(-1/2)]``. Gradients come
from reverse-mode differentiation of the assembled jax graph.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import partial

import jax
import jax.numpy as jnp
import numpy as np

from .data import CensoredSeries
from .errors import ValidationError
from .likelihoods import censored_block_loglik, negbin_logpmf
from .priors import SurfacePrior

_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


@dataclass(frozen=True)
class AgeGrid:
    """Ages, weeks, and the reporting bands that partition the ages."""

    ages: np.ndarray
    n_weeks: int
    band_labels: tuple[str, ...]
    band_members: tuple[np.ndarray, ...]  # indices into ages, one array per band

    def __post_init__(self) -> None:
        if self.n_weeks < 2:
            raise ValidationError("need at least two weeks")
        allidx = np.sort(np.concatenate(self.band_members))
        if not np.array_equal(allidx, np.arange(self.ages.size)):
            raise ValidationError("bands must partition the age axis exactly")

    @property
    def n_ages(self) -> int:
        return self.ages.size

    @property
    def n_bands(self) -> int:
        return len(self.band_labels)

    def band_matrix(self) -> np.ndarray:
        """0/1 aggregation matrix of shape n_bands x n_ages."""
        A = np.zeros((self.n_bands, self.n_ages))
        for b, members in enumerate(self.band_members):
            A[b, members] = 1.0
        return A

    @classmethod
    def cdc(cls, n_weeks: int) -> "AgeGrid":
        """Ages 0..105 with the 11 CDC reporting bands."""
        edges = [(0, 0), (1, 4), (5, 14), (15, 24), (25, 34), (35, 44),
                 (45, 54), (55, 64), (65, 74), (75, 84), (85, 105)]
        ages = np.arange(106)
        labels = tuple(f"{lo}-{hi}" if lo != hi else str(lo) for lo, hi in edges)
        members = tuple(np.arange(lo, hi + 1) for lo, hi in edges)
        return cls(ages=ages, n_weeks=n_weeks, band_labels=labels, band_members=members)

    @classmethod
    def uniform(cls, n_ages: int, n_bands: int, n_weeks: int) -> "AgeGrid":
        """Equal-width bands over a reduced age axis, for toys and tests."""
        if n_ages % n_bands != 0:
            raise ValidationError("n_ages must be divisible by n_bands")
        width = n_ages // n_bands
        members = tuple(np.arange(b * width, (b + 1) * width) for b in range(n_bands))
        labels = tuple(f"{m[0]}-{m[-1]}" for m in members)
        return cls(ages=np.arange(n_ages), n_weeks=n_weeks, band_labels=labels,
                   band_members=members)


@dataclass(frozen=True)
class CalibrationSeries:
    """All-age weekly deaths used as the predictive total constraint."""

    deaths: np.ndarray  # length n_weeks, non-negative integers

    def __post_init__(self) -> None:
        deaths = np.asarray(self.deaths)
        if np.any(deaths < 0):
            raise ValidationError("calibration totals must be non-negative")
        object.__setattr__(self, "deaths", deaths.astype(np.int64))


def composition_from_surface(f):
    """Column-wise softmax of the surface with max subtraction."""
    f = jnp.asarray(f)
    shifted = f - jnp.max(f, axis=0, keepdims=True)
    e = jnp.exp(shifted)
    return e / jnp.sum(e, axis=0, keepdims=True)


def expected_band_deaths(lam, pi, grid: AgeGrid):
    """Band-aggregated expected deaths mu_{b,w} = sum_{a in b} lambda_w pi_{a,w}."""
    if not isinstance(lam, jax.core.Tracer):
        arr = np.asarray(lam, dtype=float)
        if np.any(arr < 0):
            raise ValidationError("lambda must be non-negative")
    lam = jnp.asarray(lam)
    A = jnp.asarray(grid.band_matrix())
    mu_age = pi * lam[None, :]
    return A @ mu_age


class MortalityModel:
    """Differentiable log posterior over the unconstrained parameter vector."""

    def __init__(
        self,
        grid: AgeGrid,
        series: list[CensoredSeries],
        prior: SurfacePrior,
        eta: float,
        gamma_sd_factor: float = 1.0,
    ):
        if len(series) != grid.n_bands:
            raise ValidationError(
                f"need one censored series per band ({grid.n_bands}), got {len(series)}"
            )
        if prior.n_rows != grid.n_ages or prior.n_cols != grid.n_weeks:
            raise ValidationError("prior grid does not match the age/week grid")
        for s in series:
            for w, _ in s.retrievable:
                if not 1 <= w <= grid.n_weeks:
                    raise ValidationError(f"retrievable week {w} outside 1..{grid.n_weeks}")
        self.grid = grid
        self.series = series
        self.prior = prior
        self.eta = float(eta)
        # lambda prior sd: T_w / (2 eta), times a config override
        self.gamma_sd_factor = float(gamma_sd_factor)
        self.n_weeks = grid.n_weeks
        self.dimension = prior.n_raw + self.n_weeks + 1

        T = np.zeros(self.n_weeks)
        ret_b, ret_w, ret_d = [], [], []
        for b, s in enumerate(series):
            for w, d in s.retrievable:
                T[w - 1] += d
                ret_b.append(b)
                ret_w.append(w - 1)
                ret_d.append(d)
        self._ret_b = jnp.asarray(ret_b, dtype=jnp.int32)
        self._ret_w = jnp.asarray(ret_w, dtype=jnp.int32)
        self._ret_d = jnp.asarray(ret_d, dtype=jnp.float64)
        self.prior_totals = np.maximum(T, 1.0)  # zero totals would degenerate the Gamma

        self._value_and_grad = jax.jit(jax.value_and_grad(self._log_posterior))

    # parameter vector layout helpers
    def split_raw(self, x):
        k = self.prior.n_raw
        return x[:k], x[k : k + self.n_weeks], x[k + self.n_weeks]

    def _log_posterior(self, x):
        raw_surface, log_lam, log_invsqrt_nu = self.split_raw(x)
        lam = jnp.exp(log_lam)
        invsqrt_nu = jnp.exp(log_invsqrt_nu)
        nu = invsqrt_nu ** (-2.0)
        theta = nu / (1.0 + nu)

        lp, f = self.prior.logprior_and_surface(raw_surface)

        pi = composition_from_surface(f)
        mu = expected_band_deaths(lam, pi, self.grid)
        alpha = mu / nu

        if self._ret_d.size:
            lp += jnp.sum(negbin_logpmf(self._ret_d, alpha[self._ret_b, self._ret_w], theta))
        for b, s in enumerate(self.series):
            if s.bound is not None:
                wnr = jnp.asarray([w - 1 for w in s.nonretrievable_weeks])
                alpha_sum = jnp.sum(alpha[b, wnr])
                lp += censored_block_loglik(s.bound, alpha_sum, theta)

        # Gamma(mean T_w, sd T_w / (2 eta)) in shape-rate form, on the log scale
        sd = self.prior_totals / (2.0 * self.eta) * self.gamma_sd_factor
        shape = (self.prior_totals / sd) ** 2
        rate = self.prior_totals / sd**2
        lp += jnp.sum(
            shape * jnp.log(rate)
            - jax.scipy.special.gammaln(shape)
            + (shape - 1.0) * log_lam
            - rate * lam
            + log_lam  # Jacobian of the log transform
        )

        # half-normal on nu^(-1/2), with Jacobian
        lp += -0.5 * invsqrt_nu**2 - _LOG_SQRT_2PI + np.log(2.0) + log_invsqrt_nu
        return lp

    def log_posterior(self, x) -> tuple[float, np.ndarray]:
        x = jnp.asarray(x, dtype=jnp.float64)
        if x.shape != (self.dimension,):
            raise ValidationError(f"expected parameter vector of length {self.dimension}")
        value, grad = self._value_and_grad(x)
        return float(value), np.asarray(grad)

    # hmc.TargetDensity interface
    def evaluate(self, x):
        return self.log_posterior(x)

    def constrain(self, x) -> dict[str, np.ndarray]:
        """Named constrained parameters for one draw."""
        raw_surface, log_lam, log_invsqrt_nu = self.split_raw(jnp.asarray(x))
        lam = np.exp(np.asarray(log_lam))
        nu = float(np.exp(log_invsqrt_nu)) ** (-2.0)
        _, f = self.prior.logprior_and_surface(raw_surface)
        f = np.asarray(f)
        pi = np.asarray(composition_from_surface(f))
        mu_age = pi * lam[None, :]
        return {
            "lambda": lam,
            "nu": nu,
            "surface": f,
            "pi": pi,
            "mu_age": mu_age,
            "mu_band": self.grid.band_matrix() @ mu_age,
            "alpha_age": mu_age / nu,
        }


def sample_dirichlet_multinomial(
    rng: np.random.Generator, total: int, concentrations: np.ndarray
) -> np.ndarray:
    """One Dirichlet-Multinomial draw summing exactly to ``total``."""
    p = rng.dirichlet(concentrations)
    return rng.multinomial(total, p)


def predictive_rescale(
    alpha_draws: np.ndarray,
    calib: CalibrationSeries,
    rng: np.random.Generator,
) -> np.ndarray:
    """Sample predictive deaths d* constrained to the calibration totals.

    ``alpha_draws`` has shape (draws, n_ages, n_weeks); the output shares it
    and satisfies sum_a d*[s, a, w] == calib.deaths[w] for every draw s.
    """
    alpha_draws = np.asarray(alpha_draws, dtype=float)
    n_draws, n_ages, n_weeks = alpha_draws.shape
    if calib.deaths.size != n_weeks:
        raise ValidationError("calibration series length does not match weeks")
    out = np.empty((n_draws, n_ages, n_weeks), dtype=np.int64)
    for s in range(n_draws):
        for w in range(n_weeks):
            out[s, :, w] = sample_dirichlet_multinomial(
                rng, int(calib.deaths[w]), alpha_draws[s, :, w]
            )
    return out


def mortality_rate(d_star: np.ndarray, band: np.ndarray, population: np.ndarray) -> np.ndarray:
    """Cumulative predicted deaths in an age band divided by its population.

    Returns one rate per draw.
    """
    band = np.asarray(band, dtype=int)
    if band.size == 0:
        raise ValidationError("band must be non-empty")
    population = np.asarray(population, dtype=float)
    if np.any(population[band] <= 0):
        raise ValidationError("population must be positive on the band")
    deaths = d_star[:, band, :].sum(axis=(1, 2))
    return deaths / population[band].sum()
