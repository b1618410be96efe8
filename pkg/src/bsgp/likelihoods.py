"""Count and Gaussian log likelihoods, including censored-sum blocks.

All densities are written with jax.numpy so they can sit inside a
differentiated log posterior; they also accept plain floats. CDF
differences are taken in log space (log-diff-exp) because censored
intervals can sit deep in a tail.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import jax
import jax.numpy as jnp
import numpy as np
from jax.scipy.special import gammaln, logsumexp

from .errors import ValidationError


def _concrete(x) -> bool:
    return not isinstance(x, jax.core.Tracer)


def _check_nb_params(alpha, theta) -> None:
    if _concrete(alpha) and alpha <= 0:
        raise ValidationError(f"alpha must be > 0, got {alpha}")
    if _concrete(theta) and not 0 < theta < 1:
        raise ValidationError(f"theta must be in (0, 1), got {theta}")


def negbin_logpmf(d, alpha, theta):
    """Shape-scale Negative Binomial log pmf.

    Mean alpha * theta / (1 - theta), variance alpha * theta / (1 - theta)^2.
    """
    if _concrete(d):
        # numpy on purpose: this must run eagerly even when tracing a jit
        arr = np.asarray(d)
        if np.any(arr < 0) or np.any(arr != np.round(arr)):
            raise ValidationError(f"d must be non-negative integer(s), got {d}")
    _check_nb_params(alpha, theta)
    d = jnp.asarray(d, dtype=jnp.float64)
    return (
        gammaln(d + alpha)
        - gammaln(alpha)
        - gammaln(d + 1.0)
        + d * jnp.log(theta)
        + alpha * jnp.log1p(-theta)
    )


def negbin_logcdf(d, alpha, theta):
    """log P(X <= d) as a stable log-sum-exp of pmf terms.

    ``d`` must be a concrete integer (it indexes the data, never a
    parameter); d < 0 yields -inf.
    """
    _check_nb_params(alpha, theta)
    d = int(d)
    if d < 0:
        return jnp.asarray(-jnp.inf)
    ks = jnp.arange(d + 1, dtype=jnp.float64)
    return logsumexp(negbin_logpmf(ks, alpha, theta))


def log_diff_exp(log_a, log_b):
    """log(exp(log_a) - exp(log_b)) for log_a >= log_b."""
    return log_a + jnp.log1p(-jnp.exp(jnp.minimum(log_b - log_a, 0.0)))


class CensorScenario(enum.Enum):
    EXACT_SUM = "exact_sum"
    INTERVAL_WITH_OBSERVED_END = "interval_with_observed_end"
    TRAILING_CENSORED = "trailing_censored"
    ALL_CENSORED = "all_censored"


@dataclass(frozen=True)
class CensoredSumBound:
    """Bounds on the sum of non-retrievable weekly deaths.

    EXACT_SUM stores the exact value as lower == upper. Open upper ends do
    not occur: every scenario yields a finite interval.
    """

    scenario: CensorScenario
    lower: int
    upper: int

    def __post_init__(self) -> None:
        if self.lower < 0:
            raise ValidationError("lower bound must be >= 0")
        if self.lower > self.upper:
            raise ValidationError(f"inconsistent bound [{self.lower}, {self.upper}]")
        if self.scenario is CensorScenario.EXACT_SUM and self.lower != self.upper:
            raise ValidationError("exact-sum bound must have lower == upper")


def censored_block_loglik(bound: CensoredSumBound, alpha_sum, theta):
    """Log probability that the summed block falls inside its bound.

    ``alpha_sum`` is the sum of the per-week shapes over the block; the sum
    of Negative Binomials with common scale is Negative Binomial with the
    summed shape.
    """
    if bound.scenario is CensorScenario.EXACT_SUM:
        return negbin_logpmf(bound.lower, alpha_sum, theta)
    upper = negbin_logcdf(bound.upper, alpha_sum, theta)
    if bound.lower == 0:
        return upper
    lower = negbin_logcdf(bound.lower - 1, alpha_sum, theta)
    return log_diff_exp(upper, lower)


_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def gaussian_loglik(y, mean, sigma):
    """Normal log density."""
    if _concrete(sigma) and sigma <= 0:
        raise ValidationError(f"sigma must be > 0, got {sigma}")
    z = (jnp.asarray(y, dtype=jnp.float64) - mean) / sigma
    return -0.5 * z * z - jnp.log(sigma) - _LOG_SQRT_2PI
