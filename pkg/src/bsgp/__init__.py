"""Bayesian 2D surface estimation with B-spline projected GP priors.

Double precision is mandatory for the numerical contracts in this package
(Cholesky round-trips, log-space CDF differences), so x64 mode is switched
on before any jax array is created.
"""

from jax import config as _jax_config

_jax_config.update("jax_enable_x64", True)

from .errors import DataError, NumericalError, ValidationError  # noqa: E402
from .splines import BasisMatrix, KnotVector, eval_basis, extend_knots, tensor_surface  # noqa: E402

__all__ = [
    "BasisMatrix",
    "DataError",
    "KnotVector",
    "NumericalError",
    "ValidationError",
    "eval_basis",
    "extend_knots",
    "tensor_surface",
]
