"""B-spline bases via the Cox-de Boor recursion and tensor-product surfaces.

Bases are built on strictly increasing interior knots, padded by replicating
the boundary knot ``degree`` times on each side. The zero-degree pieces use
half-open intervals, so the basis would vanish at the domain maximum; the
last basis function is instead forced to 1 there so that the partition of
unity holds on the closed domain.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class KnotVector:
    """Interior knots plus the padded knot sequence for a given degree."""

    interior: np.ndarray
    degree: int
    extended: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        interior = np.asarray(self.interior, dtype=float)
        if interior.ndim != 1 or interior.size < 2:
            raise ValidationError("need at least two interior knots")
        if np.any(np.diff(interior) <= 0):
            raise ValidationError("interior knots must be strictly increasing")
        if self.degree < 0:
            raise ValidationError(f"degree must be >= 0, got {self.degree}")
        extended = np.concatenate(
            [
                np.full(self.degree, interior[0]),
                interior,
                np.full(self.degree, interior[-1]),
            ]
        )
        object.__setattr__(self, "interior", interior)
        object.__setattr__(self, "extended", extended)

    @property
    def basis_count(self) -> int:
        # I = K + d - 1
        return self.interior.size + self.degree - 1

    @property
    def domain(self) -> tuple[float, float]:
        return float(self.interior[0]), float(self.interior[-1])


@dataclass(frozen=True)
class BasisMatrix:
    """Evaluated basis functions, one row per basis function."""

    values: np.ndarray  # (basis_count, grid_size)
    grid: np.ndarray
    knots: KnotVector

    @property
    def basis_count(self) -> int:
        return self.values.shape[0]


def extend_knots(interior, degree: int) -> KnotVector:
    """Pad strictly increasing interior knots with replicated boundary knots."""
    return KnotVector(np.asarray(interior, dtype=float), int(degree))


def _basis_degree_zero(extended: np.ndarray, grid: np.ndarray, i: int) -> np.ndarray:
    # half-open pieces; empty on repeated knots
    return ((grid >= extended[i]) & (grid < extended[i + 1])).astype(float)


def _cox_de_boor(extended: np.ndarray, grid: np.ndarray, i: int, p: int) -> np.ndarray:
    if p == 0:
        return _basis_degree_zero(extended, grid, i)
    left = np.zeros_like(grid)
    right = np.zeros_like(grid)
    if extended[i + p] != extended[i]:
        left = (grid - extended[i]) / (extended[i + p] - extended[i])
    if extended[i + p + 1] != extended[i + 1]:
        right = (extended[i + p + 1] - grid) / (extended[i + p + 1] - extended[i + 1])
    return left * _cox_de_boor(extended, grid, i, p - 1) + right * _cox_de_boor(
        extended, grid, i + 1, p - 1
    )


def eval_basis(knots: KnotVector, grid) -> BasisMatrix:
    """Evaluate all basis functions of ``knots`` on a sorted grid.

    Raises a validation error when a grid point falls outside the knot span.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValidationError("grid must be a non-empty 1D array")
    lo, hi = knots.domain
    if np.any(grid < lo) or np.any(grid > hi):
        raise ValidationError(f"grid points must lie in [{lo}, {hi}]")
    values = np.empty((knots.basis_count, grid.size))
    for i in range(knots.basis_count):
        values[i] = _cox_de_boor(knots.extended, grid, i, knots.degree)
    # closed-domain fix-up: the half-open pieces vanish at the right endpoint
    values[-1, grid == hi] = 1.0
    return BasisMatrix(values=values, grid=grid, knots=knots)


def tensor_surface(beta: np.ndarray, basis_rows: BasisMatrix, basis_cols: BasisMatrix) -> np.ndarray:
    """Evaluate the tensor-product surface (B1)' @ beta @ B2 on the grid."""
    beta = np.asarray(beta, dtype=float)
    expected = (basis_rows.basis_count, basis_cols.basis_count)
    if beta.shape != expected:
        raise ValidationError(f"beta has shape {beta.shape}, expected {expected}")
    return basis_rows.values.T @ beta @ basis_cols.values


def uniform_basis(n_knots: int, grid, degree: int = 3) -> BasisMatrix:
    """Equispaced interior knots spanning the grid, evaluated on the grid."""
    grid = np.asarray(grid, dtype=float)
    if n_knots < 2:
        raise ValidationError("need at least two knots per axis")
    interior = np.linspace(grid.min(), grid.max(), n_knots)
    return eval_basis(extend_knots(interior, degree), grid)
