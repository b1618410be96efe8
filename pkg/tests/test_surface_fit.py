"""Simulation-study and benchmark fitting targets."""

import numpy as np
import pytest

from bsgp.errors import ValidationError
from bsgp.priors import make_prior
from bsgp.splines import eval_basis
from bsgp.surface_fit import (
    CountGridTarget,
    GaussianScatterTarget,
    simulate_count_grid,
    train_test_split_cells,
)

PTS = np.linspace(0.0, 1.0, 8)


class TestSimulateCountGrid:
    def test_shapes_and_determinism(self):
        pts, mean, counts = simulate_count_grid(8, 0.25, 0.2, np.random.default_rng(0))
        assert pts.shape == (8,) and mean.shape == (8, 8) and counts.shape == (8, 8)
        pts2, mean2, counts2 = simulate_count_grid(8, 0.25, 0.2, np.random.default_rng(0))
        np.testing.assert_array_equal(counts, counts2)

    def test_counts_nonnegative_and_mean_positive(self):
        _, mean, counts = simulate_count_grid(10, 0.4, 0.3, np.random.default_rng(1))
        assert np.all(mean > 0) and np.all(counts >= 0)

    def test_overdispersion_matches_nu(self):
        # NB(mean mu, variance mu (1 + nu)): variance of counts around the
        # fixed mean surface, pooled over many replicates of one cell
        rng = np.random.default_rng(2)
        nu = 0.5
        mu = 40.0
        shape, p = mu / nu, 1.0 / (1.0 + nu)
        draws = rng.negative_binomial(shape, p, size=200_000)
        assert draws.mean() == pytest.approx(mu, rel=0.02)
        assert draws.var() == pytest.approx(mu * (1 + nu), rel=0.05)


class TestTrainTestSplit:
    def test_fraction_and_determinism(self):
        m = train_test_split_cells(10, 0.4, np.random.default_rng(3))
        assert m.shape == (10, 10) and m.sum() == 40
        m2 = train_test_split_cells(10, 0.4, np.random.default_rng(3))
        np.testing.assert_array_equal(m, m2)

    def test_rejects_bad_fraction(self):
        with pytest.raises(ValidationError):
            train_test_split_cells(10, 1.0, np.random.default_rng(0))


class TestCountGridTarget:
    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(4)
        _, _, counts = simulate_count_grid(8, 0.3, 0.2, rng)
        prior = make_prior("projected-gp", PTS, PTS, knots_rows=3, knots_cols=3)
        rows, cols = np.nonzero(train_test_split_cells(8, 0.5, rng))
        t = CountGridTarget(prior, rows, cols, counts[rows, cols])
        x = rng.standard_normal(t.dimension) * 0.3
        _, g = t.evaluate(x)
        for i in rng.choice(t.dimension, size=6, replace=False):
            e = np.zeros(t.dimension)
            e[i] = 1e-6
            fd = (t.evaluate(x + e)[0] - t.evaluate(x - e)[0]) / 2e-6
            assert g[i] == pytest.approx(fd, rel=1e-5, abs=1e-7)

    def test_rejects_negative_counts(self):
        prior = make_prior("bsplines", PTS, PTS, knots_rows=3, knots_cols=3)
        with pytest.raises(ValidationError):
            CountGridTarget(prior, [0], [0], [-1])


class TestGaussianScatterTarget:
    def _target(self, seed=5, n=40):
        rng = np.random.default_rng(seed)
        prior = make_prior("psplines", PTS, PTS, knots_rows=3, knots_cols=3)
        x, y = rng.uniform(0, 1, n), rng.uniform(0, 1, n)
        vals = np.sin(3 * x) + np.cos(2 * y) + rng.normal(0, 0.1, n)
        Bx = eval_basis(prior.basis_rows.knots, x)
        By = eval_basis(prior.basis_cols.knots, y)
        return GaussianScatterTarget(prior, Bx, By, vals), rng

    def test_gradient_matches_finite_differences(self):
        t, rng = self._target()
        x = rng.standard_normal(t.dimension) * 0.3
        _, g = t.evaluate(x)
        for i in rng.choice(t.dimension, size=6, replace=False):
            e = np.zeros(t.dimension)
            e[i] = 1e-6
            fd = (t.evaluate(x + e)[0] - t.evaluate(x - e)[0]) / 2e-6
            assert g[i] == pytest.approx(fd, rel=1e-5, abs=1e-7)

    def test_surface_at_matches_tensor_evaluation(self):
        t, rng = self._target()
        x = rng.standard_normal(t.dimension) * 0.2
        pts = np.array([0.1, 0.5, 0.9])
        Bx = eval_basis(t.prior.basis_rows.knots, pts)
        By = eval_basis(t.prior.basis_cols.knots, pts)
        got = t.surface_at(x, Bx, By)
        _, beta = t.prior.coeff_logprior(x[:-1])
        beta = np.asarray(beta)
        oracle = [
            float(Bx.values[:, i] @ beta @ By.values[:, i]) for i in range(3)
        ]
        np.testing.assert_allclose(got, oracle, atol=1e-12)

    def test_requires_coefficient_view(self):
        rng = np.random.default_rng(6)
        gp = make_prior("gp2d", PTS, PTS)
        b = eval_basis(make_prior("psplines", PTS, PTS, 3, 3).basis_rows.knots, [0.5])
        with pytest.raises(ValidationError, match="coefficient"):
            GaussianScatterTarget(gp, b, b, np.array([1.0]))
