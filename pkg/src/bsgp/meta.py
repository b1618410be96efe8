"""Relative-deaths transform, the random-effects Gamma meta-regression
linking resurgent deaths to pre-resurgence vaccination, and counterfactual
projection.

The Gamma(xi, kappa^2) distribution is read as shape = xi, rate = kappa^2
by default; the shape-scale reading is available behind
``gamma_convention="shape-scale"``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import jax
import jax.numpy as jnp
import numpy as np
from jax.scipy.special import gammaln

from .errors import ValidationError
from .priors import half_cauchy_logpdf

AGE_CLASSES = ("18-64", "65+")
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class RelativeDeaths:
    """Relative resurgence trajectories r_{m,c,w} for one state and age class."""

    state: str
    age_class: str
    week_offsets: np.ndarray  # 0-based offsets from the resurgence start
    values: np.ndarray  # r > 0, one per offset

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        if np.any(values <= 0):
            raise ValidationError("relative deaths must be strictly positive")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "week_offsets", np.asarray(self.week_offsets, dtype=int))


def relative_deaths(
    mu_star_class: np.ndarray, w_start: int, state: str = "", age_class: str = ""
) -> RelativeDeaths:
    """Posterior-mean weekly deaths divided by the pre-resurgence maximum.

    ``mu_star_class`` is the posterior-mean predictive trajectory for one
    state and age class over all model weeks (1-based ``w_start``).
    """
    mu = np.asarray(mu_star_class, dtype=float)
    if not 2 <= w_start <= mu.size:
        raise ValidationError("need at least one pre-resurgence week")
    pre_max = mu[: w_start - 1].max()
    if pre_max <= 0:
        raise ValidationError("pre-resurgence maximum is zero")
    values = mu[w_start - 1 :] / pre_max
    offsets = np.arange(values.size)
    return RelativeDeaths(state=state, age_class=age_class, week_offsets=offsets, values=values)


class MetaRegression:
    """Differentiable log density of the meta-regression over states.

    Parameter vector layout (M states, 2 age classes):
    [chi_base (2) | psi_base (2) | chi_vacc | psi_vacc |
     chi_cross (2) | psi_cross (2) | chi_state (M x 2) |
     log sigma_chi (2) | log kappa (M)]
    """

    def __init__(
        self,
        data: list[RelativeDeaths],
        vacc_pre: dict,
        gamma_convention: str = "shape-rate",
    ):
        if gamma_convention not in ("shape-rate", "shape-scale"):
            raise ValidationError(f"unknown gamma convention {gamma_convention!r}")
        self.gamma_convention = gamma_convention
        self.states = sorted({d.state for d in data})
        self.state_idx = {s: i for i, s in enumerate(self.states)}
        self.M = len(self.states)
        for s in self.states:
            for c in AGE_CLASSES:
                if (s, c) not in vacc_pre:
                    raise ValidationError(f"no pre-resurgence vaccination rate for {(s, c)}")
        self.vacc = np.array(
            [[vacc_pre[(s, c)] for c in AGE_CLASSES] for s in self.states]
        )  # M x 2

        rows_m, rows_c, rows_w, rows_r = [], [], [], []
        for d in data:
            m = self.state_idx[d.state]
            c = AGE_CLASSES.index(d.age_class)
            for w, r in zip(d.week_offsets, d.values):
                rows_m.append(m)
                rows_c.append(c)
                rows_w.append(w)
                rows_r.append(r)
        self._m = jnp.asarray(rows_m, dtype=jnp.int32)
        self._c = jnp.asarray(rows_c, dtype=jnp.int32)
        self._w = jnp.asarray(rows_w, dtype=jnp.float64)
        self._r = jnp.asarray(rows_r, dtype=jnp.float64)
        self.dimension = 10 + 2 * self.M + 2 + self.M
        self._value_and_grad = jax.jit(jax.value_and_grad(self._logdensity))

    def unpack(self, x):
        M = self.M
        chi_base = x[0:2]
        psi_base = x[2:4]
        chi_vacc = x[4]
        psi_vacc = x[5]
        chi_cross = x[6:8]
        psi_cross = x[8:10]
        chi_state = x[10 : 10 + 2 * M].reshape(M, 2)
        log_sigma = x[10 + 2 * M : 12 + 2 * M]
        log_kappa = x[12 + 2 * M : 12 + 3 * M]
        return (chi_base, psi_base, chi_vacc, psi_vacc, chi_cross, psi_cross,
                chi_state, log_sigma, log_kappa)

    def _linear_terms(self, params, vacc):
        (chi_base, psi_base, chi_vacc, psi_vacc, chi_cross, psi_cross,
         chi_state, _, _) = params
        # 2x2 vaccine-effect maps: own-group effect on the diagonal,
        # cross-group effect off it
        chi_mat = jnp.array(
            [[chi_vacc, chi_cross[0]], [chi_cross[1], chi_vacc]]
        )
        psi_mat = jnp.array(
            [[psi_vacc, psi_cross[0]], [psi_cross[1], psi_vacc]]
        )
        chi = chi_base[None, :] + chi_state + vacc @ chi_mat.T  # M x 2
        psi = psi_base[None, :] + vacc @ psi_mat.T  # M x 2
        return chi, psi

    def _gamma_loglik(self, r, xi, kappa_sq):
        if self.gamma_convention == "shape-rate":
            shape, rate = xi, kappa_sq
        else:
            shape, rate = xi, 1.0 / kappa_sq
        return shape * jnp.log(rate) - gammaln(shape) + (shape - 1.0) * jnp.log(r) - rate * r

    def _logdensity(self, x):
        params = self.unpack(x)
        (chi_base, psi_base, chi_vacc, psi_vacc, chi_cross, psi_cross,
         chi_state, log_sigma, log_kappa) = params
        sigma = jnp.exp(log_sigma)
        kappa = jnp.exp(log_kappa)
        chi, psi = self._linear_terms(params, jnp.asarray(self.vacc))

        xi = jnp.exp(chi[self._m, self._c] + psi[self._m, self._c] * self._w)
        lp = jnp.sum(self._gamma_loglik(self._r, xi, kappa[self._m] ** 2))

        def normal(v, sd):
            return jnp.sum(-0.5 * (v / sd) ** 2 - jnp.log(sd) - _LOG_SQRT_2PI)

        lp += normal(chi_base, 0.5) + normal(psi_base, 0.5)
        lp += normal(chi_vacc, 0.5) + normal(psi_vacc, 0.5)
        lp += normal(chi_cross, 0.5) + normal(psi_cross, 0.5)
        lp += jnp.sum(-0.5 * (chi_state / sigma[None, :]) ** 2
                      - jnp.log(sigma[None, :]) - _LOG_SQRT_2PI)
        lp += jnp.sum(half_cauchy_logpdf(sigma) + log_sigma)
        lp += jnp.sum(half_cauchy_logpdf(kappa) + log_kappa)
        return lp

    def log_density(self, x) -> tuple[float, np.ndarray]:
        x = jnp.asarray(x, dtype=jnp.float64)
        if x.shape != (self.dimension,):
            raise ValidationError(f"expected parameter vector of length {self.dimension}")
        value, grad = self._value_and_grad(x)
        return float(value), np.asarray(grad)

    # hmc.TargetDensity interface
    def evaluate(self, x):
        return self.log_density(x)

    def expected_relative_deaths(self, x, vacc: np.ndarray) -> np.ndarray:
        """E[r] per (state, class, offset grid) under given vaccination rates."""
        params = self.unpack(jnp.asarray(x))
        chi, psi = self._linear_terms(params, jnp.asarray(vacc))
        kappa = jnp.exp(params[8])
        xi = jnp.exp(
            np.asarray(chi)[self._m, self._c]
            + np.asarray(psi)[self._m, self._c] * np.asarray(self._w)
        )
        kappa_sq = np.asarray(kappa)[np.asarray(self._m)] ** 2
        if self.gamma_convention == "shape-rate":
            mean = np.asarray(xi) / kappa_sq
        else:
            mean = np.asarray(xi) * kappa_sq
        return mean

    def parameter_names(self) -> list[str]:
        names = ["chi_base_18-64", "chi_base_65+", "psi_base_18-64", "psi_base_65+",
                 "chi_vacc", "psi_vacc",
                 "chi_cross_18-64", "chi_cross_65+", "psi_cross_18-64", "psi_cross_65+"]
        for s in self.states:
            names += [f"chi_state_{s}_18-64", f"chi_state_{s}_65+"]
        names += ["log_sigma_chi_18-64", "log_sigma_chi_65+"]
        names += [f"log_kappa_{s}" for s in self.states]
        return names


def counterfactual_project(
    model: MetaRegression,
    draws: np.ndarray,
    pre_max: dict,
    scenario_rate: float,
) -> dict:
    """Avoided deaths when 18-64 coverage is raised to ``scenario_rate``.

    For every posterior draw, expected relative deaths are recomputed with
    the 18-64 vaccination column replaced by the scenario rate, rescaled to
    absolute weekly deaths by the pre-resurgence maxima, and compared with
    the observed-coverage projection. Summaries are quantiles over draws.
    """
    if not 0.0 <= scenario_rate <= 1.0:
        raise ValidationError("scenario rate must lie in [0, 1]")
    vacc_cf = model.vacc.copy()
    vacc_cf[:, 0] = np.maximum(vacc_cf[:, 0], scenario_rate)

    m_idx = np.asarray(model._m)
    c_idx = np.asarray(model._c)
    scale = np.array(
        [pre_max[(model.states[m], AGE_CLASSES[c])] for m, c in zip(m_idx, c_idx)]
    )

    n_draws = draws.shape[0]
    avoided = {key: [] for key in pre_max}
    pct = {key: [] for key in pre_max}
    for s in range(n_draws):
        base = model.expected_relative_deaths(draws[s], model.vacc) * scale
        cf = model.expected_relative_deaths(draws[s], vacc_cf) * scale
        for (state, age_class) in pre_max:
            sel = (m_idx == model.state_idx[state]) & (c_idx == AGE_CLASSES.index(age_class))
            tot_base = base[sel].sum()
            tot_cf = cf[sel].sum()
            avoided[(state, age_class)].append(tot_base - tot_cf)
            pct[(state, age_class)].append(
                100.0 * (tot_base - tot_cf) / tot_base if tot_base > 0 else 0.0
            )

    out = {}
    for key in pre_max:
        a = np.asarray(avoided[key])
        p = np.asarray(pct[key])
        out[key] = {
            "avoided_median": float(np.median(a)),
            "avoided_lo95": float(np.quantile(a, 0.025)),
            "avoided_hi95": float(np.quantile(a, 0.975)),
            "pct_median": float(np.median(p)),
            "pct_lo95": float(np.quantile(p, 0.025)),
            "pct_hi95": float(np.quantile(p, 0.975)),
        }
    return out
