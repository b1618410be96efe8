"""Gradient-based MCMC: leapfrog HMC with dual-averaging step-size adaptation.

Plain HMC with a jittered fixed path length (uniform over [0.8L, 1.2L]).
Warmup adapts the step size towards a 0.8 acceptance target; a diagonal
mass matrix is estimated from draws in the second half of warmup, after
which the step size re-adapts under the new metric. Chains run in worker
threads over a shared immutable target; each chain owns an independent RNG
stream derived from (seed, chain index), so results are deterministic and
merged by chain index.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np

from .errors import ValidationError

DIVERGENCE_THRESHOLD = 1000.0


class TargetDensity(Protocol):
    dimension: int

    def evaluate(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        """Return (log density, gradient) at the unconstrained point x."""
        ...


@dataclass(frozen=True)
class FunctionTarget:
    """Adapter wrapping a plain (logp, grad) callable."""

    dimension: int
    fn: Callable[[np.ndarray], tuple[float, np.ndarray]]

    def evaluate(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        return self.fn(x)


@dataclass(frozen=True)
class HmcConfig:
    chains: int = 8
    iterations: int = 1500
    warmup: int = 500
    seed: int = 1
    leapfrog_steps: int = 16
    max_leapfrog: int = 64
    target_accept: float = 0.8
    init_scale: float = 1.0

    def __post_init__(self) -> None:
        if self.chains < 1:
            raise ValidationError("need at least one chain")
        if not 0 < self.warmup < self.iterations:
            raise ValidationError("need 0 < warmup < iterations")
        if self.leapfrog_steps < 1 or self.max_leapfrog < self.leapfrog_steps:
            raise ValidationError("invalid leapfrog step settings")


@dataclass
class PosteriorDraws:
    """Post-warmup draws with per-chain provenance."""

    draws: np.ndarray  # (chains, kept_iterations, dimension)
    names: list[str]
    divergences: np.ndarray  # per chain
    accept_rate: np.ndarray  # per chain
    step_sizes: np.ndarray  # per chain

    @property
    def n_chains(self) -> int:
        return self.draws.shape[0]

    def flat(self) -> np.ndarray:
        return self.draws.reshape(-1, self.draws.shape[-1])

    def diagnostics(self) -> dict[str, np.ndarray]:
        ess = np.array([bulk_ess(self.draws[:, :, i]) for i in range(self.draws.shape[-1])])
        rhat = np.array([split_rhat(self.draws[:, :, i]) for i in range(self.draws.shape[-1])])
        return {"ess": ess, "rhat": rhat}


@dataclass
class _DualAveraging:
    """Nesterov dual averaging of log step size (Hoffman & Gelman 2014)."""

    mu: float
    target: float = 0.8
    gamma: float = 0.05
    t0: float = 10.0
    kappa: float = 0.75
    count: int = 0
    h_bar: float = 0.0
    log_eps_bar: float = 0.0

    def update(self, accept_prob: float) -> float:
        self.count += 1
        frac = 1.0 / (self.count + self.t0)
        self.h_bar = (1.0 - frac) * self.h_bar + frac * (self.target - accept_prob)
        log_eps = self.mu - np.sqrt(self.count) / self.gamma * self.h_bar
        eta = self.count ** (-self.kappa)
        self.log_eps_bar = eta * log_eps + (1.0 - eta) * self.log_eps_bar
        return float(np.exp(log_eps))

    def averaged(self) -> float:
        return float(np.exp(self.log_eps_bar))


def _leapfrog(evaluate, x, p, grad, eps, n_steps, inv_mass):
    for _ in range(n_steps):
        p = p + 0.5 * eps * grad
        x = x + eps * inv_mass * p
        logp, grad = evaluate(x)
        p = p + 0.5 * eps * grad
    return x, p, logp, grad


def _init_point(target: TargetDensity, rng: np.random.Generator, scale: float):
    for _ in range(100):
        x = rng.uniform(-scale, scale, size=target.dimension)
        logp, grad = target.evaluate(x)
        if np.isfinite(logp) and np.all(np.isfinite(grad)):
            return x, logp, grad
    raise ValidationError("could not find a finite initialization point in 100 draws")


def _run_chain(target: TargetDensity, config: HmcConfig, chain: int):
    rng = np.random.default_rng([config.seed, chain])
    dim = target.dimension
    x, logp, grad = _init_point(target, rng, config.init_scale)

    inv_mass = np.ones(dim)
    eps = 0.1
    adapt = _DualAveraging(mu=np.log(10 * eps), target=config.target_accept)

    n_keep = config.iterations - config.warmup
    kept = np.empty((n_keep, dim))
    warm_window: list[np.ndarray] = []
    mass_switch = config.warmup // 2
    divergences = 0
    accepts = 0.0

    for it in range(config.iterations):
        warming = it < config.warmup
        p = rng.normal(size=dim) / np.sqrt(inv_mass)
        h0 = -logp + 0.5 * np.sum(inv_mass * p * p)
        base = config.leapfrog_steps
        n_steps = int(rng.integers(max(1, int(0.8 * base)), int(1.2 * base) + 1))
        n_steps = min(n_steps, config.max_leapfrog)
        x_new, p_new, logp_new, grad_new = _leapfrog(
            target.evaluate, x, p, grad, eps, n_steps, inv_mass
        )
        # overflow to inf on a divergent trajectory is expected and caught below
        with np.errstate(over="ignore"):
            h1 = -logp_new + 0.5 * np.sum(inv_mass * p_new * p_new)
        delta_h = h1 - h0
        diverged = not np.isfinite(delta_h) or delta_h > DIVERGENCE_THRESHOLD
        accept_prob = 0.0 if diverged else float(np.exp(min(-delta_h, 0.0)))
        if not diverged and rng.uniform() < accept_prob:
            x, logp, grad = x_new, logp_new, grad_new

        if warming:
            eps = adapt.update(accept_prob)
            if it >= mass_switch:
                warm_window.append(x.copy())
            if it == config.warmup - 1:
                eps = adapt.averaged()
            elif it == config.warmup - 1 - (config.warmup - mass_switch) // 2:
                # metric from the second half of warmup, then re-adapt eps
                if len(warm_window) >= 10:
                    var = np.var(np.asarray(warm_window), axis=0)
                    inv_mass = np.where(var > 1e-12, var, 1.0)
                adapt = _DualAveraging(mu=np.log(10 * eps), target=config.target_accept)
        else:
            if diverged:
                divergences += 1
            accepts += accept_prob
            kept[it - config.warmup] = x

    return kept, divergences, accepts / n_keep, eps


def sample(
    target: TargetDensity, config: HmcConfig, names: list[str] | None = None
) -> PosteriorDraws:
    """Run multi-chain HMC and collect post-warmup draws."""
    if target.dimension < 1:
        raise ValidationError("target dimension must be >= 1")
    with ThreadPoolExecutor(max_workers=min(config.chains, 8)) as pool:
        results = list(
            pool.map(lambda c: _run_chain(target, config, c), range(config.chains))
        )
    draws = np.stack([r[0] for r in results])
    if names is None:
        names = [f"x{i}" for i in range(target.dimension)]
    return PosteriorDraws(
        draws=draws,
        names=names,
        divergences=np.array([r[1] for r in results]),
        accept_rate=np.array([r[2] for r in results]),
        step_sizes=np.array([r[3] for r in results]),
    )


# ----------------------------------------------------------------- diagnostics


def _split_chains(chains: np.ndarray) -> np.ndarray:
    n = chains.shape[1] // 2
    return np.concatenate([chains[:, :n], chains[:, n : 2 * n]], axis=0)


def _rank_normalize(chains: np.ndarray) -> np.ndarray:
    from scipy.stats import norm, rankdata

    flat = rankdata(chains.ravel()).reshape(chains.shape)
    return norm.ppf((flat - 0.375) / (chains.size + 0.25))


def split_rhat(chains: np.ndarray) -> float:
    """Rank-normalized split potential-scale-reduction factor."""
    chains = np.asarray(chains, dtype=float)
    if chains.ndim != 2 or chains.shape[0] < 2 or chains.shape[1] < 4:
        raise ValidationError("need >= 2 chains with >= 4 draws each")
    z = _rank_normalize(_split_chains(chains))
    m, n = z.shape
    chain_means = z.mean(axis=1)
    between = n * np.var(chain_means, ddof=1)
    within = np.mean(np.var(z, axis=1, ddof=1))
    if within == 0:
        return np.inf
    var_plus = (n - 1) / n * within + between / n
    return float(np.sqrt(var_plus / within))


def _autocovariance(x: np.ndarray) -> np.ndarray:
    n = x.size
    fft_len = 2 ** int(np.ceil(np.log2(2 * n)))
    centered = x - x.mean()
    f = np.fft.rfft(centered, fft_len)
    acov = np.fft.irfft(f * np.conjugate(f), fft_len)[:n].real
    return acov / n


def bulk_ess(chains: np.ndarray) -> float:
    """Bulk effective sample size on rank-normalized split chains."""
    chains = np.asarray(chains, dtype=float)
    if chains.ndim != 2 or chains.shape[0] < 2 or chains.shape[1] < 4:
        raise ValidationError("need >= 2 chains with >= 4 draws each")
    z = _rank_normalize(_split_chains(chains))
    m, n = z.shape
    acov = np.stack([_autocovariance(z[i]) for i in range(m)])
    chain_var = acov[:, 0] * n / (n - 1)
    mean_var = chain_var.mean()
    var_plus = mean_var * (n - 1) / n + np.var(z.mean(axis=1), ddof=1)
    if var_plus == 0:
        return float(m * n)
    rho = 1.0 - (mean_var - acov.mean(axis=0)) / var_plus
    # Geyer initial monotone positive sequence
    tau = 0.0
    prev_pair = np.inf
    for t in range(0, n - 1, 2):
        pair = rho[t] + (rho[t + 1] if t + 1 < n else 0.0)
        if pair < 0:
            break
        pair = min(pair, prev_pair)
        prev_pair = pair
        tau += 2.0 * pair
    tau = max(tau - 1.0, 1.0 / np.log10(m * n + 10.0))
    return float(m * n / tau)


def diagnostics(draws: PosteriorDraws) -> dict[str, np.ndarray]:
    """Per-parameter (ess, rhat) over the post-warmup draws."""
    return draws.diagnostics()
