"""MCMC sampling from the nudged Gibbs distribution.

All kernels target rho_beta(s) proportional to exp(-F(theta, beta, s)/T)
and respect the model's clamp mask: clamped coordinates keep their
initial values for the whole run.  Chains are advanced in lockstep as
rows of a (n_chains, state_dim) array, each chain consuming its own RNG
stream derived from (seed, chain_index), so results are reproducible
bit-for-bit regardless of how many chains run.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .core import EnergyModel, StateKind, as_nudge, as_temperature, theta_fingerprint
from .rng import make_generator


class Kernel(Enum):
    LANGEVIN_UNADJUSTED = "langevin_unadjusted"
    LANGEVIN_ADJUSTED = "langevin_adjusted"
    GIBBS_SWEEP = "gibbs_sweep"


class DivergenceError(FloatingPointError):
    """An unadjusted update produced a non-finite state."""


@dataclass(frozen=True)
class ChainConfig:
    """Budget and kernel settings for one sampling run.

    burn_in defaults to 20% of n_steps.  thin keeps every thin-th
    post-burn-in step.  step_size is the Langevin step eta; ignored by
    the sweep kernel.
    """

    n_steps: int
    n_chains: int = 8
    burn_in: int | None = None
    thin: int = 1
    step_size: float = 0.1
    kernel: Kernel = Kernel.LANGEVIN_ADJUSTED
    seed: int = 0

    def __post_init__(self):
        if self.n_chains < 1:
            raise ValueError("n_chains must be >= 1")
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if self.step_size <= 0.0:
            raise ValueError("step_size must be > 0")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.burn_in is not None and not (0 <= self.burn_in < self.n_steps):
            raise ValueError("burn_in must lie in [0, n_steps)")

    @property
    def resolved_burn_in(self) -> int:
        return self.n_steps // 5 if self.burn_in is None else self.burn_in

    @property
    def n_kept(self) -> int:
        span = self.n_steps - self.resolved_burn_in
        return (span + self.thin - 1) // self.thin

    def with_seed(self, seed: int) -> "ChainConfig":
        return replace(self, seed=seed)


@dataclass(frozen=True)
class SampleBatch:
    """Post-burn-in samples from every chain, chain-major.

    samples has shape (n_chains * n_kept, state_dim); per_chain() views
    it as (n_chains, n_kept, state_dim).
    """

    samples: np.ndarray
    n_chains: int
    n_kept: int
    beta: float
    temperature: float
    kernel: Kernel
    seed: int
    theta_hash: str
    ess: np.ndarray
    acceptance_rate: float | None = None
    warnings: tuple[str, ...] = ()

    def per_chain(self) -> np.ndarray:
        return self.samples.reshape(self.n_chains, self.n_kept, -1)

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _init_rows(model: EnergyModel, cfg: ChainConfig, init, gens) -> np.ndarray:
    n = model.state_dim
    if init is None:
        if model.clamp_mask.any():
            raise ValueError("model clamps coordinates; an explicit init is required")
        if model.state_kind is StateKind.BINARY:
            lo, hi = model.site_values
            rows = [np.where(g.random(n) < 0.5, lo, hi) for g in gens]
        else:
            rows = [g.standard_normal(n) for g in gens]
        return np.stack(rows)
    init = np.asarray(init, dtype=np.float64)
    if init.ndim == 1:
        model.validate_state(init)
        return np.tile(init, (cfg.n_chains, 1))
    if init.shape != (cfg.n_chains, n):
        raise ValueError(f"init must have shape ({n},) or ({cfg.n_chains}, {n})")
    return np.array(init, copy=True)


def _kernel_rows(model, theta, beta, states):
    f = model.energy_batch(theta, states)
    if beta != 0.0:
        f = f + beta * model.loss_batch(states)
    return f

def _kernel_grad_rows(model, theta, beta, states):
    g = model.grad_state_energy_batch(theta, states)
    if beta != 0.0:
        g = g + beta * model.grad_state_loss_batch(states)
    return g


def run_chains(
    model: EnergyModel, theta, beta, temperature, config: ChainConfig, init=None
) -> SampleBatch:
    """Sample rho_beta with the configured kernel.

    Returns every kept state from every chain plus per-chain effective
    sample sizes (min over unclamped coordinates) and, for the adjusted
    kernel, the overall acceptance rate.  Low ESS and out-of-band
    acceptance produce warnings on the batch, never errors.
    """
    beta = as_nudge(beta)
    t = as_temperature(temperature)
    theta = model.validate_theta(theta)
    gens = [make_generator(config.seed, c) for c in range(config.n_chains)]
    states = _init_rows(model, config, init, gens)

    if model.state_kind is StateKind.BINARY:
        if config.kernel is not Kernel.GIBBS_SWEEP:
            raise ValueError(f"{config.kernel.value} requires a continuous state space")
        kept, acc = _run_gibbs(model, theta, beta, t, config, states, gens)
    else:
        if config.kernel is Kernel.GIBBS_SWEEP:
            raise ValueError("gibbs_sweep requires a binary state space")
        kept, acc = _run_langevin(model, theta, beta, t, config, states, gens)

    ess = np.array([_batch_ess(chain, model.clamp_mask) for chain in kept])
    warnings = []
    if float(ess.min()) < 10.0:
        warnings.append(
            f"min per-chain ESS is {ess.min():.1f}; estimates may be dominated by autocorrelation"
        )
    if acc is not None and not (0.4 < acc < 0.9):
        warnings.append(f"acceptance rate {acc:.2f} outside (0.4, 0.9); retune step_size")
    return SampleBatch(
        samples=kept.reshape(config.n_chains * config.n_kept, model.state_dim),
        n_chains=config.n_chains,
        n_kept=config.n_kept,
        beta=beta,
        temperature=t,
        kernel=config.kernel,
        seed=config.seed,
        theta_hash=theta_fingerprint(theta),
        ess=ess,
        acceptance_rate=acc,
        warnings=tuple(warnings),
    )


def _keep_slots(cfg: ChainConfig):
    burn = cfg.resolved_burn_in
    return {step: (step - burn) // cfg.thin
            for step in range(burn, cfg.n_steps)
            if (step - burn) % cfg.thin == 0}


def _run_gibbs(model, theta, beta, t, cfg, states, gens):
    lo, hi = model.site_values
    free_sites = [i for i in range(model.state_dim) if not model.clamp_mask[i]]
    kept = np.empty((cfg.n_chains, cfg.n_kept, model.state_dim))
    slots = _keep_slots(cfg)
    for step in range(cfg.n_steps):
        u = np.stack([g.random(model.state_dim) for g in gens])
        for site in free_sites:
            delta = model.kernel_site_delta(theta, beta, states, site)
            p_hi = _sigmoid(-delta / t)
            states[:, site] = np.where(u[:, site] < p_hi, hi, lo)
        slot = slots.get(step)
        if slot is not None:
            kept[:, slot, :] = states
    return kept, None


def _run_langevin(model, theta, beta, t, cfg, states, gens):
    adjusted = cfg.kernel is Kernel.LANGEVIN_ADJUSTED
    eta = cfg.step_size
    free = ~model.clamp_mask
    n_free = int(free.sum())
    scale = np.sqrt(2.0 * eta)
    kept = np.empty((cfg.n_chains, cfg.n_kept, model.state_dim))
    slots = _keep_slots(cfg)

    grad = _kernel_grad_rows(model, theta, beta, states)
    f_cur = _kernel_rows(model, theta, beta, states) if adjusted else None
    n_accept = 0
    for step in range(cfg.n_steps):
        noise = np.zeros_like(states)
        noise[:, free] = np.stack([g.standard_normal(n_free) for g in gens])
        drift = np.zeros_like(states)
        with np.errstate(invalid="ignore", over="ignore"):
            drift[:, free] = -(eta / t) * grad[:, free]
            proposal = states + drift + scale * noise

        if not adjusted:
            if not np.all(np.isfinite(proposal)):
                raise DivergenceError(
                    f"state became non-finite at step {step}; reduce step_size={eta}"
                )
            states = proposal
            with np.errstate(invalid="ignore", over="ignore"):
                grad = _kernel_grad_rows(model, theta, beta, states)
        else:
            with np.errstate(invalid="ignore", over="ignore"):
                f_prop = _kernel_rows(model, theta, beta, proposal)
                f_prop = np.where(np.isfinite(f_prop), f_prop, np.inf)
                grad_prop = _kernel_grad_rows(model, theta, beta, proposal)
                drift_prop = np.zeros_like(states)
                drift_prop[:, free] = -(eta / t) * grad_prop[:, free]
                fwd = proposal - states - drift
                rev = states - proposal - drift_prop
                log_q_fwd = -np.sum(fwd[:, free] ** 2, axis=1) / (4.0 * eta)
                log_q_rev = -np.sum(rev[:, free] ** 2, axis=1) / (4.0 * eta)
                log_alpha = -(f_prop - f_cur) / t + log_q_rev - log_q_fwd
            log_alpha = np.where(np.isfinite(log_alpha), log_alpha, -np.inf)
            u = np.array([g.random() for g in gens])
            accept = np.log(u) < log_alpha
            n_accept += int(accept.sum())
            states[accept] = proposal[accept]
            f_cur = np.where(accept, f_prop, f_cur)
            grad[accept] = grad_prop[accept]

        slot = slots.get(step)
        if slot is not None:
            kept[:, slot, :] = states
    acc = n_accept / (cfg.n_steps * cfg.n_chains) if adjusted else None
    return kept, acc


@dataclass
class RelaxResult:
    state: np.ndarray
    converged: bool
    iterations: int
    grad_inf_norm: float


def relax_deterministic(
    model: EnergyModel,
    theta,
    beta,
    init,
    step_size: float = 0.1,
    max_iters: int = 1000,
    tol: float = 1e-8,
) -> RelaxResult:
    """Noise-free gradient descent on F(theta, beta, .) over free coordinates.

    Used for deterministic predictions (the zero-temperature limit of
    the free phase) and for locating nudged minima in small tests.
    """
    beta = as_nudge(beta)
    theta = model.validate_theta(theta)
    if model.state_kind is not StateKind.CONTINUOUS:
        raise ValueError("deterministic relaxation requires a continuous state space")
    s = np.array(init, dtype=np.float64, copy=True)
    free = ~model.clamp_mask
    gnorm, iters = np.inf, 0
    for iters in range(1, max_iters + 1):
        g = model.grad_state_energy(theta, s)
        if beta != 0.0:
            g = g + beta * model.grad_state_loss(s)
        gnorm = float(np.max(np.abs(g[free])))
        if not np.isfinite(gnorm):
            raise DivergenceError(f"relaxation diverged at iteration {iters}")
        if gnorm <= tol:
            break
        s[free] -= step_size * g[free]
    return RelaxResult(s, gnorm <= tol, iters, gnorm)


def effective_sample_size(series) -> float:
    """ESS of a scalar chain via the initial-positive-sequence truncation.

    Autocovariances are summed in adjacent pairs until a pair sum goes
    non-positive; iid-like series return roughly their length.  Series
    too short to estimate (< 4) return their length; a constant series
    returns 1.0 (a frozen chain carries one sample of information, and
    a zero-variance coordinate cannot justify more).
    """
    x = np.asarray(series, dtype=np.float64)
    k = x.size
    if k < 4:
        return float(k)
    x = x - x.mean()
    if not np.any(x):
        return 1.0
    nfft = 1 << (2 * k - 1).bit_length()
    f = np.fft.rfft(x, nfft)
    acov = np.fft.irfft(f * np.conj(f), nfft)[:k] / k
    rho = acov / acov[0]
    if rho.size % 2:
        rho = np.append(rho, 0.0)
    pair_sums = rho[0::2] + rho[1::2]
    positive = np.nonzero(pair_sums <= 0.0)[0]
    cutoff = positive[0] if positive.size else pair_sums.size
    tau = max(-1.0 + 2.0 * float(pair_sums[:cutoff].sum()), 1.0 / k)
    return float(k / tau)


def _batch_ess(chain: np.ndarray, clamp_mask: np.ndarray) -> float:
    free = np.nonzero(~clamp_mask)[0]
    if free.size == 0:
        return float(chain.shape[0])
    return min(effective_sample_size(chain[:, j]) for j in free)
