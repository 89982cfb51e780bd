"""Monte Carlo estimators of the contrastive gradient.

Five views of the same target:

- expectation contrast: E_rho1[dE] - E_rho0[dE], the exact two-phase form;
- classical EP: (E_rho_beta[dE] - E_rho0[dE]) / beta, the finite-nudge
  practical update (equal to the contrast at beta = 1);
- integrated covariance: -(1/T) * sum_k w_k Cov_rho_beta_k[l, dE] over a
  quadrature grid on [0, 1];
- path integral: the same quadrature discretisation carried as its own
  method tag, for side-by-side training comparisons;
- supervised covariance: -(1/T) Cov_rho_0[l, dE], the gradient of the
  expected loss at the free phase.

Each estimate carries a per-coordinate standard error computed from the
scatter of independent chain means (n-1 normalisation), so "within k
standard errors of the oracle" is a well-posed acceptance check.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .core import EnergyModel, ParamVector, as_nudge, as_temperature
from .rng import FREE_PHASE, NODE_BASE, NUDGED_PHASE, SUPERVISED_PHASE, derive_seed
from .sampler import ChainConfig, SampleBatch, run_chains


class EstimationError(ValueError):
    """The sampling budget cannot support the requested estimate."""


class EstimatorMethod(Enum):
    EXPECTATION_CONTRAST = "expectation_contrast"
    CLASSICAL_EP = "classical_ep"
    INTEGRATED_COVARIANCE = "integrated_covariance"
    PATH_INTEGRAL = "path_integral"
    SUPERVISED_COVARIANCE = "supervised_covariance"


@dataclass(frozen=True)
class QuadratureSpec:
    """Nodes and weights for integrating over beta in [0, 1].

    Weights are normalised to sum to 1 (the interval has unit length),
    strictly positive, with strictly increasing nodes inside [0, 1].
    """

    nodes: np.ndarray
    weights: np.ndarray
    scheme: str = "custom"

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=np.float64)
        weights = np.asarray(self.weights, dtype=np.float64)
        if nodes.ndim != 1 or nodes.shape != weights.shape or nodes.size < 1:
            raise ValueError("nodes and weights must be equal-length 1-D arrays")
        if np.any(nodes < 0.0) or np.any(nodes > 1.0):
            raise ValueError("quadrature nodes must lie in [0, 1]")
        if np.any(np.diff(nodes) <= 0.0):
            raise ValueError("quadrature nodes must be strictly increasing")
        if np.any(weights <= 0.0):
            raise ValueError("quadrature weights must be strictly positive")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError(f"quadrature weights must sum to 1, got {weights.sum()!r}")
        nodes.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    @property
    def n_nodes(self) -> int:
        return self.nodes.size

    @classmethod
    def trapezoid(cls, n_nodes: int) -> "QuadratureSpec":
        """Composite trapezoid on a uniform grid including both endpoints."""
        if n_nodes < 2:
            raise ValueError("trapezoid rule needs at least 2 nodes")
        h = 1.0 / (n_nodes - 1)
        weights = np.full(n_nodes, h)
        weights[0] = weights[-1] = h / 2.0
        return cls(np.linspace(0.0, 1.0, n_nodes), weights, scheme="trapezoid")

    @classmethod
    def gauss_legendre(cls, n_nodes: int) -> "QuadratureSpec":
        """Gauss-Legendre nodes mapped from [-1, 1] onto [0, 1]."""
        if n_nodes < 1:
            raise ValueError("gauss_legendre needs at least 1 node")
        x, w = np.polynomial.legendre.leggauss(n_nodes)
        return cls((x + 1.0) / 2.0, w / 2.0, scheme="gauss_legendre")


@dataclass(frozen=True)
class GradEstimate:
    grad: ParamVector
    std_err: np.ndarray
    method: EstimatorMethod
    meta: dict = field(default_factory=dict)


def _batch_meta(batch: SampleBatch) -> dict:
    return {
        "n_samples": batch.n_samples,
        "ess_total": float(batch.ess.sum()),
        "acceptance_rate": batch.acceptance_rate,
        "warnings": list(batch.warnings),
        "theta_hash": batch.theta_hash,
    }


def _chain_mean_grads(model: EnergyModel, theta, batch: SampleBatch) -> np.ndarray:
    """Per-chain means of dE/dtheta, shape (n_chains, param_dim)."""
    per = batch.per_chain()
    return np.stack(
        [model.grad_theta_energy_sum(theta, chain) / batch.n_kept for chain in per]
    )


def _chain_covariances(model: EnergyModel, theta, batch: SampleBatch) -> tuple[np.ndarray, np.ndarray]:
    """Per-chain Cov[l, dE/dtheta] with n-1 normalisation, plus mean losses.

    Products are centred on the pooled cross-chain means rather than each
    chain's own mean: own-mean centring biases every chain identically by
    O(autocorrelation time / n_kept), which chain scatter cannot see,
    while pooled centring divides that bias by the chain count.
    """
    k = batch.n_kept
    if k < 2:
        raise EstimationError(f"covariance needs >= 2 kept samples per chain, got {k}")
    per = batch.per_chain()
    losses = np.stack([model.loss_batch(chain) for chain in per])  # (C, K)
    l_sums = losses.sum(axis=1)
    g_sums = np.stack([model.grad_theta_energy_sum(theta, chain) for chain in per])
    lg_sums = np.stack(
        [model.grad_theta_energy_sum(theta, chain, weights=w) for chain, w in zip(per, losses)]
    )
    pooled_l = l_sums.sum() / (batch.n_chains * k)
    pooled_g = g_sums.sum(axis=0) / (batch.n_chains * k)
    covs = (
        lg_sums - pooled_l * g_sums - l_sums[:, None] * pooled_g + k * pooled_l * pooled_g
    ) / (k - 1)
    return covs, l_sums / k


def _mean_and_stderr(per_chain: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    c = per_chain.shape[0]
    if c < 2:
        raise EstimationError("std_err needs >= 2 independent chains")
    return per_chain.mean(axis=0), np.sqrt(per_chain.var(axis=0, ddof=1) / c)


def _two_phase(
    model, theta, temperature, beta, scale, method, config: ChainConfig, init
) -> GradEstimate:
    theta = model.validate_theta(theta)
    nudged = run_chains(
        model, theta, beta, temperature,
        config.with_seed(derive_seed(config.seed, NUDGED_PHASE)), init,
    )
    free = run_chains(
        model, theta, 0.0, temperature,
        config.with_seed(derive_seed(config.seed, FREE_PHASE)), init,
    )
    diffs = _chain_mean_grads(model, theta, nudged) - _chain_mean_grads(model, theta, free)
    mean, stderr = _mean_and_stderr(diffs)
    meta = {
        "beta": beta,
        "temperature": as_temperature(temperature),
        "nudged": _batch_meta(nudged),
        "free": _batch_meta(free),
    }
    return GradEstimate(model.param_vector(scale * mean), abs(scale) * stderr, method, meta)


def grad_contrast_mc(
    model: EnergyModel, theta, temperature, config: ChainConfig, init=None
) -> GradEstimate:
    """Two-phase estimate of grad J: mean dE under rho_1 minus under rho_0."""
    return _two_phase(
        model, theta, temperature, 1.0, 1.0, EstimatorMethod.EXPECTATION_CONTRAST, config, init
    )


def grad_classical_ep(
    model: EnergyModel, theta, temperature, beta_nudge, config: ChainConfig, init=None
) -> GradEstimate:
    """Finite-nudge update (E_rho_beta[dE] - E_rho_0[dE]) / beta.

    With beta_nudge = 1 this is exactly grad_contrast_mc: the phases use
    the same derived seeds, so the two calls agree bit for bit.
    """
    b = as_nudge(beta_nudge)
    if b <= 0.0:
        raise EstimationError("classical EP needs beta_nudge > 0")
    return _two_phase(
        model, theta, temperature, b, 1.0 / b, EstimatorMethod.CLASSICAL_EP, config, init
    )


def grad_beta_contrast_mc(
    model: EnergyModel, theta, temperature, beta, config: ChainConfig, init=None
) -> GradEstimate:
    """Unscaled contrast at nudge beta: estimates grad[A(theta,beta) - A(theta,0)]."""
    b = as_nudge(beta)
    return _two_phase(
        model, theta, temperature, b, 1.0, EstimatorMethod.EXPECTATION_CONTRAST, config, init
    )


def grad_covariance_mc(
    model: EnergyModel,
    theta,
    temperature,
    quadrature: QuadratureSpec,
    config: ChainConfig,
    init=None,
    method: EstimatorMethod = EstimatorMethod.INTEGRATED_COVARIANCE,
) -> GradEstimate:
    """Quadrature over per-node covariance estimates:

    grad J ~= -(1/T) * sum_k w_k Cov_hat_rho_beta_k[l, dE/dtheta].
    """
    theta = model.validate_theta(theta)
    t = as_temperature(temperature)
    total = np.zeros(model.param_dim)
    total_var = np.zeros(model.param_dim)
    node_meta = []
    for k, (node, weight) in enumerate(zip(quadrature.nodes, quadrature.weights)):
        batch = run_chains(
            model, theta, node, t,
            config.with_seed(derive_seed(config.seed, NODE_BASE + k)), init,
        )
        covs, mean_losses = _chain_covariances(model, theta, batch)
        mean, stderr = _mean_and_stderr(covs)
        total += weight * mean
        total_var += (weight * stderr) ** 2
        info = _batch_meta(batch)
        info.update({"beta": float(node), "weight": float(weight),
                     "mean_loss": float(mean_losses.mean())})
        node_meta.append(info)
    meta = {"temperature": t, "scheme": quadrature.scheme, "nodes": node_meta}
    return GradEstimate(
        model.param_vector(-total / t), np.sqrt(total_var) / t, method, meta
    )


def grad_path_integral(
    model: EnergyModel, theta, temperature, n_nodes: int, config: ChainConfig, init=None
) -> GradEstimate:
    """Integrated-covariance gradient on a trapezoid grid, tagged as the
    path-integral training method.  With n_nodes = 2 it averages just the
    endpoint covariances."""
    return grad_covariance_mc(
        model, theta, temperature, QuadratureSpec.trapezoid(n_nodes), config, init,
        method=EstimatorMethod.PATH_INTEGRAL,
    )


def grad_supervised_mc(
    model: EnergyModel, theta, temperature, config: ChainConfig, init=None
) -> GradEstimate:
    """Gradient of the expected free-phase loss: -(1/T) Cov_rho_0[l, dE]."""
    theta = model.validate_theta(theta)
    t = as_temperature(temperature)
    batch = run_chains(
        model, theta, 0.0, t,
        config.with_seed(derive_seed(config.seed, SUPERVISED_PHASE)), init,
    )
    covs, mean_losses = _chain_covariances(model, theta, batch)
    mean, stderr = _mean_and_stderr(covs)
    meta = {
        "temperature": t,
        "free": _batch_meta(batch),
        "mean_loss": float(mean_losses.mean()),
    }
    return GradEstimate(
        model.param_vector(-mean / t), stderr / t, EstimatorMethod.SUPERVISED_COVARIANCE, meta
    )
