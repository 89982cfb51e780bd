"""Exact reference values by brute-force enumeration of discrete models.

For a binary model with n sites the 2^n states are enumerated once and
all Gibbs quantities (partition function, free energy, expectations,
both gradient representations of the contrastive objective, KL terms,
variational bounds) are computed in log space from the full table.
These are the ground truth every estimator is measured against, so this
module deliberately stays simple: plain sums over the state table, with
a single max-shifted log-sum-exp for numerical safety.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    EPS_ABS,
    EnergyModel,
    StateKind,
    as_nudge,
    as_temperature,
    central_difference_grad,
    max_relative_error,
)
from .estimators import QuadratureSpec
from .models import SpinGlassModel, linear_state_loss, output_spin_mismatch_loss, random_spin_glass

# Enumeration is 2^n in time and memory; past 16 sites a "quick exact
# check" silently becomes a million-state scan, so refuse loudly.
DEFAULT_N_MAX = 16


class EnumerationRefusedError(ValueError):
    """Raised when a model is too large for exact enumeration."""


def enumerate_states(model: EnergyModel, n_max: int = DEFAULT_N_MAX) -> np.ndarray:
    """All 2^n states of a binary model, one per row, in fixed order."""
    if model.state_kind is not StateKind.BINARY:
        raise EnumerationRefusedError("exact enumeration requires a binary state space")
    n = model.state_dim
    if n > n_max:
        raise EnumerationRefusedError(
            f"model has {n} sites; enumeration is capped at n_max={n_max} "
            f"(2^{n} states). Raise n_max explicitly if you really mean it."
        )
    lo, hi = model.site_values
    codes = np.arange(2**n, dtype=np.uint32)
    bits = (codes[:, None] >> np.arange(n - 1, -1, -1)) & 1
    return np.where(bits == 1, hi, lo).astype(np.float64)


def _logsumexp(logw: np.ndarray) -> float:
    m = np.max(logw)
    return float(m + np.log(np.sum(np.exp(logw - m))))


@dataclass(frozen=True)
class GibbsTable:
    """Full Gibbs distribution of the nudged kernel on the state table."""

    states: np.ndarray
    log_probs: np.ndarray
    log_z: float
    beta: float
    temperature: float

    @property
    def probs(self) -> np.ndarray:
        return np.exp(self.log_probs)

    def expectation(self, values: np.ndarray) -> np.ndarray:
        """E_rho[values], where values has one row (or scalar) per state."""
        return self.probs @ np.asarray(values, dtype=np.float64)


def gibbs_table(
    model: EnergyModel, theta, beta, temperature=1.0, n_max: int = DEFAULT_N_MAX
) -> GibbsTable:
    beta = as_nudge(beta)
    t = as_temperature(temperature)
    theta = model.validate_theta(theta)
    states = enumerate_states(model, n_max)
    f = model.energy_batch(theta, states) + beta * model.loss_batch(states)
    if not np.all(np.isfinite(f)):
        raise ValueError("objective kernel is non-finite on some enumerated state")
    logw = -f / t
    log_z = _logsumexp(logw)
    return GibbsTable(states, logw - log_z, log_z, beta, t)


def log_partition_function(model, theta, beta, temperature=1.0, n_max=DEFAULT_N_MAX) -> float:
    return gibbs_table(model, theta, beta, temperature, n_max).log_z


def free_energy(model, theta, beta, temperature=1.0, n_max=DEFAULT_N_MAX) -> float:
    """A(theta, beta) = -T log Z_beta."""
    t = as_temperature(temperature)
    return -t * log_partition_function(model, theta, beta, t, n_max)


def contrastive_objective(model, theta, temperature=1.0, n_max=DEFAULT_N_MAX) -> float:
    """J(theta) = A(theta, 1) - A(theta, 0)."""
    return free_energy(model, theta, 1.0, temperature, n_max) - free_energy(
        model, theta, 0.0, temperature, n_max
    )


def _objective_longdouble(model, theta, temperature, n_max=DEFAULT_N_MAX):
    """J(theta) in 80-bit arithmetic, for finite-difference baselines.

    A float64 logsumexp carries ~1e-14 of rounding, which divided by the
    step 2h becomes an absolute noise floor around 5e-10 on any finite
    difference of J.  Instances whose gradient is itself ~1e-4 then fail
    a 1e-6 relative comparison for reasons that have nothing to do with
    the gradient formula, so the baseline is evaluated in extended
    precision instead.
    """
    states = enumerate_states(model, n_max)
    theta = np.asarray(theta, dtype=np.longdouble)
    t = np.longdouble(as_temperature(temperature))
    e = np.array([model.energy(theta, s) for s in states], dtype=np.longdouble)
    l = np.array([model.loss(s) for s in states], dtype=np.longdouble)

    def a(beta):
        logw = -(e + beta * l) / t
        m = logw.max()
        return -t * (m + np.log(np.exp(logw - m).sum()))

    return a(np.longdouble(1.0)) - a(np.longdouble(0.0))


def gibbs_expectation(model, theta, beta, temperature, values_fn, n_max=DEFAULT_N_MAX):
    """E_rho_beta[values_fn], with values_fn mapping the state table to rows."""
    table = gibbs_table(model, theta, beta, temperature, n_max)
    return table.expectation(values_fn(table.states))


def expected_loss(model, theta, beta, temperature=1.0, n_max=DEFAULT_N_MAX) -> float:
    table = gibbs_table(model, theta, beta, temperature, n_max)
    return float(table.expectation(model.loss_batch(table.states)))


def exact_dA_dbeta(model, theta, beta, temperature=1.0, n_max=DEFAULT_N_MAX) -> float:
    """dA/dbeta = E_rho_beta[l]; identical to expected_loss by the identity."""
    return expected_loss(model, theta, beta, temperature, n_max)


def _mean_grad_theta(model, theta, table: GibbsTable) -> np.ndarray:
    return model.grad_theta_energy_sum(theta, table.states, weights=table.probs)


def exact_grad_A_contrast(model, theta, beta, temperature=1.0, n_max=DEFAULT_N_MAX) -> np.ndarray:
    """Gradient of A(theta, beta) - A(theta, 0): E_beta[dE] - E_0[dE]."""
    theta = model.validate_theta(theta)
    g_b = _mean_grad_theta(model, theta, gibbs_table(model, theta, beta, temperature, n_max))
    g_0 = _mean_grad_theta(model, theta, gibbs_table(model, theta, 0.0, temperature, n_max))
    return g_b - g_0


def exact_grad_J_contrast(model, theta, temperature=1.0, n_max=DEFAULT_N_MAX) -> np.ndarray:
    """Two-phase gradient: grad J = E_rho1[dE/dtheta] - E_rho0[dE/dtheta]."""
    return exact_grad_A_contrast(model, theta, 1.0, temperature, n_max)


def exact_loss_energy_covariance(
    model, theta, beta, temperature=1.0, n_max=DEFAULT_N_MAX
) -> np.ndarray:
    """Cov_rho_beta[l, dE/dtheta], one entry per parameter."""
    theta = model.validate_theta(theta)
    table = gibbs_table(model, theta, beta, temperature, n_max)
    losses = model.loss_batch(table.states)
    mean_loss = float(table.expectation(losses))
    mean_grad = _mean_grad_theta(model, theta, table)
    cross = model.grad_theta_energy_sum(theta, table.states, weights=table.probs * losses)
    return cross - mean_loss * mean_grad


def exact_grad_J_covariance(
    model, theta, temperature=1.0, quadrature: QuadratureSpec | None = None, n_max=DEFAULT_N_MAX
) -> np.ndarray:
    """Integrated-covariance gradient, discretised on a quadrature grid:

    grad J = -(1/T) * integral_0^1 Cov_rho_beta[l, dE/dtheta] dbeta.
    """
    t = as_temperature(temperature)
    quad = quadrature if quadrature is not None else QuadratureSpec.trapezoid(33)
    total = np.zeros(model.param_dim)
    for node, weight in zip(quad.nodes, quad.weights):
        total += weight * exact_loss_energy_covariance(model, theta, node, t, n_max)
    return -total / t


def quadrature_convergence_order(
    model, theta, temperature=1.0, node_counts=(5, 9, 17, 33), n_max=DEFAULT_N_MAX
) -> float:
    """Observed order of the trapezoid discretisation against the exact gradient.

    Takes the classic refinement estimate log(e_coarse/e_fine) / log(ratio)
    on the finest grid pair whose errors are still above round-off.  The
    finest pair is the asymptotic one; a global fit would let a coarse
    grid with an accidentally cancelling error drag the slope below the
    true order.  Returns inf when everything is already at round-off
    (order unmeasurable, counts as converged).
    """
    reference = exact_grad_J_contrast(model, theta, temperature, n_max)
    spacings, errors = [], []
    for k in node_counts:
        approx = exact_grad_J_covariance(
            model, theta, temperature, QuadratureSpec.trapezoid(k), n_max
        )
        err = float(np.max(np.abs(approx - reference)))
        if err < 1e-12:
            continue
        spacings.append(1.0 / (k - 1))
        errors.append(err)
    if len(errors) < 2:
        return np.inf
    return float(
        np.log(errors[-2] / errors[-1]) / np.log(spacings[-2] / spacings[-1])
    )


def kl_nudged_free(model, theta, temperature=1.0, n_max=DEFAULT_N_MAX) -> float:
    """KL(rho_1 || rho_0), computed in log space from the two tables."""
    t1 = gibbs_table(model, theta, 1.0, temperature, n_max)
    t0 = gibbs_table(model, theta, 0.0, temperature, n_max)
    return float(t1.expectation(t1.log_probs - t0.log_probs))


def decomposition_residual(model, theta, temperature=1.0, n_max=DEFAULT_N_MAX) -> float:
    """J - (E_rho1[l] + T * KL(rho1 || rho0)); exactly zero in theory."""
    t = as_temperature(temperature)
    j = contrastive_objective(model, theta, t, n_max)
    return j - (expected_loss(model, theta, 1.0, t, n_max) + t * kl_nudged_free(model, theta, t, n_max))


def variational_free_energy(
    model, theta, beta, temperature=1.0, q=None, n_max=DEFAULT_N_MAX
) -> float:
    """E_q[E + beta * l] - T * S(q) for a trial distribution q on the table.

    Minimised (over all q) exactly at the Gibbs distribution, where it
    equals A(theta, beta).
    """
    beta = as_nudge(beta)
    t = as_temperature(temperature)
    theta = model.validate_theta(theta)
    states = enumerate_states(model, n_max)
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (len(states),):
        raise ValueError(f"trial distribution must have one weight per state ({len(states)})")
    if np.any(q < 0.0) or abs(q.sum() - 1.0) > 1e-9:
        raise ValueError("trial distribution must be non-negative and sum to 1")
    f = model.energy_batch(theta, states) + beta * model.loss_batch(states)
    mean_f = float(q @ f)
    nonzero = q > 0.0
    entropy = float(-(q[nonzero] @ np.log(q[nonzero])))
    return mean_f - t * entropy


# ----------------------------------------------------------------------
# consistency suite over random instances
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    worst: float
    tolerance: float
    detail: str

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: worst={self.worst:.3e} tol={self.tolerance:.3e} ({self.detail})"


def run_consistency_suite(
    n_instances: int = 100,
    n_spins: int = 8,
    seed: int = 0,
    temperature: float = 1.0,
    n_trial_dists: int = 100,
    fd_step: float = 1e-5,
) -> list[CheckResult]:
    """Exact-identity and inequality checks on random spin-glass instances.

    Every instance must satisfy, at enumeration precision:
    contrast_gradient (two-phase gradient vs finite differences of J),
    dA_dbeta (loss-expectation slope vs finite differences in beta),
    quadrature_order (trapezoid discretisation converges at order >= 2),
    supervised_bound (J <= E_rho0[l]), decomposition_residual
    (J = E_rho1[l] + T * KL), and variational_bound (Gibbs minimises the
    variational free energy, with equality there).
    """
    if n_instances < 1:
        raise ValueError("n_instances must be >= 1")
    if not (1 <= n_spins <= DEFAULT_N_MAX):
        raise ValueError(f"n_spins must lie in [1, {DEFAULT_N_MAX}]")
    t = as_temperature(temperature)
    rng = np.random.default_rng(seed)

    worst_contrast = worst_slope = worst_residual = worst_equality = -np.inf
    min_order = np.inf
    worst_bound_margin = worst_var_margin = np.inf
    for i in range(n_instances):
        n = int(rng.integers(3, n_spins + 1))
        loss_kind = "signed" if i % 4 == 3 else "output_spin"
        model, theta_vec = random_spin_glass(n, int(rng.integers(0, 2**32)), loss=loss_kind)
        theta = theta_vec.values

        grad = exact_grad_J_contrast(model, theta, t)
        fd = central_difference_grad(
            lambda th: _objective_longdouble(model, th, t),
            theta.astype(np.longdouble), fd_step,
        )
        worst_contrast = max(
            worst_contrast,
            float(np.max(np.abs(grad - fd)) / (np.max(np.abs(fd)) + EPS_ABS)),
        )

        beta = float(rng.uniform(0.1, 0.9))
        slope = exact_dA_dbeta(model, theta, beta, t)
        fd_slope = (
            free_energy(model, theta, beta + fd_step, t) - free_energy(model, theta, beta - fd_step, t)
        ) / (2.0 * fd_step)
        worst_slope = max(worst_slope, abs(slope - fd_slope) / (abs(fd_slope) + EPS_ABS))

        min_order = min(min_order, quadrature_convergence_order(model, theta, t))

        j = contrastive_objective(model, theta, t)
        worst_bound_margin = min(worst_bound_margin, expected_loss(model, theta, 0.0, t) - j)

        worst_residual = max(worst_residual, abs(decomposition_residual(model, theta, t)))

        table = gibbs_table(model, theta, beta, t)
        a = free_energy(model, theta, beta, t)
        for _ in range(n_trial_dists):
            q = rng.exponential(size=2**n)
            q /= q.sum()
            worst_var_margin = min(
                worst_var_margin, variational_free_energy(model, theta, beta, t, q=q) - a
            )
        worst_equality = max(
            worst_equality,
            abs(variational_free_energy(model, theta, beta, t, q=table.probs) - a),
        )

    checks = [
        CheckResult(
            "contrast_gradient", worst_contrast <= 1e-6, worst_contrast, 1e-6,
            "max relative error of two-phase gradient vs central differences of J",
        ),
        CheckResult(
            "dA_dbeta", worst_slope <= 1e-6, worst_slope, 1e-6,
            "max relative error of expected loss vs finite differences of A in beta",
        ),
        CheckResult(
            "quadrature_order", min_order >= 1.9, min_order, 1.9,
            "min observed trapezoid convergence order (threshold is a floor)",
        ),
        CheckResult(
            "supervised_bound", worst_bound_margin >= -1e-12, worst_bound_margin, -1e-12,
            "min of E_rho0[l] - J across instances (must be non-negative)",
        ),
        CheckResult(
            "decomposition_residual", worst_residual <= 1e-10, worst_residual, 1e-10,
            "max |J - E_rho1[l] - T*KL(rho1||rho0)|",
        ),
        CheckResult(
            "variational_bound",
            worst_var_margin >= -1e-10 and worst_equality <= 1e-10,
            min(worst_var_margin, -worst_equality), -1e-10,
            "min margin of trial distributions over A, and |equality gap| at Gibbs",
        ),
    ]
    return checks
