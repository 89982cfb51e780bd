"""Shared types and objective-kernel arithmetic.

The central object is an energy model E(theta, s) paired with a scalar
loss l(s) over the same state space.  Everything downstream works with
the nudged kernel

    F(theta, beta, s) = E(theta, s) + beta * l(s),

whose Gibbs distribution at inverse nudge beta and temperature T is
rho_beta(s) proportional to exp(-F(theta, beta, s) / T).
"""

from __future__ import annotations

import hashlib
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

# Absolute floor added to denominators of relative errors so that
# exactly-zero reference values do not divide out to inf.
EPS_ABS = 1e-12


class EvaluationError(ValueError):
    """A non-finite energy or loss value was produced."""


class StateKind(Enum):
    CONTINUOUS = "continuous"
    BINARY = "binary"


@dataclass(frozen=True)
class Temperature:
    """Strictly positive temperature T."""

    value: float

    def __post_init__(self):
        v = float(self.value)
        if not np.isfinite(v) or v <= 0.0:
            raise ValueError(f"temperature must be finite and > 0, got {self.value!r}")
        object.__setattr__(self, "value", v)


@dataclass(frozen=True)
class NudgeStrength:
    """Nudge level beta, restricted to the unit interval."""

    value: float

    def __post_init__(self):
        v = float(self.value)
        if not np.isfinite(v) or v < 0.0 or v > 1.0:
            raise ValueError(f"nudge strength must lie in [0, 1], got {self.value!r}")
        object.__setattr__(self, "value", v)


def as_temperature(t) -> float:
    """Accept a Temperature or bare number, return the validated float."""
    if isinstance(t, Temperature):
        return t.value
    return Temperature(t).value


def as_nudge(beta) -> float:
    """Accept a NudgeStrength or bare number, return the validated float."""
    if isinstance(beta, NudgeStrength):
        return beta.value
    return NudgeStrength(beta).value


Segment = tuple[str, int, int]  # (name, offset, length)


@dataclass(frozen=True)
class ParamVector:
    """Flat float64 parameter vector with a named segment layout.

    Segments must tile [0, dim) exactly, with no gaps or overlaps, so a
    ParamVector can be re-assembled from its parts without ambiguity.
    """

    values: np.ndarray
    layout: tuple[Segment, ...] = ()

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64, copy=True).reshape(-1)
        if not np.all(np.isfinite(v)):
            raise ValueError("parameter vector contains non-finite entries")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        layout = tuple(self.layout) or (("theta", 0, v.size),)
        _validate_layout(layout, v.size)
        object.__setattr__(self, "layout", layout)

    @property
    def dim(self) -> int:
        return self.values.size

    def segment(self, name: str) -> np.ndarray:
        for seg_name, off, length in self.layout:
            if seg_name == name:
                return self.values[off : off + length]
        raise KeyError(f"no segment named {name!r}")

    def with_values(self, values) -> "ParamVector":
        return ParamVector(values, self.layout)


def _validate_layout(layout: tuple[Segment, ...], dim: int) -> None:
    if len({name for name, _, _ in layout}) != len(layout):
        raise ValueError("segment names must be unique")
    cursor = 0
    for name, off, length in sorted(layout, key=lambda seg: seg[1]):
        if off != cursor or length < 0:
            raise ValueError(
                f"segments must tile [0, {dim}) exactly; "
                f"segment {name!r} starts at {off}, expected {cursor}"
            )
        cursor += length
    if cursor != dim:
        raise ValueError(f"segments cover [0, {cursor}) but the vector has dim {dim}")


@dataclass(frozen=True)
class StateVector:
    """Finite float64 state, tagged continuous or binary.

    Binary states must take values in ``site_values`` (the spin pair
    (-1, +1) unless a model declares otherwise).
    """

    values: np.ndarray
    kind: StateKind
    site_values: tuple[float, float] = (-1.0, 1.0)

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64, copy=True).reshape(-1)
        if not np.all(np.isfinite(v)):
            raise ValueError("state vector contains non-finite entries")
        if self.kind is StateKind.BINARY:
            allowed = np.asarray(self.site_values, dtype=np.float64)
            if not np.all(np.isin(v, allowed)):
                raise ValueError(f"binary state entries must lie in {tuple(allowed)}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.values.size


def as_array(x) -> np.ndarray:
    """Unwrap ParamVector / StateVector to a plain float64 array."""
    values = getattr(x, "values", x)
    return np.asarray(values, dtype=np.float64)


class EnergyModel(ABC):
    """Energy E(theta, s) plus scalar loss l(s) over a common state space.

    Models do not own parameters; theta is passed to every call.  Batched
    methods take states as rows of an (m, state_dim) array and have
    generic loop fallbacks, which concrete models override with
    vectorised versions where it matters.
    """

    param_dim: int
    state_dim: int
    state_kind: StateKind
    site_values: tuple[float, float] = (-1.0, 1.0)

    # ------------------------------------------------------------------
    # scalar interface
    # ------------------------------------------------------------------

    @abstractmethod
    def energy(self, theta: np.ndarray, s: np.ndarray) -> float:
        """E(theta, s)."""

    @abstractmethod
    def grad_theta_energy(self, theta: np.ndarray, s: np.ndarray) -> np.ndarray:
        """dE/dtheta at fixed s, shape (param_dim,)."""

    @abstractmethod
    def loss(self, s: np.ndarray) -> float:
        """l(s)."""

    def grad_state_energy(self, theta: np.ndarray, s: np.ndarray) -> np.ndarray:
        """dE/ds at fixed theta; required for continuous-state models."""
        raise NotImplementedError(f"{type(self).__name__} has no state-energy gradient")

    def grad_state_loss(self, s: np.ndarray) -> np.ndarray:
        """dl/ds; required for continuous-state models with nonzero loss."""
        raise NotImplementedError(f"{type(self).__name__} has no state-loss gradient")

    # ------------------------------------------------------------------
    # batched interface (rows of an (m, state_dim) array)
    # ------------------------------------------------------------------

    def energy_batch(self, theta: np.ndarray, states: np.ndarray) -> np.ndarray:
        return np.array([self.energy(theta, s) for s in states])

    def loss_batch(self, states: np.ndarray) -> np.ndarray:
        return np.array([self.loss(s) for s in states])

    def grad_state_energy_batch(self, theta: np.ndarray, states: np.ndarray) -> np.ndarray:
        return np.stack([self.grad_state_energy(theta, s) for s in states])

    def grad_state_loss_batch(self, states: np.ndarray) -> np.ndarray:
        return np.stack([self.grad_state_loss(s) for s in states])

    def grad_theta_energy_sum(
        self, theta: np.ndarray, states: np.ndarray, weights: np.ndarray | None = None
    ) -> np.ndarray:
        """sum_i w_i dE/dtheta(theta, s_i); unit weights when omitted."""
        total = np.zeros(self.param_dim)
        if weights is None:
            for s in states:
                total += self.grad_theta_energy(theta, s)
        else:
            for w, s in zip(weights, states):
                total += w * self.grad_theta_energy(theta, s)
        return total

    def kernel_site_delta(
        self, theta: np.ndarray, beta: float, states: np.ndarray, site: int
    ) -> np.ndarray:
        """F with site at site_values[1] minus F with site at site_values[0].

        Used by single-site sweep kernels on binary models.  Generic
        version evaluates the kernel twice per row; models with local
        structure override it.
        """
        lo, hi = self.site_values
        flipped = np.array(states, copy=True)
        flipped[:, site] = hi
        f_hi = kernel_batch(self, theta, beta, flipped)
        flipped[:, site] = lo
        f_lo = kernel_batch(self, theta, beta, flipped)
        return f_hi - f_lo

    # ------------------------------------------------------------------
    # housekeeping
    # ------------------------------------------------------------------

    @property
    def clamp_mask(self) -> np.ndarray:
        """Boolean mask of state coordinates held fixed during sampling."""
        return np.zeros(self.state_dim, dtype=bool)

    def validate_theta(self, theta) -> np.ndarray:
        t = as_array(theta)
        if t.shape != (self.param_dim,):
            raise ValueError(f"theta has shape {t.shape}, expected ({self.param_dim},)")
        return t

    def validate_state(self, s) -> np.ndarray:
        v = as_array(s)
        if v.shape != (self.state_dim,):
            raise ValueError(f"state has shape {v.shape}, expected ({self.state_dim},)")
        if self.state_kind is StateKind.BINARY:
            allowed = np.asarray(self.site_values)
            if not np.all(np.isin(v, allowed)):
                raise ValueError(f"binary state entries must lie in {tuple(allowed)}")
        return v

    def default_layout(self) -> tuple[Segment, ...]:
        return (("theta", 0, self.param_dim),)

    def param_vector(self, values) -> ParamVector:
        return ParamVector(values, self.default_layout())


def objective_kernel(model: EnergyModel, theta, beta, s) -> float:
    """F(theta, beta, s) = E(theta, s) + beta * l(s), with finiteness checks."""
    b = as_nudge(beta)
    theta = as_array(theta)
    s = as_array(s)
    e = float(model.energy(theta, s))
    if not np.isfinite(e):
        raise EvaluationError(f"energy evaluated to a non-finite value ({e!r})")
    l = float(model.loss(s))
    if not np.isfinite(l):
        raise EvaluationError(f"loss evaluated to a non-finite value ({l!r})")
    return e + b * l


def kernel_batch(model: EnergyModel, theta, beta, states: np.ndarray) -> np.ndarray:
    """Row-wise objective kernel over an (m, state_dim) batch."""
    b = as_nudge(beta)
    theta = as_array(theta)
    e = model.energy_batch(theta, states)
    if not np.all(np.isfinite(e)):
        raise EvaluationError("energy evaluated to a non-finite value in a batch")
    if b == 0.0:
        return e
    l = model.loss_batch(states)
    if not np.all(np.isfinite(l)):
        raise EvaluationError("loss evaluated to a non-finite value in a batch")
    return e + b * l


def central_difference_grad(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite-difference gradient of scalar f at x."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    for k in range(x.size):
        step = np.zeros_like(x)
        step[k] = h
        g[k] = (f(x + step) - f(x - step)) / (2.0 * h)
    return g


def max_relative_error(approx: np.ndarray, reference: np.ndarray) -> float:
    """max_k |approx_k - reference_k| / (|reference_k| + EPS_ABS)."""
    approx = np.asarray(approx, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    return float(np.max(np.abs(approx - reference) / (np.abs(reference) + EPS_ABS)))


def check_grad_theta(model: EnergyModel, theta, s, h: float = 1e-5) -> float:
    """Worst relative error of dE/dtheta against central differences."""
    theta = model.validate_theta(theta)
    s = as_array(s)
    analytic = model.grad_theta_energy(theta, s)
    fd = central_difference_grad(lambda t: model.energy(t, s), theta, h)
    return max_relative_error(analytic, fd)


def check_grad_state(model: EnergyModel, theta, s, h: float = 1e-5) -> float:
    """Worst relative error of dE/ds against central differences."""
    theta = model.validate_theta(theta)
    s = as_array(s)
    analytic = model.grad_state_energy(theta, s)
    fd = central_difference_grad(lambda v: model.energy(theta, v), s, h)
    return max_relative_error(analytic, fd)


def theta_fingerprint(theta) -> str:
    """Short stable hash of a parameter vector, for batch provenance."""
    arr = np.ascontiguousarray(as_array(theta))
    return hashlib.sha256(arr.tobytes()).hexdigest()[:16]
