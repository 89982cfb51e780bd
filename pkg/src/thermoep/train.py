"""Training loop: contrastive methods and the backprop baseline.

Three methods share one optimiser (SGD with momentum) and one model
layout:

- "ep": finite-nudge equilibrium propagation.  Per minibatch, sample the
  free phase (beta = 0) and the nudged phase (beta = cfg.beta) and apply
  (mean dE nudged - mean dE free) / beta.
- "path_integral": per minibatch, estimate the loss/energy-gradient
  covariance on a trapezoid grid of nudge levels and integrate.
- "backprop": exact gradients through the feedforward twin, as the
  reference ceiling.

Minibatches are sampled as one replica block: every (example, chain)
pair is a row advancing under MALA in lockstep, with its own RNG stream
derived from (seed, epoch, batch, phase, row).  Because dE/dtheta for
the layered net is linear in the features (x (x) tanh h, tanh h (x)
tanh o, tanh h, tanh o), per-example phase statistics are accumulated
in feature space and turned into gradients with a couple of matmuls.
The reduction is checked against the generic per-example estimators in
the test suite.

Per-epoch J is logged through its thermodynamic form, the integral over
beta of the expected loss, estimated on the nudge levels the method
already samples (for "ep" a 2-node trapezoid at {0, beta}, which is
crude when beta is small; for "path_integral" the full node grid).
Backprop has no J; its rows log nan.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .data import Dataset, one_hot
from .estimators import QuadratureSpec
from .models import (
    FeedforwardBaseline,
    LayeredTanhEnergyNet,
    init_layer_params,
    pack_layers,
    unpack_layers,
)
from .rng import FREE_PHASE, NODE_BASE, NUDGED_PHASE, derive_seed, make_generator
from .sampler import ChainConfig, DivergenceError, Kernel, _keep_slots

METHODS = ("ep", "path_integral", "backprop")

# fixed sub-stream tags under the master seed
_INIT_STREAM = 11
_SHUFFLE_STREAM = 13
_PHASE_STREAM = 17

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    method: str
    epochs: int
    batch_size: int
    learning_rate: float
    seed: int = 0
    momentum: float = 0.9
    beta: float = 1.0
    n_nodes: int = 3
    temperature: float = 0.1
    n_hidden: int = 32
    n_chains: int = 2
    n_steps: int = 60
    burn_in: int | None = None
    thin: int = 1
    step_size: float = 0.05
    eval_every: int = 1
    relax_step: float = 0.5
    relax_iters: int = 300
    relax_tol: float = 1e-6

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.epochs < 1 or self.batch_size < 1 or self.eval_every < 1:
            raise ValueError("epochs, batch_size and eval_every must be >= 1")
        if self.learning_rate <= 0.0:
            raise ValueError("learning_rate must be > 0")
        if not (0.0 <= self.momentum < 1.0):
            raise ValueError("momentum must lie in [0, 1)")
        if not (0.0 < self.beta <= 1.0):
            raise ValueError("beta must lie in (0, 1]")
        if self.n_nodes < 2:
            raise ValueError("n_nodes must be >= 2")
        if self.temperature <= 0.0:
            raise ValueError("temperature must be > 0")
        if self.n_hidden < 1 or self.n_chains < 1:
            raise ValueError("n_hidden and n_chains must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        # remaining sampler fields are validated by ChainConfig
        self.chain_config()

    def chain_config(self) -> ChainConfig:
        return ChainConfig(
            n_steps=self.n_steps,
            n_chains=self.n_chains,
            burn_in=self.burn_in,
            thin=self.thin,
            step_size=self.step_size,
            kernel=Kernel.LANGEVIN_ADJUSTED,
            seed=0,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


@dataclass
class Checkpoint:
    method: str
    epoch: int
    layer_sizes: tuple[int, int, int]
    master_seed: int
    theta: np.ndarray
    velocity: np.ndarray
    config: dict
    history: list = field(default_factory=list)


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "method": ckpt.method,
        "epoch": ckpt.epoch,
        "layer_sizes": list(ckpt.layer_sizes),
        "master_seed": ckpt.master_seed,
        "theta": [float(v) for v in ckpt.theta],
        "velocity": [float(v) for v in ckpt.velocity],
        "config": ckpt.config,
        "history": ckpt.history,
    }
    with open(path, "w") as f:
        json.dump(payload, f, indent=1, sort_keys=True)
        f.write("\n")


def load_checkpoint(path) -> Checkpoint:
    with open(path) as f:
        payload = json.load(f)
    version = payload.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint format_version {version!r}")
    sizes = tuple(payload["layer_sizes"])
    theta = np.asarray(payload["theta"], dtype=np.float64)
    velocity = np.asarray(payload["velocity"], dtype=np.float64)
    expected = sizes[0] * sizes[1] + sizes[1] * sizes[2] + sizes[1] + sizes[2]
    if theta.shape != (expected,) or velocity.shape != (expected,):
        raise ValueError("checkpoint theta/velocity do not match layer_sizes")
    return Checkpoint(
        method=payload["method"],
        epoch=int(payload["epoch"]),
        layer_sizes=sizes,
        master_seed=int(payload["master_seed"]),
        theta=theta,
        velocity=velocity,
        config=payload["config"],
        history=list(payload["history"]),
    )


@dataclass
class TrainResult:
    history: list
    checkpoint: Checkpoint
    net: LayeredTanhEnergyNet
    baseline: FeedforwardBaseline

    @property
    def theta(self) -> np.ndarray:
        return self.checkpoint.theta


# ----------------------------------------------------------------------
# replica-block phase sampling
# ----------------------------------------------------------------------


@dataclass
class PhaseStats:
    """Per-example feature sums over all kept (chain, step) rows."""

    n_rows: int  # kept rows per example (n_chains * kept steps)
    sum_th: np.ndarray  # (B, H)
    sum_to: np.ndarray  # (B, O)
    sum_cross: np.ndarray  # (B, H, O)
    sum_loss: np.ndarray  # (B,)
    sum_lth: np.ndarray | None = None
    sum_lto: np.ndarray | None = None
    sum_lcross: np.ndarray | None = None
    raw: tuple | None = None  # (H_rows, O_rows) kept blocks, debug only

    def mean_loss(self) -> np.ndarray:
        return self.sum_loss / self.n_rows

    def cov_features(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Per-example Cov[l, feature] with n-1 normalisation."""
        r = self.n_rows
        if r < 2:
            raise ValueError("covariance needs >= 2 kept rows per example")
        ml = self.sum_loss / r
        c_th = (self.sum_lth - ml[:, None] * self.sum_th) / (r - 1)
        c_to = (self.sum_lto - ml[:, None] * self.sum_to) / (r - 1)
        c_cross = (self.sum_lcross - ml[:, None, None] * self.sum_cross) / (r - 1)
        return c_th, c_to, c_cross


def _sample_phase(
    net: LayeredTanhEnergyNet,
    theta: np.ndarray,
    inputs: np.ndarray,
    targets: np.ndarray,
    beta: float,
    temperature: float,
    chain: ChainConfig,
    seed: int,
    path: tuple[int, ...],
    need_cov: bool = False,
    keep_raw: bool = False,
) -> PhaseStats:
    """MALA over the (h, o) blocks of a whole minibatch replica array.

    Row r = example_slot * n_chains + chain advances with generator
    (seed, *path, r).  The input drive x @ W1 + b_h is constant per row
    and hoisted out of the step loop.
    """
    w1, w2, b_h, b_o = unpack_layers(theta, net.n_in, net.n_hidden, net.n_out)
    b = len(inputs)
    c = chain.n_chains
    rows = b * c
    t = temperature
    eta = chain.step_size
    scale = np.sqrt(2.0 * eta)
    nh, no = net.n_hidden, net.n_out

    drive = np.repeat(inputs @ w1 + b_h, c, axis=0)
    tg = np.repeat(targets, c, axis=0)
    gens = [make_generator(seed, *path, r) for r in range(rows)]

    def kernel_and_grads(h, o):
        th, to = np.tanh(h), np.tanh(o)
        f = (
            0.5 * np.einsum("ij,ij->i", h, h)
            + 0.5 * np.einsum("ij,ij->i", o, o)
            - np.einsum("ij,ij->i", th, drive)
            - np.einsum("ij,ij->i", to, th @ w2)
            - to @ b_o
        )
        g_h = h - (1.0 - th**2) * (drive + to @ w2.T)
        g_o = o - (1.0 - to**2) * (th @ w2 + b_o)
        if beta != 0.0:
            d = o - tg
            f = f + beta * 0.5 * np.einsum("ij,ij->i", d, d)
            g_o = g_o + beta * d
        return f, g_h, g_o

    h = np.zeros((rows, nh))
    o = np.zeros((rows, no))
    f_cur, gh_cur, go_cur = kernel_and_grads(h, o)

    slots = _keep_slots(chain)
    n_kept = chain.n_kept
    stats = PhaseStats(
        n_rows=c * n_kept,
        sum_th=np.zeros((b, nh)),
        sum_to=np.zeros((b, no)),
        sum_cross=np.zeros((b, nh, no)),
        sum_loss=np.zeros(b),
        sum_lth=np.zeros((b, nh)) if need_cov else None,
        sum_lto=np.zeros((b, no)) if need_cov else None,
        sum_lcross=np.zeros((b, nh, no)) if need_cov else None,
        raw=([], []) if keep_raw else None,
    )

    for step in range(chain.n_steps):
        noise = np.stack([g.standard_normal(nh + no) for g in gens])
        h_prop = h - (eta / t) * gh_cur + scale * noise[:, :nh]
        o_prop = o - (eta / t) * go_cur + scale * noise[:, nh:]
        with np.errstate(invalid="ignore", over="ignore"):
            f_prop, gh_prop, go_prop = kernel_and_grads(h_prop, o_prop)
            f_prop = np.where(np.isfinite(f_prop), f_prop, np.inf)
            fwd_h = h_prop - h + (eta / t) * gh_cur
            fwd_o = o_prop - o + (eta / t) * go_cur
            rev_h = h - h_prop + (eta / t) * gh_prop
            rev_o = o - o_prop + (eta / t) * go_prop
            log_q_fwd = -(
                np.einsum("ij,ij->i", fwd_h, fwd_h) + np.einsum("ij,ij->i", fwd_o, fwd_o)
            ) / (4.0 * eta)
            log_q_rev = -(
                np.einsum("ij,ij->i", rev_h, rev_h) + np.einsum("ij,ij->i", rev_o, rev_o)
            ) / (4.0 * eta)
            log_alpha = -(f_prop - f_cur) / t + log_q_rev - log_q_fwd
        log_alpha = np.where(np.isfinite(log_alpha), log_alpha, -np.inf)
        u = np.array([g.random() for g in gens])
        accept = np.log(u) < log_alpha
        h[accept] = h_prop[accept]
        o[accept] = o_prop[accept]
        f_cur = np.where(accept, f_prop, f_cur)
        gh_cur[accept] = gh_prop[accept]
        go_cur[accept] = go_prop[accept]

        if slots.get(step) is None:
            continue
        th = np.tanh(h).reshape(b, c, nh)
        to = np.tanh(o).reshape(b, c, no)
        stats.sum_th += th.sum(axis=1)
        stats.sum_to += to.sum(axis=1)
        stats.sum_cross += np.einsum("bch,bco->bho", th, to)
        d = (o - tg).reshape(b, c, no)
        losses = 0.5 * np.einsum("bcj,bcj->bc", d, d)
        stats.sum_loss += losses.sum(axis=1)
        if need_cov:
            stats.sum_lth += np.einsum("bc,bch->bh", losses, th)
            stats.sum_lto += np.einsum("bc,bco->bo", losses, to)
            stats.sum_lcross += np.einsum("bc,bch,bco->bho", losses, th, to)
        if keep_raw:
            stats.raw[0].append(h.copy())
            stats.raw[1].append(o.copy())
    return stats


def _stats_grad(inputs: np.ndarray, v_th, v_to, v_cross) -> np.ndarray:
    """Map per-example feature-space vectors to the mean theta-gradient.

    dE/dtheta = (-x (x) th, -th (x) to, -th, -to), so any per-example
    linear statistic of the features turns into the matching statistic
    of the gradient.
    """
    b = len(inputs)
    g_w1 = -(inputs.T @ v_th) / b
    g_w2 = -v_cross.mean(axis=0)
    g_bh = -v_th.mean(axis=0)
    g_bo = -v_to.mean(axis=0)
    return pack_layers(g_w1, g_w2, g_bh, g_bo)


def _ep_minibatch(net, theta, inputs, targets, cfg: TrainConfig, path) -> tuple[np.ndarray, float]:
    chain = cfg.chain_config()
    nudged = _sample_phase(
        net, theta, inputs, targets, cfg.beta, cfg.temperature, chain,
        cfg.seed, path + (NUDGED_PHASE,),
    )
    free = _sample_phase(
        net, theta, inputs, targets, 0.0, cfg.temperature, chain,
        cfg.seed, path + (FREE_PHASE,),
    )
    r = nudged.n_rows
    grad = (1.0 / cfg.beta) * _stats_grad(
        inputs,
        (nudged.sum_th - free.sum_th) / r,
        (nudged.sum_to - free.sum_to) / r,
        (nudged.sum_cross - free.sum_cross) / r,
    )
    j_est = 0.5 * float(free.mean_loss().mean() + nudged.mean_loss().mean())
    return grad, j_est


def _path_minibatch(net, theta, inputs, targets, cfg: TrainConfig, path) -> tuple[np.ndarray, float]:
    chain = cfg.chain_config()
    quad = QuadratureSpec.trapezoid(cfg.n_nodes)
    b = len(inputs)
    acc_th = np.zeros((b, net.n_hidden))
    acc_to = np.zeros((b, net.n_out))
    acc_cross = np.zeros((b, net.n_hidden, net.n_out))
    j_est = 0.0
    for k, (node, weight) in enumerate(zip(quad.nodes, quad.weights)):
        stats = _sample_phase(
            net, theta, inputs, targets, float(node), cfg.temperature, chain,
            cfg.seed, path + (NODE_BASE + k,), need_cov=True,
        )
        c_th, c_to, c_cross = stats.cov_features()
        acc_th += weight * c_th
        acc_to += weight * c_to
        acc_cross += weight * c_cross
        j_est += weight * float(stats.mean_loss().mean())
    grad = -(1.0 / cfg.temperature) * _stats_grad(inputs, acc_th, acc_to, acc_cross)
    return grad, j_est


# ----------------------------------------------------------------------
# evaluation and the loop
# ----------------------------------------------------------------------


def evaluate_energy(net: LayeredTanhEnergyNet, theta, ds: Dataset, cfg: TrainConfig) -> float:
    preds = net.predict(
        theta, ds.inputs, step=cfg.relax_step, max_iters=cfg.relax_iters, tol=cfg.relax_tol
    )
    return float(np.mean(preds == ds.labels))


def evaluate_feedforward(baseline: FeedforwardBaseline, theta, ds: Dataset) -> float:
    return float(np.mean(baseline.predict(theta, ds.inputs) == ds.labels))


def train(
    train_ds: Dataset,
    test_ds: Dataset,
    cfg: TrainConfig,
    resume: Checkpoint | None = None,
) -> TrainResult:
    """Run the configured method and return history plus a checkpoint.

    History rows are dicts with keys epoch, method, beta, train_accuracy,
    test_accuracy, mean_J_estimate.  Resuming from a checkpoint written
    at epoch e reproduces the uninterrupted run exactly: all stochastic
    streams are derived from (seed, epoch, batch), never from global
    state.
    """
    if train_ds.n_classes != test_ds.n_classes or train_ds.dim != test_ds.dim:
        raise ValueError("train and test sets must share dimensions and classes")
    net = LayeredTanhEnergyNet(train_ds.dim, cfg.n_hidden, train_ds.n_classes)
    baseline = FeedforwardBaseline(train_ds.dim, cfg.n_hidden, train_ds.n_classes)
    sizes = (train_ds.dim, cfg.n_hidden, train_ds.n_classes)

    if resume is not None:
        # the epoch budget may grow on resume; everything else must match
        mine, theirs = cfg.to_dict(), dict(resume.config)
        mine.pop("epochs"), theirs.pop("epochs")
        if theirs != mine:
            raise ValueError("resume checkpoint was written with a different config")
        if tuple(resume.layer_sizes) != sizes:
            raise ValueError("resume checkpoint does not match the dataset/model sizes")
        if resume.epoch > cfg.epochs:
            raise ValueError(
                f"checkpoint is already at epoch {resume.epoch}, past the budget {cfg.epochs}"
            )
        theta = np.array(resume.theta, copy=True)
        velocity = np.array(resume.velocity, copy=True)
        start_epoch = resume.epoch + 1
        history = list(resume.history)
    else:
        theta = np.array(init_layer_params(*sizes, derive_seed(cfg.seed, _INIT_STREAM)).values)
        velocity = np.zeros_like(theta)
        start_epoch = 1
        history = []

    targets = one_hot(train_ds.labels, train_ds.n_classes)
    n = len(train_ds)

    for epoch in range(start_epoch, cfg.epochs + 1):
        perm = make_generator(cfg.seed, _SHUFFLE_STREAM, epoch).permutation(n)
        j_values = []
        for b_idx in range(0, n, cfg.batch_size):
            chunk = perm[b_idx : b_idx + cfg.batch_size]
            x = train_ds.inputs[chunk]
            tg = targets[chunk]
            path = (_PHASE_STREAM, epoch, b_idx)
            if cfg.method == "backprop":
                grad = baseline.backprop_grad_batch(theta, x, tg)
                j_est = float("nan")
            elif cfg.method == "ep":
                grad, j_est = _ep_minibatch(net, theta, x, tg, cfg, path)
            else:
                grad, j_est = _path_minibatch(net, theta, x, tg, cfg, path)
            velocity = cfg.momentum * velocity + grad
            theta = theta - cfg.learning_rate * velocity
            if not np.all(np.isfinite(theta)):
                raise DivergenceError(
                    f"parameters became non-finite at epoch {epoch}, batch offset {b_idx}"
                )
            j_values.append(j_est)
        if epoch % cfg.eval_every == 0 or epoch == cfg.epochs:
            if cfg.method == "backprop":
                train_acc = evaluate_feedforward(baseline, theta, train_ds)
                test_acc = evaluate_feedforward(baseline, theta, test_ds)
            else:
                train_acc = evaluate_energy(net, theta, train_ds, cfg)
                test_acc = evaluate_energy(net, theta, test_ds, cfg)
            history.append({
                "epoch": epoch,
                "method": cfg.method,
                "beta": cfg.beta if cfg.method == "ep" else float("nan"),
                "train_accuracy": train_acc,
                "test_accuracy": test_acc,
                "mean_J_estimate": float(np.mean(j_values)),
            })

    ckpt = Checkpoint(
        method=cfg.method,
        epoch=cfg.epochs,
        layer_sizes=sizes,
        master_seed=cfg.seed,
        theta=theta,
        velocity=velocity,
        config=cfg.to_dict(),
        history=history,
    )
    return TrainResult(history=history, checkpoint=ckpt, net=net, baseline=baseline)
