"""Discriminator over (state, action) pairs and behavior-cloning pretraining.

Orientation: the discriminator is pushed toward 1 on policy samples and toward 0
on expert samples, so ``-log D`` is large for expert-like pairs.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nn import Adam, DenseNet, backward, forward, forward_cache, mlp
from .rewards import clamp_disc


@dataclass
class Discriminator:
    net: DenseNet  # sigmoid output
    state_dim: int
    action_dim: int
    opt: Adam | None = None

    def __post_init__(self):
        if self.net.input_dim != self.state_dim + self.action_dim or self.net.output_dim != 1:
            raise ValueError("discriminator net must map (state, action) to one output")
        if self.net.activations[-1] != "sigmoid":
            raise ValueError("discriminator output activation must be sigmoid")


def make_discriminator(state_dim: int, action_dim: int, rng: np.random.Generator,
                       hidden=(64, 64), lr: float = 3e-4) -> Discriminator:
    net = mlp(state_dim + action_dim, 1, rng, hidden, out_act="sigmoid", out_scale=0.1)
    return Discriminator(net, state_dim, action_dim, Adam(net, lr))


def _pairs(d: Discriminator, s, a) -> tuple[np.ndarray, bool]:
    s, a = np.asarray(s, dtype=float), np.asarray(a, dtype=float)
    single = s.ndim == 1
    S, A = np.atleast_2d(s), np.atleast_2d(a)
    if S.shape[1] != d.state_dim or A.shape[1] != d.action_dim or len(S) != len(A):
        raise ValueError(f"expected ({d.state_dim}, {d.action_dim}) pairs, got {s.shape} / {a.shape}")
    return np.concatenate([S, A], axis=1), single


def disc_forward(d: Discriminator, s, a):
    """D(s, a), clamped into [1e-6, 1 - 1e-6]."""
    X, single = _pairs(d, s, a)
    out = clamp_disc(forward(d.net, X)[:, 0])
    return float(out[0]) if single else out


def _log_sigmoid(z: np.ndarray) -> np.ndarray:
    return -np.logaddexp(0.0, -z)


def disc_objective_and_grads(d: Discriminator, policy_batch, expert_batch):
    """``mean_pi log D + mean_E log(1 - D)`` and its parameter gradient.

    Batches are ``(states, actions)`` tuples. Logs are computed from the logit so
    the value and gradient stay finite even when D saturates.
    """
    Xp, _ = _pairs(d, *policy_batch)
    Xe, _ = _pairs(d, *expert_batch)
    if len(Xp) == 0 or len(Xe) == 0:
        raise ValueError("both batches must be non-empty")
    X = np.concatenate([Xp, Xe])
    cache = forward_cache(d.net, X)
    z = cache.pre[-1][:, 0]
    Dv = cache.outputs[-1][:, 0]
    npol = len(Xp)
    zp, ze = z[:npol], z[npol:]
    obj = float(np.mean(_log_sigmoid(zp)) + np.mean(_log_sigmoid(-ze)))
    # d/dz log sigmoid(z) = 1 - D ; d/dz log(1 - sigmoid(z)) = -D
    up = np.concatenate([(1.0 - Dv[:npol]) / npol, -Dv[npol:] / len(Xe)])[:, None]
    grads, _ = backward(d.net, X, up, cache=cache, through_output_activation=False)
    return obj, grads


def disc_update(d: Discriminator, policy_batch, expert_batch) -> tuple[Discriminator, float]:
    """One Adam ascent step on the discriminator objective; returns the pre-step objective."""
    obj, grads = disc_objective_and_grads(d, policy_batch, expert_batch)
    if d.opt is None:
        d.opt = Adam(d.net)
    d.opt.step(d.net, [-g for g in grads])
    return d, obj


# --------------------------------------------------------------------------- behavior cloning


@dataclass
class BCConfig:
    epochs: int = 0
    lr: float = 1e-3
    batch_size: int = 256
    seed: int = 0
    losses: list[float] = field(default_factory=list)


def bc_loss_and_grads(net: DenseNet, S: np.ndarray, A: np.ndarray):
    cache = forward_cache(net, S)
    diff = cache.out - A
    loss = float(np.mean(np.sum(diff ** 2, axis=1)))
    grads, _ = backward(net, S, 2.0 * diff / len(S), cache=cache)
    return loss, grads


def bc_pretrain(policy, expert_states, expert_actions, cfg: BCConfig | None = None):
    """Regress the policy mean onto expert actions; returns a new policy.

    ``cfg.losses`` receives the full-data loss before training and after every
    optimizer step.
    """
    cfg = cfg or BCConfig()
    S = np.atleast_2d(np.asarray(expert_states, dtype=float))
    A = np.atleast_2d(np.asarray(expert_actions, dtype=float))
    if len(S) == 0:
        raise ValueError("behavior cloning needs at least one expert pair")
    new = policy.copy()
    if cfg.epochs <= 0:
        return new
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(new.mean_net, cfg.lr)
    cfg.losses.append(bc_loss_and_grads(new.mean_net, S, A)[0])
    for _ in range(cfg.epochs):
        order = rng.permutation(len(S))
        for i in range(0, len(S), cfg.batch_size):
            b = order[i:i + cfg.batch_size]
            _, g = bc_loss_and_grads(new.mean_net, S[b], A[b])
            opt.step(new.mean_net, g)
            cfg.losses.append(bc_loss_and_grads(new.mean_net, S, A)[0])
    return new
