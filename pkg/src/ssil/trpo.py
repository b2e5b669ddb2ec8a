"""Gaussian policy, twin value estimators, LCoR-augmented advantages and the KL-constrained step."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nn import Adam, DenseNet, backward, flatten, forward, forward_cache, jvp, mlp, unflatten_like
from .rewards import clamp_disc

LOG_2PI = np.log(2.0 * np.pi)


class SolverError(ArithmeticError):
    pass


# --------------------------------------------------------------------------- policy


@dataclass
class GaussianPolicy:
    mean_net: DenseNet
    log_std: np.ndarray

    def __post_init__(self):
        self.log_std = np.asarray(self.log_std, dtype=float).ravel()
        if self.log_std.shape != (self.mean_net.output_dim,):
            raise ValueError("log_std length must equal the action dim")
        if not np.all(np.isfinite(self.log_std)):
            raise ValueError("log_std must be finite")

    @property
    def state_dim(self) -> int:
        return self.mean_net.input_dim

    @property
    def action_dim(self) -> int:
        return self.mean_net.output_dim

    @property
    def n_params(self) -> int:
        return self.mean_net.n_params + self.action_dim

    def mean(self, s) -> np.ndarray:
        return forward(self.mean_net, s)

    def get_flat(self) -> np.ndarray:
        return np.concatenate([self.mean_net.get_flat(), self.log_std])

    def set_flat(self, flat) -> None:
        flat = np.asarray(flat, dtype=float)
        self.mean_net.set_flat(flat[:self.mean_net.n_params])
        self.log_std = flat[self.mean_net.n_params:].copy()

    def copy(self) -> "GaussianPolicy":
        return GaussianPolicy(self.mean_net.copy(), self.log_std.copy())


def make_policy(state_dim: int, action_dim: int, rng: np.random.Generator, hidden=(64, 64),
                init_log_std: float = -0.5) -> GaussianPolicy:
    return GaussianPolicy(mlp(state_dim, action_dim, rng, hidden, out_scale=0.1),
                          np.full(action_dim, init_log_std))


def policy_sample(p: GaussianPolicy, s, noise) -> np.ndarray:
    mu = p.mean(s)
    noise = np.asarray(noise, dtype=float)
    if noise.shape != mu.shape:
        raise ValueError(f"noise shape {noise.shape} != action shape {mu.shape}")
    return mu + np.exp(p.log_std) * noise


def entropy(p: GaussianPolicy) -> float:
    return float(np.sum(p.log_std + 0.5 * (LOG_2PI + 1.0)))


def log_prob(p: GaussianPolicy, s, a, mu: np.ndarray | None = None):
    mu = p.mean(s) if mu is None else mu
    a = np.asarray(a, dtype=float)
    z = (a - mu) * np.exp(-p.log_std)
    return -0.5 * np.sum(z * z, axis=-1) - np.sum(p.log_std) - 0.5 * p.action_dim * LOG_2PI


def log_prob_and_entropy(p: GaussianPolicy, s, a):
    lp = log_prob(p, s, a)
    return (float(lp) if np.ndim(lp) == 0 else lp), entropy(p)


def log_prob_grad(p: GaussianPolicy, S, A, weights) -> np.ndarray:
    """Flat gradient of ``sum_i weights_i * log pi(a_i | s_i)``."""
    S, A = np.atleast_2d(S), np.atleast_2d(A)
    w = np.asarray(weights, dtype=float).reshape(-1, 1)
    cache = forward_cache(p.mean_net, S)
    inv_var = np.exp(-2.0 * p.log_std)
    diff = A - cache.out
    g_net, _ = backward(p.mean_net, S, w * diff * inv_var, cache=cache)
    g_ls = np.sum(w * (diff * diff * inv_var - 1.0), axis=0)
    return np.concatenate([flatten(g_net), g_ls])


def mean_kl(old: GaussianPolicy, new: GaussianPolicy, S, mu_old: np.ndarray | None = None) -> float:
    """Average over states of KL(old || new) between diagonal Gaussians."""
    mu_o = old.mean(S) if mu_old is None else mu_old
    mu_n = new.mean(S)
    var_o, var_n = np.exp(2 * old.log_std), np.exp(2 * new.log_std)
    kl = (new.log_std - old.log_std) + (var_o + (mu_o - mu_n) ** 2) / (2 * var_n) - 0.5
    return float(np.mean(np.sum(np.atleast_2d(kl), axis=-1)))


# --------------------------------------------------------------------------- values


@dataclass
class ValueEstimator:
    net: DenseNet
    role: str  # "D" (discriminator return) or "C" (shaping return)
    opt: Adam | None = None

    def __post_init__(self):
        if self.role not in ("D", "C"):
            raise ValueError("role must be 'D' or 'C'")
        if self.net.output_dim != 1:
            raise ValueError("value net must have scalar output")

    def __call__(self, S) -> np.ndarray:
        out = forward(self.net, S)
        return out[..., 0]

    def copy(self) -> "ValueEstimator":
        return ValueEstimator(self.net.copy(), self.role, None)


def make_value(state_dim: int, role: str, rng: np.random.Generator, hidden=(64, 64),
               lr: float = 1e-3) -> ValueEstimator:
    net = mlp(state_dim, 1, rng, hidden)
    return ValueEstimator(net, role, Adam(net, lr))


def value_loss_and_grads(net: DenseNet, S: np.ndarray, targets: np.ndarray):
    cache = forward_cache(net, S)
    diff = cache.out[:, 0] - targets
    loss = float(np.mean(diff ** 2))
    grads, _ = backward(net, S, (2.0 * diff / len(S))[:, None], cache=cache)
    return loss, grads


@dataclass
class RolloutBatch:
    states: np.ndarray       # (N, Ds)
    actions: np.ndarray      # (N, Da)
    next_states: np.ndarray  # (N, Ds)
    disc: np.ndarray         # D(s, a) in (0, 1)
    lcor: np.ndarray         # shaping signal in [0, 1]
    dones: np.ndarray        # episode ends after this step
    gamma: float = 0.99
    entropy_coef: float = 0.0
    eta: float = 0.0
    eval_rewards: np.ndarray | None = None  # evaluation reward per step, never trained on
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.states)
        self.disc = np.asarray(self.disc, dtype=float)
        self.lcor = np.asarray(self.lcor, dtype=float)
        self.dones = np.asarray(self.dones, dtype=bool)
        if not (len(self.actions) == len(self.next_states) == len(self.disc) == len(self.lcor) == len(self.dones) == n):
            raise ValueError("rollout arrays must share their length")
        if np.any(self.disc <= 0) or np.any(self.disc >= 1):
            raise ValueError("disc outputs must lie in (0, 1)")
        if np.any(self.lcor < 0) or np.any(self.lcor > 1):
            raise ValueError("shaping values must lie in [0, 1]")
        if not 0 <= self.gamma <= 1 or self.entropy_coef < 0 or self.eta < 0:
            raise ValueError("need gamma in [0, 1], entropy weight >= 0, eta >= 0")

    def __len__(self) -> int:
        return len(self.states)

    def signal(self, which: str) -> np.ndarray:
        if which == "D":
            return -np.log(clamp_disc(self.disc))
        if which == "C":
            return self.lcor
        raise ValueError("which must be 'D' or 'C'")

    def episode_returns(self, per_step: np.ndarray) -> np.ndarray:
        """Undiscounted per-episode sums of a per-step quantity."""
        ends = np.flatnonzero(self.dones)
        starts = np.concatenate([[0], ends[:-1] + 1])
        return np.array([per_step[a:b + 1].sum() for a, b in zip(starts, ends)])


def discounted_returns(signal, dones, gamma: float) -> np.ndarray:
    """Per-step discounted return within each episode; nothing is bootstrapped past a done."""
    signal = np.asarray(signal, dtype=float)
    out = np.empty_like(signal)
    acc = 0.0
    for i in range(len(signal) - 1, -1, -1):
        if dones[i]:
            acc = 0.0
        acc = signal[i] + gamma * acc
        out[i] = acc
    return out


def fit_values(V: ValueEstimator, batch: RolloutBatch, which: str, epochs: int = 5,
               batch_size: int = 64, rng: np.random.Generator | None = None) -> ValueEstimator:
    """Regress ``V`` onto discounted returns of ``-log D`` (which='D') or the shaping signal ('C')."""
    if len(batch) == 0:
        raise ValueError("empty rollout batch")
    rng = rng or np.random.default_rng(0)
    targets = discounted_returns(batch.signal(which), batch.dones, batch.gamma)
    if V.opt is None:
        V.opt = Adam(V.net)
    n = len(batch)
    for _ in range(epochs):
        order = rng.permutation(n)
        for i in range(0, n, batch_size):
            b = order[i:i + batch_size]
            _, g = value_loss_and_grads(V.net, batch.states[b], targets[b])
            V.opt.step(V.net, g)
    return V


def compute_advantages(batch: RolloutBatch, V_D, V_C, normalize: bool = True) -> np.ndarray:
    """``-log D + g V_D(s') - V_D(s) + eta (LCoR + g V_C(s') - V_C(s))`` per step.

    ``V(s') = 0`` after a done. With ``normalize`` the result is shifted and scaled to
    zero mean / unit std over the batch.
    """
    alive = ~batch.dones
    g = batch.gamma
    adv = batch.signal("D") + g * V_D(batch.next_states) * alive - V_D(batch.states)
    if batch.eta != 0:
        adv = adv + batch.eta * (batch.lcor + g * V_C(batch.next_states) * alive - V_C(batch.states))
    if normalize:
        sd = adv.std()
        adv = (adv - adv.mean()) / (sd if sd > 1e-8 else 1.0)
    return adv


# --------------------------------------------------------------------------- trust region


def conjugate_gradient(hvp, g, iters: int = 10, tol: float = 1e-10) -> np.ndarray:
    """Solve ``H x = g`` for symmetric positive-definite ``H`` given only ``hvp(v) = H v``."""
    g = np.asarray(g, dtype=float)
    x = np.zeros_like(g)
    gnorm = np.linalg.norm(g)
    if gnorm == 0:
        return x
    r = g.copy()
    p = r.copy()
    rr = r @ r
    for _ in range(iters):
        Hp = hvp(p)
        pHp = p @ Hp
        if not np.isfinite(pHp) or pHp <= 0:
            raise SolverError("conjugate gradient met a non-finite or non-positive curvature")
        a = rr / pHp
        x = x + a * p
        r = r - a * Hp
        rr_new = r @ r
        if not np.isfinite(rr_new):
            raise SolverError("conjugate gradient residual became non-finite")
        if np.sqrt(rr_new) <= tol * gnorm:
            break
        p = r + (rr_new / rr) * p
        rr = rr_new
    return x


def fisher_vector_product(p: GaussianPolicy, S: np.ndarray, v: np.ndarray, damping: float = 0.0,
                          cache=None) -> np.ndarray:
    """Average Fisher information of the policy times ``v`` (plus ``damping * v``).

    For a state-independent diagonal Gaussian the Fisher matrix is block diagonal:
    ``J^T diag(1/sigma^2) J`` for the mean-net weights and ``2 I`` for the log-stds.
    """
    cache = cache or forward_cache(p.mean_net, S)
    n_net = p.mean_net.n_params
    Jv = jvp(p.mean_net, S, unflatten_like(p.mean_net, v[:n_net]), cache=cache)
    g, _ = backward(p.mean_net, S, Jv * np.exp(-2 * p.log_std) / len(S), cache=cache)
    return np.concatenate([flatten(g), 2.0 * v[n_net:]]) + damping * v


def surrogate(p: GaussianPolicy, S, A, logp_old, adv, entropy_coef: float) -> float:
    ratio = np.exp(log_prob(p, S, A) - logp_old)
    return float(np.mean(ratio * adv) + entropy_coef * entropy(p))


@dataclass
class StepReport:
    status: str  # accepted | rejected | zero-gradient | non-finite
    kl: float = 0.0
    improvement: float = 0.0
    step_fraction: float = 0.0
    backtracks: int = 0

    @property
    def accepted(self) -> bool:
        return self.status == "accepted"


def trpo_step(p: GaussianPolicy, batch, advantages, max_kl: float = 0.01, entropy_coef: float = 0.0,
              damping: float = 0.1, cg_iters: int = 10, backtrack: float = 0.8,
              max_backtracks: int = 10) -> tuple[GaussianPolicy, StepReport]:
    """Natural-gradient step on ``E[ratio * A] + entropy_coef * H`` with mean KL <= ``max_kl``.

    ``batch`` is a :class:`RolloutBatch` or a ``(states, actions)`` tuple. The input
    policy is never mutated; on rejection it is returned as is.
    """
    S, A = (batch.states, batch.actions) if isinstance(batch, RolloutBatch) else batch
    S, A = np.atleast_2d(S), np.atleast_2d(A)
    adv = np.asarray(advantages, dtype=float)
    cache = forward_cache(p.mean_net, S)
    mu_old = cache.out
    logp_old = log_prob(p, S, A, mu=mu_old)
    g = log_prob_grad(p, S, A, adv / len(S))
    g[p.mean_net.n_params:] += entropy_coef
    if not np.all(np.isfinite(g)):
        return p, StepReport("non-finite")
    if not np.any(g):
        return p, StepReport("zero-gradient")
    try:
        step = conjugate_gradient(lambda v: fisher_vector_product(p, S, v, damping, cache), g, cg_iters)
    except SolverError:
        return p, StepReport("non-finite")
    shs = step @ fisher_vector_product(p, S, step, damping, cache)
    if not np.isfinite(shs) or shs <= 0:
        return p, StepReport("non-finite")
    full = np.sqrt(2.0 * max_kl / shs) * step
    theta = p.get_flat()
    base = surrogate(p, S, A, logp_old, adv, entropy_coef)
    cand = p.copy()
    for k in range(max_backtracks):
        frac = backtrack ** k
        cand.set_flat(theta + frac * full)
        if not np.all(np.isfinite(cand.log_std)) or not cand.mean_net.all_finite():
            continue
        kl = mean_kl(p, cand, S, mu_old=mu_old)
        improve = surrogate(cand, S, A, logp_old, adv, entropy_coef) - base
        if np.isfinite(kl) and kl <= max_kl and improve > 0:
            return cand, StepReport("accepted", kl, improve, frac, k)
    return p, StepReport("rejected", backtracks=max_backtracks)


# --------------------------------------------------------------------------- eta decay


def value_change(before, after, s0_set) -> float:
    S0 = np.atleast_2d(np.asarray(s0_set, dtype=float))
    if len(S0) == 0:
        raise ValueError("initial-state set is empty")
    return float(np.mean(after(S0) - before(S0)))


def should_decay(V_D_before, V_D_after, V_C_before, V_C_after, s0_set) -> tuple[bool, float, float]:
    dvd = value_change(V_D_before, V_D_after, s0_set)
    dvc = value_change(V_C_before, V_C_after, s0_set)
    return dvd > dvc, dvd, dvc


def eta_decay_check(V_D_before, V_D_after, V_C_before, V_C_after, s0_set, eta: float,
                    epsilon: float) -> float:
    """Return ``epsilon * eta`` when the discriminator value grew more than the shaping value."""
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    decay, _, _ = should_decay(V_D_before, V_D_after, V_C_before, V_C_after, s0_set)
    return epsilon * eta if decay else eta


@dataclass
class EtaSchedule:
    """Tracks eta as ``eta0 * epsilon ** n_decays`` so the trace is exact and non-increasing."""
    eta0: float
    epsilon: float
    n_decays: int = 0

    def __post_init__(self):
        if self.eta0 < 0:
            raise ValueError("eta0 must be >= 0")
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")

    @property
    def eta(self) -> float:
        return self.eta0 * self.epsilon ** self.n_decays

    def update(self, decay: bool) -> float:
        if decay:
            self.n_decays += 1
        return self.eta
