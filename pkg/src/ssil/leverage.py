"""Leverage estimation: fit on expert data, score unlabeled states, normalize to [0, 1].

Three scorers are available. The VAE family (plain or windowed) scores by
reconstruction error; the MDN and GP baselines regress state -> action and score
by predictive uncertainty. Whatever the score, lower means more expert-like and
maps to a leverage closer to 1.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.spatial.distance import cdist, pdist

from .data import EXPERT, DemoSet, Trajectory, window_states
from .nn import Adam, DenseNet, backward, forward, forward_cache, mlp
from .rewards import LeverageBank

METHODS = ("vae", "windowvae", "mdn", "gpr")


class InsufficientDataError(ValueError):
    pass


class NumericalError(ArithmeticError):
    pass


@dataclass
class LeverageConfig:
    latent_dim: int = 8
    hidden: tuple[int, ...] = (64, 64)
    kl_weight: float = 1.0
    epochs: int = 60
    batch_size: int = 64
    lr: float = 1e-3
    window: int = 2
    n_components: int = 5
    gpr_max_points: int = 1000
    gpr_signal_var: float = 1.0
    gpr_noise_var: float = 1e-2
    gpr_length_scale: float | None = None  # None: median pairwise distance
    gpr_jitter: float = 1e-6
    std_floor: float = 1e-3
    alpha: float = 1.0
    seed: int = 0


@dataclass
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray, floor: float = 1e-3) -> "Standardizer":
        X = np.atleast_2d(X)
        return cls(X.mean(axis=0), np.maximum(X.std(axis=0), floor))

    def __call__(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean) / self.scale


def normalize_to_leverage(errors) -> np.ndarray:
    """Map scores to leverages: the smallest score gets 1, the largest 0.

    A degenerate set (all scores equal) maps to all ones.
    """
    r = np.asarray(errors, dtype=float).ravel()
    if r.size == 0:
        raise ValueError("cannot normalize an empty error set")
    lo, hi = r.min(), r.max()
    if hi == lo:
        return np.ones_like(r)
    return np.clip((hi - r) / (hi - lo), 0.0, 1.0)


# --------------------------------------------------------------------------- VAE


@dataclass
class VAEModel:
    encoder: DenseNet  # x -> [mu, logvar]
    decoder: DenseNet  # z -> x_hat
    latent_dim: int
    mode: str = "plain"  # plain | windowed
    window: int = 1
    scaler: Standardizer | None = None
    history: list[float] = field(default_factory=list)

    def __post_init__(self):
        if self.latent_dim < 1:
            raise ValueError("latent dim must be >= 1")
        if self.encoder.output_dim != 2 * self.latent_dim or self.decoder.input_dim != self.latent_dim:
            raise ValueError("encoder/decoder do not match the latent dim")
        if self.decoder.output_dim != self.encoder.input_dim:
            raise ValueError("decoder output dim must equal encoder input dim")

    @property
    def input_dim(self) -> int:
        return self.encoder.input_dim


def vae_loss_and_grads(model: VAEModel, X: np.ndarray, eps: np.ndarray, kl_weight: float = 1.0):
    """Mean over rows of ``||x - dec(mu + exp(logvar/2) eps)||^2 + kl_weight * KL``.

    ``X`` is already standardized. Returns ``(loss, encoder_grads, decoder_grads)``.
    """
    n, L = len(X), model.latent_dim
    enc = forward_cache(model.encoder, X)
    mu, logvar = enc.out[:, :L], enc.out[:, L:]
    std = np.exp(0.5 * logvar)
    z = mu + std * eps
    dec = forward_cache(model.decoder, z)
    diff = dec.out - X
    kl = -0.5 * np.sum(1.0 + logvar - mu ** 2 - np.exp(logvar), axis=1)
    loss = float(np.mean(np.sum(diff ** 2, axis=1) + kl_weight * kl))

    g_dec, g_z = backward(model.decoder, z, 2.0 * diff / n, cache=dec)
    g_mu = g_z + kl_weight * mu / n
    g_logvar = g_z * eps * 0.5 * std + kl_weight * 0.5 * (np.exp(logvar) - 1.0) / n
    g_enc, _ = backward(model.encoder, X, np.concatenate([g_mu, g_logvar], axis=1), cache=enc)
    return loss, g_enc, g_dec


def vae_inputs(trajs: list[Trajectory], mode: str, window: int = 2) -> np.ndarray:
    """Model inputs for a list of trajectories, one row per state.

    In windowed mode state ``t`` is represented by the window ending at ``t``; the
    first ``window - 1`` states reuse the first full window, and a trajectory shorter
    than the window is padded by repeating its last state.
    """
    if mode == "plain":
        return np.concatenate([t.states for t in trajs])
    rows = []
    for t in trajs:
        S = t.states
        if len(S) < window:
            S = np.concatenate([S, np.repeat(S[-1:], window - len(S), axis=0)])
            rows.append(np.repeat(S.reshape(1, -1), len(t), axis=0))
            continue
        W = window_states(Trajectory(S, t.actions, t.label, t.source), window)
        rows.append(np.concatenate([np.repeat(W[:1], window - 1, axis=0), W]))
    return np.concatenate(rows)


def train_vae(expert_states, cfg: LeverageConfig | None = None, mode: str = "plain",
              window: int = 1) -> VAEModel:
    """Fit a VAE on (already windowed, if applicable) expert inputs.

    The recorded ``history`` holds the full-data objective before training and
    after every epoch, evaluated with a fixed noise draw.
    """
    cfg = cfg or LeverageConfig()
    X_raw = np.atleast_2d(np.asarray(expert_states, dtype=float))
    if len(X_raw) < cfg.latent_dim:
        raise InsufficientDataError(f"{len(X_raw)} states for latent dim {cfg.latent_dim}")
    rng = np.random.default_rng(cfg.seed)
    scaler = Standardizer.fit(X_raw, cfg.std_floor)
    X = scaler(X_raw)
    D, L = X.shape[1], cfg.latent_dim
    model = VAEModel(mlp(D, 2 * L, rng, cfg.hidden, out_scale=0.1),
                     mlp(L, D, rng, cfg.hidden), L, mode, window, scaler)
    enc_opt, dec_opt = Adam(model.encoder, cfg.lr), Adam(model.decoder, cfg.lr)
    eval_eps = rng.standard_normal((len(X), L))
    model.history.append(vae_loss_and_grads(model, X, eval_eps, cfg.kl_weight)[0])
    for _ in range(cfg.epochs):
        order = rng.permutation(len(X))
        for i in range(0, len(X), cfg.batch_size):
            xb = X[order[i:i + cfg.batch_size]]
            _, g_enc, g_dec = vae_loss_and_grads(model, xb, rng.standard_normal((len(xb), L)), cfg.kl_weight)
            enc_opt.step(model.encoder, g_enc)
            dec_opt.step(model.decoder, g_dec)
        model.history.append(vae_loss_and_grads(model, X, eval_eps, cfg.kl_weight)[0])
    return model


def reconstruction_errors(model: VAEModel, states) -> np.ndarray:
    """``||x - dec(mu(x))||_2`` per row, in the model's standardized units."""
    X = np.atleast_2d(np.asarray(states, dtype=float))
    if X.shape[1] != model.input_dim:
        raise ValueError(f"state dim {X.shape[1]} != model input dim {model.input_dim}")
    if model.scaler is not None:
        X = model.scaler(X)
    mu = forward(model.encoder, X)[:, :model.latent_dim]
    return np.linalg.norm(X - forward(model.decoder, mu), axis=1)


# --------------------------------------------------------------------------- MDN


@dataclass
class MDNModel:
    trunk: DenseNet  # state -> [K logits, K*Da means, K*Da log-variances]
    n_components: int
    action_dim: int
    x_scaler: Standardizer | None = None
    y_scaler: Standardizer | None = None
    history: list[float] = field(default_factory=list)

    def __post_init__(self):
        if self.n_components < 1:
            raise ValueError("need at least one mixture component")
        if self.trunk.output_dim != self.n_components * (1 + 2 * self.action_dim):
            raise ValueError("trunk output dim does not match K * (1 + 2 * Da)")


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def mdn_split(model: MDNModel, out: np.ndarray):
    K, Da = model.n_components, model.action_dim
    logits = out[:, :K]
    means = out[:, K:K + K * Da].reshape(-1, K, Da)
    logvar = out[:, K + K * Da:].reshape(-1, K, Da)
    return logits, means, logvar


def mdn_params(model: MDNModel, states):
    """Mixture weights ``(N, K)``, means and variances ``(N, K, Da)`` in standardized action units."""
    X = np.atleast_2d(np.asarray(states, dtype=float))
    if X.shape[1] != model.trunk.input_dim:
        raise ValueError(f"state dim {X.shape[1]} != MDN input dim {model.trunk.input_dim}")
    if model.x_scaler is not None:
        X = model.x_scaler(X)
    logits, means, logvar = mdn_split(model, forward(model.trunk, X))
    return _softmax(logits), means, np.exp(logvar)


def mdn_nll_and_grads(model: MDNModel, X: np.ndarray, Y: np.ndarray):
    """Mean negative log-likelihood of ``Y`` under the mixture, with trunk gradients."""
    n = len(X)
    cache = forward_cache(model.trunk, X)
    logits, means, logvar = mdn_split(model, cache.out)
    var = np.exp(logvar)
    diff = Y[:, None, :] - means
    log_n = -0.5 * np.sum(np.log(2 * np.pi) + logvar + diff ** 2 / var, axis=2)
    joint = logits + log_n
    jmax = joint.max(axis=1, keepdims=True)
    lse_joint = jmax[:, 0] + np.log(np.exp(joint - jmax).sum(axis=1))
    lmax = logits.max(axis=1, keepdims=True)
    lse_logits = lmax[:, 0] + np.log(np.exp(logits - lmax).sum(axis=1))
    nll = float(np.mean(lse_logits - lse_joint))

    resp = np.exp(joint - lse_joint[:, None])
    g_logits = _softmax(logits) - resp
    g_means = -resp[:, :, None] * diff / var
    g_logvar = resp[:, :, None] * 0.5 * (1.0 - diff ** 2 / var)
    up = np.concatenate([g_logits, g_means.reshape(n, -1), g_logvar.reshape(n, -1)], axis=1) / n
    grads, _ = backward(model.trunk, X, up, cache=cache)
    return nll, grads


def train_mdn(states, actions, cfg: LeverageConfig | None = None) -> MDNModel:
    cfg = cfg or LeverageConfig()
    X_raw = np.atleast_2d(np.asarray(states, dtype=float))
    Y_raw = np.atleast_2d(np.asarray(actions, dtype=float))
    if len(X_raw) == 0:
        raise InsufficientDataError("no expert pairs for the MDN")
    rng = np.random.default_rng(cfg.seed)
    xs, ys = Standardizer.fit(X_raw, cfg.std_floor), Standardizer.fit(Y_raw, cfg.std_floor)
    X, Y = xs(X_raw), ys(Y_raw)
    K, Da = cfg.n_components, Y.shape[1]
    trunk = mlp(X.shape[1], K * (1 + 2 * Da), rng, cfg.hidden, out_scale=0.1)
    # spread the component means so they do not start identical
    trunk.biases[-1][K:K + K * Da] = rng.normal(0.0, 1.0, K * Da)
    model = MDNModel(trunk, K, Da, xs, ys)
    opt = Adam(trunk, cfg.lr)
    model.history.append(mdn_nll_and_grads(model, X, Y)[0])
    for _ in range(cfg.epochs):
        order = rng.permutation(len(X))
        for i in range(0, len(X), cfg.batch_size):
            b = order[i:i + cfg.batch_size]
            _, g = mdn_nll_and_grads(model, X[b], Y[b])
            opt.step(model.trunk, g)
        model.history.append(mdn_nll_and_grads(model, X, Y)[0])
    return model


def mixture_uncertainty(weights, means, variances) -> np.ndarray:
    """Aleatoric ``sum_k w_k var_k`` plus epistemic ``sum_k w_k (mu_k - mu_bar)^2``, summed over action dims.

    Accepts a single mixture (``(K,)``, ``(K, Da)``, ``(K, Da)``) or a batch with a
    leading axis.
    """
    w = np.asarray(weights, dtype=float)
    mu = np.asarray(means, dtype=float)
    var = np.asarray(variances, dtype=float)
    if mu.ndim == w.ndim:
        mu, var = mu[..., None], var[..., None]
    mu_bar = np.sum(w[..., None] * mu, axis=-2, keepdims=True)
    aleatoric = np.sum(w[..., None] * var, axis=-2)
    epistemic = np.sum(w[..., None] * (mu - mu_bar) ** 2, axis=-2)
    return np.sum(aleatoric + epistemic, axis=-1)


def mdn_uncertainty(model: MDNModel, state, action=None):
    """Total predictive uncertainty at ``state``. ``action`` is accepted but not used."""
    single = np.ndim(state) == 1
    w, mu, var = mdn_params(model, state)
    u = mixture_uncertainty(w, mu, var)
    return float(u[0]) if single else u


# --------------------------------------------------------------------------- GPR


@dataclass
class GPRModel:
    X: np.ndarray
    Y: np.ndarray
    signal_var: float
    length_scale: float
    noise_var: float
    chol: np.ndarray  # lower Cholesky factor of K + (noise + jitter) I
    jitter: float = 0.0
    x_scaler: Standardizer | None = None

    def __post_init__(self):
        if self.noise_var <= 0:
            raise ValueError("noise variance must be > 0")


def se_kernel(A, B, signal_var: float, length_scale: float) -> np.ndarray:
    return signal_var * np.exp(-0.5 * cdist(A, B, "sqeuclidean") / length_scale ** 2)


def fit_gpr(X, Y, signal_var: float = 1.0, length_scale: float = 1.0, noise_var: float = 1e-2,
            jitter: float = 1e-6, max_retries: int = 6, x_scaler: Standardizer | None = None) -> GPRModel:
    """Exact GP posterior with a squared-exponential kernel; inputs used as given."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.asarray(Y, dtype=float).reshape(len(X), -1)
    if noise_var <= 0:
        raise ValueError("noise variance must be > 0")
    K = se_kernel(X, X, signal_var, length_scale)
    # jitter only enters after a failed factorization: 0, jitter, 10 * jitter, ...
    for j in [0.0] + [max(jitter, 1e-12) * 10 ** k for k in range(max_retries)]:
        try:
            chol = linalg.cholesky(K + (noise_var + j) * np.eye(len(X)), lower=True)
            return GPRModel(X, Y, signal_var, length_scale, noise_var, chol, j, x_scaler)
        except linalg.LinAlgError:
            continue
    raise NumericalError("covariance not positive-definite after jitter retries")


def gpr_std(model: GPRModel, state):
    """Predictive standard deviation of the latent function (observation noise excluded)."""
    single = np.ndim(state) == 1
    Q = np.atleast_2d(np.asarray(state, dtype=float))
    if Q.shape[1] != model.X.shape[1]:
        raise ValueError(f"state dim {Q.shape[1]} != GP input dim {model.X.shape[1]}")
    if model.x_scaler is not None:
        Q = model.x_scaler(Q)
    Ks = se_kernel(model.X, Q, model.signal_var, model.length_scale)
    v = linalg.solve_triangular(model.chol, Ks, lower=True)
    var = np.maximum(model.signal_var - np.sum(v * v, axis=0), 0.0)
    sd = np.sqrt(var)
    return float(sd[0]) if single else sd


gpr_uncertainty = gpr_std


def train_gpr(states, actions, cfg: LeverageConfig | None = None) -> GPRModel:
    cfg = cfg or LeverageConfig()
    X_raw = np.atleast_2d(np.asarray(states, dtype=float))
    Y_raw = np.atleast_2d(np.asarray(actions, dtype=float))
    if len(X_raw) == 0:
        raise InsufficientDataError("no expert pairs for the GP")
    rng = np.random.default_rng(cfg.seed)
    if len(X_raw) > cfg.gpr_max_points:
        idx = np.sort(rng.choice(len(X_raw), cfg.gpr_max_points, replace=False))
        X_raw, Y_raw = X_raw[idx], Y_raw[idx]
    xs = Standardizer.fit(X_raw, cfg.std_floor)
    X, Y = xs(X_raw), Standardizer.fit(Y_raw, cfg.std_floor)(Y_raw)
    ell = cfg.gpr_length_scale
    if ell is None:
        d = pdist(X) if len(X) > 1 else np.ones(1)
        ell = float(np.median(d[d > 0])) if np.any(d > 0) else 1.0
    return fit_gpr(X, Y, cfg.gpr_signal_var, ell, cfg.gpr_noise_var, cfg.gpr_jitter, x_scaler=xs)


# --------------------------------------------------------------------------- pipeline


def score_unlabeled(method: str, expert: DemoSet, unlabeled: DemoSet,
                    cfg: LeverageConfig | None = None) -> np.ndarray:
    """Raw per-state scores (error or uncertainty) for every unlabeled state, in pool order."""
    cfg = cfg or LeverageConfig()
    if method not in METHODS:
        raise ValueError(f"unknown leverage method {method!r}; choose from {METHODS}")
    experts = [t for t in expert.trajectories if t.label == EXPERT] or expert.trajectories
    if not experts:
        raise InsufficientDataError("expert set is empty")
    pool = unlabeled.trajectories
    if method in ("vae", "windowvae"):
        mode = "plain" if method == "vae" else "windowed"
        w = 1 if mode == "plain" else cfg.window
        model = train_vae(vae_inputs(experts, mode, w), cfg, mode, w)
        return reconstruction_errors(model, vae_inputs(pool, mode, w))
    S, A = np.concatenate([t.states for t in experts]), np.concatenate([t.actions for t in experts])
    Q = np.concatenate([t.states for t in pool])
    if method == "mdn":
        return mdn_uncertainty(train_mdn(S, A, cfg), Q)
    return gpr_std(train_gpr(S, A, cfg), Q)


def leverage_unlabeled(method: str, expert: DemoSet, unlabeled: DemoSet,
                       cfg: LeverageConfig | None = None) -> np.ndarray:
    """Leverage per unlabeled state, normalized over the whole pool at once."""
    return normalize_to_leverage(score_unlabeled(method, expert, unlabeled, cfg))


def build_bank(expert: DemoSet, unlabeled: DemoSet, unlabeled_leverage, alpha: float = 1.0) -> LeverageBank:
    """Union of expert states (leverage exactly 1) and scored unlabeled states."""
    Se, _ = expert.arrays()
    Su, _ = unlabeled.arrays()
    lev = np.asarray(unlabeled_leverage, dtype=float)
    if len(lev) != len(Su):
        raise ValueError(f"{len(lev)} leverages for {len(Su)} unlabeled states")
    return LeverageBank(np.concatenate([Se, Su]), np.concatenate([np.ones(len(Se)), lev]), alpha)


def evaluate_unlabeled(method: str, expert: DemoSet, unlabeled: DemoSet,
                       cfg: LeverageConfig | None = None) -> LeverageBank:
    cfg = cfg or LeverageConfig()
    return build_bank(expert, unlabeled, leverage_unlabeled(method, expert, unlabeled, cfg), cfg.alpha)
