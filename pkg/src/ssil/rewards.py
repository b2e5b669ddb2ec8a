"""Kernel shaping rewards: binary CoR, leverage-weighted LCoR, and the policy reward.

Both kernels are ``k(d) = (1 + d / alpha) ** (-(alpha + 1) / 2)``. CoR feeds it the
root-mean squared Euclidean distance to a whole state set; LCoR feeds it the
per-state L1 distance and averages leverages under those weights.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

DISC_CLAMP = 1e-6
_CHUNK = 512


def check_alpha(alpha: float) -> float:
    # alpha <= 0 leaves 1 + d/alpha non-positive for large d, so the kernel is undefined
    alpha = float(alpha)
    if not np.isfinite(alpha) or alpha <= 0.0:
        raise ValueError(f"kernel sharpness alpha must be finite and > 0, got {alpha}")
    return alpha


def log_kernel(d, alpha: float) -> np.ndarray:
    return -(alpha + 1.0) / 2.0 * np.log1p(np.asarray(d, dtype=float) / alpha)


def kernel(d, alpha: float) -> np.ndarray:
    return (1.0 + np.asarray(d, dtype=float) / alpha) ** (-(alpha + 1.0) / 2.0)


@dataclass
class LeverageBank:
    states: np.ndarray     # s_T, (N, Ds)
    leverages: np.ndarray  # l_T, (N,)
    alpha: float = 1.0

    def __post_init__(self):
        self.states = np.atleast_2d(np.asarray(self.states, dtype=float))
        self.leverages = np.asarray(self.leverages, dtype=float).ravel()
        if len(self.states) == 0:
            raise ValueError("leverage bank is empty")
        if len(self.states) != len(self.leverages):
            raise ValueError(f"{len(self.states)} states but {len(self.leverages)} leverages")
        if np.any(self.leverages < 0) or np.any(self.leverages > 1):
            raise ValueError("leverages must lie in [0, 1]")
        self.alpha = check_alpha(self.alpha)

    def __len__(self) -> int:
        return len(self.leverages)

    def subsample(self, cap: int | None, rng: np.random.Generator) -> "LeverageBank":
        if cap is None or cap >= len(self):
            return self
        idx = np.sort(rng.choice(len(self), size=cap, replace=False))
        return LeverageBank(self.states[idx], self.leverages[idx], self.alpha)


@dataclass
class BinaryBank:
    expert_states: np.ndarray    # s_E
    negative_states: np.ndarray  # s_N
    alpha: float = 1.0

    def __post_init__(self):
        self.expert_states = np.atleast_2d(np.asarray(self.expert_states, dtype=float))
        self.negative_states = np.atleast_2d(np.asarray(self.negative_states, dtype=float))
        if len(self.expert_states) == 0 or len(self.negative_states) == 0:
            raise ValueError("both state sets must be non-empty")
        if self.expert_states.shape[1] != self.negative_states.shape[1]:
            raise ValueError("expert and negative state dims differ")
        self.alpha = check_alpha(self.alpha)

    def swapped(self) -> "BinaryBank":
        return BinaryBank(self.negative_states, self.expert_states, self.alpha)


def _queries(s, dim: int) -> tuple[np.ndarray, bool]:
    s = np.asarray(s, dtype=float)
    single = s.ndim == 1
    S = s[None, :] if single else s
    if S.ndim != 2 or S.shape[1] != dim:
        raise ValueError(f"query dim {s.shape} does not match bank dim {dim}")
    return S, single


def rms_distance(S: np.ndarray, X: np.ndarray) -> np.ndarray:
    """``sqrt(mean_x ||s - x||_2^2)`` for each row of ``S``."""
    out = np.empty(len(S))
    for i in range(0, len(S), _CHUNK):
        out[i:i + _CHUNK] = np.sqrt(cdist(S[i:i + _CHUNK], X, "sqeuclidean").mean(axis=1))
    return out


def cor(s, bank: BinaryBank):
    """Constraint reward in (0, 1); accepts one state or a batch of states."""
    S, single = _queries(s, bank.expert_states.shape[1])
    le = log_kernel(rms_distance(S, bank.expert_states), bank.alpha)
    ln = log_kernel(rms_distance(S, bank.negative_states), bank.alpha)
    # k_E / (k_E + k_N) written as a logistic of the log-kernel gap
    out = 1.0 / (1.0 + np.exp(ln - le))
    return float(out[0]) if single else out


def lcor(s, bank: LeverageBank):
    """Leverage constraint reward in [min l_T, max l_T]; one state or a batch."""
    S, single = _queries(s, bank.states.shape[1])
    out = np.empty(len(S))
    for i in range(0, len(S), _CHUNK):
        logk = log_kernel(cdist(S[i:i + _CHUNK], bank.states, "cityblock"), bank.alpha)
        w = np.exp(logk - logk.max(axis=1, keepdims=True))
        out[i:i + _CHUNK] = (w @ bank.leverages) / w.sum(axis=1)
    out = np.clip(out, bank.leverages.min(), bank.leverages.max())
    return float(out[0]) if single else out


def clamp_disc(d):
    return np.clip(d, DISC_CLAMP, 1.0 - DISC_CLAMP)


def policy_reward(disc_output, lcor_value, eta: float):
    """``-log D(s, a) + eta * LCoR(s)`` with D clamped away from {0, 1}."""
    if eta < 0:
        raise ValueError("eta must be >= 0")
    r = -np.log(clamp_disc(np.asarray(disc_output, dtype=float))) + eta * np.asarray(lcor_value, dtype=float)
    return float(r) if np.ndim(r) == 0 else r
