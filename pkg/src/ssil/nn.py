"""Dense feed-forward networks with hand-written reverse- and forward-mode derivatives.

Weights are stored as ``(out, in)`` matrices so a layer computes ``x @ W.T + b``
on a batch of row vectors. Every learned component in the package (policy mean,
value functions, discriminator, VAE, MDN) is a :class:`DenseNet`.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

ACTIVATIONS = ("tanh", "relu", "identity", "sigmoid")
CHECKPOINT_FORMAT = "ssil-net"
CHECKPOINT_VERSION = 1


class ShapeError(ValueError):
    pass


class PoisonedGradientError(FloatingPointError):
    """Raised when an optimizer is handed NaN/Inf gradients."""


def _act(name: str, z: np.ndarray) -> np.ndarray:
    if name == "tanh":
        return np.tanh(z)
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "identity":
        return z
    if name == "sigmoid":
        # split by sign so neither branch overflows
        out = np.empty_like(z)
        pos = z >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ez = np.exp(z[~pos])
        out[~pos] = ez / (1.0 + ez)
        return out
    raise ValueError(f"unknown activation {name!r}")


def _act_deriv(name: str, z: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Derivative of the activation, given pre-activation z and output y."""
    if name == "tanh":
        return 1.0 - y * y
    if name == "relu":
        return (z > 0).astype(z.dtype)
    if name == "identity":
        return np.ones_like(z)
    if name == "sigmoid":
        return y * (1.0 - y)
    raise ValueError(f"unknown activation {name!r}")


@dataclass
class DenseNet:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activations: list[str]

    def __post_init__(self):
        if not (len(self.weights) == len(self.biases) == len(self.activations)) or not self.weights:
            raise ShapeError("need one weight, bias and activation per layer")
        for k, (W, b, a) in enumerate(zip(self.weights, self.biases, self.activations)):
            if a not in ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}")
            if W.ndim != 2 or b.shape != (W.shape[0],):
                raise ShapeError(f"layer {k}: weight {W.shape} / bias {b.shape} mismatch")
            if k and W.shape[1] != self.weights[k - 1].shape[0]:
                raise ShapeError(f"layer {k} input {W.shape[1]} != previous output {self.weights[k - 1].shape[0]}")

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def sizes(self) -> list[int]:
        return [self.input_dim] + [W.shape[0] for W in self.weights]

    def params(self) -> list[np.ndarray]:
        """Parameters in canonical order ``[W0, b0, W1, b1, ...]`` (views, not copies)."""
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    def set_params(self, params: list[np.ndarray]) -> None:
        self.weights = [np.array(p, dtype=float) for p in params[0::2]]
        self.biases = [np.array(p, dtype=float) for p in params[1::2]]

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params())

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params()])

    def set_flat(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=float)
        if flat.shape != (self.n_params,):
            raise ShapeError(f"flat vector has {flat.size} entries, net has {self.n_params}")
        params, i = [], 0
        for p in self.params():
            params.append(flat[i:i + p.size].reshape(p.shape).copy())
            i += p.size
        self.set_params(params)

    def copy(self) -> "DenseNet":
        return DenseNet([W.copy() for W in self.weights], [b.copy() for b in self.biases],
                        list(self.activations))

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.params())

    def __call__(self, x):
        return forward(self, x)


def init_net(sizes, activations, rng: np.random.Generator, out_scale: float = 1.0) -> DenseNet:
    """Glorot-uniform initialization; the last layer is scaled by ``out_scale``."""
    if isinstance(activations, str):
        activations = [activations] * (len(sizes) - 1)
    if len(activations) != len(sizes) - 1:
        raise ShapeError("need len(sizes) - 1 activations")
    weights, biases = [], []
    for k, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        lim = np.sqrt(6.0 / (n_in + n_out))
        W = rng.uniform(-lim, lim, size=(n_out, n_in))
        if k == len(sizes) - 2:
            W = W * out_scale
        weights.append(W)
        biases.append(np.zeros(n_out))
    return DenseNet(weights, biases, list(activations))


def mlp(in_dim: int, out_dim: int, rng: np.random.Generator, hidden=(64, 64),
        hidden_act: str = "tanh", out_act: str = "identity", out_scale: float = 1.0) -> DenseNet:
    sizes = [in_dim, *hidden, out_dim]
    acts = [hidden_act] * len(hidden) + [out_act]
    return init_net(sizes, acts, rng, out_scale=out_scale)


@dataclass
class ForwardCache:
    inputs: list[np.ndarray]   # input to each layer, batch-major
    pre: list[np.ndarray]      # pre-activations
    outputs: list[np.ndarray]  # post-activations
    squeeze: bool = False

    @property
    def out(self) -> np.ndarray:
        y = self.outputs[-1]
        return y[0] if self.squeeze else y


def _as_batch(net: DenseNet, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 1
    X = x[None, :] if squeeze else x
    if X.ndim != 2 or X.shape[1] != net.input_dim:
        raise ShapeError(f"expected input dim {net.input_dim}, got shape {x.shape}")
    return X, squeeze


def forward_cache(net: DenseNet, x) -> ForwardCache:
    X, squeeze = _as_batch(net, x)
    inputs, pre, outs = [], [], []
    h = X
    for W, b, a in zip(net.weights, net.biases, net.activations):
        inputs.append(h)
        z = h @ W.T + b
        h = _act(a, z)
        pre.append(z)
        outs.append(h)
    return ForwardCache(inputs, pre, outs, squeeze)


def forward(net: DenseNet, x) -> np.ndarray:
    """Evaluate the network on a vector or a batch of row vectors."""
    return forward_cache(net, x).out


def backward(net: DenseNet, x, upstream_grad, cache: ForwardCache | None = None,
             through_output_activation: bool = True) -> tuple[list[np.ndarray], np.ndarray]:
    """Reverse-mode gradients of ``sum(upstream_grad * net(x))``.

    Returns ``(param_grads, input_grad)`` with ``param_grads`` in the same order
    as :meth:`DenseNet.params`. Batched inputs accumulate (sum) over the batch.
    With ``through_output_activation=False`` the upstream gradient is taken to be
    with respect to the last pre-activation (useful for stable log-sigmoid losses).
    """
    if cache is None:
        cache = forward_cache(net, x)
    g = np.asarray(upstream_grad, dtype=float)
    if cache.squeeze:
        g = g[None, :] if g.ndim == 1 else g
    if g.shape != cache.outputs[-1].shape:
        raise ShapeError(f"upstream grad shape {np.shape(upstream_grad)} != output shape {cache.out.shape}")
    n = len(net.weights)
    grads: list[np.ndarray] = [None] * (2 * n)  # type: ignore[list-item]
    for k in range(n - 1, -1, -1):
        if k < n - 1 or through_output_activation:
            g = g * _act_deriv(net.activations[k], cache.pre[k], cache.outputs[k])
        grads[2 * k] = g.T @ cache.inputs[k]
        grads[2 * k + 1] = g.sum(axis=0)
        g = g @ net.weights[k]
    return grads, (g[0] if cache.squeeze else g)


def jvp(net: DenseNet, x, tangents: list[np.ndarray], cache: ForwardCache | None = None) -> np.ndarray:
    """Forward-mode directional derivative of the output w.r.t. parameters.

    ``tangents`` follows :meth:`DenseNet.params` ordering. Returns d(out) with the
    output's shape.
    """
    if cache is None:
        cache = forward_cache(net, x)
    dh = np.zeros_like(cache.inputs[0])
    for k, (W, a) in enumerate(zip(net.weights, net.activations)):
        dW, db = tangents[2 * k], tangents[2 * k + 1]
        dz = dh @ W.T + cache.inputs[k] @ dW.T + db
        dh = dz * _act_deriv(a, cache.pre[k], cache.outputs[k])
    return dh[0] if cache.squeeze else dh


def unflatten_like(net: DenseNet, flat: np.ndarray) -> list[np.ndarray]:
    out, i = [], 0
    for p in net.params():
        out.append(flat[i:i + p.size].reshape(p.shape))
        i += p.size
    return out


def flatten(arrays: list[np.ndarray]) -> np.ndarray:
    return np.concatenate([np.ravel(a) for a in arrays])


# --------------------------------------------------------------------------- optimizer


@dataclass
class OptimizerState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)
    step: int = 0


def adam_state(params: list[np.ndarray], lr: float = 1e-3, beta1: float = 0.9,
               beta2: float = 0.999, eps: float = 1e-8) -> OptimizerState:
    return OptimizerState(lr, beta1, beta2, eps, [np.zeros_like(p) for p in params],
                          [np.zeros_like(p) for p in params], 0)


def optimizer_step(state: OptimizerState, params: list[np.ndarray], grads: list[np.ndarray]
                   ) -> tuple[list[np.ndarray], OptimizerState]:
    """One Adam descent step. Inputs are not mutated."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeError("params, grads and optimizer moments must align")
    for p, g, m in zip(params, grads, state.m):
        if p.shape != g.shape or p.shape != m.shape:
            raise ShapeError(f"shape mismatch {p.shape} / {g.shape} / {m.shape}")
        if not np.all(np.isfinite(g)):
            raise PoisonedGradientError("non-finite gradient; step refused")
    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    new_m = [b1 * m + (1 - b1) * g for m, g in zip(state.m, grads)]
    new_v = [b2 * v + (1 - b2) * g * g for v, g in zip(state.v, grads)]
    c1, c2 = 1 - b1 ** t, 1 - b2 ** t
    new_p = [p - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
             for p, m, v in zip(params, new_m, new_v)]
    return new_p, OptimizerState(state.lr, b1, b2, state.eps, new_m, new_v, t)


class Adam:
    """Mutable convenience wrapper that owns an :class:`OptimizerState` for one net."""

    def __init__(self, net: DenseNet, lr: float = 1e-3, **kw):
        self.state = adam_state(net.params(), lr=lr, **kw)

    def step(self, net: DenseNet, grads: list[np.ndarray]) -> None:
        params, self.state = optimizer_step(self.state, net.params(), grads)
        net.set_params(params)


def sample_gaussian(mean, log_std, noise) -> np.ndarray:
    mean, log_std, noise = (np.asarray(a, dtype=float) for a in (mean, log_std, noise))
    if mean.shape[-1] != log_std.shape[-1] or mean.shape != noise.shape:
        raise ShapeError(f"length mismatch: mean {mean.shape}, log_std {log_std.shape}, noise {noise.shape}")
    return mean + np.exp(log_std) * noise


# --------------------------------------------------------------------------- checkpoints


def net_to_dict(net: DenseNet) -> dict:
    return {
        "arch": {"sizes": net.sizes, "activations": list(net.activations)},
        "layers": [{"shape": list(W.shape), "weight": W.ravel().tolist(), "bias": b.tolist()}
                   for W, b in zip(net.weights, net.biases)],
    }


def net_from_dict(d: dict) -> DenseNet:
    weights, biases = [], []
    for layer in d["layers"]:
        weights.append(np.array(layer["weight"], dtype=float).reshape(layer["shape"]))
        biases.append(np.array(layer["bias"], dtype=float))
    net = DenseNet(weights, biases, list(d["arch"]["activations"]))
    if net.sizes != list(d["arch"]["sizes"]):
        raise ShapeError("layer shapes disagree with the arch descriptor")
    return net


def save_checkpoint(path, nets: dict[str, DenseNet], extras: dict | None = None) -> None:
    """Write ``{format, version, nets, extras}`` as JSON.

    Weights are flattened row-major; Python's float repr round-trips exactly.
    ``extras`` holds plain arrays/scalars (e.g. a policy log-std).
    """
    extras = {k: (np.asarray(v).tolist() if isinstance(v, np.ndarray) else v)
              for k, v in (extras or {}).items()}
    doc = {"format": CHECKPOINT_FORMAT, "version": CHECKPOINT_VERSION,
           "nets": {k: net_to_dict(n) for k, n in nets.items()}, "extras": extras}
    Path(path).write_text(json.dumps(doc))


def load_checkpoint(path) -> tuple[dict[str, DenseNet], dict]:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != CHECKPOINT_FORMAT or doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: not a {CHECKPOINT_FORMAT} v{CHECKPOINT_VERSION} checkpoint")
    return {k: net_from_dict(v) for k, v in doc["nets"].items()}, doc.get("extras", {})
