"""Demonstration containers, state windowing and the ``.traj`` / ``.lev`` text formats.

``.traj`` layout (UTF-8, one record per line)::

    #ssil-traj v1 state_dim=<Ds> action_dim=<Da>
    #trajectory label=<expert|unlabeled> source=<tag> terminated=<0|1>
    <s_1> ... <s_Ds> | <a_1> ... <a_Da>
    ...

Floats are written with ``repr`` so a save/load cycle is bit-exact. Source tags
must not contain whitespace.

``.lev`` layout::

    #ssil-lev v1
    <trajectory index> <time index> <leverage>
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

EXPERT = "expert"
UNLABELED = "unlabeled"
LABELS = (EXPERT, UNLABELED)

TRAJ_HEADER = "#ssil-traj v1"
LEV_HEADER = "#ssil-lev v1"


class DemoFormatError(ValueError):
    pass


class EmptyDemoSetError(ValueError):
    pass


class DimensionError(ValueError):
    pass


class InsufficientLengthError(ValueError):
    pass


@dataclass(frozen=True)
class StateActionPair:
    state: np.ndarray
    action: np.ndarray


@dataclass
class Trajectory:
    states: np.ndarray   # (T, Ds)
    actions: np.ndarray  # (T, Da)
    label: str = UNLABELED
    source: str = "unknown"
    terminated: bool = False

    def __post_init__(self):
        self.states = np.atleast_2d(np.asarray(self.states, dtype=float))
        self.actions = np.atleast_2d(np.asarray(self.actions, dtype=float))
        if len(self.states) == 0:
            raise InsufficientLengthError("trajectory must be non-empty")
        if len(self.states) != len(self.actions):
            raise DimensionError(f"{len(self.states)} states but {len(self.actions)} actions")
        if self.label not in LABELS:
            raise ValueError(f"label must be one of {LABELS}, got {self.label!r}")
        if not self.source or any(c.isspace() for c in self.source):
            raise ValueError(f"source tag must be non-empty without whitespace: {self.source!r}")

    def __len__(self) -> int:
        return len(self.states)

    @property
    def state_dim(self) -> int:
        return self.states.shape[1]

    @property
    def action_dim(self) -> int:
        return self.actions.shape[1]

    def pairs(self) -> list[StateActionPair]:
        return [StateActionPair(s, a) for s, a in zip(self.states, self.actions)]

    def head(self, n: int) -> "Trajectory":
        """First ``n`` pairs; the copy is marked non-terminated if it was cut short."""
        return Trajectory(self.states[:n], self.actions[:n], self.label, self.source,
                          self.terminated and n >= len(self))


@dataclass
class DemoSet:
    trajectories: list[Trajectory] = field(default_factory=list)
    state_dim: int = 0
    action_dim: int = 0

    def __post_init__(self):
        for k, tr in enumerate(self.trajectories):
            if tr.state_dim != self.state_dim or tr.action_dim != self.action_dim:
                raise DimensionError(
                    f"trajectory {k} has dims ({tr.state_dim}, {tr.action_dim}), "
                    f"set declares ({self.state_dim}, {self.action_dim})")

    def __len__(self) -> int:
        return len(self.trajectories)

    @property
    def n_pairs(self) -> int:
        return sum(len(t) for t in self.trajectories)

    def filter(self, label: str | None = None) -> "DemoSet":
        return DemoSet([t for t in self.trajectories if label is None or t.label == label],
                       self.state_dim, self.action_dim)

    def arrays(self, label: str | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Stacked ``(states, actions)`` over matching trajectories."""
        trs = [t for t in self.trajectories if label is None or t.label == label]
        if not trs:
            return np.zeros((0, self.state_dim)), np.zeros((0, self.action_dim))
        return (np.concatenate([t.states for t in trs]), np.concatenate([t.actions for t in trs]))

    def relabel(self, label: str) -> "DemoSet":
        return DemoSet([Trajectory(t.states, t.actions, label, t.source, t.terminated)
                        for t in self.trajectories], self.state_dim, self.action_dim)

    def take_pairs(self, n: int) -> "DemoSet":
        """Prefix of the set holding exactly ``n`` pairs (last trajectory truncated)."""
        out, left = [], n
        for t in self.trajectories:
            if left <= 0:
                break
            out.append(t if len(t) <= left else t.head(left))
            left -= len(out[-1])
        if left > 0:
            raise InsufficientLengthError(f"set holds {self.n_pairs} pairs, {n} requested")
        return DemoSet(out, self.state_dim, self.action_dim)

    @staticmethod
    def concat(sets: Iterable["DemoSet"]) -> "DemoSet":
        sets = list(sets)
        if not sets:
            return DemoSet()
        ds, da = sets[0].state_dim, sets[0].action_dim
        return DemoSet([t for s in sets for t in s.trajectories], ds, da)


@dataclass(frozen=True)
class LeveragedPair:
    state: np.ndarray
    action: np.ndarray
    leverage: float

    def __post_init__(self):
        if not 0.0 <= self.leverage <= 1.0:
            raise ValueError(f"leverage {self.leverage} outside [0, 1]")


# --------------------------------------------------------------------------- views


def window_states(traj: Trajectory, w: int) -> np.ndarray:
    """Concatenate ``w`` consecutive states: ``len(traj) - w + 1`` rows of dim ``w * Ds``."""
    if w < 1:
        raise ValueError("window length must be >= 1")
    T = len(traj)
    if T < w:
        raise InsufficientLengthError(f"trajectory of length {T} shorter than window {w}")
    return np.concatenate([traj.states[i:T - w + 1 + i] for i in range(w)], axis=1)


def pool_states(demos: DemoSet, label: str | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Flatten states of matching trajectories.

    Returns ``(states, provenance)`` where ``provenance[i] = (trajectory index, time index)``
    refers to positions in ``demos``.
    """
    states, prov = [], []
    for k, t in enumerate(demos.trajectories):
        if label is not None and t.label != label:
            continue
        states.append(t.states)
        prov.append(np.stack([np.full(len(t), k), np.arange(len(t))], axis=1))
    if not states:
        return np.zeros((0, demos.state_dim)), np.zeros((0, 2), dtype=int)
    return np.concatenate(states), np.concatenate(prov).astype(int)


# --------------------------------------------------------------------------- I/O


def _fmt(v: np.ndarray) -> str:
    return " ".join(repr(float(x)) for x in v)


def save_demos(demos: DemoSet, path) -> None:
    lines = [f"{TRAJ_HEADER} state_dim={demos.state_dim} action_dim={demos.action_dim}"]
    for t in demos.trajectories:
        lines.append(f"#trajectory label={t.label} source={t.source} terminated={int(t.terminated)}")
        lines += [f"{_fmt(s)} | {_fmt(a)}" for s, a in zip(t.states, t.actions)]
    Path(path).write_text("\n".join(lines) + "\n")


def _kv(tokens: list[str], lineno: int) -> dict[str, str]:
    out = {}
    for tok in tokens:
        if "=" not in tok:
            raise DemoFormatError(f"line {lineno}: expected key=value, got {tok!r}")
        k, v = tok.split("=", 1)
        out[k] = v
    return out


def load_demos(path) -> DemoSet:
    """Parse a ``.traj`` file, validating dims and rejecting non-finite values."""
    text = Path(path).read_text()
    lines = text.splitlines()
    if not any(ln.strip() for ln in lines):
        raise EmptyDemoSetError(f"{path}: empty file")
    head = lines[0].split()
    if " ".join(head[:2]) != TRAJ_HEADER:
        raise DemoFormatError(f"line 1: missing '{TRAJ_HEADER}' schema line")
    meta = _kv(head[2:], 1)
    try:
        ds, da = int(meta["state_dim"]), int(meta["action_dim"])
    except (KeyError, ValueError) as e:
        raise DemoFormatError(f"line 1: bad schema line ({e})") from None

    trajs: list[Trajectory] = []
    cur: dict | None = None

    def close():
        if cur is not None:
            if not cur["s"]:
                raise DemoFormatError(f"line {cur['line']}: trajectory without pairs")
            trajs.append(Trajectory(np.array(cur["s"]), np.array(cur["a"]), cur["label"],
                                    cur["source"], cur["terminated"]))

    for lineno, raw in enumerate(lines[1:], start=2):
        ln = raw.strip()
        if not ln:
            continue
        if ln.startswith("#trajectory"):
            close()
            kv = _kv(ln.split()[1:], lineno)
            try:
                cur = {"label": kv["label"], "source": kv["source"],
                       "terminated": bool(int(kv.get("terminated", "0"))),
                       "s": [], "a": [], "line": lineno}
            except (KeyError, ValueError) as e:
                raise DemoFormatError(f"line {lineno}: bad trajectory header ({e})") from None
            if cur["label"] not in LABELS:
                raise DemoFormatError(f"line {lineno}: unknown label {cur['label']!r}")
            continue
        if ln.startswith("#"):
            continue
        if cur is None:
            raise DemoFormatError(f"line {lineno}: pair before any '#trajectory' header")
        if ln.count("|") != 1:
            raise DemoFormatError(f"line {lineno}: expected '<state> | <action>'")
        left, right = ln.split("|")
        try:
            s = [float(x) for x in left.split()]
            a = [float(x) for x in right.split()]
        except ValueError as e:
            raise DemoFormatError(f"line {lineno}: {e}") from None
        if len(s) != ds or len(a) != da:
            raise DimensionError(f"line {lineno}: got dims ({len(s)}, {len(a)}), schema declares ({ds}, {da})")
        if not (np.all(np.isfinite(s)) and np.all(np.isfinite(a))):
            raise DemoFormatError(f"line {lineno}: non-finite value in row")
        cur["s"].append(s)
        cur["a"].append(a)
    close()
    if not trajs:
        raise EmptyDemoSetError(f"{path}: no trajectories")
    return DemoSet(trajs, ds, da)


def save_leverage(path, provenance: np.ndarray, leverages: np.ndarray) -> None:
    provenance = np.asarray(provenance, dtype=int)
    leverages = np.asarray(leverages, dtype=float)
    if len(provenance) != len(leverages):
        raise DimensionError("provenance and leverage lengths differ")
    lines = [LEV_HEADER] + [f"{i} {t} {float(l)!r}" for (i, t), l in zip(provenance, leverages)]
    Path(path).write_text("\n".join(lines) + "\n")


def load_leverage(path) -> tuple[np.ndarray, np.ndarray]:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != LEV_HEADER:
        raise DemoFormatError(f"line 1: missing '{LEV_HEADER}' schema line")
    prov, levs = [], []
    for lineno, raw in enumerate(lines[1:], start=2):
        ln = raw.strip()
        if not ln or ln.startswith("#"):
            continue
        parts = ln.split()
        if len(parts) != 3:
            raise DemoFormatError(f"line {lineno}: expected '<traj> <t> <leverage>'")
        try:
            i, t, l = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError as e:
            raise DemoFormatError(f"line {lineno}: {e}") from None
        if not 0.0 <= l <= 1.0:
            raise DemoFormatError(f"line {lineno}: leverage {l} outside [0, 1]")
        prov.append((i, t))
        levs.append(l)
    return np.array(prov, dtype=int).reshape(-1, 2), np.array(levs)
