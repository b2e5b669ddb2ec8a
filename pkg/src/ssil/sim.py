"""Deterministic 2D kinematic-car track environment with rangefinders and scripted drivers.

Geometry conventions: the centerline is a closed polyline driven counter-clockwise
in its point order; the signed lateral offset is positive to the left of the
direction of travel. Walls are the centerline shifted by +-half_width along the
vertex normals.
"""
from __future__ import annotations

import functools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np
from scipy.interpolate import CubicSpline

from .data import EXPERT, DemoSet, Trajectory, save_demos

PRESETS = ("torcs-like", "rc-like")


def wrap_angle(a):
    return (np.asarray(a) + np.pi) % (2 * np.pi) - np.pi


def _wrap(a: float) -> float:
    return (a + math.pi) % (2 * math.pi) - math.pi


def _cross(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def segments_intersect(a1, b1, a2, b2) -> bool:
    """Proper intersection test between two 2D segments."""
    d1 = _cross(b2 - a2, a1 - a2)
    d2 = _cross(b2 - a2, b1 - a2)
    d3 = _cross(b1 - a1, a2 - a1)
    d4 = _cross(b1 - a1, b2 - a1)
    return (d1 * d2 < 0) and (d3 * d4 < 0)


@numba.njit(cache=True)
def _project_kernel(px, py, ax, ay, dx, dy, seg_len):
    best, bi, bt, bside = np.inf, 0, 0.0, 0.0
    for k in range(ax.shape[0]):
        rx, ry = px - ax[k], py - ay[k]
        t = rx * dx[k] + ry * dy[k]
        t = min(max(t, 0.0), seg_len[k])
        qx, qy = px - (ax[k] + dx[k] * t), py - (ay[k] + dy[k] * t)
        d2 = qx * qx + qy * qy
        if d2 < best:
            best, bi, bt, bside = d2, k, t, dx[k] * qy - dy[k] * qx
    off = np.sqrt(best)
    return bi, bt, off if bside >= 0 else -off


@dataclass
class TrackSpec:
    centerline: np.ndarray  # (M, 2), closed implicitly (last point connects to first)
    half_width: float
    laps: int = 1
    max_steps: int = 600
    name: str = "custom"
    # derived
    seg_a: np.ndarray = field(init=False, repr=False)
    seg_b: np.ndarray = field(init=False, repr=False)
    seg_len: np.ndarray = field(init=False, repr=False)
    seg_dir: np.ndarray = field(init=False, repr=False)
    seg_angle: np.ndarray = field(init=False, repr=False)
    cum: np.ndarray = field(init=False, repr=False)
    perimeter: float = field(init=False)
    left_wall: np.ndarray = field(init=False, repr=False)
    right_wall: np.ndarray = field(init=False, repr=False)
    wall_a: np.ndarray = field(init=False, repr=False)
    wall_b: np.ndarray = field(init=False, repr=False)
    _ax: np.ndarray = field(init=False, repr=False)
    _ay: np.ndarray = field(init=False, repr=False)
    _dx: np.ndarray = field(init=False, repr=False)
    _dy: np.ndarray = field(init=False, repr=False)
    _walls: tuple = field(init=False, repr=False)

    def __post_init__(self):
        c = np.asarray(self.centerline, dtype=float)
        if c.ndim != 2 or c.shape[1] != 2 or len(c) < 3:
            raise ValueError("centerline must be at least 3 points of (x, y)")
        if np.allclose(c[0], c[-1]):
            c = c[:-1]
        if self.half_width <= 0:
            raise ValueError("half_width must be > 0")
        if self.laps < 1 or self.max_steps < 1:
            raise ValueError("laps and max_steps must be >= 1")
        self.centerline = c
        self.seg_a = c
        self.seg_b = np.roll(c, -1, axis=0)
        d = self.seg_b - self.seg_a
        self.seg_len = np.linalg.norm(d, axis=1)
        if np.any(self.seg_len <= 0):
            raise ValueError("centerline has repeated points")
        self.seg_dir = d / self.seg_len[:, None]
        self.seg_angle = np.arctan2(d[:, 1], d[:, 0])
        self.cum = np.concatenate([[0.0], np.cumsum(self.seg_len)[:-1]])
        self.perimeter = float(self.seg_len.sum())
        self._check_simple()
        self._ax, self._ay = c[:, 0].copy(), c[:, 1].copy()
        self._dx, self._dy = self.seg_dir[:, 0].copy(), self.seg_dir[:, 1].copy()
        # vertex normals: average of adjacent segment normals, scaled so the
        # offset stays at half_width from both adjacent segments
        n_seg = np.stack([-self.seg_dir[:, 1], self.seg_dir[:, 0]], axis=1)
        n_prev = np.roll(n_seg, 1, axis=0)
        n_avg = n_seg + n_prev
        n_avg /= np.linalg.norm(n_avg, axis=1, keepdims=True)
        cos_half = np.sum(n_avg * n_seg, axis=1)
        offs = n_avg * (self.half_width / cos_half)[:, None]
        self.left_wall = c + offs
        self.right_wall = c - offs
        for wall, name in ((self.left_wall, "left"), (self.right_wall, "right")):
            wa, wb = wall, np.roll(wall, -1, axis=0)
            if np.any(np.sum((wb - wa) * d, axis=1) <= 0):
                raise ValueError(f"{name} wall folds over itself: curvature too tight for half_width")
        self.wall_a = np.concatenate([self.left_wall, self.right_wall])
        self.wall_b = np.concatenate([np.roll(self.left_wall, -1, axis=0), np.roll(self.right_wall, -1, axis=0)])
        we = self.wall_b - self.wall_a
        self._walls = (self.wall_a[:, 0].copy(), self.wall_a[:, 1].copy(), we[:, 0].copy(), we[:, 1].copy())

    def _check_simple(self):
        a, b = self.seg_a, self.seg_b
        m = len(a)
        for i in range(m):
            # skip self and both neighbours (they share an endpoint)
            js = np.array([j for j in range(i + 2, m) if not (i == 0 and j == m - 1)], dtype=int)
            if js.size == 0:
                continue
            d1 = _cross(b[js] - a[js], a[i] - a[js])
            d2 = _cross(b[js] - a[js], b[i] - a[js])
            d3 = _cross(b[i] - a[i], a[js] - a[i])
            d4 = _cross(b[i] - a[i], b[js] - a[i])
            if np.any((d1 * d2 < 0) & (d3 * d4 < 0)):
                raise ValueError("centerline self-intersects")

    def project(self, p) -> tuple[int, float, float, float]:
        """Nearest centerline point: ``(segment, arc length, signed offset, track angle)``."""
        p = np.asarray(p, dtype=float)
        i, t, off = _project_kernel(float(p[0]), float(p[1]), self._ax, self._ay, self._dx, self._dy, self.seg_len)
        return int(i), float(self.cum[i] + t), float(off), float(self.seg_angle[i])

    def point_at(self, s: float) -> tuple[np.ndarray, float]:
        """Centerline point and heading at arc length ``s`` (wrapped)."""
        s = float(s) % self.perimeter
        i = int(np.searchsorted(self.cum, s, side="right") - 1)
        return self.seg_a[i] + self.seg_dir[i] * (s - self.cum[i]), float(self.seg_angle[i])

    def cast(self, origin, directions, max_range: float) -> np.ndarray:
        """:func:`raycast` against both walls using cached segment arrays."""
        return _raycast_kernel(float(origin[0]), float(origin[1]), directions, *self._walls, float(max_range))

    def on_track(self, p) -> bool:
        return abs(self.project(p)[2]) < self.half_width

    def to_dict(self) -> dict:
        return {"control_points": self.centerline.tolist(), "half_width": self.half_width,
                "laps": self.laps, "max_steps": self.max_steps, "name": self.name, "resample": None}


def smooth_loop(control_points, spacing: float = 1.0) -> np.ndarray:
    """Periodic cubic-spline through control points, resampled at ~``spacing`` metres."""
    P = np.asarray(control_points, dtype=float)
    if np.allclose(P[0], P[-1]):
        P = P[:-1]
    closed = np.vstack([P, P[:1]])
    u = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(closed, axis=0), axis=1))])
    cs = CubicSpline(u, closed, bc_type="periodic")
    fine = cs(np.linspace(0, u[-1], 20 * len(u) + 200, endpoint=False))
    arc = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(np.vstack([fine, fine[:1]]), axis=0), axis=1))])
    n = max(int(round(arc[-1] / spacing)), 8)
    # arc-length reparametrization so samples are evenly spaced
    targets = np.linspace(0, arc[-1], n, endpoint=False)
    uu = np.interp(targets, arc[:-1], np.linspace(0, u[-1], len(fine), endpoint=False))
    return cs(uu)


def load_track(path) -> TrackSpec:
    """Load ``{"control_points": [[x, y], ...], "half_width": w, ...}`` from JSON.

    Optional keys: ``laps``, ``max_steps``, ``name`` and ``resample`` (spline spacing in
    metres; ``null`` uses the points verbatim as the polyline).
    """
    doc = json.loads(Path(path).read_text())
    pts = np.asarray(doc["control_points"], dtype=float)
    spacing = doc.get("resample", 1.0)
    center = pts if spacing is None else smooth_loop(pts, spacing)
    return TrackSpec(center, float(doc["half_width"]), int(doc.get("laps", 1)),
                     int(doc.get("max_steps", 600)), doc.get("name", Path(path).stem))


def save_track(track: TrackSpec, path) -> None:
    Path(path).write_text(json.dumps(track.to_dict(), indent=1))


def _polar_loop(radius_fn, n: int = 48) -> np.ndarray:
    phi = np.linspace(0, 2 * np.pi, n, endpoint=False)
    r = radius_fn(phi)
    return np.stack([r * np.cos(phi), r * np.sin(phi)], axis=1)


def builtin_track(name: str = "default") -> TrackSpec:
    if name == "default":
        pts = _polar_loop(lambda f: 25.0 * (1 + 0.16 * np.cos(3 * f) + 0.08 * np.sin(2 * f)))
        return TrackSpec(smooth_loop(pts), 2.5, 1, 600, "default")
    if name == "narrow":
        # default layout at 1 m half-width: the noisier tiers rarely finish a lap here
        pts = _polar_loop(lambda f: 25.0 * (1 + 0.16 * np.cos(3 * f) + 0.08 * np.sin(2 * f)))
        return TrackSpec(smooth_loop(pts), 1.0, 1, 600, "narrow")
    if name == "test":
        pts = _polar_loop(lambda f: 24.0 * (1 + 0.12 * np.sin(3 * f + 0.7) + 0.12 * np.cos(2 * f)))
        return TrackSpec(smooth_loop(pts), 2.5, 1, 600, "test")
    if name == "oval":
        # stadium: two 200 m straights joined by 30 m-radius half circles
        arc = np.linspace(-np.pi / 2, np.pi / 2, 60)
        right = np.stack([100 + 30 * np.cos(arc), 30 * np.sin(arc)], axis=1)
        left = np.stack([-100 - 30 * np.cos(arc), -30 * np.sin(arc)], axis=1)
        bottom = np.stack([np.linspace(-100, 100, 201)[:-1], np.full(200, -30.0)], axis=1)
        top = np.stack([np.linspace(100, -100, 201)[:-1], np.full(200, 30.0)], axis=1)
        pts = np.vstack([bottom, right[:-1], top, left[:-1]])
        return TrackSpec(pts, 3.0, 1, 2000, "oval")
    raise ValueError(f"unknown built-in track {name!r}")


def get_track(name_or_path: str) -> TrackSpec:
    if Path(name_or_path).suffix == ".json" or Path(name_or_path).exists():
        return load_track(name_or_path)
    return builtin_track(name_or_path)


# --------------------------------------------------------------------------- sensing


@numba.njit(cache=True)
def _raycast_kernel(ox, oy, dirs, ax, ay, ex, ey, max_range):
    out = np.full(dirs.shape[0], max_range)
    for k in range(ax.shape[0]):
        wx, wy = ax[k] - ox, ay[k] - oy
        num_t = wx * ey[k] - wy * ex[k]
        for r in range(dirs.shape[0]):
            ux, uy = dirs[r, 0], dirs[r, 1]
            den = ux * ey[k] - uy * ex[k]
            if abs(den) <= 1e-12:
                continue
            t = num_t / den
            if t < 0.0 or t >= out[r]:
                continue
            sp = (wx * uy - wy * ux) / den
            if 0.0 <= sp <= 1.0:
                out[r] = t
    return out


def raycast(origin, directions, seg_a, seg_b, max_range: float) -> np.ndarray:
    """Distance along each unit direction to the nearest segment, capped at ``max_range``."""
    o = np.asarray(origin, dtype=float)
    a = np.ascontiguousarray(seg_a, dtype=float)
    e = np.asarray(seg_b, dtype=float) - a
    return _raycast_kernel(float(o[0]), float(o[1]), np.ascontiguousarray(directions, dtype=float),
                           a[:, 0].copy(), a[:, 1].copy(), e[:, 0].copy(), e[:, 1].copy(), float(max_range))


@functools.lru_cache(maxsize=8)
def _beam_angles(n: int) -> np.ndarray:
    a = np.linspace(-np.pi / 2, np.pi / 2, n)
    a.setflags(write=False)
    return a


def beam_angles(n: int = 19) -> np.ndarray:
    """Bearings relative to the heading, evenly spread over the forward semicircle."""
    return _beam_angles(n)


@dataclass
class CarState:
    x: float
    y: float
    heading: float
    v_x: float = 0.0
    v_y: float = 0.0
    speed: float = 0.0

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])


def rangefinder(car: CarState, track: TrackSpec, n: int = 19, max_range: float = 20.0,
                on_track: bool | None = None) -> tuple[np.ndarray, bool]:
    """Normalized wall distances for ``n`` beams; ``(zeros, False)`` when the car is off track."""
    if on_track is None:
        on_track = track.on_track(car.position)
    if not on_track:
        return np.zeros(n), False
    ang = car.heading + beam_angles(n)
    dirs = np.empty((n, 2))
    dirs[:, 0], dirs[:, 1] = np.cos(ang), np.sin(ang)
    return track.cast((car.x, car.y), dirs, max_range) / max_range, True


def evaluation_reward(v_x, v_y, theta, d):
    """Driving-quality score per step: forward progress minus lateral and misalignment penalties."""
    st, ct = np.sin(theta), np.cos(theta)
    return v_x * ct - np.abs(v_y * st) - 2.0 * v_x * np.abs(d * st) - v_y * ct


# --------------------------------------------------------------------------- environment


@dataclass
class EnvConfig:
    preset: str = "torcs-like"
    dt: float = 0.05
    speed: float = 6.0        # constant / initial speed, m/s
    max_speed: float = 10.0   # normalizes v_x, v_y in observations
    throttle: bool = False    # torcs-like only: second action controls acceleration
    accel: float = 4.0
    wheelbase: float = 2.0
    rear_axle: float = 1.0    # CoG to rear axle
    max_steer: float = 0.4    # rad at |steering| = 1
    n_beams: int = 19
    max_range: float = 20.0
    max_steps: int | None = None
    start_offset: float = 0.2   # fraction of half-width for random starts
    start_heading: float = 0.1  # rad

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise ValueError(f"preset must be one of {PRESETS}")
        if self.preset == "rc-like" and self.throttle:
            raise ValueError("the rc-like preset is steering-only")


class TrackEnv:
    """One car on one track. Not thread-safe; use one instance per worker."""

    def __init__(self, track: TrackSpec, cfg: EnvConfig | None = None):
        self.track = track
        self.cfg = cfg or EnvConfig()
        self.max_steps = self.cfg.max_steps or track.max_steps
        self.car: CarState | None = None
        self.prev_action = np.zeros(self.action_dim)
        self.steps = 0
        self.progress = 0.0
        self._arc = 0.0
        self._geom = (0, 0.0, 0.0, 0.0)
        self.done = True

    @property
    def action_dim(self) -> int:
        return 2 if self.cfg.throttle else 1

    @property
    def obs_dim(self) -> int:
        if self.cfg.preset == "rc-like":
            return self.cfg.n_beams + 1
        return self.cfg.n_beams + 4

    def reset(self, seed: int | None = None, arc: float | None = None, offset: float = 0.0,
              heading_error: float = 0.0) -> np.ndarray:
        """Place the car on the centerline (or a seeded random pose) and return the first observation."""
        if seed is not None:
            rng = np.random.default_rng(seed)
            arc = rng.uniform(0, self.track.perimeter) if arc is None else arc
            offset = rng.uniform(-1, 1) * self.cfg.start_offset * self.track.half_width
            heading_error = rng.uniform(-1, 1) * self.cfg.start_heading
        arc = 0.0 if arc is None else arc
        p, ang = self.track.point_at(arc)
        normal = np.array([-np.sin(ang), np.cos(ang)])
        p = p + offset * normal
        self.car = CarState(float(p[0]), float(p[1]), float(ang + heading_error), self.cfg.speed, 0.0, self.cfg.speed)
        self.prev_action = np.zeros(self.action_dim)
        self.steps = 0
        self.progress = 0.0
        self._geom = self.track.project(p)
        self._arc = self._geom[1]
        self.done = False
        return self.observe()

    def geometry(self) -> tuple[float, float]:
        """``(theta, d)``: heading error to the track direction and offset over half-width."""
        _, _, off, ang = self._geom
        return _wrap(self.car.heading - ang), off / self.track.half_width

    def observe(self) -> np.ndarray:
        ranges, _ = rangefinder(self.car, self.track, self.cfg.n_beams, self.cfg.max_range,
                                on_track=abs(self._geom[2]) < self.track.half_width)
        if self.cfg.preset == "rc-like":
            return np.concatenate([ranges, self.prev_action[:1]])
        theta, d = self.geometry()
        v = self.cfg.max_speed
        return np.concatenate([ranges, [theta, d, self.car.v_x / v, self.car.v_y / v]])

    def step(self, action) -> tuple[np.ndarray, bool, dict]:
        if self.car is None or self.done:
            raise RuntimeError("call reset() before step()")
        a = np.atleast_1d(np.asarray(action, dtype=float))
        if a.shape != (self.action_dim,):
            raise ValueError(f"expected action of length {self.action_dim}, got {a.shape}")
        clipped = np.clip(a, -1.0, 1.0)
        cfg, car = self.cfg, self.car
        if cfg.throttle:
            car.speed = min(max(car.speed + float(clipped[1]) * cfg.accel * cfg.dt, 0.0), cfg.max_speed)
        delta = float(clipped[0]) * cfg.max_steer
        beta = math.atan(cfg.rear_axle / cfg.wheelbase * math.tan(delta))
        v = car.speed
        car.x += v * math.cos(car.heading + beta) * cfg.dt
        car.y += v * math.sin(car.heading + beta) * cfg.dt
        car.heading = _wrap(car.heading + v / cfg.rear_axle * math.sin(beta) * cfg.dt)
        car.v_x, car.v_y = v * math.cos(beta), v * math.sin(beta)
        self.prev_action = clipped
        self.steps += 1

        self._geom = self.track.project((car.x, car.y))
        P = self.track.perimeter
        ds = (self._geom[1] - self._arc + P / 2) % P - P / 2
        self._arc = self._geom[1]
        self.progress += ds
        theta, d = self.geometry()
        reason = None
        if abs(d) >= 1.0:
            reason = "wall"
        elif self.progress >= self.track.laps * P:
            reason = "lap"
        elif self.steps >= self.max_steps:
            reason = "cap"
        self.done = reason is not None
        st, ct = math.sin(theta), math.cos(theta)
        r = car.v_x * ct - abs(car.v_y * st) - 2.0 * car.v_x * abs(d * st) - car.v_y * ct
        info = {"clamped": bool(np.any(clipped != a)), "reason": reason, "theta": theta, "d": d,
                "v_x": car.v_x, "v_y": car.v_y, "progress": self.progress, "eval_reward": r}
        return self.observe(), self.done, info


# --------------------------------------------------------------------------- scripted drivers


def pure_pursuit(env: TrackEnv, lookahead: float = 4.0) -> float:
    """Steering command in [-1, 1] that chases the centerline point ``lookahead`` metres ahead."""
    car, track = env.car, env.track
    target, _ = track.point_at(env._geom[1] + lookahead)
    rx, ry = float(target[0]) - car.x, float(target[1]) - car.y
    ch, sh = math.cos(car.heading), math.sin(car.heading)
    lx, ly = ch * rx + sh * ry, -sh * rx + ch * ry
    alpha = math.atan2(ly, lx)
    ld = max(math.hypot(lx, ly), 1e-6)
    delta = math.atan(2.0 * env.cfg.wheelbase * math.sin(alpha) / ld)
    return min(max(delta / env.cfg.max_steer, -1.0), 1.0)


def quality_tag(quality) -> str:
    return EXPERT if quality == EXPERT else f"tier{float(quality):g}"


class ScriptedController:
    """Expert pure-pursuit driver, or a degraded tier with noise scale ``p``.

    A tier perturbs the expert steering with zero-mean AR(1) noise whose stationary
    std is ``p`` (correlation ``noise_corr`` per step) and, with probability ``p / 4``
    per step, flips the sign of the expert steering. The noise state restarts with
    every episode.
    """

    def __init__(self, quality="expert", rng: np.random.Generator | None = None, lookahead: float = 4.0,
                 noise_corr: float = 0.9):
        if quality != EXPERT and not 0 < float(quality) <= 1:
            raise ValueError("tier quality must lie in (0, 1]")
        if not 0 <= noise_corr < 1:
            raise ValueError("noise_corr must lie in [0, 1)")
        self.quality = quality
        self.rng = rng or np.random.default_rng(0)
        self.lookahead = lookahead
        self.noise_corr = noise_corr
        self._noise = 0.0

    @property
    def tag(self) -> str:
        return quality_tag(self.quality)

    def __call__(self, env: TrackEnv, obs=None) -> np.ndarray:
        steer = pure_pursuit(env, self.lookahead)
        if self.quality != EXPERT:
            p, rho = float(self.quality), self.noise_corr
            if env.steps == 0:
                self._noise = self.rng.normal(0.0, p)
            else:
                self._noise = rho * self._noise + math.sqrt(1 - rho * rho) * self.rng.normal(0.0, p)
            if self.rng.random() < p / 4:
                steer = -steer
            steer = steer + self._noise
        steer = min(max(steer, -1.0), 1.0)
        if env.cfg.throttle:
            thr = (env.cfg.speed - env.car.speed) / (env.cfg.accel * env.cfg.dt)
            return np.array([steer, min(max(thr, -1.0), 1.0)])
        return np.array([steer])


def scripted_controller(env: TrackEnv, quality="expert", rng: np.random.Generator | None = None) -> np.ndarray:
    return ScriptedController(quality, rng)(env)


@dataclass
class Episode:
    states: np.ndarray
    actions: np.ndarray
    eval_rewards: np.ndarray
    reason: str

    def __len__(self) -> int:
        return len(self.states)

    def score(self, preset: str) -> float:
        """Episode return used for evaluation: summed evaluation reward, or steps survived (rc-like)."""
        return float(len(self)) if preset == "rc-like" else float(self.eval_rewards.sum())


def run_episode(env: TrackEnv, act, seed: int | None = None, **reset_kw) -> Episode:
    """Roll one episode; ``act(env, obs)`` returns the action."""
    obs = env.reset(seed=seed, **reset_kw)
    S, A, R = [], [], []
    reason = None
    while True:
        a = np.atleast_1d(np.asarray(act(env, obs), dtype=float))
        a = np.clip(a, -1.0, 1.0)
        S.append(obs)
        A.append(a)
        obs, done, info = env.step(a)
        R.append(info["eval_reward"])
        if done:
            reason = info["reason"]
            break
    return Episode(np.array(S), np.array(A), np.array(R), reason)


def _episode_seeds(seed: int, n: int) -> list[int]:
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


def record_demos(env: TrackEnv, controller: ScriptedController, episodes: int, seed: int,
                 label: str = EXPERT, path=None) -> DemoSet:
    """Roll ``episodes`` seeded episodes into a DemoSet tagged with the controller's source."""
    trajs = []
    for s in _episode_seeds(seed, episodes):
        ep = run_episode(env, controller, seed=s)
        trajs.append(Trajectory(ep.states, ep.actions, label, controller.tag, ep.reason in ("wall", "lap")))
    demos = DemoSet(trajs, env.obs_dim, env.action_dim)
    if path is not None:
        save_demos(demos, path)
    return demos


def collect_pairs(env: TrackEnv, controller: ScriptedController, n_pairs: int, seed: int,
                  label: str = EXPERT, max_episodes: int = 10_000) -> DemoSet:
    """Roll seeded episodes until exactly ``n_pairs`` pairs are gathered (last one truncated)."""
    trajs, total = [], 0
    for s in _episode_seeds(seed, max_episodes):
        if total >= n_pairs:
            break
        ep = run_episode(env, controller, seed=s)
        tr = Trajectory(ep.states, ep.actions, label, controller.tag, ep.reason in ("wall", "lap"))
        if total + len(tr) > n_pairs:
            tr = tr.head(n_pairs - total)
        trajs.append(tr)
        total += len(tr)
    return DemoSet(trajs, env.obs_dim, env.action_dim)
