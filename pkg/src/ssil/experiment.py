"""End-to-end experiment harness: data generation, leverage scoring, training and reports.

Every run is a pure function of ``(ExperimentConfig, seed)``. Randomness is drawn
from independent ``SeedSequence`` children so that switching a component off
(for instance the shaping reward when eta0 = 0) never shifts another stream.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .adversarial import BCConfig, bc_pretrain, disc_forward, disc_update, make_discriminator
from .data import EXPERT, UNLABELED, DemoSet, load_demos, load_leverage, pool_states, save_demos, save_leverage
from .leverage import METHODS as LEVERAGE_METHODS
from .leverage import LeverageConfig, build_bank, leverage_unlabeled
from .nn import save_checkpoint
from .rewards import BinaryBank, cor, lcor
from .sim import PRESETS, EnvConfig, ScriptedController, TrackEnv, collect_pairs, get_track, quality_tag
from .trpo import (EtaSchedule, RolloutBatch, compute_advantages, fit_values, make_policy, make_value,
                   mean_kl, should_decay, trpo_step)

SCHEMA_VERSION = 1
METHODS = ("gail", "gail-expert-only", "mixgail", "ssil")
METRIC_COLUMNS = ("iteration", "mean_eval_reward", "mean_kl", "eta", "delta_v_d", "delta_v_c",
                  "disc_objective", "step_status", "n_steps", "n_episodes")


class TrainingError(RuntimeError):
    """Training state became non-finite; the message names the iteration and the component."""


class ConfigError(ValueError):
    pass


def _f(help_text: str, default, **kw):
    return field(default=default, metadata={"help": help_text}, **kw)


@dataclass
class ExperimentConfig:
    method: str = _f("gail | gail-expert-only | mixgail | ssil", "ssil")
    leverage_method: str = _f("leverage estimator: vae | windowvae | mdn | gpr", "vae")
    labeled_pairs: int = _f("labeled expert (s, a) pairs", 600)
    pool_pairs: int = _f("unlabeled pool size in pairs", 8000)
    pool_expert_fraction: float = _f("share of the pool produced by the expert controller", 0.5)
    pool_tiers: tuple = _f("noise scales p of the degraded controllers, equal shares", (0.3, 0.6, 0.9))
    alpha: float = _f("kernel sharpness alpha of CoR / LCoR", 1.0)
    eta0: float = _f("initial shaping weight eta_0 (eta >= 0)", 1.0)
    epsilon: float = _f("eta decay factor epsilon in (0, 1)", 0.995)
    gamma: float = _f("return discount gamma", 0.99)
    entropy_coef: float = _f("causal-entropy weight lambda", 0.0)
    max_kl: float = _f("trust-region radius delta_KL", 0.01)
    iterations: int = _f("outer iterations of the training loop", 150)
    steps_per_iter: int = _f("environment steps per iteration (last episode runs to its end)", 1000)
    seeds: tuple = _f("training seeds, one run each", (0, 1, 2))
    data_seed: int = _f("seed for demonstration generation", 0)
    preset: str = _f("observation preset: torcs-like | rc-like", "torcs-like")
    throttle: bool = _f("torcs-like only: expose throttle as a second action", False)
    track: str = _f("training track: builtin name or layout file", "default")
    eval_track: str = _f("evaluation track (empty = training track)", "")
    demo_track: str = _f("track used to record demonstrations (empty = training track)", "")
    out: str = _f("output directory", "runs")
    disc_lr: float = _f("discriminator Adam learning rate", 3e-4)
    disc_batch: int = _f("discriminator minibatch per role", 256)
    disc_updates: int = _f("discriminator updates per iteration", 10)
    value_epochs: int = _f("regression epochs for V_D and V_C per iteration", 5)
    value_lr: float = _f("value-function Adam learning rate", 1e-3)
    hidden: tuple = _f("hidden layer widths for every network", (64, 64))
    init_log_std: float = _f("initial policy log-std", -0.5)
    bc_epochs: int = _f("behavior-cloning epochs on labeled pairs before training", 0)
    n_initial_states: int = _f("seeded initial states for the eta decay check", 32)
    eval_episodes: int = _f("deterministic evaluation episodes per run", 5)
    bank_cap: int = _f("max states kept in the shaping bank (0 = all)", 0)
    damping: float = _f("Fisher damping", 0.1)
    cg_iters: int = _f("conjugate-gradient iterations", 10)
    vae_epochs: int = _f("leverage estimator training epochs", 60)
    schema_version: int = _f("config schema version", SCHEMA_VERSION)

    def __post_init__(self):
        self.pool_tiers = tuple(float(p) for p in self.pool_tiers)
        self.seeds = tuple(int(s) for s in self.seeds)
        self.hidden = tuple(int(h) for h in self.hidden)
        self.validate()

    def validate(self) -> None:
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {self.schema_version} (expected {SCHEMA_VERSION})")
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}")
        if self.leverage_method not in LEVERAGE_METHODS:
            raise ConfigError(f"leverage_method must be one of {LEVERAGE_METHODS}")
        if self.preset not in PRESETS:
            raise ConfigError(f"preset must be one of {PRESETS}")
        if self.throttle and self.preset == "rc-like":
            raise ConfigError("the rc-like preset is steering-only")
        if self.labeled_pairs <= 0:
            raise ConfigError("labeled_pairs must be positive; the methods need labeled expert data")
        if self.pool_pairs < 0 or not 0 <= self.pool_expert_fraction <= 1:
            raise ConfigError("pool_pairs must be >= 0 and pool_expert_fraction in [0, 1]")
        if any(not 0 < p <= 1 for p in self.pool_tiers):
            raise ConfigError("tier noise scales must lie in (0, 1]")
        if self.eta0 < 0:
            raise ConfigError("eta0 must be >= 0")
        if not 0 < self.epsilon < 1:
            raise ConfigError("epsilon must lie in (0, 1)")
        if not 0 < self.gamma <= 1:
            raise ConfigError("gamma must lie in (0, 1]")
        if self.alpha <= 0 or self.max_kl <= 0 or self.entropy_coef < 0:
            raise ConfigError("need alpha > 0, max_kl > 0, entropy_coef >= 0")
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        if self.iterations < 0 or self.steps_per_iter <= 0 or self.eval_episodes <= 0:
            raise ConfigError("iterations >= 0, steps_per_iter > 0 and eval_episodes > 0 required")

    def replace(self, **kw) -> "ExperimentConfig":
        return dataclasses.replace(self, **kw)

    @property
    def data_dir(self) -> Path:
        return Path(self.out) / "data"

    def run_name(self) -> str:
        tag = self.method if self.method != "ssil" else f"ssil-{self.leverage_method}"
        return f"{tag}_n{self.labeled_pairs}"


# --------------------------------------------------------------------------- config files


def _parse_value(raw: str, default):
    raw = raw.strip()
    if isinstance(default, bool):
        if raw.lower() not in ("true", "false", "1", "0"):
            raise ConfigError(f"expected a boolean, got {raw!r}")
        return raw.lower() in ("true", "1")
    if isinstance(default, tuple):
        items = [x.strip() for x in raw.split(",") if x.strip()]
        kind = float if any(isinstance(v, float) for v in default) else int
        return tuple(kind(x) for x in items)
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw


def _format_value(v) -> str:
    if isinstance(v, tuple):
        return ", ".join(repr(x) for x in v)
    return repr(v) if isinstance(v, float) else str(v)


def load_config(path, **overrides) -> ExperimentConfig:
    """Read a flat ``key = value`` file; ``#`` starts a comment. Overrides win."""
    defaults = {f.name: f.default for f in dataclasses.fields(ExperimentConfig)}
    values: dict = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in defaults:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            values[key] = _parse_value(raw, defaults[key])
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {exc}") from None
    if "schema_version" not in values:
        raise ConfigError(f"{path}: missing schema_version")
    values.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**values)


def save_config(cfg: ExperimentConfig, path) -> None:
    lines = ["# ssil experiment configuration"]
    for f in dataclasses.fields(cfg):
        lines.append(f"# {f.metadata.get('help', '')}")
        lines.append(f"{f.name} = {_format_value(getattr(cfg, f.name))}")
    Path(path).write_text("\n".join(lines) + "\n")


# --------------------------------------------------------------------------- environments and data


def make_env(cfg: ExperimentConfig, which: str = "train") -> TrackEnv:
    name = {"train": cfg.track, "eval": cfg.eval_track or cfg.track, "demo": cfg.demo_track or cfg.track}[which]
    return TrackEnv(get_track(name), EnvConfig(preset=cfg.preset, throttle=cfg.throttle))


def _child_seeds(seed: int, n: int) -> list[int]:
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


def pool_composition(cfg: ExperimentConfig) -> list[tuple[str | float, int]]:
    """``[(quality, n_pairs), ...]`` with the expert share first and tiers splitting the rest evenly."""
    n_exp = int(round(cfg.pool_pairs * cfg.pool_expert_fraction))
    rest = cfg.pool_pairs - n_exp
    parts: list[tuple[str | float, int]] = [(EXPERT, n_exp)] if n_exp else []
    if rest and not cfg.pool_tiers:
        raise ConfigError("a non-expert pool share needs at least one tier")
    k = len(cfg.pool_tiers)
    for i, p in enumerate(cfg.pool_tiers):
        n = rest // k + (1 if i < rest % k else 0)
        if n:
            parts.append((p, n))
    return parts


def generate_data(cfg: ExperimentConfig, labeled_pairs: int | None = None) -> tuple[DemoSet, DemoSet]:
    """Labeled expert set and an unlabeled pool whose trajectories keep their true source tag.

    The labeled set with a smaller budget is a prefix of the one with a larger
    budget, since both consume the same seeded episode stream.
    """
    n_lab = cfg.labeled_pairs if labeled_pairs is None else labeled_pairs
    if n_lab <= 0:
        raise ConfigError("labeled budget must be positive")
    env = make_env(cfg, "demo")
    s_lab, s_pool = _child_seeds(cfg.data_seed, 2)
    labeled = collect_pairs(env, ScriptedController(EXPERT), n_lab, seed=s_lab)
    parts = []
    for (quality, n), s in zip(pool_composition(cfg), _child_seeds(s_pool, len(cfg.pool_tiers) + 1)):
        ctrl = ScriptedController(quality, np.random.default_rng(s))
        parts.append(collect_pairs(env, ctrl, n, seed=s, label=UNLABELED))
    pool = DemoSet.concat(parts) if parts else DemoSet([], env.obs_dim, env.action_dim)
    return labeled, pool


def cmd_generate(cfg: ExperimentConfig) -> dict[str, Path]:
    d = cfg.data_dir
    d.mkdir(parents=True, exist_ok=True)
    labeled, pool = generate_data(cfg)
    paths = {"labeled": d / f"labeled_n{cfg.labeled_pairs}.traj", "pool": d / "pool.traj"}
    save_demos(labeled, paths["labeled"])
    save_demos(pool, paths["pool"])
    save_config(cfg, d / "generate.cfg")
    return paths


def _load_inputs(cfg: ExperimentConfig) -> tuple[DemoSet, DemoSet]:
    d = cfg.data_dir
    lab, pool = d / f"labeled_n{cfg.labeled_pairs}.traj", d / "pool.traj"
    for p in (lab, pool):
        if not p.exists():
            raise FileNotFoundError(f"missing {p}; run 'generate' first")
    return load_demos(lab), load_demos(pool)


def tier_means(pool: DemoSet, leverages: np.ndarray) -> dict[str, float]:
    """Mean leverage per true source tag, in pool order of first appearance."""
    src = np.concatenate([[t.source] * len(t) for t in pool.trajectories]) if pool.trajectories else np.array([])
    out = {}
    for s in dict.fromkeys(src):
        out[str(s)] = float(np.mean(leverages[src == s]))
    return out


def cmd_leverage(cfg: ExperimentConfig) -> dict[str, float]:
    labeled, pool = _load_inputs(cfg)
    lcfg = LeverageConfig(alpha=cfg.alpha, seed=cfg.data_seed, epochs=cfg.vae_epochs)
    lev = leverage_unlabeled(cfg.leverage_method, labeled, pool, lcfg)
    _, prov = pool_states(pool)
    save_leverage(cfg.data_dir / f"pool_{cfg.leverage_method}_n{cfg.labeled_pairs}.lev", prov, lev)
    means = tier_means(pool, lev)
    with open(cfg.data_dir / f"tiers_{cfg.leverage_method}_n{cfg.labeled_pairs}.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["source", "n_states", "mean_leverage"])
        src = [t.source for t in pool.trajectories for _ in range(len(t))]
        for s, m in means.items():
            w.writerow([s, src.count(s), repr(m)])
    return means


# --------------------------------------------------------------------------- training


@dataclass
class RunReport:
    rows: list[dict]
    final_scores: list[float]
    expert_score: float
    seeds: list[int] = field(default_factory=list)

    @property
    def mean(self) -> float:
        return float(np.mean(self.final_scores))

    @property
    def std(self) -> float:
        return float(np.std(self.final_scores))

    @property
    def scaled_scores(self) -> list[float]:
        return [s / self.expert_score for s in self.final_scores]

    @property
    def scaled_mean(self) -> float:
        return float(np.mean(self.scaled_scores))

    @property
    def scaled_std(self) -> float:
        return float(np.std(self.scaled_scores))

    def to_dict(self) -> dict:
        return {"final_scores": self.final_scores, "expert_score": self.expert_score, "seeds": self.seeds,
                "mean": self.mean, "std": self.std, "scaled_mean": self.scaled_mean,
                "scaled_std": self.scaled_std, "scaled_scores": self.scaled_scores}


@dataclass
class RunResult:
    rows: list[dict]
    final_score: float
    policy: object
    discriminator: object


def _streams(seed: int) -> dict[str, np.random.Generator]:
    names = ("policy", "disc", "v_d", "v_c", "rollout", "disc_batch", "fit_d", "fit_c", "bc", "noise")
    return {n: np.random.default_rng(s) for n, s in zip(names, np.random.SeedSequence(seed).spawn(len(names)))}


class ShapingSignal:
    """Per-state shaping term: LCoR over a leverage bank, CoR over a binary bank, or nothing."""

    def __init__(self, kind: str, bank=None):
        self.kind, self.bank = kind, bank

    def __call__(self, S: np.ndarray) -> np.ndarray:
        if self.kind == "none":
            return np.zeros(len(S))
        return lcor(S, self.bank) if self.kind == "lcor" else cor(S, self.bank)


def prepare_inputs(cfg: ExperimentConfig, labeled: DemoSet, pool: DemoSet,
                   leverages: np.ndarray | None = None) -> tuple[tuple[np.ndarray, np.ndarray], ShapingSignal]:
    """Discriminator expert pairs and the shaping signal for ``cfg.method``.

    With ``eta0 == 0`` the shaping signal is switched off, which makes SSIL and
    MixGAIL coincide with GAIL fed the same discriminator data.
    """
    S_lab, A_lab = labeled.arrays()
    if cfg.method == "gail" and pool.n_pairs:
        S_pool, A_pool = pool.arrays()
        expert = (np.concatenate([S_lab, S_pool]), np.concatenate([A_lab, A_pool]))
    else:
        expert = (S_lab, A_lab)
    if cfg.method in ("gail", "gail-expert-only") or cfg.eta0 == 0:
        return expert, ShapingSignal("none")
    rng = np.random.default_rng(np.random.SeedSequence([cfg.data_seed, 7]))
    if cfg.method == "mixgail":
        bank = BinaryBank(S_lab, pool.arrays()[0], cfg.alpha)
        return expert, ShapingSignal("cor", bank)
    if leverages is None:
        raise ConfigError("ssil needs leverage values for the unlabeled pool")
    bank = build_bank(labeled, pool, leverages, cfg.alpha)
    return expert, ShapingSignal("lcor", bank.subsample(cfg.bank_cap or None, rng))


def initial_states(env: TrackEnv, n: int, seed: int = 12345) -> np.ndarray:
    return np.array([env.reset(seed=s) for s in _child_seeds(seed, n)])


def rollout(env: TrackEnv, policy, n_steps: int, rng: np.random.Generator):
    """Sample whole episodes until at least ``n_steps`` steps are collected."""
    S, A, S2, dones, R = [], [], [], [], []
    ep_returns = []
    while len(S) < n_steps:
        obs = env.reset(seed=int(rng.integers(2**63 - 1)))
        ret = 0.0
        while True:
            mu = policy.mean(obs)
            a = mu + np.exp(policy.log_std) * rng.standard_normal(len(mu))
            nxt, done, info = env.step(np.clip(a, -1.0, 1.0))
            S.append(obs)
            A.append(a)
            S2.append(nxt)
            dones.append(done)
            R.append(info["eval_reward"])
            ret += info["eval_reward"] if env.cfg.preset != "rc-like" else 1.0
            obs = nxt
            if done:
                ep_returns.append(ret)
                break
    return np.array(S), np.array(A), np.array(S2), np.array(dones), np.array(R), ep_returns


def evaluate(env: TrackEnv, act, episodes: int, seed: int = 999) -> float:
    """Mean episode score over ``episodes`` fixed starts."""
    scores = []
    for s in _child_seeds(seed, episodes):
        obs = env.reset(seed=s)
        total, n = 0.0, 0
        while True:
            obs, done, info = env.step(np.clip(act(env, obs), -1.0, 1.0))
            total += info["eval_reward"]
            n += 1
            if done:
                break
        scores.append(float(n) if env.cfg.preset == "rc-like" else total)
    return float(np.mean(scores))


def expert_score(cfg: ExperimentConfig) -> float:
    return evaluate(make_env(cfg, "eval"), ScriptedController(EXPERT), cfg.eval_episodes)


def _check_finite(it: int, **parts) -> None:
    for name, ok in parts.items():
        if not ok:
            raise TrainingError(f"iteration {it}: {name} became non-finite")


def train_run(cfg: ExperimentConfig, seed: int, labeled: DemoSet, pool: DemoSet,
              leverages: np.ndarray | None = None, metrics_path=None, checkpoint_path=None,
              progress=None) -> RunResult:
    """One training run of ``cfg.method`` for ``cfg.iterations`` iterations."""
    env = make_env(cfg, "train")
    rngs = _streams(seed)
    (S_exp, A_exp), shaping = prepare_inputs(cfg, labeled, pool, leverages)
    Ds, Da = env.obs_dim, env.action_dim
    policy = make_policy(Ds, Da, rngs["policy"], cfg.hidden, init_log_std=cfg.init_log_std)
    if cfg.bc_epochs:
        policy = bc_pretrain(policy, *labeled.arrays(), BCConfig(cfg.bc_epochs, seed=int(rngs["bc"].integers(2**31))))
    disc = make_discriminator(Ds, Da, rngs["disc"], cfg.hidden, cfg.disc_lr)
    V_D = make_value(Ds, "D", rngs["v_d"], cfg.hidden, cfg.value_lr)
    V_C = make_value(Ds, "C", rngs["v_c"], cfg.hidden, cfg.value_lr)
    s0 = initial_states(env, cfg.n_initial_states)
    eta = EtaSchedule(cfg.eta0 if shaping.kind != "none" else 0.0, cfg.epsilon)
    rows = []
    fh = open(metrics_path, "w", newline="") if metrics_path else None
    writer = csv.DictWriter(fh, METRIC_COLUMNS) if fh else None
    if writer:
        writer.writeheader()
    try:
        for it in range(cfg.iterations):
            S, A, S2, dones, R, ep_ret = rollout(env, policy, cfg.steps_per_iter, rngs["rollout"])
            A_env = np.clip(A, -1.0, 1.0)
            obj = 0.0
            for _ in range(cfg.disc_updates):
                bp = rngs["disc_batch"].integers(0, len(S), min(cfg.disc_batch, len(S)))
                be = rngs["disc_batch"].integers(0, len(S_exp), min(cfg.disc_batch, len(S_exp)))
                disc, obj = disc_update(disc, (S[bp], A_env[bp]), (S_exp[be], A_exp[be]))
            _check_finite(it, discriminator=disc.net.all_finite())
            batch = RolloutBatch(S, A, S2, disc_forward(disc, S, A_env), shaping(S), dones,
                                 cfg.gamma, cfg.entropy_coef, eta.eta, R)
            V_D_before, V_C_before = V_D.copy(), V_C.copy()
            V_D = fit_values(V_D, batch, "D", cfg.value_epochs, rng=rngs["fit_d"])
            V_C = fit_values(V_C, batch, "C", cfg.value_epochs, rng=rngs["fit_c"])
            _check_finite(it, V_D=V_D.net.all_finite(), V_C=V_C.net.all_finite())
            adv = compute_advantages(batch, V_D, V_C)
            new_policy, rep = trpo_step(policy, batch, adv, cfg.max_kl, cfg.entropy_coef, cfg.damping,
                                        cfg.cg_iters)
            kl = mean_kl(policy, new_policy, S) if rep.accepted else 0.0
            policy = new_policy
            _check_finite(it, policy=policy.mean_net.all_finite() and bool(np.all(np.isfinite(policy.log_std))))
            decay, dvd, dvc = should_decay(V_D_before, V_D, V_C_before, V_C, s0)
            row = {"iteration": it, "mean_eval_reward": float(np.mean(ep_ret)), "mean_kl": float(kl),
                   "eta": batch.eta, "delta_v_d": dvd, "delta_v_c": dvc, "disc_objective": obj,
                   "step_status": rep.status, "n_steps": len(S), "n_episodes": len(ep_ret)}
            eta.update(decay)
            rows.append(row)
            if writer:
                writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
                fh.flush()
            if progress:
                progress(row)
    finally:
        if fh:
            fh.close()
    final = evaluate(make_env(cfg, "eval"), lambda e, o: policy.mean(o), cfg.eval_episodes)
    if checkpoint_path:
        save_checkpoint(checkpoint_path, {"policy_mean": policy.mean_net, "discriminator": disc.net,
                                          "v_d": V_D.net, "v_c": V_C.net},
                        {"log_std": policy.log_std, "eta": eta.eta, "seed": seed, "final_score": final})
    return RunResult(rows, final, policy, disc)


def _train_one(args):
    cfg, seed, run_dir = args
    labeled, pool = _load_inputs(cfg)
    lev = None
    if cfg.method == "ssil" and cfg.eta0 != 0:
        lev_path = cfg.data_dir / f"pool_{cfg.leverage_method}_n{cfg.labeled_pairs}.lev"
        if not lev_path.exists():
            raise FileNotFoundError(f"missing {lev_path}; run 'leverage' first")
        _, lev = load_leverage(lev_path)
    res = train_run(cfg, seed, labeled, pool, lev, metrics_path=run_dir / f"metrics_seed{seed}.csv",
                    checkpoint_path=run_dir / f"final_seed{seed}.json")
    return res.rows, res.final_score


def cmd_train(cfg: ExperimentConfig, workers: int = 1) -> RunReport:
    """Train every seed of ``cfg``; writes metrics CSVs, checkpoints and ``report.json``."""
    run_dir = Path(cfg.out) / cfg.run_name()
    run_dir.mkdir(parents=True, exist_ok=True)
    save_config(cfg, run_dir / "run.cfg")
    jobs = [(cfg, s, run_dir) for s in cfg.seeds]
    t0 = time.time()
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            results = list(ex.map(_train_one, jobs))
    else:
        results = [_train_one(j) for j in jobs]
    rows = [dict(r, seed=s) for (rs, _), s in zip(results, cfg.seeds) for r in rs]
    report = RunReport(rows, [sc for _, sc in results], expert_score(cfg), list(cfg.seeds))
    doc = report.to_dict() | {"method": cfg.method, "leverage_method": cfg.leverage_method,
                              "labeled_pairs": cfg.labeled_pairs, "iterations": cfg.iterations,
                              "wall_seconds": time.time() - t0}
    (run_dir / "report.json").write_text(json.dumps(doc, indent=2))
    return report


# --------------------------------------------------------------------------- comparison


COMPARE_COLUMNS = ("method", "labeled_pairs", "scaled_mean", "scaled_std", "n_seeds", "source_budget")


def _method_label(doc: dict) -> str:
    return f"ssil-{doc['leverage_method']}" if doc["method"] == "ssil" else doc["method"]


def compare_reports(docs: list[dict]) -> list[dict]:
    """One row per method x labeled budget.

    Mixed-input GAIL trains on every pair it is given, so a single run at the
    largest budget is repeated on each budget row (``source_budget`` records
    which run filled the cell).
    """
    budgets = sorted({d["labeled_pairs"] for d in docs})
    rows = []
    by_method: dict[str, dict[int, dict]] = {}
    for d in docs:
        by_method.setdefault(_method_label(d), {})[d["labeled_pairs"]] = d
    for m in sorted(by_method):
        cells = by_method[m]
        for b in budgets:
            src = b if b in cells else (max(cells) if m == "gail" else None)
            if src is None:
                continue
            d = cells[src]
            rows.append({"method": m, "labeled_pairs": b, "scaled_mean": d["scaled_mean"],
                         "scaled_std": d["scaled_std"], "n_seeds": len(d["final_scores"]),
                         "source_budget": src})
    return rows


def cmd_compare(run_dirs, out_csv) -> list[dict]:
    docs = []
    for r in run_dirs:
        p = Path(r) / "report.json"
        if not p.exists():
            raise FileNotFoundError(f"missing run artifact {p}")
        docs.append(json.loads(p.read_text()))
    rows = compare_reports(docs)
    with open(out_csv, "w", newline="") as fh:
        w = csv.DictWriter(fh, COMPARE_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return rows


def summarize_run(run_dir) -> dict:
    """Summary of one run directory: final scores plus per-seed step and eta statistics."""
    run_dir = Path(run_dir)
    doc = json.loads((run_dir / "report.json").read_text())
    seeds = {}
    for p in sorted(run_dir.glob("metrics_seed*.csv")):
        with open(p) as fh:
            rows = list(csv.DictReader(fh))
        status = [r["step_status"] for r in rows]
        seeds[p.stem] = {"iterations": len(rows), "accepted": status.count("accepted"),
                         "final_eta": float(rows[-1]["eta"]) if rows else math.nan,
                         "last_mean_eval_reward": float(rows[-1]["mean_eval_reward"]) if rows else math.nan}
    return {"report": doc, "seeds": seeds}
