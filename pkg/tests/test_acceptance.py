"""Acceptance checks, one test per criterion.

Each test records a single ``CRITERION n: PASS|FAIL ...`` line. The lines are
printed as they happen and repeated in the terminal summary (see conftest).
"""
import json
import math
import time
from pathlib import Path

import numpy as np
import pytest
from scipy import linalg

from conftest import central_diff, rel_err
import ssil.experiment as experiment
from ssil.adversarial import Discriminator, disc_objective_and_grads
from ssil.experiment import (ExperimentConfig, cmd_generate, cmd_leverage, cmd_train, generate_data, load_config,
                             tier_means, train_run)
from ssil.leverage import (LeverageConfig, MDNModel, VAEModel, fit_gpr, gpr_std, leverage_unlabeled,
                           mdn_nll_and_grads, mixture_uncertainty, vae_loss_and_grads)
from ssil.nn import flatten, mlp
from ssil.rewards import BinaryBank, LeverageBank, cor, lcor
from ssil.sim import evaluation_reward
from ssil.trpo import (EtaSchedule, log_prob, log_prob_grad, make_policy, should_decay, trpo_step,
                       value_loss_and_grads)

ROOT = Path(__file__).resolve().parents[1]
GRID_CONFIG = ROOT / "configs" / "table1.cfg"
GRID_DIR = ROOT / "runs" / "acceptance"
RESULTS: dict[int, str] = {}


def record(n: int, ok: bool, detail: str) -> None:
    line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'} ({detail})"
    RESULTS[n] = line
    print(line, flush=True)
    assert ok, line


# --------------------------------------------------------------------------- 1


def test_criterion_1_leverage_ordering():
    t0 = time.time()
    tiers = ("expert", "tier0.3", "tier0.6", "tier0.9")
    ok, parts = True, []
    for seed in range(3):
        cfg = ExperimentConfig(data_seed=seed)
        labeled, pool = generate_data(cfg)
        for method in ("vae", "windowvae"):
            lev = leverage_unlabeled(method, labeled, pool, LeverageConfig(seed=seed))
            m = tier_means(pool, lev)
            means = [m[t] for t in tiers]
            gap = means[0] - min(means)
            ok &= all(a > b for a, b in zip(means, means[1:])) and gap >= 0.15
            parts.append(f"s{seed}/{method} " + "/".join(f"{x:.3f}" for x in means))
    minutes = (time.time() - t0) / 60
    ok &= minutes <= 10
    record(1, ok, f"{'; '.join(parts)}; {minutes:.1f} min")


# --------------------------------------------------------------------------- 2


def _cor_loop(s, SE, SN, alpha):
    def rms(bank):
        return math.sqrt(sum(sum((a - b) ** 2 for a, b in zip(s, x)) for x in bank) / len(bank))
    kE = (1 + rms(SE) / alpha) ** (-(alpha + 1) / 2)
    kN = (1 + rms(SN) / alpha) ** (-(alpha + 1) / 2)
    return kE / (kE + kN)


def _lcor_loop(s, S, L, alpha):
    ks = [(1 + sum(abs(a - b) for a, b in zip(s, x)) / alpha) ** (-(alpha + 1) / 2) for x in S]
    return sum(k * l for k, l in zip(ks, L)) / sum(ks)


def test_criterion_2_kernel_exactness():
    worst = 0.0
    for seed in range(50):
        r = np.random.default_rng(seed)
        d, alpha = int(r.integers(1, 5)), float(r.uniform(0.2, 5.0))
        s = r.normal(size=d)
        SE, SN = r.normal(size=(int(r.integers(1, 6)), d)), r.normal(size=(int(r.integers(1, 6)), d)) + 1
        S = np.concatenate([SE, SN])
        L = r.uniform(0, 1, len(S))
        worst = max(worst, abs(cor(s, BinaryBank(SE, SN, alpha)) - _cor_loop(s, SE, SN, alpha)),
                    abs(lcor(s, LeverageBank(S, L, alpha)) - _lcor_loop(s, S, L, alpha)))
    r = np.random.default_rng(99)
    sym = 0.0
    for _ in range(10):
        s, X = r.normal(size=3), r.normal(size=(4, 3))
        sym = max(sym, abs(cor(s, BinaryBank(s + X, s - X, 1.5)) - 0.5))
        v = r.normal(size=3)
        sym = max(sym, abs(lcor(s, LeverageBank(np.stack([s + v, s - v]), np.array([0.0, 1.0]), 1.0)) - 0.5))
    const = max(abs(lcor(r.normal(size=(5, 3)), LeverageBank(r.normal(size=(9, 3)), np.full(9, c), 2.0)) - c).max()
                for c in (0.0, 0.4, 1.0))
    ok = worst <= 1e-12 and sym <= 1e-12 and const == 0.0
    record(2, ok, f"oracle gap {worst:.1e}, symmetry gap {sym:.1e}, constant-leverage gap {const:.1e}")


# --------------------------------------------------------------------------- 3


def _fd_configs(n=20):
    for seed in range(n):
        r = np.random.default_rng(1000 + seed)
        yield r, int(r.integers(1, 4)), int(r.integers(1, 3)), (int(r.integers(2, 6)),)


def _check_policy(r, ds, da, hidden):
    p = make_policy(ds, da, r, hidden, init_log_std=float(r.uniform(-1, 0.5)))
    S, A, w = r.normal(size=(6, ds)), r.normal(size=(6, da)), r.normal(size=6)

    def f(theta):
        q = p.copy()
        q.set_flat(theta)
        return float(np.sum(w * log_prob(q, S, A)))
    return rel_err(log_prob_grad(p, S, A, w), central_diff(f, p.get_flat()))


def _check_disc(r, ds, da, hidden):
    net = mlp(ds + da, 1, r, hidden, out_act="sigmoid")
    d = Discriminator(net, ds, da)
    P = (r.normal(size=(5, ds)), r.normal(size=(5, da)))
    E = (r.normal(size=(4, ds)) + 0.5, r.normal(size=(4, da)))
    _, g = disc_objective_and_grads(d, P, E)

    def f(theta):
        dd = Discriminator(net.copy(), ds, da)
        dd.net.set_flat(theta)
        return disc_objective_and_grads(dd, P, E)[0]
    return rel_err(flatten(g), central_diff(f, net.get_flat()))


def _check_vae(r, ds, da, hidden):
    D, L = ds + 1, int(r.integers(1, 3))
    model = VAEModel(mlp(D, 2 * L, r, hidden, out_scale=0.5), mlp(L, D, r, hidden), L)
    X, eps = r.normal(size=(6, D)), r.normal(size=(6, L))
    kl_w = float(r.uniform(0.1, 2))
    _, ge, gd = vae_loss_and_grads(model, X, eps, kl_w)
    n_enc = model.encoder.n_params

    def f(theta):
        m = VAEModel(model.encoder.copy(), model.decoder.copy(), L)
        m.encoder.set_flat(theta[:n_enc])
        m.decoder.set_flat(theta[n_enc:])
        return vae_loss_and_grads(m, X, eps, kl_w)[0]
    theta = np.concatenate([model.encoder.get_flat(), model.decoder.get_flat()])
    return rel_err(np.concatenate([flatten(ge), flatten(gd)]), central_diff(f, theta))


def _check_mdn(r, ds, da, hidden):
    K = int(r.integers(1, 4))
    trunk = mlp(ds, K * (1 + 2 * da), r, hidden, out_scale=0.5)
    model = MDNModel(trunk, K, da)
    X, Y = r.normal(size=(6, ds)), r.normal(size=(6, da))
    _, g = mdn_nll_and_grads(model, X, Y)

    def f(theta):
        m = MDNModel(trunk.copy(), K, da)
        m.trunk.set_flat(theta)
        return mdn_nll_and_grads(m, X, Y)[0]
    return rel_err(flatten(g), central_diff(f, trunk.get_flat()))


def _check_value(r, ds, da, hidden):
    net = mlp(ds, 1, r, hidden)
    S, y = r.normal(size=(7, ds)), r.normal(size=7)
    _, g = value_loss_and_grads(net, S, y)

    def f(theta):
        n = net.copy()
        n.set_flat(theta)
        return value_loss_and_grads(n, S, y)[0]
    return rel_err(flatten(g), central_diff(f, net.get_flat()))


def test_criterion_3_gradients():
    checks = {"policy log-prob": _check_policy, "discriminator": _check_disc, "VAE": _check_vae,
              "MDN NLL": _check_mdn, "value regression": _check_value}
    worst = {name: max(fn(*cfg) for cfg in _fd_configs()) for name, fn in checks.items()}
    ok = all(v <= 1e-4 for v in worst.values())
    record(3, ok, ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + " over 20 configs each")


# --------------------------------------------------------------------------- 4 and 5 (real run)


@pytest.fixture(scope="module")
def desk_run(monkeypatch_module):
    """One full default-scale SSIL run with every TRPO step observed."""
    cfg = ExperimentConfig(seeds=(0,))
    labeled, pool = generate_data(cfg)
    lev = leverage_unlabeled("vae", labeled, pool, LeverageConfig(seed=cfg.data_seed))
    steps = []
    real = experiment.trpo_step

    def spy(policy, batch, adv, *a, **kw):
        before = policy.get_flat().copy()
        new, rep = real(policy, batch, adv, *a, **kw)
        steps.append((rep, before, policy.get_flat().copy(), new is policy))
        return new, rep
    monkeypatch_module.setattr(experiment, "trpo_step", spy)
    res = train_run(cfg, 0, labeled, pool, lev)
    return cfg, res, steps


@pytest.fixture(scope="module")
def monkeypatch_module():
    mp = pytest.MonkeyPatch()
    yield mp
    mp.undo()


def test_criterion_4_trust_region(desk_run):
    cfg, res, steps = desk_run
    accepted = [rep for rep, *_ in steps if rep.accepted]
    rejected = [(b, a, same) for rep, b, a, same in steps if not rep.accepted]
    kl_ok = all(rep.kl <= 1.001 * cfg.max_kl for rep in accepted)
    rows_ok = all(r["mean_kl"] <= 1.001 * cfg.max_kl for r in res.rows)
    frozen = all(same and np.array_equal(b, a) for b, a, same in rejected)
    # a trust region too small for any step forces the rejection path on the trained policy
    r = np.random.default_rng(4)
    S = r.normal(size=(200, res.policy.state_dim))
    A = res.policy.mean(S) + r.normal(size=(200, res.policy.action_dim))
    snap = res.policy.get_flat().copy()
    q, rep = trpo_step(res.policy, (S, A), r.normal(size=200), max_kl=1e-300)
    forced = rep.status == "rejected" and q is res.policy and np.array_equal(res.policy.get_flat(), snap)
    rejected.append((snap, q.get_flat(), forced))
    frozen = frozen and forced
    max_kl = max((rep.kl for rep in accepted), default=0.0)
    record(4, kl_ok and rows_ok and frozen and len(steps) == cfg.iterations,
           f"{len(accepted)} accepted with max KL {max_kl:.5f} vs bound {1.001 * cfg.max_kl:.5f}, "
           f"{len(rejected)} rejected (1 forced) all bit-identical={frozen}")


class _Const:
    def __init__(self, c):
        self.c = c

    def __call__(self, S):
        return np.full(len(np.atleast_2d(S)), self.c)


def test_criterion_5_eta_decay(desk_run):
    s0 = np.zeros((8, 3))
    exact = True
    for eta0, eps, k in ((1.0, 0.995, 150), (2.5, 0.9, 40), (0.3, 0.5, 60)):
        sched = EtaSchedule(eta0, eps)
        for i in range(k):
            decay, dvd, dvc = should_decay(_Const(i), _Const(i + 2.0), _Const(i), _Const(i + 0.5), s0)
            assert dvd > dvc
            sched.update(decay)
        exact &= sched.eta == eta0 * eps ** k
    _, res, _ = desk_run
    etas = [r["eta"] for r in res.rows]
    real_ok = all(b <= a for a, b in zip(etas, etas[1:]))
    record(5, exact and real_ok, f"constructed traces exact={exact}; desk run eta {etas[0]:.4f} -> {etas[-1]:.4f} "
           f"non-increasing={real_ok}")


# --------------------------------------------------------------------------- 6


def test_criterion_6_reduction_identity(tmp_path):
    cfg = ExperimentConfig(labeled_pairs=300, pool_pairs=1000, iterations=10, steps_per_iter=400, seeds=(0,),
                           eval_episodes=2)
    labeled, pool = generate_data(cfg)
    lev = leverage_unlabeled("vae", labeled, pool, LeverageConfig(epochs=5))
    same = True
    for seed in (0, 1):
        a, b = tmp_path / f"ssil{seed}.csv", tmp_path / f"gail{seed}.csv"
        ra = train_run(cfg.replace(method="ssil", eta0=0.0), seed, labeled, pool, lev, metrics_path=a)
        rb = train_run(cfg.replace(method="gail-expert-only"), seed, labeled, pool, metrics_path=b)
        same &= a.read_bytes() == b.read_bytes() and ra.final_score == rb.final_score
    record(6, same, "metric CSVs and final scores byte-identical for 2 seeds x 10 iterations")


# --------------------------------------------------------------------------- 7


def _grid_report(cfg: ExperimentConfig) -> dict:
    """Reuse a finished run when its stored config matches, otherwise train it."""
    run = Path(cfg.out) / cfg.run_name()
    if (run / "report.json").exists() and (run / "run.cfg").exists() and load_config(run / "run.cfg") == cfg:
        return json.loads((run / "report.json").read_text())
    cmd_train(cfg)
    return json.loads((run / "report.json").read_text())


@pytest.mark.slow
def test_criterion_7_method_comparison(tmp_path):
    base = load_config(GRID_CONFIG, out=str(GRID_DIR))
    assert base.labeled_pairs >= 600 and base.pool_expert_fraction == 0.5 and len(base.seeds) == 3
    data = base.data_dir
    if not (data / f"labeled_n{base.labeled_pairs}.traj").exists():
        cmd_generate(base)
    if not (data / f"pool_vae_n{base.labeled_pairs}.lev").exists():
        cmd_leverage(base.replace(leverage_method="vae"))
    docs = {m: _grid_report(base.replace(method=m, leverage_method="vae"))
            for m in ("ssil", "gail", "gail-expert-only")}
    scores = {m: d["scaled_mean"] for m, d in docs.items()}
    grid_hours = sum(d["wall_seconds"] for d in docs.values()) / 3600
    # reduced grid: one budget, two methods, one seed, from scratch
    t0 = time.time()
    smoke = base.replace(out=str(tmp_path), seeds=(0,))
    cmd_generate(smoke)
    cmd_leverage(smoke)
    for m in ("gail-expert-only", "ssil"):
        cmd_train(smoke.replace(method=m))
    smoke_min = (time.time() - t0) / 60
    margin = scores["ssil"] - max(scores["gail"], scores["gail-expert-only"])
    ok = margin >= 0.05 and grid_hours <= 4 and smoke_min <= 20
    record(7, ok, ", ".join(f"{k} {v:.3f}" for k, v in scores.items())
           + f"; margin {margin:+.3f}; grid {grid_hours:.2f} h, smoke {smoke_min:.1f} min")


# --------------------------------------------------------------------------- 8


def test_criterion_8_evaluation_reward():
    r = np.random.default_rng(8)
    vx, vy = r.uniform(-10, 10, 1000), r.uniform(-10, 10, 1000)
    th, d = r.uniform(-math.pi, math.pi, 1000), r.uniform(-1, 1, 1000)
    worst = 0.0
    for a, b, c, e in zip(vx, vy, th, d):
        hand = a * math.cos(c) - abs(b * math.sin(c)) - 2 * a * abs(e * math.sin(c)) - b * math.cos(c)
        worst = max(worst, abs(evaluation_reward(a, b, c, e) - hand))
    T, Dd = np.meshgrid(np.linspace(-math.pi, math.pi, 361), np.linspace(-1, 1, 201), indexing="ij")
    argmax_ok = True
    for v in (0.5, 3.0, 9.0):
        R = evaluation_reward(v, 0.0, T, Dd)
        i, j = np.unravel_index(np.argmax(R), R.shape)
        # d is irrelevant once theta = 0, so the whole theta = 0 row is maximal
        argmax_ok &= T[i, j] == 0.0 and np.all(R[180] == R.max()) and R[180, 100] == R.max()
    record(8, worst <= 1e-12 and argmax_ok, f"max gap {worst:.1e} on 1000 points, argmax at theta=0, d=0: {argmax_ok}")


# --------------------------------------------------------------------------- 9


def test_criterion_9_gpr_mdn_oracles():
    worst_gp = 0.0
    for seed in range(20):
        r = np.random.default_rng(seed)
        X = np.sort(r.uniform(-3, 3, int(r.integers(2, 15))))[:, None]
        sv, ell, nv = float(r.uniform(0.5, 2)), float(r.uniform(0.3, 2)), float(10 ** r.uniform(-4, -1))
        m = fit_gpr(X, np.sin(X), sv, ell, nv)
        Q = r.uniform(-4, 4, (25, 1))
        K = sv * np.exp(-0.5 * (X - X.T) ** 2 / ell ** 2) + (nv + m.jitter) * np.eye(len(X))
        Ks = sv * np.exp(-0.5 * (X - Q.T) ** 2 / ell ** 2)
        var = sv - np.einsum("ij,ij->j", Ks, linalg.solve(K, Ks, assume_a="pos"))
        worst_gp = max(worst_gp, np.max(np.abs(gpr_std(m, Q) - np.sqrt(np.maximum(var, 0.0)))))
    worst_mdn = 0.0
    mixtures = [([0.5, 0.5], [[-1.0], [1.0]], [[0.0], [0.0]], 1.0),
                ([1.0], [[2.0]], [[0.3]], 0.3),
                ([0.25, 0.75], [[0.0], [4.0]], [[1.0], [2.0]], 0.25 + 1.5 + 0.25 * 9 + 0.75 * 1),
                ([0.2, 0.3, 0.5], [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]], [[0.1, 0.2], [0.3, 0.4], [0.5, 0.6]],
                 (0.02 + 0.09 + 0.25) + (0.04 + 0.12 + 0.3) + (0.2 * 0.09 + 0.3 * 0.49 + 0.5 * 0.09)
                 + (0.2 * 0.64 + 0.3 * 0.04 + 0.5 * 0.04))]
    for w, mu, var, hand in mixtures:
        worst_mdn = max(worst_mdn, abs(float(mixture_uncertainty(w, mu, var)) - hand))
    ok = worst_gp <= 1e-8 and worst_mdn <= 1e-12
    record(9, ok, f"GPR std gap {worst_gp:.1e} on 20 1-D problems, MDN decomposition gap {worst_mdn:.1e}")
