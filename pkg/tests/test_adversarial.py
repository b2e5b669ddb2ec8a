import numpy as np
import pytest

from conftest import central_diff, rel_err
from ssil.adversarial import (BCConfig, Discriminator, bc_pretrain, disc_forward, disc_objective_and_grads,
                              disc_update, make_discriminator)
from ssil.nn import DenseNet, flatten
from ssil.rewards import policy_reward
from ssil.trpo import make_policy


def test_zero_weight_discriminator_is_one_half(rng):
    d = make_discriminator(3, 1, rng)
    d.net.set_flat(np.zeros(d.net.n_params))
    assert np.all(disc_forward(d, rng.normal(size=(5, 3)), rng.normal(size=(5, 1))) == 0.5)


def test_hand_set_single_layer():
    net = DenseNet([np.array([[0.3, -0.2, 1.1]])], [np.array([0.05])], ["sigmoid"])
    d = Discriminator(net, 2, 1)
    s, a = np.array([1.0, 2.0]), np.array([-0.5])
    z = 0.3 * 1.0 - 0.2 * 2.0 + 1.1 * -0.5 + 0.05
    assert disc_forward(d, s, a) == pytest.approx(1 / (1 + np.exp(-z)), abs=1e-15)


def test_output_is_clamped():
    d = Discriminator(DenseNet([np.array([[1e4, 0.0]])], [np.zeros(1)], ["sigmoid"]), 1, 1)
    hi = disc_forward(d, np.array([1.0]), np.array([0.0]))
    lo = disc_forward(d, np.array([-1.0]), np.array([0.0]))
    assert hi == 1 - 1e-6 and lo == 1e-6


def test_reproducible(rng):
    a = make_discriminator(2, 1, np.random.default_rng(5))
    b = make_discriminator(2, 1, np.random.default_rng(5))
    s, act = rng.normal(size=2), rng.normal(size=1)
    assert disc_forward(a, s, act) == disc_forward(b, s, act)


def test_symmetric_batches_zero_bias_gradient(rng):
    d = make_discriminator(3, 1, rng)
    d.net.weights[-1][:] = 0.0
    d.net.biases[-1][:] = 0.0
    S, A = rng.normal(size=(8, 3)), rng.normal(size=(8, 1))
    _, grads = disc_objective_and_grads(d, (S, A), (S, A))
    assert abs(grads[-1][0]) < 1e-15


def test_objective_gradient_finite_differences(rng):
    d = make_discriminator(2, 1, rng, hidden=(6,))
    P = (rng.normal(size=(7, 2)), rng.normal(size=(7, 1)))
    E = (rng.normal(size=(5, 2)) + 1, rng.normal(size=(5, 1)))
    _, grads = disc_objective_and_grads(d, P, E)

    def f(flat):
        dd = Discriminator(d.net.copy(), 2, 1)
        dd.net.set_flat(flat)
        return disc_objective_and_grads(dd, P, E)[0]

    assert rel_err(flatten(grads), central_diff(f, d.net.get_flat())) < 1e-6


def test_separable_toy_problem_orientation(rng):
    d = make_discriminator(2, 1, rng, hidden=(16,), lr=1e-2)
    Sp, Se = rng.normal(size=(128, 2)) + 2.0, rng.normal(size=(128, 2)) - 2.0
    Ap, Ae = np.zeros((128, 1)), np.zeros((128, 1))
    for _ in range(200):
        d, obj = disc_update(d, (Sp, Ap), (Se, Ae))
        assert d.net.all_finite()
    dp, de = disc_forward(d, Sp, Ap), disc_forward(d, Se, Ae)
    assert dp.mean() > 0.9 and de.mean() < 0.1
    # expert-like pairs get the larger reward
    assert policy_reward(de, 0.0, 0.0).mean() > policy_reward(dp, 0.0, 0.0).mean()


def test_empty_batch_rejected(rng):
    d = make_discriminator(2, 1, rng)
    with pytest.raises(ValueError):
        disc_update(d, (np.zeros((0, 2)), np.zeros((0, 1))), (np.zeros((3, 2)), np.zeros((3, 1))))
    with pytest.raises(ValueError):
        disc_forward(d, np.zeros(3), np.zeros(1))


def test_bc_zero_epochs_is_noop(rng):
    p = make_policy(3, 1, rng)
    q = bc_pretrain(p, rng.normal(size=(10, 3)), rng.normal(size=(10, 1)), BCConfig(epochs=0))
    assert np.array_equal(p.get_flat(), q.get_flat()) and q is not p


def test_bc_regresses_constant_target(rng):
    p = make_policy(3, 1, rng, hidden=(16,))
    S = rng.normal(size=(200, 3))
    cfg = BCConfig(epochs=200, lr=1e-2, batch_size=64)
    q = bc_pretrain(p, S, np.full((200, 1), 0.4), cfg)
    assert np.max(np.abs(q.mean(S) - 0.4)) < 1e-2
    assert cfg.losses[-1] < cfg.losses[0]


def test_bc_loss_decreases_in_first_epoch(rng):
    p = make_policy(2, 1, rng, hidden=(8,))
    S = rng.normal(size=(64, 2))
    cfg = BCConfig(epochs=1, lr=1e-3, batch_size=16)
    bc_pretrain(p, S, np.tanh(S[:, :1]), cfg)
    assert len(cfg.losses) == 5 and np.all(np.diff(cfg.losses) < 0)


def test_bc_requires_data(rng):
    with pytest.raises(ValueError):
        bc_pretrain(make_policy(2, 1, rng), np.zeros((0, 2)), np.zeros((0, 1)), BCConfig(epochs=1))
