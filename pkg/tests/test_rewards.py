import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ssil.rewards import BinaryBank, LeverageBank, check_alpha, cor, kernel, lcor, policy_reward


def cor_oracle(s, SE, SN, alpha):
    """Scalar-loop evaluation of the binary kernel ratio."""
    def rms(bank):
        tot = 0.0
        for x in bank:
            tot += sum((si - xi) ** 2 for si, xi in zip(s, x))
        return math.sqrt(tot / len(bank))
    kE = (1 + rms(SE) / alpha) ** (-(alpha + 1) / 2)
    kN = (1 + rms(SN) / alpha) ** (-(alpha + 1) / 2)
    return kE / (kE + kN)


def lcor_oracle(s, S, L, alpha):
    num = den = 0.0
    for x, l in zip(S, L):
        k = (1 + sum(abs(si - xi) for si, xi in zip(s, x)) / alpha) ** (-(alpha + 1) / 2)
        num += l * k
        den += k
    return num / den


def random_config(seed):
    r = np.random.default_rng(seed)
    d = int(r.integers(1, 5))
    alpha = float(r.uniform(0.2, 5.0))
    s = r.normal(size=d)
    SE = r.normal(size=(int(r.integers(1, 6)), d))
    SN = r.normal(size=(int(r.integers(1, 6)), d)) + 1.0
    L = r.uniform(0, 1, size=len(SE) + len(SN))
    return s, SE, SN, L, alpha


@pytest.mark.parametrize("seed", range(50))
def test_cor_and_lcor_match_scalar_oracles(seed):
    s, SE, SN, L, alpha = random_config(seed)
    assert abs(cor(s, BinaryBank(SE, SN, alpha)) - cor_oracle(s, SE, SN, alpha)) <= 1e-12
    S = np.concatenate([SE, SN])
    assert abs(lcor(s, LeverageBank(S, L, alpha)) - lcor_oracle(s, S, L, alpha)) <= 1e-12


def test_hand_evaluated_examples():
    # alpha = 1, d_E = 1, d_N = 3 -> 2^-1 / (2^-1 + 4^-1)
    bank = BinaryBank(np.array([[1.0]]), np.array([[3.0]]), 1.0)
    assert cor(np.array([0.0]), bank) == pytest.approx(2 / 3, abs=1e-15)
    lb = LeverageBank(np.array([[1.0], [-3.0]]), np.array([1.0, 0.0]), 1.0)
    assert lcor(np.array([0.0]), lb) == pytest.approx(2 / 3, abs=1e-15)
    assert policy_reward(0.5, 1.0, 1.0) == pytest.approx(1.6931471805599453, abs=1e-12)


def test_symmetry_cases_give_one_half(rng):
    for _ in range(10):
        s = rng.normal(size=3)
        X = rng.normal(size=(4, 3))
        bank = BinaryBank(s + X, s - X, float(rng.uniform(0.5, 3)))
        assert cor(s, bank) == pytest.approx(0.5, abs=1e-12)
        v = rng.normal(size=3)
        lb = LeverageBank(np.stack([s + v, s - v]), np.array([0.0, 1.0]), 1.0)
        assert lcor(s, lb) == pytest.approx(0.5, abs=1e-12)


def test_constant_leverage_identity(rng):
    for c in (0.0, 0.37, 1.0):
        bank = LeverageBank(rng.normal(size=(20, 3)), np.full(20, c), 2.0)
        out = lcor(rng.normal(size=(7, 3)) * 10, bank)
        assert np.all(out == c)


def test_cor_limit_and_complement(rng):
    s = np.zeros(2)
    vals = [cor(s, BinaryBank(s[None], np.array([[R, 0.0]]), 1.0)) for R in (1, 10, 100, 1e4)]
    assert vals[0] > 0.5 and np.all(np.diff(vals) > 0) and vals[-1] > 0.99
    for _ in range(20):
        bank = BinaryBank(rng.normal(size=(3, 2)), rng.normal(size=(5, 2)), 1.5)
        q = rng.normal(size=(4, 2))
        assert np.allclose(cor(q, bank) + cor(q, bank.swapped()), 1.0, atol=1e-15)


def test_policy_reward_eta_off():
    assert policy_reward(0.3, 0.9, 0.0) == -math.log(0.3)
    assert policy_reward(0.3, 0.0, 2.5) == policy_reward(0.3, 0.9, 0.0)
    assert np.isfinite(policy_reward(0.0, 1.0, 1.0)) and np.isfinite(policy_reward(1.0, 1.0, 1.0))


def test_alpha_validation():
    for bad in (0.0, -0.5, -2.0, float("nan")):
        with pytest.raises(ValueError):
            check_alpha(bad)
    with pytest.raises(ValueError):
        LeverageBank(np.zeros((1, 2)), np.array([1.2]))
    with pytest.raises(ValueError):
        LeverageBank(np.zeros((0, 2)), np.zeros(0))
    with pytest.raises(ValueError):
        lcor(np.zeros(3), LeverageBank(np.zeros((1, 2)), np.array([1.0])))


def test_kernel_strictly_decreasing():
    d = np.linspace(0, 50, 2001)
    for alpha in (0.01, 0.5, 1.0, 3.0, 20.0):
        assert np.all(np.diff(kernel(d, alpha)) < 0)


def test_far_queries_do_not_underflow():
    bank = LeverageBank(np.array([[0.0], [1.0]]), np.array([0.2, 0.8]), 50.0)
    v = lcor(np.array([1e9]), bank)
    assert np.isfinite(v) and 0.2 <= v <= 0.8


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.1, 10.0))
def test_lcor_bounded_and_permutation_invariant(seed, alpha):
    r = np.random.default_rng(seed)
    S = r.normal(size=(int(r.integers(1, 12)), 3))
    L = r.uniform(0, 1, len(S))
    q = r.normal(size=(5, 3)) * 3
    v = lcor(q, LeverageBank(S, L, alpha))
    assert np.all(v >= L.min()) and np.all(v <= L.max())
    perm = r.permutation(len(S))
    assert np.allclose(v, lcor(q, LeverageBank(S[perm], L[perm], alpha)), atol=1e-13, rtol=0)
