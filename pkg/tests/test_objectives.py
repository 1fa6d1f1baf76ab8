import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tiprdc import tensor as T
from tiprdc.nn import Critic, CriticSpec, zero_params
from tiprdc.objectives import (
    DataError,
    cross_entropy_loss,
    derangement,
    jsd_bound_from_scores,
    jsd_mi_bound,
    make_negative_batch,
)
from tiprdc.tensor import Tensor


def _softplus(v):
    return math.log1p(math.exp(-abs(v))) + max(v, 0.0)


def test_ce_uniform_two_classes():
    assert cross_entropy_loss(Tensor([[0.0, 0.0]]), [1]).item() == pytest.approx(math.log(2), abs=1e-12)


def test_ce_uniform_four_classes():
    logits = Tensor(np.zeros((3, 4)))
    assert cross_entropy_loss(logits, [0, 3, 2]).item() == pytest.approx(math.log(4), abs=1e-12)


def test_ce_confident():
    # -log sigmoid(20) by a scalar oracle
    ce = cross_entropy_loss(Tensor([[10.0, -10.0]]), [0]).item()
    assert ce == pytest.approx(_softplus(-20.0), rel=1e-9)
    assert ce == pytest.approx(2.06e-9, rel=1e-2)


def test_ce_huge_logits_finite():
    ce = cross_entropy_loss(Tensor([[1e4, -1e4, 0.0]]), [1]).item()
    assert ce == pytest.approx(2e4)


def test_ce_bad_label_names_row():
    with pytest.raises(DataError, match="row 1"):
        cross_entropy_loss(Tensor(np.zeros((2, 3))), [0, 3])


def test_jsd_zero_scores():
    z = Tensor(np.zeros((5, 1)))
    assert jsd_bound_from_scores(z, z).item() == pytest.approx(-2 * math.log(2), abs=1e-12)


def test_jsd_worked_example():
    joint = [1.0, -0.5]
    marg = [0.2, 0.3]
    expected = -np.mean([_softplus(-t) for t in joint]) - np.mean([_softplus(t) for t in marg])
    got = jsd_bound_from_scores(Tensor(np.array(joint)[:, None]), Tensor(np.array(marg)[:, None])).item()
    assert got == pytest.approx(expected, abs=1e-12)
    assert got == pytest.approx(-1.4699, abs=1e-4)


def test_jsd_perfect_critic_approaches_zero():
    got = jsd_bound_from_scores(Tensor(np.full((4, 1), 50.0)), Tensor(np.full((4, 1), -50.0))).item()
    assert -1e-20 < got <= 0.0


@settings(max_examples=200, deadline=None)
@given(
    joint=st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=20),
    marg=st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=20),
)
def test_jsd_never_positive(joint, marg):
    b = jsd_bound_from_scores(Tensor(np.array(joint)[:, None]), Tensor(np.array(marg)[:, None])).item()
    assert b <= 0.0


def test_zero_critic_gives_minus_two_ln_two_on_any_batch():
    critic = Critic(CriticSpec(3, 2, 2, hidden=(4, 4)), 0)
    zero_params(critic)
    rng = np.random.default_rng(0)
    x = rng.standard_normal((6, 3))
    pair = make_negative_batch(x, Tensor(rng.standard_normal((6, 2))), T.one_hot(rng.integers(0, 2, 6), 2), rng)
    assert jsd_mi_bound(critic, pair).item() == pytest.approx(-2 * math.log(2), abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(n=st.integers(2, 64), seed=st.integers(0, 2**32 - 1))
def test_derangement_properties(n, seed):
    p = derangement(n, np.random.default_rng(seed))
    assert sorted(p.tolist()) == list(range(n))
    assert not np.any(p == np.arange(n))


def test_derangement_needs_two_rows():
    with pytest.raises(DataError):
        derangement(1, np.random.default_rng(0))


def test_negative_batch_shuffles_only_x():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((5, 3))
    z = Tensor(rng.standard_normal((5, 2)))
    u = T.one_hot(np.arange(5) % 2, 2)
    pair = make_negative_batch(x, z, u, rng)
    np.testing.assert_array_equal(pair.x_marginal.data, x[pair.permutation])
    assert pair.z is z and pair.u_onehot is u


def test_jsd_batch_of_one_rejected():
    critic = Critic(CriticSpec(3, 2, 2, hidden=(4, 4)), 0)
    x = Tensor(np.ones((1, 3)))
    from tiprdc.objectives import JsdBatchPair

    pair = JsdBatchPair(x, x, Tensor(np.ones((1, 2))), Tensor(np.ones((1, 2))), np.array([0]))
    with pytest.raises(DataError):
        jsd_mi_bound(critic, pair)
