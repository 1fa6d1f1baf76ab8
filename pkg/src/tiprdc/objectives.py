"""Adversary cross-entropy and the Jensen-Shannon MI lower bound."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .nn import Critic
from .tensor import Tensor


class DataError(ValueError):
    """Labels or batches that violate a loss function's preconditions."""


def cross_entropy_loss(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood of integer ``labels`` under softmax(logits)."""
    labels = np.asarray(labels)
    n, k = logits.shape
    if labels.shape != (n,):
        raise DataError(f"cross_entropy_loss: expected {n} labels, got shape {labels.shape}")
    bad = np.flatnonzero((labels < 0) | (labels >= k))
    if bad.size:
        raise DataError(f"cross_entropy_loss: label {labels[bad[0]]} at row {bad[0]} outside [0, {k})")
    picked = T.sum(T.mul(logits, T.one_hot(labels, k)), axis=1)
    return T.mean(T.sub(T.logsumexp(logits, axis=1), picked))


def derangement(n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniformly random permutation of ``range(n)`` with no fixed point.

    Rejection sampling; the acceptance rate tends to 1/e so a few draws suffice.
    """
    if n < 2:
        raise DataError(f"derangement: need at least 2 rows, got {n}")
    idx = np.arange(n)
    while True:
        perm = rng.permutation(n)
        if not np.any(perm == idx):
            return perm


@dataclass
class JsdBatchPair:
    """Joint rows (x_i, z_i, u_i) and marginal rows (x_perm[i], z_i, u_i)."""

    x: Tensor
    x_marginal: Tensor
    z: Tensor
    u_onehot: Tensor
    permutation: np.ndarray

    def __len__(self) -> int:
        return self.x.shape[0]


def make_negative_batch(x, z: Tensor, u_onehot: Tensor, rng: np.random.Generator, permutation=None) -> JsdBatchPair:
    """Pair each (z_i, u_i) with a raw row drawn from elsewhere in the batch."""
    x = T.as_tensor(x)
    n = x.shape[0]
    perm = derangement(n, rng) if permutation is None else np.asarray(permutation)
    return JsdBatchPair(x=x, x_marginal=Tensor(x.data[perm]), z=z, u_onehot=u_onehot, permutation=perm)


def jsd_bound_from_scores(joint: Tensor, marginal: Tensor) -> Tensor:
    """mean(-sp(-T_joint)) - mean(sp(T_marginal))."""
    return T.sub(T.mean(-T.softplus(-joint)), T.mean(T.softplus(marginal)))


def jsd_mi_bound(critic: Critic, pair: JsdBatchPair) -> Tensor:
    """Empirical Jensen-Shannon lower bound on I(x; z, u); always <= 0."""
    if len(pair) < 2:
        raise DataError("jsd_mi_bound: batch size must be at least 2")
    joint = critic.critic_score(pair.x, pair.z, pair.u_onehot)
    marginal = critic.critic_score(pair.x_marginal, pair.z, pair.u_onehot)
    return jsd_bound_from_scores(joint, marginal)
