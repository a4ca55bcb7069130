"""Reward learning by maximum-entropy inverse reinforcement learning.

A small MLP scores state-action pairs.  Demonstrations are whole observed
trajectories; the model distribution over trajectories is p(tau) prop. to
exp(return(tau)), and its log partition function is estimated by importance
sampling against a uniform pair pool.  The resulting loss is the negative
demonstration log-likelihood plus an L2 penalty:

    loss = -mean_i(return(tau_i) - log Zhat) + lam * sum(theta^2)

Both the returns and the partition estimate stay differentiable, so one
backward pass yields the full MaxEnt gradient (demo feature expectations
minus model expectations).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .domain import (
    ACTION_DIM,
    STATE_DIM,
    Trajectory,
    action_array,
    translate_features,
)
from .errors import InvalidInput

PAIR_DIM = STATE_DIM + ACTION_DIM


@dataclass(eq=False)
class RewardParams:
    w1: object
    b1: object
    w2: object
    b2: object
    w3: object
    b3: object
    lam: float = 1e-3  # L2 weight used when loss_rf is not given one


def init_reward_params(rng, state_dim: int = STATE_DIM,
                       action_dim: int = ACTION_DIM, hidden: int = 64,
                       lam: float = 1e-3) -> RewardParams:
    def uni(shape, fan_in):
        s = 1.0 / np.sqrt(max(fan_in, 1))
        return Tensor(rng.uniform(-s, s, size=shape))

    d = state_dim + action_dim
    return RewardParams(
        w1=uni((d, hidden), d), b1=Tensor(np.zeros(hidden)),
        w2=uni((hidden, hidden), hidden), b2=Tensor(np.zeros(hidden)),
        w3=uni((hidden, 1), hidden), b3=Tensor(np.zeros(1)),
        lam=lam,
    )


def reward_pairs(pairs, params: RewardParams):
    """Scores for (..., 9) state-action pairs; returns shape (...)."""
    h = ad.tanh(pairs @ params.w1 + params.b1)
    h = ad.tanh(h @ params.w2 + params.b2)
    out = h @ params.w3 + params.b3
    shape = out.data.shape if isinstance(out, Tensor) else out.shape
    return out.reshape(shape[:-1])


def reward(state, action, params: RewardParams):
    """Score one (or a batch of) state-action pairs given separately."""
    pairs = ad.concat([_as64(state), _as64(action)], axis=-1)
    return reward_pairs(pairs, params)


def _as64(x):
    return x if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def trajectory_pairs(traj: Trajectory) -> np.ndarray:
    """(n - 1, 9) pair features of a trajectory, states taken as stored."""
    feats = traj.features()[:-1]
    return np.concatenate([feats, action_array(traj)], axis=1)


def trajectory_return(traj: Trajectory, params: RewardParams):
    """Sum of pair rewards along a trajectory.

    Additive under concatenation at a shared boundary state, since every
    pair is scored independently.
    """
    return reward_pairs(trajectory_pairs(traj), params).sum()


@dataclass(eq=False)
class DemonstrationSet:
    """State-action demonstrations grouped by source trajectory.

    states[i] is (K_i + 1, 7) and actions[i] is (K_i, 2); keeping the
    states around (not only the fused pairs) preserves the successor of
    every pair, which replay construction needs.
    """

    states: list = field(default_factory=list)
    actions: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.states) != len(self.actions):
            raise InvalidInput("states and actions must pair up per trajectory")
        for s, a in zip(self.states, self.actions):
            if len(s) != len(a) + 1 or s.shape[1:] != (STATE_DIM,) \
                    or a.shape[1:] != (ACTION_DIM,):
                raise InvalidInput(
                    f"demonstration shapes disagree: {s.shape} vs {a.shape}"
                )

    def __len__(self) -> int:
        return len(self.states)

    @property
    def n_pairs(self) -> int:
        return sum(len(a) for a in self.actions)

    @property
    def policy_constant(self) -> float:
        """Uniform sampling density over the pair pool."""
        if self.n_pairs == 0:
            raise InvalidInput("empty demonstration set")
        return 1.0 / self.n_pairs

    def pair_arrays(self) -> list:
        return [
            np.concatenate([s[:-1], a], axis=1)
            for s, a in zip(self.states, self.actions)
        ]

    def pool(self) -> np.ndarray:
        """(P, 9) concatenation of every demonstration pair."""
        arrays = self.pair_arrays()
        if not arrays:
            raise InvalidInput("empty demonstration set")
        return np.concatenate(arrays, axis=0)

    @classmethod
    def from_trajectories(cls, trajectories) -> "DemonstrationSet":
        states, actions = [], []
        for traj in trajectories:
            states.append(traj.features())
            actions.append(action_array(traj))
        return cls(states=states, actions=actions)

    @classmethod
    def from_instances(cls, instances) -> "DemonstrationSet":
        """Windows become demonstrations in their own scene-local frame."""
        states, actions = [], []
        for inst in instances:
            feats = np.concatenate(
                [inst.target_history.features(), inst.target_future.features()],
                axis=0,
            )
            feats = translate_features(feats, inst.anchor)
            states.append(feats)
            actions.append(np.diff(feats[:, :2], axis=0))
        return cls(states=states, actions=actions)


def estimate_logZ(sample_pairs, params: RewardParams,
                  policy_constant: float = 1.0):
    """Importance-sampled log partition estimate from (M, 9) pairs.

    log Zhat = logsumexp(R_j) - log M - log policy_constant, computed with
    the usual max-shift so large rewards cannot overflow.  Differentiable
    in the reward parameters.
    """
    shape = sample_pairs.data.shape if isinstance(sample_pairs, Tensor) \
        else np.asarray(sample_pairs).shape
    m = shape[0]
    if m == 0:
        raise InvalidInput("need at least one sampled pair")
    if not (policy_constant > 0.0):
        raise InvalidInput(f"policy constant must be positive: {policy_constant}")
    r = reward_pairs(sample_pairs, params)
    r_data = r.data if isinstance(r, Tensor) else r
    shift = float(np.max(r_data))
    return ad.log(ad.exp(r - shift).sum()) + shift - np.log(m) \
        - np.log(policy_constant)


def loss_rf(demo_batch, sample_pairs, params: RewardParams,
            lam: float | None = None, policy_constant: float = 1.0):
    """Negative demonstration log-likelihood plus L2 regularization.

    demo_batch is a list of (K_i, 9) pair arrays, one per trajectory; the
    same log-partition estimate is shared across the batch.
    """
    if not demo_batch:
        raise InvalidInput("empty demonstration batch")
    lam = params.lam if lam is None else lam
    log_z = estimate_logZ(sample_pairs, params, policy_constant)
    returns = [reward_pairs(pairs, params).sum() for pairs in demo_batch]
    total = returns[0]
    for r in returns[1:]:
        total = total + r
    nll = -(total / len(returns) - log_z)
    reg = (params.w1 * params.w1).sum() + (params.b1 * params.b1).sum() \
        + (params.w2 * params.w2).sum() + (params.b2 * params.b2).sum() \
        + (params.w3 * params.w3).sum() + (params.b3 * params.b3).sum()
    return nll + lam * reg
