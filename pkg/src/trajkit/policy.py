"""Bounded explicit policy for out-of-distribution prediction.

The autoregressive decoder extrapolates: on inputs far from the training
distribution its state feedback loop can run positions out at arbitrary
speed.  The policy head caps that failure mode.  A deterministic actor
emits per-step displacements squashed into [-a_max, a_max], trained
offline with twin-delayed Q-learning on demonstration transitions whose
rewards come from the learned reward net, shaped by a behavior-cloning
penalty that keeps the actor near demonstrated actions where data exists.
At prediction time the decoder still supplies the state context, but
positions accumulate the actor's bounded steps instead of the decoder's
raw coordinates.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .domain import ACTION_DIM, STATE_DIM, translate_features
from .errors import CheckpointError, InvalidInput
from .optim import Adam, collect_tensors, detach_params, load_state, state_arrays
from .reward import reward
from .training import TpmParams, predict_states


@dataclass(eq=False)
class Mlp:
    w1: object
    b1: object
    w2: object
    b2: object
    w3: object
    b3: object


def init_mlp(rng, d_in: int, hidden: int, d_out: int) -> Mlp:
    def uni(shape, fan_in):
        s = 1.0 / np.sqrt(max(fan_in, 1))
        return Tensor(rng.uniform(-s, s, size=shape))

    return Mlp(
        w1=uni((d_in, hidden), d_in), b1=Tensor(np.zeros(hidden)),
        w2=uni((hidden, hidden), hidden), b2=Tensor(np.zeros(hidden)),
        w3=uni((hidden, d_out), hidden), b3=Tensor(np.zeros(d_out)),
    )


def mlp_forward(x, mlp: Mlp):
    h = ad.tanh(x @ mlp.w1 + mlp.b1)
    h = ad.tanh(h @ mlp.w2 + mlp.b2)
    return h @ mlp.w3 + mlp.b3


def actor_forward(states, actor: Mlp, a_max: float):
    """Deterministic bounded actions: a_max * tanh(mlp(s))."""
    return a_max * ad.tanh(mlp_forward(states, actor))


def critic_forward(states, actions, critic: Mlp):
    """Scalar action values for (..., 7) states and (..., 2) actions."""
    q = mlp_forward(ad.concat([states, actions], axis=-1), critic)
    shape = q.data.shape if isinstance(q, Tensor) else q.shape
    return q.reshape(shape[:-1])


@dataclass(eq=False)
class PolicyParams:
    """Online actor/critic tensors plus their slow-moving target copies.

    Targets hold plain arrays, so parameter collection and the optimizer
    see only the online networks.
    """

    actor: Mlp
    critic1: Mlp
    critic2: Mlp
    actor_target: Mlp
    critic1_target: Mlp
    critic2_target: Mlp
    a_max: float = 6.0


def init_policy_params(rng, state_dim: int = STATE_DIM,
                       action_dim: int = ACTION_DIM, hidden: int = 64,
                       a_max: float = 6.0) -> PolicyParams:
    if not (a_max > 0.0):
        raise InvalidInput(f"a_max must be positive: {a_max}")
    actor = init_mlp(rng, state_dim, hidden, action_dim)
    c1 = init_mlp(rng, state_dim + action_dim, hidden, 1)
    c2 = init_mlp(rng, state_dim + action_dim, hidden, 1)
    return PolicyParams(
        actor=actor, critic1=c1, critic2=c2,
        actor_target=frozen_copy(actor),
        critic1_target=frozen_copy(c1),
        critic2_target=frozen_copy(c2),
        a_max=a_max,
    )


def frozen_copy(mlp: Mlp) -> Mlp:
    """Detached deep copy; targets must never alias the online arrays."""
    kwargs = {}
    for f in dataclasses.fields(Mlp):
        v = getattr(mlp, f.name)
        v = v.data if isinstance(v, Tensor) else v
        kwargs[f.name] = np.array(v, copy=True)
    return Mlp(**kwargs)


def soft_update(target: Mlp, online: Mlp, tau: float) -> None:
    for f in dataclasses.fields(Mlp):
        t = getattr(target, f.name)
        p = getattr(online, f.name)
        t += tau * (p.data - t)


def sync_targets(params: PolicyParams) -> None:
    params.actor_target = frozen_copy(params.actor)
    params.critic1_target = frozen_copy(params.critic1)
    params.critic2_target = frozen_copy(params.critic2)


@dataclass(eq=False)
class Replay:
    """Flat transition arrays; done marks each trajectory's last step."""

    states: np.ndarray
    actions: np.ndarray
    next_states: np.ndarray
    done: np.ndarray

    def __post_init__(self):
        n = len(self.states)
        if not (len(self.actions) == len(self.next_states) == len(self.done) == n):
            raise InvalidInput("replay arrays must share their leading length")
        if n == 0:
            raise InvalidInput("empty replay")

    def __len__(self) -> int:
        return len(self.states)


def build_replay(demos) -> Replay:
    """Transitions from a demonstration set, successor states included."""
    states, actions, nexts, done = [], [], [], []
    for s, a in zip(demos.states, demos.actions):
        k = len(a)
        states.append(s[:-1])
        actions.append(a)
        nexts.append(s[1:])
        flags = np.zeros(k, dtype=np.float64)
        flags[-1] = 1.0
        done.append(flags)
    if not states:
        raise InvalidInput("empty demonstration set")
    return Replay(
        states=np.concatenate(states, axis=0),
        actions=np.concatenate(actions, axis=0),
        next_states=np.concatenate(nexts, axis=0),
        done=np.concatenate(done, axis=0),
    )


def label_rewards(replay: Replay, reward_fn, params: PolicyParams,
                  bc_weight: float) -> np.ndarray:
    """Per-transition labels: learned reward minus a cloning penalty.

    The penalty -bc_weight * ||a - pi(s)||^2 is recomputed whenever the
    actor moves, so value targets track the current policy.
    """
    r = np.asarray(reward_fn(replay.states, replay.actions), dtype=np.float64)
    if bc_weight != 0.0:
        pi = actor_forward(replay.states, detach_params(params.actor),
                           params.a_max)
        r = r - bc_weight * np.sum((replay.actions - pi) ** 2, axis=1)
    return r


def critic_targets(next_states, rewards, done, params: PolicyParams,
                   noise: np.ndarray, gamma: float) -> np.ndarray:
    """Bootstrapped values through the target networks, numpy only.

    noise is the already-clipped perturbation added to the target action.
    """
    a2 = actor_forward(next_states, params.actor_target, params.a_max) + noise
    a2 = np.clip(a2, -params.a_max, params.a_max)
    q1 = critic_forward(next_states, a2, params.critic1_target)
    q2 = critic_forward(next_states, a2, params.critic2_target)
    return rewards + gamma * (1.0 - done) * np.minimum(q1, q2)


@dataclass
class TD3Config:
    epochs: int = 30
    batch_size: int = 64
    lr_actor: float = 1e-3
    lr_critic: float = 1e-3
    gamma: float = 0.99
    tau: float = 0.005
    policy_noise: float = 0.2
    noise_clip: float = 0.5
    policy_delay: int = 3
    a_max: float = 6.0
    hidden: int = 64
    bc_weight: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.policy_delay < 1:
            raise InvalidInput("epochs, batch_size, policy_delay must be positive")
        if not (0.0 < self.tau <= 1.0):
            raise InvalidInput(f"tau must be in (0, 1]: {self.tau}")
        if not (0.0 <= self.gamma < 1.0):
            raise InvalidInput(f"gamma must be in [0, 1): {self.gamma}")
        for name in ("lr_actor", "lr_critic", "a_max"):
            if not (getattr(self, name) > 0.0):
                raise InvalidInput(f"{name} must be positive")
        if self.bc_weight < 0.0 or self.policy_noise < 0.0 or self.noise_clip < 0.0:
            raise InvalidInput("noise and cloning weights must be nonnegative")


@dataclass(eq=False)
class PolicyResult:
    params: PolicyParams
    config: TD3Config
    history: list = field(default_factory=list)


def td3_train(replay: Replay, reward_params=None, config: TD3Config | None = None,
              reward_fn=None, callback=None) -> PolicyResult:
    """Offline twin-delayed deterministic policy training.

    reward_fn(states, actions) labels transitions; by default it is the
    learned reward net.  Critics update every batch; the actor and the
    target networks update every policy_delay-th batch.
    """
    cfg = config if config is not None else TD3Config()
    if reward_fn is None:
        if reward_params is None:
            raise InvalidInput("need reward_params or an explicit reward_fn")
        frozen = detach_params(reward_params)

        def reward_fn(s, a):
            return reward(s, a, frozen)

    rng = np.random.default_rng(cfg.seed)
    params = init_policy_params(rng, hidden=cfg.hidden, a_max=cfg.a_max)
    opt_a = Adam(collect_tensors(params.actor), lr=cfg.lr_actor)
    opt_c = Adam(collect_tensors({"c1": params.critic1, "c2": params.critic2}),
                 lr=cfg.lr_critic)

    n = len(replay)
    history = []
    critic_updates = 0
    actor_updates = 0
    for epoch in range(cfg.epochs):
        labels = label_rewards(replay, reward_fn, params, cfg.bc_weight)
        order = rng.permutation(n)
        closses, alosses = [], []
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            s, a = replay.states[idx], replay.actions[idx]
            s2, d, r = replay.next_states[idx], replay.done[idx], labels[idx]

            noise = np.clip(
                rng.normal(size=(len(idx), ACTION_DIM)) * cfg.policy_noise,
                -cfg.noise_clip, cfg.noise_clip,
            )
            y = critic_targets(s2, r, d, params, noise, cfg.gamma)

            opt_c.zero_grad()
            q1 = critic_forward(s, a, params.critic1)
            q2 = critic_forward(s, a, params.critic2)
            d1, d2 = q1 - y, q2 - y
            closs = (d1 * d1).mean() + (d2 * d2).mean()
            closs.backward()
            opt_c.step()
            critic_updates += 1
            closses.append(float(closs.data))

            if critic_updates % cfg.policy_delay == 0:
                opt_a.zero_grad()
                acts = actor_forward(s, params.actor, cfg.a_max)
                aloss = -critic_forward(s, acts, params.critic1).mean()
                aloss.backward()
                opt_a.step()
                actor_updates += 1
                alosses.append(float(aloss.data))
                soft_update(params.actor_target, params.actor, cfg.tau)
                soft_update(params.critic1_target, params.critic1, cfg.tau)
                soft_update(params.critic2_target, params.critic2, cfg.tau)

        entry = {
            "epoch": epoch,
            "critic_loss": float(np.mean(closses)),
            "actor_loss": float(np.mean(alosses)) if alosses else None,
            "critic_updates": critic_updates,
            "actor_updates": actor_updates,
        }
        history.append(entry)
        if callback is not None:
            callback(entry)

    return PolicyResult(params=params, config=cfg, history=history)


def ood_predict(instances, tpm_params: TpmParams, policy_params: PolicyParams,
                use_gnn: bool = True, radius: float = 30.0) -> list:
    """Scene-local predicted positions with policy-bounded step sizes.

    The decoder supplies the rolled-out state sequence; the actor converts
    each state into a displacement, and positions are the running sum of
    those displacements from the last observed point.  Returns one (H, 2)
    array per instance.
    """
    tpm = detach_params(tpm_params)
    policy = detach_params(policy_params)
    out = []
    for inst in instances:
        pred = predict_states(inst, tpm, use_gnn=use_gnn, radius=radius)
        last = translate_features(
            inst.target_history.features()[-1], inst.anchor
        )
        state_seq = np.concatenate([last[None], pred[:-1]], axis=0)
        acts = actor_forward(state_seq, policy.actor, policy.a_max)
        out.append(np.cumsum(acts, axis=0))
    return out


def save_policy(path, params: PolicyParams, config: TD3Config,
                history=None) -> None:
    """Archive the online nets plus a JSON header; targets are derived."""
    meta = {
        "config": dataclasses.asdict(config),
        "history": history or [],
    }
    np.savez(path, __meta__=np.array(json.dumps(meta)),
             **state_arrays({"policy": params}))


def load_policy(path):
    """Rebuild (params, config, history); targets resync from online nets."""
    try:
        with np.load(path, allow_pickle=False) as z:
            if "__meta__" not in z:
                raise CheckpointError(f"no metadata record in {path}")
            meta = json.loads(str(z["__meta__"]))
            arrays = {k: z[k] for k in z.files if k != "__meta__"}
    except FileNotFoundError as exc:
        raise CheckpointError(f"policy checkpoint not found: {path}") from exc
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"unreadable policy file {path}: {exc}") from exc

    try:
        cfg = TD3Config(**meta["config"])
    except (KeyError, TypeError, InvalidInput) as exc:
        raise CheckpointError(f"bad policy config: {exc}") from exc
    params = init_policy_params(np.random.default_rng(0), hidden=cfg.hidden,
                                a_max=cfg.a_max)
    try:
        load_state({"policy": params}, arrays)
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"policy arrays do not match: {exc}") from exc
    sync_targets(params)
    return params, cfg, meta.get("history", [])
