import numpy as np
import pytest

from trajkit.domain import translate_features
from trajkit.errors import InvalidInput
from trajkit.optim import detach_params, state_arrays
from trajkit.policy import (
    Replay,
    TD3Config,
    actor_forward,
    build_replay,
    critic_forward,
    critic_targets,
    init_policy_params,
    label_rewards,
    load_policy,
    ood_predict,
    save_policy,
    soft_update,
    td3_train,
)
from trajkit.reward import DemonstrationSet, init_reward_params, reward
from trajkit.training import init_tpm_params, predict_states

from test_training import linear_instances


def toy_replay(rng, n=64):
    states = rng.uniform(-1, 1, size=(n, 7))
    actions = rng.uniform(-1, 1, size=(n, 2))
    return Replay(
        states=states,
        actions=actions,
        next_states=rng.uniform(-1, 1, size=(n, 7)),
        done=np.ones(n),
    )


def test_actor_outputs_stay_bounded():
    rng = np.random.default_rng(0)
    params = detach_params(init_policy_params(rng, hidden=8, a_max=2.5))
    states = rng.normal(scale=50.0, size=(200, 7))
    acts = actor_forward(states, params.actor, 2.5)
    assert acts.shape == (200, 2)
    assert np.all(np.abs(acts) < 2.5)
    np.testing.assert_array_equal(
        acts, actor_forward(states, params.actor, 2.5)
    )


def test_critic_matches_scalar_loop():
    rng = np.random.default_rng(1)
    params = detach_params(init_policy_params(rng, hidden=6))
    s = rng.normal(size=(5, 7))
    a = rng.normal(size=(5, 2))
    q = critic_forward(s, a, params.critic1)
    assert q.shape == (5,)
    c = params.critic1
    for i in range(5):
        x = np.concatenate([s[i], a[i]])
        h = np.tanh(np.tanh(x @ c.w1 + c.b1) @ c.w2 + c.b2)
        assert q[i] == pytest.approx(float((h @ c.w3 + c.b3)[0]), rel=1e-12)


def test_build_replay_aligns_successors():
    rng = np.random.default_rng(2)
    demos = DemonstrationSet(
        states=[rng.normal(size=(5, 7)), rng.normal(size=(3, 7))],
        actions=[rng.normal(size=(4, 2)), rng.normal(size=(2, 2))],
    )
    replay = build_replay(demos)
    assert len(replay) == 6
    np.testing.assert_array_equal(replay.states[:4], demos.states[0][:-1])
    np.testing.assert_array_equal(replay.next_states[:4], demos.states[0][1:])
    np.testing.assert_array_equal(replay.done, [0, 0, 0, 1, 0, 1])
    with pytest.raises(InvalidInput):
        build_replay(DemonstrationSet())
    with pytest.raises(InvalidInput):
        Replay(np.zeros((2, 7)), np.zeros((3, 2)), np.zeros((2, 7)), np.zeros(2))


def test_label_rewards_subtracts_cloning_penalty():
    rng = np.random.default_rng(3)
    replay = toy_replay(rng, n=16)
    params = detach_params(init_policy_params(rng, hidden=6, a_max=1.0))
    rparams = detach_params(init_reward_params(rng, hidden=6))

    def fn(s, a):
        return reward(s, a, rparams)

    base = label_rewards(replay, fn, params, bc_weight=0.0)
    np.testing.assert_array_equal(base, fn(replay.states, replay.actions))
    shaped = label_rewards(replay, fn, params, bc_weight=0.7)
    pi = actor_forward(replay.states, params.actor, 1.0)
    gap = np.sum((replay.actions - pi) ** 2, axis=1)
    np.testing.assert_allclose(shaped, base - 0.7 * gap, rtol=1e-12)


def test_critic_targets_match_hand_oracle():
    rng = np.random.default_rng(4)
    replay = toy_replay(rng, n=8)
    params = detach_params(init_policy_params(rng, hidden=5, a_max=1.5))
    r = rng.normal(size=8)
    done = (rng.uniform(size=8) < 0.5).astype(np.float64)
    noise = np.clip(rng.normal(size=(8, 2)) * 0.2, -0.5, 0.5)
    got = critic_targets(replay.next_states, r, done, params, noise, gamma=0.9)

    a2 = np.clip(
        actor_forward(replay.next_states, params.actor_target, 1.5) + noise,
        -1.5, 1.5,
    )
    q = np.minimum(
        critic_forward(replay.next_states, a2, params.critic1_target),
        critic_forward(replay.next_states, a2, params.critic2_target),
    )
    np.testing.assert_allclose(got, r + 0.9 * (1.0 - done) * q, rtol=1e-12)


def test_soft_update_blends_toward_online():
    rng = np.random.default_rng(5)
    params = init_policy_params(rng, hidden=4)
    before = params.actor_target.w1.copy()
    # targets start as exact copies of the online nets, not views of them
    np.testing.assert_array_equal(before, params.actor.w1.data)
    assert params.actor_target.w1 is not params.actor.w1.data
    params.actor.w1.data = params.actor.w1.data + 1.0
    soft_update(params.actor_target, params.actor, tau=0.25)
    np.testing.assert_allclose(
        params.actor_target.w1, before + 0.25, rtol=1e-12
    )


def test_td3_update_counts_and_determinism():
    rng = np.random.default_rng(6)
    replay = toy_replay(rng, n=40)
    cfg = TD3Config(epochs=3, batch_size=16, hidden=6, policy_delay=3,
                    bc_weight=0.0, seed=11)

    def fn(s, a):
        return -np.sum(a**2, axis=1)

    result = td3_train(replay, reward_fn=fn, config=cfg)
    # 3 batches per epoch, 9 critic updates, every third one moves the actor
    assert result.history[-1]["critic_updates"] == 9
    assert result.history[-1]["actor_updates"] == 3
    assert all(e["critic_loss"] is not None for e in result.history)

    again = td3_train(replay, reward_fn=fn, config=cfg)
    sa = state_arrays({"a": result.params.actor, "c1": result.params.critic1})
    sb = state_arrays({"a": again.params.actor, "c1": again.params.critic1})
    for k in sa:
        np.testing.assert_array_equal(sa[k], sb[k])
    # targets trail the online nets rather than tracking them exactly
    assert not np.array_equal(
        result.params.actor_target.w1, result.params.actor.w1.data
    )

    with pytest.raises(InvalidInput):
        td3_train(replay, config=cfg)  # no reward source given
    with pytest.raises(InvalidInput):
        TD3Config(tau=0.0)
    with pytest.raises(InvalidInput):
        TD3Config(gamma=1.0)
    with pytest.raises(InvalidInput):
        TD3Config(policy_delay=0)


def test_td3_recovers_known_optimal_policy():
    # Single-step episodes with r = -||a - 0.5 s_xy||^2: the critic can
    # represent r exactly and the greedy actor must approach 0.5 s_xy.
    rng = np.random.default_rng(7)
    replay = toy_replay(rng, n=256)

    def fn(s, a):
        return -np.sum((a - 0.5 * s[:, :2]) ** 2, axis=1)

    cfg = TD3Config(epochs=300, batch_size=64, hidden=32, a_max=1.0,
                    lr_actor=1e-3, lr_critic=3e-3, bc_weight=0.0, seed=3)
    result = td3_train(replay, reward_fn=fn, config=cfg)
    probe = np.random.default_rng(8).uniform(-1, 1, size=(128, 7))
    acts = actor_forward(probe, detach_params(result.params.actor), 1.0)
    err = np.abs(acts - 0.5 * probe[:, :2]).mean()
    assert err < 0.05


def test_ood_predict_accumulates_policy_steps():
    rng = np.random.default_rng(9)
    instances = linear_instances(rng)[:3]
    tpm = init_tpm_params(rng, hidden=5, att_dim=4, channels=4, order=2)
    policy = init_policy_params(rng, hidden=6, a_max=2.0)
    preds = ood_predict(instances, tpm, policy)
    assert len(preds) == len(instances)
    for inst, pos in zip(instances, preds):
        assert pos.shape == (inst.horizon, 2)
        # every step stays inside the actor bound
        steps = np.diff(np.concatenate([np.zeros((1, 2)), pos]), axis=0)
        assert np.all(np.abs(steps) < 2.0)
        # oracle: decoder states in, cumulative actor displacements out
        states = predict_states(inst, detach_params(tpm))
        last = translate_features(
            inst.target_history.features()[-1], inst.anchor
        )
        seq = np.concatenate([last[None], states[:-1]], axis=0)
        acts = actor_forward(seq, detach_params(policy).actor, 2.0)
        np.testing.assert_allclose(pos, np.cumsum(acts, axis=0), rtol=1e-12)


def test_policy_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(4)
    replay = toy_replay(rng, n=32)
    cfg = TD3Config(epochs=2, batch_size=16, hidden=8, seed=1, bc_weight=0.0)
    result = td3_train(replay, config=cfg,
                       reward_fn=lambda s, a: -np.sum(a * a, axis=-1))
    path = tmp_path / "policy.npz"
    save_policy(path, result.params, cfg, history=result.history)

    params, loaded_cfg, history = load_policy(path)
    assert loaded_cfg == cfg
    assert history == result.history
    states = rng.normal(size=(5, 7))
    want = actor_forward(states, detach_params(result.params).actor, cfg.a_max)
    got = actor_forward(states, detach_params(params).actor, cfg.a_max)
    np.testing.assert_array_equal(got, want)
    # targets come back in sync with the online nets
    np.testing.assert_array_equal(params.actor_target.w1, params.actor.w1.data)


def test_load_policy_rejects_missing_file(tmp_path):
    from trajkit.errors import CheckpointError

    with pytest.raises(CheckpointError, match="not found"):
        load_policy(tmp_path / "nope.npz")
