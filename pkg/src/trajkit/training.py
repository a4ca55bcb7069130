"""Joint training of the trajectory predictor and the learned reward.

The predictor is the encoder-decoder composition: per-agent GRU summaries,
one graph-attention exchange, then an autoregressive state-space rollout.
Its loss is the coordinate error of the predicted positions minus a bonus
proportional to the learned return of the predicted trajectory, so the
reward shapes predictions toward demonstrated behavior.  The reward itself
is refit between predictor updates by maximum-entropy IRL, with the
predictor's own outputs serving as the sampled competition for the
partition estimate.  The two updates alternate every batch.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import build_graph
from .domain import FEATURE_SCALE, STATE_DIM, PredictionInstance, translate_features
from .encoder import EncoderParams, encode, init_encoder_params
from .errors import CheckpointError, InvalidInput
from .optim import Adam, collect_tensors, detach_params, load_state, state_arrays
from .reward import (
    DemonstrationSet,
    RewardParams,
    estimate_logZ,
    init_reward_params,
    loss_rf,
    reward_pairs,
)
from .ssm import SsmParams, init_ssm_params, rollout


@dataclass(eq=False)
class TpmParams:
    """Predictor parameters: encoder and decoder halves."""

    encoder: EncoderParams
    decoder: SsmParams


def init_tpm_params(rng, state_dim: int = STATE_DIM, hidden: int = 64,
                    att_dim: int | None = None, channels: int = 64,
                    order: int = 16, selective: bool = True) -> TpmParams:
    return TpmParams(
        encoder=init_encoder_params(rng, state_dim=state_dim, hidden=hidden,
                                    att_dim=att_dim),
        decoder=init_ssm_params(rng, feature_dim=state_dim, channels=channels,
                                order=order, encoder_hidden=hidden,
                                selective=selective),
    )


def predict_states(instance: PredictionInstance, params: TpmParams,
                   graph=None, use_gnn: bool = True, radius: float = 30.0):
    """(horizon, 7) future states in the instance's scene-local frame.

    The recurrence runs in the order-one normalized feature space; outputs
    come back in scene units.  Differentiable when params hold Tensors;
    plain numpy otherwise.
    """
    h = encode(instance, params.encoder, graph=graph, use_gnn=use_gnn,
               radius=radius)
    last = translate_features(
        instance.target_history.features()[-1], instance.anchor
    )
    states = rollout(h, last * FEATURE_SCALE, instance.horizon,
                     params.decoder)
    return states * (1.0 / FEATURE_SCALE)


def prediction_pairs(last_state, pred_states):
    """(horizon, 9) state-action pairs along a predicted trajectory.

    The k-th pair is the state the step was taken from (the last observed
    state for k = 0) fused with the position displacement it produced.
    """
    states = ad.concat(
        [last_state.reshape((1, STATE_DIM)), pred_states[:-1]], axis=0
    )
    pos = ad.concat(
        [last_state[:2].reshape((1, 2)), pred_states[:, :2]], axis=0
    )
    actions = pos[1:] - pos[:-1]
    return ad.concat([states, actions], axis=1)


def loss_tpm(instances, params: TpmParams, graphs=None, reward_params=None,
             gamma_reward: float = 0.0, log_z: float = 0.0,
             use_gnn: bool = True, radius: float = 30.0):
    """Batch predictor loss and a dict of detached diagnostics.

    Coordinate mean squared error, minus gamma_reward times the mean
    learned return of the predicted trajectories (relative to log_z).
    reward_params must already be detached; the reward is a fixed critic
    here, never updated through this loss.
    """
    if not instances:
        raise InvalidInput("empty batch")
    if graphs is None:
        graphs = [None] * len(instances)
    mse_total = None
    ret_total = None
    pred_pair_arrays = []
    for inst, graph in zip(instances, graphs):
        pred = predict_states(inst, params, graph=graph, use_gnn=use_gnn,
                              radius=radius)
        gt = translate_features(inst.target_future.features(), inst.anchor)
        diff = pred[:, :2] - gt[:, :2]
        mse = (diff * diff).mean()
        mse_total = mse if mse_total is None else mse_total + mse
        if reward_params is not None and gamma_reward != 0.0:
            last = translate_features(
                inst.target_history.features()[-1], inst.anchor
            )
            pairs = prediction_pairs(last, pred)
            ret = reward_pairs(pairs, reward_params).sum()
            ret_total = ret if ret_total is None else ret_total + ret
            pred_pair_arrays.append(
                pairs.data.copy() if isinstance(pairs, Tensor) else pairs.copy()
            )
    n = len(instances)
    loss = mse_total / n
    info = {"mse": _scalar(mse_total) / n, "mean_return": None,
            "log_z": log_z, "pred_pairs": pred_pair_arrays}
    if ret_total is not None:
        info["mean_return"] = _scalar(ret_total) / n
        loss = loss - gamma_reward * (ret_total / n - log_z)
    return loss, info


def _scalar(x) -> float:
    return float(x.data) if isinstance(x, Tensor) else float(x)


@dataclass
class TrainConfig:
    epochs: int = 10
    batch_size: int = 8
    lr_predictor: float = 1e-3
    lr_reward: float = 1e-3
    lr_decay: float = 1.0
    lr_warmup: int = 0
    gamma_reward: float = 0.01
    grad_clip: float | None = 5.0
    hidden: int = 64
    att_dim: int | None = None
    channels: int = 64
    order: int = 16
    selective: bool = True
    use_gnn: bool = True
    use_irl: bool = True
    radius: float = 30.0
    reward_hidden: int = 64
    reward_lam: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise InvalidInput("epochs and batch_size must be positive")
        for name in ("lr_predictor", "lr_reward"):
            if not (getattr(self, name) > 0.0):
                raise InvalidInput(f"{name} must be positive")
        if not (0.0 < self.lr_decay <= 1.0):
            raise InvalidInput("lr_decay must be in (0, 1]")
        if self.lr_warmup < 0:
            raise InvalidInput("lr_warmup must be nonnegative")
        if self.gamma_reward < 0.0:
            raise InvalidInput("gamma_reward must be nonnegative")
        if self.grad_clip is not None and not (self.grad_clip > 0.0):
            raise InvalidInput("grad_clip must be positive or None")


@dataclass(eq=False)
class TrainResult:
    params: TpmParams
    reward_params: RewardParams | None
    config: TrainConfig
    history: list = field(default_factory=list)


def predict_positions(instances, params: TpmParams, graphs=None,
                      use_gnn: bool = True, radius: float = 30.0) -> list:
    """Scene-local (H, 2) predicted positions, one array per instance."""
    detached = detach_params(params)
    if graphs is None:
        graphs = [None] * len(instances)
    return [
        np.asarray(predict_states(inst, detached, graph=g, use_gnn=use_gnn,
                                  radius=radius))[:, :2]
        for inst, g in zip(instances, graphs)
    ]


def evaluate_instances(instances, params: TpmParams, graphs=None,
                       use_gnn: bool = True, radius: float = 30.0) -> dict:
    """Mean average and final displacement over a set of instances."""
    detached = detach_params(params)
    if graphs is None:
        graphs = [None] * len(instances)
    ades, fdes = [], []
    for inst, graph in zip(instances, graphs):
        pred = predict_states(inst, detached, graph=graph, use_gnn=use_gnn,
                              radius=radius)
        gt = translate_features(inst.target_future.features(), inst.anchor)
        d = np.linalg.norm(pred[:, :2] - gt[:, :2], axis=1)
        ades.append(d.mean())
        fdes.append(d[-1])
    return {"ade": float(np.mean(ades)), "fde": float(np.mean(fdes))}


def train(train_instances, val_instances=None, config: TrainConfig | None = None,
          callback=None) -> TrainResult:
    """Alternating predictor / reward optimization over windowed instances."""
    if not train_instances:
        raise InvalidInput("no training instances")
    cfg = config if config is not None else TrainConfig()
    rng = np.random.default_rng(cfg.seed)
    params = init_tpm_params(rng, hidden=cfg.hidden, att_dim=cfg.att_dim,
                             channels=cfg.channels, order=cfg.order,
                             selective=cfg.selective)
    opt_p = Adam(collect_tensors(params), lr=cfg.lr_predictor,
                 clip_norm=cfg.grad_clip)

    reward_params = None
    opt_r = None
    demo_pairs = None
    if cfg.use_irl:
        reward_params = init_reward_params(rng, hidden=cfg.reward_hidden,
                                           lam=cfg.reward_lam)
        opt_r = Adam(collect_tensors(reward_params), lr=cfg.lr_reward,
                     clip_norm=cfg.grad_clip)
        demo_pairs = DemonstrationSet.from_instances(train_instances).pair_arrays()

    graphs = [
        build_graph(inst, radius=cfg.radius) if cfg.use_gnn else None
        for inst in train_instances
    ]
    val_graphs = None
    if val_instances:
        val_graphs = [
            build_graph(inst, radius=cfg.radius) if cfg.use_gnn else None
            for inst in val_instances
        ]

    history = []
    n = len(train_instances)
    for epoch in range(cfg.epochs):
        # linear ramp over the first lr_warmup epochs, then exponential
        # anneal; the defaults keep both rates constant
        ramp = min(1.0, (epoch + 1) / cfg.lr_warmup) if cfg.lr_warmup else 1.0
        opt_p.lr = cfg.lr_predictor * ramp * cfg.lr_decay**epoch
        if opt_r is not None:
            opt_r.lr = cfg.lr_reward * ramp * cfg.lr_decay**epoch
        order = rng.permutation(n)
        losses, mses, rlosses = [], [], []
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            batch = [train_instances[i] for i in idx]
            bgraphs = [graphs[i] for i in idx]

            frozen = None
            log_z = 0.0
            if cfg.use_irl and cfg.gamma_reward != 0.0:
                frozen = detach_params(reward_params)
                batch_demos = [demo_pairs[i] for i in idx]
                pool = np.concatenate(batch_demos, axis=0)
                log_z = float(estimate_logZ(pool, frozen,
                                            policy_constant=1.0 / len(pool)))

            opt_p.zero_grad()
            loss, info = loss_tpm(batch, params, graphs=bgraphs,
                                  reward_params=frozen,
                                  gamma_reward=cfg.gamma_reward, log_z=log_z,
                                  use_gnn=cfg.use_gnn, radius=cfg.radius)
            loss.backward()
            opt_p.step()
            losses.append(_scalar(loss))
            mses.append(info["mse"])

            if cfg.use_irl:
                batch_demos = [demo_pairs[i] for i in idx]
                pool_parts = batch_demos + info["pred_pairs"]
                pool = np.concatenate(pool_parts, axis=0)
                opt_r.zero_grad()
                rloss = loss_rf(batch_demos, pool, reward_params,
                                policy_constant=1.0 / len(pool))
                rloss.backward()
                opt_r.step()
                rlosses.append(_scalar(rloss))

        entry = {
            "epoch": epoch,
            "loss": float(np.mean(losses)),
            "mse": float(np.mean(mses)),
            "reward_loss": float(np.mean(rlosses)) if rlosses else None,
            "val_ade": None,
            "val_fde": None,
        }
        if val_instances:
            val = evaluate_instances(val_instances, params, graphs=val_graphs,
                                     use_gnn=cfg.use_gnn, radius=cfg.radius)
            entry["val_ade"] = val["ade"]
            entry["val_fde"] = val["fde"]
        history.append(entry)
        if callback is not None:
            callback(entry)

    return TrainResult(params=params, reward_params=reward_params,
                       config=cfg, history=history)


def ablation_grid(train_instances, val_instances, config: TrainConfig,
                  callback=None) -> dict:
    """Retrain the four interaction/reward variants from one base config."""
    variants = {
        "gnn+irl": (True, True),
        "gnn": (True, False),
        "irl": (False, True),
        "plain": (False, False),
    }
    results = {}
    for label, (gnn, irl) in variants.items():
        cfg = dataclasses.replace(config, use_gnn=gnn, use_irl=irl)
        results[label] = train(train_instances, val_instances, cfg)
        if callback is not None:
            callback(label, results[label])
    return results


def save_checkpoint(path, params: TpmParams, config: TrainConfig,
                    history=None, reward_params=None) -> None:
    """Single-file archive of all parameter arrays plus a JSON header."""
    state = {"tpm": params}
    if reward_params is not None:
        state["reward"] = reward_params
    meta = {
        "config": dataclasses.asdict(config),
        "history": history or [],
        "has_reward": reward_params is not None,
    }
    np.savez(path, __meta__=np.array(json.dumps(meta)),
             **state_arrays(state))


def load_checkpoint(path):
    """Rebuild (params, reward_params, config, history) from an archive."""
    try:
        with np.load(path, allow_pickle=False) as z:
            if "__meta__" not in z:
                raise CheckpointError(f"no metadata record in {path}")
            meta = json.loads(str(z["__meta__"]))
            arrays = {k: z[k] for k in z.files if k != "__meta__"}
    except FileNotFoundError as exc:
        raise CheckpointError(f"checkpoint not found: {path}") from exc
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"unreadable checkpoint {path}: {exc}") from exc

    try:
        cfg = TrainConfig(**meta["config"])
    except (KeyError, TypeError, InvalidInput) as exc:
        raise CheckpointError(f"bad checkpoint config: {exc}") from exc
    seed_rng = np.random.default_rng(0)
    params = init_tpm_params(seed_rng, hidden=cfg.hidden, att_dim=cfg.att_dim,
                             channels=cfg.channels, order=cfg.order,
                             selective=cfg.selective)
    reward_params = None
    state = {"tpm": params}
    if meta.get("has_reward"):
        reward_params = init_reward_params(seed_rng, hidden=cfg.reward_hidden,
                                           lam=cfg.reward_lam)
        state["reward"] = reward_params
    try:
        load_state(state, arrays)
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"checkpoint arrays do not match: {exc}") from exc
    return params, reward_params, cfg, meta.get("history", [])
