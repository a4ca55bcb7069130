"""History encoder: a masked GRU per agent followed by one round of
edge-conditioned graph attention that mixes neighbor summaries into the
target's representation.

All forward functions are generic over plain ndarrays and autodiff
Tensors: passing Tensor parameters records a tape for training, passing
ndarrays (see optim.detach_params) runs the same math tape-free.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import EDGE_DIM, TrafficGraph, build_graph
from .domain import FEATURE_SCALE, STATE_DIM, PredictionInstance, translate_features
from .errors import InvalidInput

LEAKY_SLOPE = 0.2
# relative offset (2), relative velocity (2), distance: same units as the
# node features, so the same order-one normalization applies
EDGE_SCALE = np.array([0.05, 0.05, 0.1, 0.1, 1.0 / 30.0])


@dataclass(eq=False)
class GruParams:
    w_r: object
    u_r: object
    b_r: object
    w_z: object
    u_z: object
    b_z: object
    w_n: object
    u_n: object
    b_n: object


@dataclass(eq=False)
class EncoderParams:
    gru: GruParams
    att_score_w: object  # (2H + E, A) joint projection of [h_v, h_i, e]
    att_score_a: object  # (A,)
    att_value_w: object  # (H, H) value projection, separate from scoring
    att_bias: object     # (H,)

    @property
    def hidden(self) -> int:
        return self.att_value_w.data.shape[0] if isinstance(
            self.att_value_w, Tensor) else self.att_value_w.shape[0]


def _uniform(rng, shape, fan_in):
    s = 1.0 / np.sqrt(max(fan_in, 1))
    return Tensor(rng.uniform(-s, s, size=shape))


def init_encoder_params(rng, state_dim: int = STATE_DIM, hidden: int = 64,
                        edge_dim: int = EDGE_DIM,
                        att_dim: int | None = None) -> EncoderParams:
    att_dim = att_dim or hidden
    gru = GruParams(
        w_r=_uniform(rng, (state_dim, hidden), state_dim),
        u_r=_uniform(rng, (hidden, hidden), hidden),
        b_r=Tensor(np.zeros(hidden)),
        w_z=_uniform(rng, (state_dim, hidden), state_dim),
        u_z=_uniform(rng, (hidden, hidden), hidden),
        b_z=Tensor(np.zeros(hidden)),
        w_n=_uniform(rng, (state_dim, hidden), state_dim),
        u_n=_uniform(rng, (hidden, hidden), hidden),
        b_n=Tensor(np.zeros(hidden)),
    )
    return EncoderParams(
        gru=gru,
        att_score_w=_uniform(rng, (2 * hidden + edge_dim, att_dim),
                             2 * hidden + edge_dim),
        att_score_a=_uniform(rng, (att_dim,), att_dim),
        att_value_w=_uniform(rng, (hidden, hidden), hidden),
        att_bias=Tensor(np.zeros(hidden)),
    )


def gru_sequence(gru: GruParams, inputs, mask=None):
    """Run the GRU over (n, T, F) inputs; returns the (n, H) final state.

    ``mask`` is an optional (n, T) validity array; masked steps leave the
    hidden state untouched, so an all-masked row stays at the zero initial
    state.
    """
    data = inputs.data if isinstance(inputs, Tensor) else np.asarray(inputs)
    n, steps, _ = data.shape
    hidden = gru.b_r.data.shape[0] if isinstance(gru.b_r, Tensor) else gru.b_r.shape[0]
    h = np.zeros((n, hidden))
    for t in range(steps):
        x = inputs[:, t, :]
        r = ad.sigmoid(x @ gru.w_r + h @ gru.u_r + gru.b_r)
        z = ad.sigmoid(x @ gru.w_z + h @ gru.u_z + gru.b_z)
        cand = ad.tanh(x @ gru.w_n + (r * h) @ gru.u_n + gru.b_n)
        h_new = (1.0 - z) * h + z * cand
        if mask is None:
            h = h_new
        else:
            m = np.asarray(mask, dtype=np.float64)[:, t:t + 1]
            h = m * h_new + (1.0 - m) * h
    return h


def encode_node_histories(instance: PredictionInstance, params: EncoderParams):
    """(1 + n_neighbors, H) summaries; row 0 is the target.

    Histories are expressed in the scene-local frame anchored at the
    target's last observed position before encoding.
    """
    anchor = instance.anchor
    feats = [translate_features(instance.target_history.features(), anchor)]
    masks = [np.ones(instance.n_observed, dtype=np.float64)]
    for nb in instance.neighbors:
        feats.append(translate_features(nb.history_features, anchor))
        masks.append(nb.history_mask.astype(np.float64))
    return gru_sequence(params.gru, np.stack(feats) * FEATURE_SCALE,
                        np.stack(masks))


def attention_weights(h_nodes, graph: TrafficGraph, params: EncoderParams):
    """Softmax attention over the target's inclusive neighborhood.

    Returns (weights, node_indices) aligned with each other; entry 0 is the
    target's self edge, whose edge features are all zero.  An isolated
    target gets the single weight 1 on itself.
    """
    target = graph.target_node
    idx = [target]
    edge_rows = []
    for row, (src, dst) in enumerate(graph.edge_index):
        if src == target:
            idx.append(int(dst))
            edge_rows.append(row)
    k = len(idx)
    e_dim = graph.edge_features.shape[1] if graph.edge_features.size else EDGE_DIM
    edge_feats = np.zeros((k, e_dim))
    if edge_rows:
        edge_feats[1:] = graph.edge_features[edge_rows] * EDGE_SCALE

    h_target = h_nodes[np.full(k, target)]
    h_neigh = h_nodes[np.array(idx)]
    cat = ad.concat([h_target, h_neigh, edge_feats], axis=1)
    scores = ad.leaky_relu(cat @ params.att_score_w, LEAKY_SLOPE) @ params.att_score_a
    data = scores.data if isinstance(scores, Tensor) else scores
    shift = float(np.max(data))
    exp = ad.exp(scores - shift)
    weights = exp / exp.sum()
    return weights, np.array(idx, dtype=np.int64)


def gat_update(h_nodes, weights, idx, params: EncoderParams):
    """Attention-weighted sum of value-projected neighborhood states."""
    values = h_nodes[idx] @ params.att_value_w
    w = weights.reshape((len(idx), 1)) if isinstance(weights, Tensor) else \
        np.asarray(weights).reshape(len(idx), 1)
    return (w * values).sum(axis=0) + params.att_bias


def encode(instance: PredictionInstance, params: EncoderParams,
           graph: TrafficGraph | None = None, use_gnn: bool = True,
           radius: float = 30.0):
    """Full instance encoding: (H,) interaction-aware target summary.

    With use_gnn off, the graph stage is skipped entirely and the target's
    own GRU state is returned, which is the interaction-blind ablation.
    """
    if not use_gnn:
        anchor = instance.anchor
        feats = translate_features(instance.target_history.features(), anchor)
        h = gru_sequence(params.gru, feats[None] * FEATURE_SCALE)
        return h[0]
    if graph is None:
        graph = build_graph(instance, radius=radius)
    h_nodes = _encode_graph_nodes(instance, graph, params)
    weights, idx = attention_weights(h_nodes, graph, params)
    return gat_update(h_nodes, weights, idx, params)


def _encode_graph_nodes(instance, graph: TrafficGraph, params: EncoderParams):
    """GRU summaries for exactly the nodes the graph kept."""
    anchor = instance.anchor
    feats, masks = [], []
    for src in graph.source_indices:
        if src < 0:
            feats.append(translate_features(instance.target_history.features(),
                                            anchor))
            masks.append(np.ones(instance.n_observed, dtype=np.float64))
        else:
            nb = instance.neighbors[src]
            feats.append(translate_features(nb.history_features, anchor))
            masks.append(nb.history_mask.astype(np.float64))
    if not feats:
        raise InvalidInput("graph has no nodes")
    return gru_sequence(params.gru, np.stack(feats) * FEATURE_SCALE,
                        np.stack(masks))
