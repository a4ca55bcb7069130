"""Selective state-space decoder.

A diagonal continuous-time system per channel,

    h'(t) = A h(t) + B u(t),    y(t) = C h(t),

discretized per step by zero-order hold with an input-dependent step size
(and, when selectivity is on, input-dependent B and C).  The decoder rolls
out autoregressively: each emitted state feeds the next step's input, with
the initial recurrent state seeded from the encoder summary.

The linear recurrence h_t = Abar_t h_{t-1} + bu_t is associative, so a
teacher-forced sequence can be evaluated either step by step or with a
parallel inclusive-scan over the step operators; both paths are exposed
and must agree.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .domain import STATE_DIM
from .errors import DivergenceError, InvalidInput

DT_FLOOR = 1e-9


@dataclass(eq=False)
class SsmParams:
    a_diag: object    # (D, N) continuous diagonal state matrix, kept negative
    w_in: object      # (F, D) state features -> channel inputs
    b_in: object
    w_delta: object   # (D, D) channel inputs -> step sizes (pre-softplus)
    b_delta: object
    w_b: object       # (D, N) channel inputs -> input matrix
    b_b: object
    w_c: object       # (D, N) channel inputs -> output matrix
    b_c: object
    w_out: object     # (D, F) read-out back to state features
    b_out: object
    w_seed: object    # (H, D * N) encoder summary -> initial recurrent state
    b_seed: object
    selective: bool = True

    @property
    def dims(self):
        a = self.a_diag.data if isinstance(self.a_diag, Tensor) else self.a_diag
        return a.shape  # (channels, state order)


def init_ssm_params(rng, feature_dim: int = STATE_DIM, channels: int = 64,
                    order: int = 16, encoder_hidden: int = 64,
                    selective: bool = True) -> SsmParams:
    def uni(shape, fan_in, gain: float = 1.0):
        s = gain / np.sqrt(max(fan_in, 1))
        return Tensor(rng.uniform(-s, s, size=shape))

    # stable spectrum: negative reals spread over decades
    a0 = -np.exp(rng.uniform(np.log(0.5), np.log(8.0), size=(channels, order)))
    return SsmParams(
        a_diag=Tensor(a0),
        w_in=uni((feature_dim, channels), feature_dim),
        b_in=Tensor(np.zeros(channels)),
        w_delta=uni((channels, channels), channels),
        b_delta=Tensor(np.full(channels, -1.0)),  # softplus(-1) ~ 0.31
        w_b=uni((channels, order), channels),
        b_b=Tensor(rng.uniform(-0.5, 0.5, size=(order,))),
        w_c=uni((channels, order), channels),
        b_c=Tensor(rng.uniform(-0.5, 0.5, size=(order,))),
        # small output head keeps the feature feedback loop subcritical
        # until training shapes it
        w_out=uni((channels, feature_dim), channels, gain=0.1),
        b_out=Tensor(np.zeros(feature_dim)),
        w_seed=uni((encoder_hidden, channels * order), encoder_hidden),
        b_seed=Tensor(np.zeros(channels * order)),
        selective=selective,
    )


def discretize(a, b, delta):
    """Zero-order-hold discretization of a diagonal system.

    abar = exp(delta a);  bbar = (exp(delta a) - 1) / a * b, with the
    well-defined limit delta * b where a = 0.  Shapes broadcast; delta must
    be positive everywhere.
    """
    d_data = delta.data if isinstance(delta, Tensor) else np.asarray(delta)
    if np.any(d_data <= 0.0):
        raise InvalidInput("discretization step must be positive")
    a_data = a.data if isinstance(a, Tensor) else np.asarray(a)
    abar = ad.exp(delta * a)
    zero = a_data == 0.0
    safe_a = ad.where(zero, np.ones_like(a_data), a)
    ratio = ad.expm1(delta * a) / safe_a
    bbar = ad.where(zero, delta * b, ratio * b)
    return abar, bbar


def _expand_last(x):
    """(..., D) -> (..., D, 1) for either Tensor or ndarray."""
    if isinstance(x, Tensor):
        return x.reshape(x.data.shape + (1,))
    return np.asarray(x)[..., None]


def _over_channels(x):
    """Align per-step B or C of shape (..., N) against h of (..., D, N);
    parameter-level (N,) vectors broadcast as they are."""
    if isinstance(x, Tensor):
        if x.data.ndim == 1:
            return x
        return x.reshape(x.data.shape[:-1] + (1,) + x.data.shape[-1:])
    x = np.asarray(x)
    return x if x.ndim == 1 else x[..., None, :]


def _step_operators(u, params: SsmParams):
    """Per-step (abar, bbar, c) from channel inputs u of shape (..., D)."""
    if params.selective:
        # softplus underflows to 0.0 below about -745; the floor keeps the
        # discretization precondition on inputs far outside training range
        delta = ad.softplus(u @ params.w_delta + params.b_delta) + DT_FLOOR
        b_t = u @ params.w_b + params.b_b
        c_t = u @ params.w_c + params.b_c
    else:
        ones = np.ones(u.data.shape if isinstance(u, Tensor) else u.shape)
        delta = ad.softplus(params.b_delta) * ones + DT_FLOOR
        b_t = params.b_b
        c_t = params.b_c
    abar, bbar = discretize(params.a_diag, _over_channels(b_t),
                            _expand_last(delta))
    return abar, bbar, c_t, delta


def ssm_step(h_prev, state_feats, params: SsmParams):
    """One autoregressive step: previous recurrent state (..., D, N) and
    previous emitted state features (..., F) to (h, next features)."""
    u = state_feats @ params.w_in + params.b_in
    abar, bbar, c_t, _ = _step_operators(u, params)
    h = abar * h_prev + bbar * _expand_last(u)
    y = (h * _over_channels(c_t)).sum(axis=-1)
    s_next = y @ params.w_out + params.b_out
    return h, s_next


def seed_state(h_latent, params: SsmParams):
    """Project an encoder summary (..., H) to the initial recurrent state."""
    channels, order = params.dims
    flat = h_latent @ params.w_seed + params.b_seed
    shape = (flat.data.shape if isinstance(flat, Tensor) else flat.shape)
    return flat.reshape(shape[:-1] + (channels, order))


def _saturate(s, limit: float):
    """Clamp feedback features to a finite box; identity inside it."""
    data = s.data if isinstance(s, Tensor) else np.asarray(s)
    if np.all(np.abs(data) <= limit):
        return s
    s = ad.where(data > limit, np.full_like(data, limit), s)
    data = s.data if isinstance(s, Tensor) else np.asarray(s)
    return ad.where(data < -limit, np.full_like(data, -limit), s)


def rollout(h_latent, last_state_feats, horizon: int, params: SsmParams,
            feedback_limit: float = 1e6):
    """Autoregressive decode of ``horizon`` future states.

    h_latent: (..., H) encoder summary; last_state_feats: (..., F) features
    of the last observed state in the scene-local frame.  Returns states of
    shape (..., horizon, F); positions are the leading two feature columns.

    Emitted features saturate at +-feedback_limit before re-entering the
    recurrence, so inputs far outside the training range degrade to large
    finite errors instead of overflowing.  Non-finite values still abort
    with a divergence error naming the step.
    """
    if horizon < 1:
        raise InvalidInput("horizon must be positive")
    h = seed_state(h_latent, params)
    s = last_state_feats
    outs = []
    for t in range(horizon):
        h, s = ssm_step(h, s, params)
        s = _saturate(s, feedback_limit)
        data = s.data if isinstance(s, Tensor) else s
        if not np.all(np.isfinite(data)):
            raise DivergenceError(f"rollout produced non-finite state at step {t}")
        outs.append(s)
    return ad.stack(outs, axis=-2)


def ssm_scan(abar: np.ndarray, bu: np.ndarray, h0: np.ndarray | None = None):
    """Inclusive scan of h_t = abar_t * h_{t-1} + bu_t along axis 0.

    Evaluates the recurrence with log2(T) rounds of the associative
    combine (A2, b2) o (A1, b1) = (A2 A1, A2 b1 + b2) instead of a
    sequential loop.  Plain ndarrays only.
    """
    abar = np.asarray(abar, dtype=np.float64)
    bu = np.asarray(bu, dtype=np.float64)
    if h0 is not None:
        bu = bu.copy()
        bu[0] = bu[0] + abar[0] * np.asarray(h0)
    acc_a = abar.copy()
    acc_b = bu.copy()
    steps = len(abar)
    offset = 1
    while offset < steps:
        shifted_a = acc_a[:-offset]
        shifted_b = acc_b[:-offset]
        acc_b = np.concatenate(
            [acc_b[:offset], acc_a[offset:] * shifted_b + acc_b[offset:]], axis=0)
        acc_a = np.concatenate(
            [acc_a[:offset], acc_a[offset:] * shifted_a], axis=0)
        offset *= 2
    return acc_b


def ssm_sequence(inputs: np.ndarray, params: SsmParams, h0=None,
                 mode: str = "sequential") -> np.ndarray:
    """Teacher-forced evaluation over a given (T, F) feature sequence.

    All step operators derive from the provided inputs, so the recurrence
    is linear in h and can run either sequentially or as a parallel scan;
    the two modes are exact alternatives.  Returns the (T, F) outputs.
    """
    if mode not in ("sequential", "scan"):
        raise InvalidInput(f"unknown mode {mode!r}")
    inputs = np.asarray(inputs, dtype=np.float64)
    u = inputs @ _np(params.w_in) + _np(params.b_in)
    p_np = _numpy_params(params)
    abar, bbar, c_t, _ = _step_operators(u, p_np)
    bu = bbar * u[..., None]
    channels, order = p_np.dims
    if h0 is None:
        h0 = np.zeros((channels, order))
    if mode == "sequential":
        h = h0
        hs = []
        for t in range(len(inputs)):
            h = abar[t] * h + bu[t]
            hs.append(h)
        hs = np.stack(hs, axis=0)
    else:
        hs = ssm_scan(abar, bu, h0=h0)
    y = (hs * _over_channels(c_t)).sum(axis=-1)
    return y @ _np(params.w_out) + _np(params.b_out)


def _np(x):
    return x.data if isinstance(x, Tensor) else np.asarray(x)


def _numpy_params(params: SsmParams) -> SsmParams:
    from .optim import detach_params

    return detach_params(params)
