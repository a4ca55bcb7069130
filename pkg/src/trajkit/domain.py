"""Core domain types: agent states, trajectories, actions, and the
sliding-window prediction instances the models consume.

Conventions used throughout the package:

* a state is the 7-vector (x, y, vx, vy, ax, ay, yaw) plus an integer
  timestep index; positions in meters, yaw in radians
* trajectories are strictly consecutive in timestep index and share one
  sampling interval ``dt``
* an action is the position displacement to the next state, so a
  trajectory of n states yields n - 1 actions and positions reconstruct
  exactly by cumulative summation
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput

STATE_FEATURES = ("x", "y", "vx", "vy", "ax", "ay", "yaw")
STATE_DIM = len(STATE_FEATURES)
ACTION_DIM = 2

# fixed per-feature scale applied at every network input boundary; brings
# scene-local magnitudes (tens of meters, tens of m/s) to order one so the
# recurrent stacks train without per-dataset statistics
FEATURE_SCALE = np.array([0.05, 0.05, 0.1, 0.1, 0.2, 0.2, 0.5])


class ScenarioTag(str, enum.Enum):
    INTERSECTION = "intersection"
    ROUNDABOUT = "roundabout"
    HIGHWAY = "highway"


def scenario_window_defaults(tag) -> tuple[int, int]:
    """Default (observation steps, prediction horizon) per scenario kind.

    Urban scenes get a longer observation window than highway driving;
    the horizon is the same everywhere.
    """
    try:
        tag = ScenarioTag(tag)
    except ValueError as exc:
        raise InvalidInput(f"unknown scenario tag: {tag!r}") from exc
    if tag is ScenarioTag.HIGHWAY:
        return 10, 25
    return 15, 25


@dataclass(frozen=True)
class AgentState:
    x: float
    y: float
    vx: float
    vy: float
    ax: float
    ay: float
    yaw: float
    timestep_index: int

    def __post_init__(self):
        vals = (self.x, self.y, self.vx, self.vy, self.ax, self.ay, self.yaw)
        if not all(math.isfinite(v) for v in vals):
            raise InvalidInput(f"non-finite state component: {vals}")
        if self.timestep_index < 0:
            raise InvalidInput(f"negative timestep index: {self.timestep_index}")

    def features(self) -> np.ndarray:
        return np.array(
            [self.x, self.y, self.vx, self.vy, self.ax, self.ay, self.yaw],
            dtype=np.float64,
        )

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=np.float64)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """A single agent's consecutive states at a fixed sampling interval."""

    agent_id: str
    states: tuple
    dt: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        if len(self.states) < 1:
            raise InvalidInput("trajectory needs at least one state")
        if not (self.dt > 0.0 and math.isfinite(self.dt)):
            raise InvalidInput(f"dt must be positive and finite, got {self.dt}")
        idx = [s.timestep_index for s in self.states]
        for a, b in zip(idx, idx[1:]):
            if b != a + 1:
                raise InvalidInput(
                    f"timestep indices must be consecutive, got {a} -> {b} "
                    f"in trajectory {self.agent_id!r}"
                )

    def __len__(self) -> int:
        return len(self.states)

    def positions(self) -> np.ndarray:
        """(n, 2) array of x, y."""
        return np.array([[s.x, s.y] for s in self.states], dtype=np.float64)

    def features(self) -> np.ndarray:
        """(n, 7) array of full state features."""
        return np.array([s.features() for s in self.states], dtype=np.float64)

    @property
    def timesteps(self) -> np.ndarray:
        return np.array([s.timestep_index for s in self.states], dtype=np.int64)

    def slice(self, start: int, stop: int) -> "Trajectory":
        if not (0 <= start < stop <= len(self.states)):
            raise InvalidInput(f"bad slice [{start}:{stop}] of length {len(self)}")
        return Trajectory(self.agent_id, self.states[start:stop], self.dt)


@dataclass(frozen=True)
class Action:
    """Position displacement between consecutive states."""

    dx: float
    dy: float

    def as_array(self) -> np.ndarray:
        return np.array([self.dx, self.dy], dtype=np.float64)


def derive_actions(traj: Trajectory) -> list[Action]:
    """Forward position differences; requires at least two states."""
    if len(traj) < 2:
        raise InvalidInput("need at least two states to derive actions")
    pos = traj.positions()
    diffs = np.diff(pos, axis=0)
    return [Action(float(dx), float(dy)) for dx, dy in diffs]


def action_array(traj: Trajectory) -> np.ndarray:
    """(n - 1, 2) displacement array; vectorized form of derive_actions."""
    if len(traj) < 2:
        raise InvalidInput("need at least two states to derive actions")
    return np.diff(traj.positions(), axis=0)


def reconstruct_positions(start, actions) -> np.ndarray:
    """Invert derive_actions: start position plus cumulative displacements.

    ``actions`` is an (n, 2) array or a sequence of Action; the result has
    n + 1 rows beginning with ``start``.
    """
    start = np.asarray(start, dtype=np.float64).reshape(2)
    if len(actions) and isinstance(actions[0], Action):
        actions = np.array([a.as_array() for a in actions], dtype=np.float64)
    else:
        actions = np.asarray(actions, dtype=np.float64).reshape(-1, 2)
    out = np.empty((len(actions) + 1, 2), dtype=np.float64)
    out[0] = start
    if len(actions):
        out[1:] = start + np.cumsum(actions, axis=0)
    return out


@dataclass(eq=False)
class NeighborTrack:
    """A neighbor's observation-window history and future, padded to fixed
    length with validity masks (False where the agent is absent)."""

    agent_id: str
    history_features: np.ndarray  # (L, 7)
    history_mask: np.ndarray      # (L,) bool
    future_xy: np.ndarray         # (horizon, 2)
    future_mask: np.ndarray       # (horizon,) bool

    def __post_init__(self):
        self.history_features = np.asarray(self.history_features, dtype=np.float64)
        self.history_mask = np.asarray(self.history_mask, dtype=bool)
        self.future_xy = np.asarray(self.future_xy, dtype=np.float64)
        self.future_mask = np.asarray(self.future_mask, dtype=bool)
        if self.history_features.shape != (len(self.history_mask), STATE_DIM):
            raise InvalidInput("neighbor history shape does not match its mask")
        if self.future_xy.shape != (len(self.future_mask), 2):
            raise InvalidInput("neighbor future shape does not match its mask")

    @property
    def last_observed_features(self) -> np.ndarray:
        """Features at the most recent valid observation step."""
        valid = np.flatnonzero(self.history_mask)
        if valid.size == 0:
            raise InvalidInput(f"neighbor {self.agent_id!r} has no valid step")
        return self.history_features[valid[-1]]


@dataclass(eq=False)
class PredictionInstance:
    """One forecasting task: a target's observed window, its future, and
    every co-present neighbor aligned to the same steps."""

    target_history: Trajectory
    target_future: Trajectory
    neighbors: list
    scenario_tag: ScenarioTag | None = None
    recording_id: str | None = None

    def __post_init__(self):
        h_last = self.target_history.states[-1].timestep_index
        f_first = self.target_future.states[0].timestep_index
        if f_first != h_last + 1:
            raise InvalidInput(
                f"future must continue the history: {h_last} -> {f_first}"
            )
        if self.target_history.dt != self.target_future.dt:
            raise InvalidInput("history and future must share dt")
        for nb in self.neighbors:
            if len(nb.history_mask) != self.n_observed:
                raise InvalidInput(
                    f"neighbor {nb.agent_id!r} history does not cover the "
                    f"{self.n_observed} observation steps"
                )
            if len(nb.future_mask) != self.horizon:
                raise InvalidInput(
                    f"neighbor {nb.agent_id!r} future does not cover the "
                    f"{self.horizon} prediction steps"
                )

    @property
    def n_observed(self) -> int:
        return len(self.target_history)

    @property
    def horizon(self) -> int:
        return len(self.target_future)

    @property
    def dt(self) -> float:
        return self.target_history.dt

    @property
    def anchor(self) -> np.ndarray:
        """Last observed target position; origin of the scene-local frame."""
        return self.target_history.states[-1].position


def translate_features(features: np.ndarray, origin) -> np.ndarray:
    """Shift the position columns of (..., 7) features by -origin.

    Velocities, accelerations, and yaw are translation-invariant and pass
    through unchanged.
    """
    origin = np.asarray(origin, dtype=np.float64).reshape(2)
    out = np.array(features, dtype=np.float64, copy=True)
    out[..., 0] -= origin[0]
    out[..., 1] -= origin[1]
    return out


def _neighbor_track(other: Trajectory, t0: int, n_obs: int, horizon: int):
    """Align another trajectory onto the window starting at timestep t0.

    Returns None when the other agent is absent from every observation step.
    """
    first = other.states[0].timestep_index
    feats = other.features()
    pos = feats[:, :2]

    hist = np.zeros((n_obs, STATE_DIM), dtype=np.float64)
    hmask = np.zeros(n_obs, dtype=bool)
    lo = max(t0, first)
    hi = min(t0 + n_obs, first + len(other))
    if hi <= lo:
        return None
    hist[lo - t0:hi - t0] = feats[lo - first:hi - first]
    hmask[lo - t0:hi - t0] = True

    fut = np.zeros((horizon, 2), dtype=np.float64)
    fmask = np.zeros(horizon, dtype=bool)
    f0 = t0 + n_obs
    lo = max(f0, first)
    hi = min(f0 + horizon, first + len(other))
    if hi > lo:
        fut[lo - f0:hi - f0] = pos[lo - first:hi - first]
        fmask[lo - f0:hi - f0] = True

    return NeighborTrack(other.agent_id, hist, hmask, fut, fmask)


def window_instances(recording, n_observed: int, horizon: int, stride: int = 1,
                     scenario_tag=None, recording_id=None) -> list:
    """Slide a fixed window over every trajectory of a recording.

    Each agent with full coverage of n_observed + horizon consecutive steps
    becomes the target of one instance per stride offset; all other agents
    overlapping the observation window are attached as masked neighbors.
    Windows with incomplete target coverage are skipped, never padded.
    """
    if n_observed < 1 or horizon < 1:
        raise InvalidInput("window lengths must be positive")
    if stride < 1:
        raise InvalidInput("stride must be >= 1")
    trajs = list(recording)
    instances = []
    for traj in trajs:
        total = n_observed + horizon
        for start in range(0, len(traj) - total + 1, stride):
            history = traj.slice(start, start + n_observed)
            future = traj.slice(start + n_observed, start + total)
            t0 = history.states[0].timestep_index
            neighbors = []
            for other in trajs:
                if other is traj:
                    continue
                nb = _neighbor_track(other, t0, n_observed, horizon)
                if nb is not None:
                    neighbors.append(nb)
            instances.append(
                PredictionInstance(
                    target_history=history,
                    target_future=future,
                    neighbors=neighbors,
                    scenario_tag=scenario_tag,
                    recording_id=recording_id,
                )
            )
    return instances
