"""Data pipeline: recording files, downsampling, windowing into prediction
instances, stratified splits, interaction graphs, and synthetic scenarios.

Recordings are flat CSV tables sampled at 25 Hz, one row per agent per
frame.  The synthetic generators produce the same schema so everything
downstream is agnostic to where a recording came from.  Velocities and
accelerations in synthetic recordings are exact forward finite differences
of the generated positions, so derived quantities reconstruct bitwise.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .domain import (
    STATE_DIM,
    AgentState,
    PredictionInstance,
    ScenarioTag,
    Trajectory,
    scenario_window_defaults,
    translate_features,
    window_instances,
)
from .errors import InvalidInput, SchemaError

RECORDING_HZ = 25.0

RECORDING_COLUMNS = [
    "recording_id", "frame", "track_id", "x", "y", "vx", "vy", "ax", "ay",
    "heading_deg", "width", "length", "agent_class",
]

_NUMERIC_COLUMNS = ["x", "y", "vx", "vy", "ax", "ay", "heading_deg",
                    "width", "length"]


@dataclass(eq=False)
class Recording:
    """A validated 25 Hz recording table."""

    recording_id: str
    table: pd.DataFrame

    @classmethod
    def from_frame(cls, table: pd.DataFrame) -> "Recording":
        missing = [c for c in RECORDING_COLUMNS if c not in table.columns]
        if missing:
            raise SchemaError(f"missing column(s): {missing}")
        extra = [c for c in table.columns if c not in RECORDING_COLUMNS]
        if extra:
            raise SchemaError(f"unexpected column(s): {extra}")
        table = table[RECORDING_COLUMNS].reset_index(drop=True)

        for col in _NUMERIC_COLUMNS:
            vals = pd.to_numeric(table[col], errors="coerce").to_numpy(np.float64)
            bad = np.flatnonzero(~np.isfinite(vals))
            if bad.size:
                raise SchemaError(
                    f"non-finite value in column {col!r} at row {bad[0]}"
                )
            table[col] = vals
        for col in ("frame", "track_id"):
            vals = pd.to_numeric(table[col], errors="coerce")
            if vals.isna().any():
                row = int(np.flatnonzero(vals.isna().to_numpy())[0])
                raise SchemaError(f"non-integer value in column {col!r} at row {row}")
            table[col] = vals.astype(np.int64)
        if (table["frame"] < 0).any():
            row = int(np.flatnonzero((table["frame"] < 0).to_numpy())[0])
            raise SchemaError(f"negative frame at row {row}")

        rec_ids = table["recording_id"].astype(str).unique()
        if len(rec_ids) != 1:
            raise SchemaError(f"expected a single recording_id, got {list(rec_ids)}")
        dup = table.duplicated(subset=["track_id", "frame"])
        if dup.any():
            row = int(np.flatnonzero(dup.to_numpy())[0])
            raise SchemaError(f"duplicate (track_id, frame) at row {row}")
        for tid, group in table.groupby("track_id"):
            frames = np.sort(group["frame"].to_numpy())
            if frames.size > 1 and not np.array_equal(
                    np.diff(frames), np.ones(frames.size - 1, dtype=np.int64)):
                raise SchemaError(f"track {tid} has non-contiguous frames")
        return cls(recording_id=str(rec_ids[0]), table=table)

    @classmethod
    def from_csv(cls, path) -> "Recording":
        try:
            table = pd.read_csv(path)
        except Exception as exc:
            raise SchemaError(f"cannot read recording {path}: {exc}") from exc
        return cls.from_frame(table)

    def to_csv(self, path) -> None:
        self.table[RECORDING_COLUMNS].to_csv(path, index=False)

    def to_trajectories(self) -> list:
        """One trajectory per track, ordered by track id, timestep = frame."""
        out = []
        dt = 1.0 / RECORDING_HZ
        for tid in sorted(self.table["track_id"].unique()):
            rows = self.table[self.table["track_id"] == tid].sort_values("frame")
            states = [
                AgentState(
                    x=float(r.x), y=float(r.y), vx=float(r.vx), vy=float(r.vy),
                    ax=float(r.ax), ay=float(r.ay),
                    yaw=math.radians(float(r.heading_deg)),
                    timestep_index=int(r.frame),
                )
                for r in rows.itertuples()
            ]
            out.append(Trajectory(f"{self.recording_id}/{tid}", states, dt))
        return out


def load_recording(path) -> list:
    """Read and validate a recording CSV; returns its trajectories."""
    return Recording.from_csv(path).to_trajectories()


def downsample(trajectories, factor: int):
    """Keep the states whose original timestep is a multiple of ``factor``.

    All agents of a recording are thinned on the same global phase so that
    equal downsampled indices still refer to equal wall-clock instants.
    New timestep indices are old // factor and dt scales by factor.  Accepts
    a single trajectory or a list; trajectories left empty are dropped.
    """
    if int(factor) != factor or factor < 1:
        raise InvalidInput(f"downsample factor must be a positive integer: {factor}")
    factor = int(factor)
    single = isinstance(trajectories, Trajectory)
    if single:
        trajectories = [trajectories]
    out = []
    for traj in trajectories:
        kept = [
            dataclasses.replace(s, timestep_index=s.timestep_index // factor)
            for s in traj.states
            if s.timestep_index % factor == 0
        ]
        if kept:
            out.append(Trajectory(traj.agent_id, kept, traj.dt * factor))
    if single:
        if not out:
            raise InvalidInput("downsampling left no states")
        return out[0]
    return out


@dataclass(frozen=True)
class SplitSpec:
    train: float = 0.8
    val: float = 0.1
    test: float = 0.1
    seed: int = 0

    def __post_init__(self):
        total = self.train + self.val + self.test
        if abs(total - 1.0) > 1e-9:
            raise InvalidInput(f"split fractions must sum to 1, got {total}")
        if min(self.train, self.val, self.test) < 0:
            raise InvalidInput("split fractions must be non-negative")


def stratified_split(instances, spec: SplitSpec | None = None):
    """Shuffle and split instances per (scenario_tag, recording_id) stratum.

    Within each stratum the split counts are the rounded fractions, so every
    stratum lands within one instance of its exact proportion.  Deterministic
    for a fixed seed.
    """
    spec = spec or SplitSpec()
    groups: dict[tuple, list] = {}
    for inst in instances:
        tag = inst.scenario_tag.value if inst.scenario_tag is not None else ""
        key = (tag, inst.recording_id or "")
        groups.setdefault(key, []).append(inst)
    rng = np.random.default_rng(spec.seed)
    train, val, test = [], [], []
    for key in sorted(groups):
        members = groups[key]
        order = rng.permutation(len(members))
        n = len(members)
        n_train = int(math.floor(n * spec.train + 0.5))
        n_val = int(math.floor(n * (spec.train + spec.val) + 0.5)) - n_train
        for rank, idx in enumerate(order):
            if rank < n_train:
                train.append(members[idx])
            elif rank < n_train + n_val:
                val.append(members[idx])
            else:
                test.append(members[idx])
    return train, val, test


@dataclass(eq=False)
class TrafficGraph:
    """Scene-local interaction graph for one prediction instance.

    Node 0 is the target; remaining nodes are neighbors within the radius.
    ``source_indices`` maps nodes back to the instance neighbor list, with
    -1 for the target itself.  Edges are directed and exist both ways
    between every pair of nodes closer than the radius.
    """

    node_features: np.ndarray   # (n, 7)
    edge_index: np.ndarray      # (m, 2) int64 rows of (src, dst)
    edge_features: np.ndarray   # (m, 5) dx, dy, dvx, dvy, distance
    source_indices: np.ndarray  # (n,) int64
    target_node: int = 0


EDGE_DIM = 5


def build_graph(instance: PredictionInstance, radius: float = 30.0) -> TrafficGraph:
    if not (radius > 0):
        raise InvalidInput(f"radius must be positive: {radius}")
    anchor = instance.anchor
    feats = [translate_features(instance.target_history.states[-1].features(), anchor)]
    sources = [-1]
    for j, nb in enumerate(instance.neighbors):
        f = translate_features(nb.last_observed_features, anchor)
        if math.hypot(f[0], f[1]) <= radius:
            feats.append(f)
            sources.append(j)
    node_features = np.array(feats, dtype=np.float64)
    n = len(feats)

    edges = []
    edge_feats = []
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            dx = node_features[j, 0] - node_features[i, 0]
            dy = node_features[j, 1] - node_features[i, 1]
            dist = math.hypot(dx, dy)
            if dist <= radius:
                dvx = node_features[j, 2] - node_features[i, 2]
                dvy = node_features[j, 3] - node_features[i, 3]
                edges.append((i, j))
                edge_feats.append((dx, dy, dvx, dvy, dist))
    edge_index = np.array(edges, dtype=np.int64).reshape(-1, 2)
    edge_features = np.array(edge_feats, dtype=np.float64).reshape(-1, EDGE_DIM)
    return TrafficGraph(
        node_features=node_features,
        edge_index=edge_index,
        edge_features=edge_features,
        source_indices=np.array(sources, dtype=np.int64),
    )


# ---------------------------------------------------------------------------
# Synthetic scenarios
# ---------------------------------------------------------------------------

_AGENT_WIDTH = 2.0
_AGENT_LENGTH = 4.5


def _held_behind(p_now, p_next, others, max_gap=6.5, corridor=2.0) -> bool:
    """Whether advancing to p_next tailgates someone ahead in the same lane.

    Ahead means a positive longitudinal offset along the motion direction
    with lateral offset under ``corridor``, so crossing or oncoming traffic
    on other lanes never triggers a hold.
    """
    step = p_next - p_now
    norm = math.hypot(step[0], step[1])
    if norm < 1e-12:
        return False
    d = step / norm
    for q in others:
        rel = q - p_now
        lon = rel[0] * d[0] + rel[1] * d[1]
        lat = abs(rel[0] * d[1] - rel[1] * d[0])
        if 0.0 < lon < max_gap and lat < corridor:
            return True
    return False


def _rows_from_positions(rec_id: str, track_id: int, pos: np.ndarray,
                         start_frame: int = 0) -> pd.DataFrame:
    """Attach exact finite-difference kinematics to a position trace."""
    pos = np.asarray(pos, dtype=np.float64)
    n = len(pos)
    if n < 3:
        raise InvalidInput("need at least three frames per agent")
    dt = 1.0 / RECORDING_HZ
    vel = np.empty_like(pos)
    vel[:-1] = (pos[1:] - pos[:-1]) / dt
    vel[-1] = vel[-2]
    acc = np.empty_like(pos)
    acc[:-1] = (vel[1:] - vel[:-1]) / dt
    acc[-1] = acc[-2]

    speed = np.hypot(vel[:, 0], vel[:, 1])
    yaw = np.arctan2(vel[:, 1], vel[:, 0])
    moving = speed > 1e-9
    if moving.any():
        # carry heading through stops instead of snapping to zero
        last = np.where(moving, np.arange(n), -1)
        last = np.maximum.accumulate(last)
        first_idx = np.flatnonzero(moving)[0]
        last[last < 0] = first_idx
        yaw = yaw[last]
    else:
        yaw = np.zeros(n)

    return pd.DataFrame({
        "recording_id": rec_id,
        "frame": np.arange(start_frame, start_frame + n, dtype=np.int64),
        "track_id": np.int64(track_id),
        "x": pos[:, 0], "y": pos[:, 1],
        "vx": vel[:, 0], "vy": vel[:, 1],
        "ax": acc[:, 0], "ay": acc[:, 1],
        "heading_deg": np.degrees(yaw),
        "width": _AGENT_WIDTH, "length": _AGENT_LENGTH,
        "agent_class": "car",
    })


def _assemble(rec_id: str, traces: list) -> Recording:
    rows = [
        _rows_from_positions(rec_id, tid, pos) for tid, pos in enumerate(traces)
    ]
    table = pd.concat(rows, ignore_index=True)
    return Recording.from_frame(table)


def _roundabout_recording(rng, rec_id: str, n_agents: int, n_frames: int) -> Recording:
    """Constant-speed circulation with yield-on-entry interactions.

    Agents approach along the tangent, hold at a yield point while any
    circulating agent sits inside the angular gap behind their entry, then
    run the arc at the shared circulating speed and leave on the exit
    tangent.  The hold duration is what couples an agent's future to its
    neighbors.
    """
    dt = 1.0 / RECORDING_HZ
    radius = float(rng.uniform(16.0, 22.0))
    v_arc = float(rng.uniform(6.0, 8.5))
    yield_dist = 12.0  # holding this far back keeps waiters off the circle

    arms = rng.permutation(4)[: min(4, n_agents)]
    specs = []
    per_arm_used: dict[int, float] = {}
    for i in range(n_agents):
        arm = int(arms[i % len(arms)])
        theta_e = arm * math.pi / 2.0 + float(rng.uniform(-0.04, 0.04))
        approach = 35.0 + per_arm_used.get(arm, 0.0)
        per_arm_used[arm] = per_arm_used.get(arm, 0.0) + float(rng.uniform(12.0, 20.0))
        specs.append({
            "theta_e": theta_e,
            "approach": approach,
            "v_tan": float(rng.uniform(5.0, 8.0)),
            "span": float(rng.uniform(0.6 * math.pi, 1.4 * math.pi)),
            "delay": int(rng.integers(0, 80)),
        })

    # path position is tracked as arc length s along the piecewise path
    s = np.zeros(n_agents)
    phase = ["approach"] * n_agents
    traces = [np.zeros((n_frames, 2)) for _ in range(n_agents)]

    def locate(i, si):
        sp = specs[i]
        te = sp["theta_e"]
        entry = radius * np.array([math.cos(te), math.sin(te)])
        tangent = np.array([-math.sin(te), math.cos(te)])
        if si <= sp["approach"]:
            return entry + (si - sp["approach"]) * tangent
        s_arc = si - sp["approach"]
        if s_arc <= sp["span"] * radius:
            th = te + s_arc / radius
            return radius * np.array([math.cos(th), math.sin(th)])
        th_x = te + sp["span"]
        exit_pt = radius * np.array([math.cos(th_x), math.sin(th_x)])
        exit_tan = np.array([-math.sin(th_x), math.cos(th_x)])
        return exit_pt + (s_arc - sp["span"] * radius) * exit_tan

    def circ_angle(i, si):
        sp = specs[i]
        s_arc = si - sp["approach"]
        if 0.0 <= s_arc <= sp["span"] * radius:
            return (sp["theta_e"] + s_arc / radius) % (2.0 * math.pi)
        return None

    follow_gap = 6.5

    for t in range(n_frames):
        for i in range(n_agents):
            traces[i][t] = locate(i, s[i])
        here = [traces[i][t] for i in range(n_agents)]
        angles = [circ_angle(i, s[i]) for i in range(n_agents)]
        for i in range(n_agents):
            sp = specs[i]
            if t < sp["delay"]:
                continue
            approaching = s[i] < sp["approach"]
            # the gate is a point: once past it the merge is committed, so
            # the clear gap must cover the whole run-in to the entry
            at_yield = (approaching
                        and abs(s[i] - (sp["approach"] - yield_dist)) < 1e-9)
            if at_yield:
                run_in = yield_dist / sp["v_tan"]
                gap_behind = (v_arc * run_in + 8.0) / radius
                te = sp["theta_e"] % (2.0 * math.pi)
                blocked = False
                for j in range(n_agents):
                    if j == i or angles[j] is None:
                        continue
                    behind = (te - angles[j]) % (2.0 * math.pi)
                    if behind < gap_behind:
                        blocked = True
                        break
                if blocked:
                    phase[i] = "wait"
                    continue
            v = sp["v_tan"] if approaching else v_arc
            s_next = s[i] + v * dt
            # do not overshoot the yield point while approaching it
            if (approaching and s[i] < sp["approach"] - yield_dist
                    and s_next > sp["approach"] - yield_dist):
                s_next = sp["approach"] - yield_dist
            if s[i] < sp["approach"] - yield_dist:
                # queue behind anyone ahead on the same approach; once past
                # the yield point the merge is committed and never stalls
                others = [here[j] for j in range(n_agents) if j != i]
                if _held_behind(here[i], locate(i, s_next), others,
                                max_gap=follow_gap):
                    phase[i] = "wait"
                    continue
            phase[i] = "go"
            s[i] = s_next
    return _assemble(rec_id, traces)


_TURN_RIGHT_R = 4.25
_TURN_LEFT_R = 7.75
_BOX = 6.0
_LANE_OFF = 1.75
_STOP_LINE = 8.0


def _intersection_path(maneuver: str, arm: int, start_dist: float):
    """Piecewise path through a four-way crossing, canonical eastbound
    geometry rotated onto the chosen arm.  Returns locate(s) and the arc
    interval in path arc length."""
    if maneuver == "straight":
        arc_r, arc_span = 0.0, 0.0
    elif maneuver == "right":
        arc_r, arc_span = _TURN_RIGHT_R, math.pi / 2.0
    elif maneuver == "left":
        arc_r, arc_span = _TURN_LEFT_R, math.pi / 2.0
    else:
        raise InvalidInput(f"unknown maneuver {maneuver!r}")

    approach = start_dist - _BOX  # straight run up to the box edge
    arc_len = arc_r * arc_span
    rot = arm * math.pi / 2.0
    cr, sr = math.cos(rot), math.sin(rot)

    def rotate(p):
        return np.array([cr * p[0] - sr * p[1], sr * p[0] + cr * p[1]])

    def locate(si):
        # canonical frame: approach heading +x on lane y = -_LANE_OFF
        if si <= approach:
            p = np.array([-_BOX - (approach - si), -_LANE_OFF])
        elif maneuver == "straight":
            p = np.array([-_BOX + (si - approach), -_LANE_OFF])
        elif si <= approach + arc_len:
            ang = (si - approach) / arc_r
            if maneuver == "right":
                c = np.array([-_BOX, -_LANE_OFF - arc_r])
                p = c + arc_r * np.array([math.sin(ang), math.cos(ang)])
            else:
                c = np.array([-_BOX, -_LANE_OFF + _TURN_LEFT_R])
                p = c + _TURN_LEFT_R * np.array([math.sin(ang), -math.cos(ang)])
        else:
            tail = si - approach - arc_len
            if maneuver == "right":
                p = np.array([-_BOX + arc_r, -_LANE_OFF - arc_r - tail])
            else:
                p = np.array([-_BOX + _TURN_LEFT_R,
                              -_LANE_OFF + _TURN_LEFT_R + tail])
        return rotate(p)

    stop_s = start_dist - _STOP_LINE  # arc length of the stop line
    box_exit_s = approach + (arc_len if arc_len else 2.0 * _BOX)
    return locate, stop_s, approach, box_exit_s


def _intersection_recording(rng, rec_id: str, n_agents: int,
                            n_frames: int) -> Recording:
    """Four-way crossing with a single-occupancy box.

    The x-axis road has priority; every agent holds at the stop line until
    the box lock is free, with priority agents served first among waiters.
    Stop-and-go timing therefore depends on cross traffic.
    """
    dt = 1.0 / RECORDING_HZ
    specs = []
    arm_front: dict[int, float] = {}
    for i in range(n_agents):
        arm = int(rng.integers(0, 4))
        start = arm_front.get(arm, float(rng.uniform(26.0, 45.0)))
        arm_front[arm] = start + float(rng.uniform(14.0, 24.0))
        maneuver = ["straight", "straight", "right", "left"][int(rng.integers(0, 4))]
        locate, stop_s, box_in, box_out = _intersection_path(maneuver, arm, start)
        base_v = float(rng.uniform(5.0, 9.0))
        specs.append({
            "locate": locate, "stop_s": stop_s, "box_in": box_in,
            "box_out": box_out, "v": base_v, "priority": arm in (0, 2),
            "delay": int(rng.integers(0, 60)), "arm": arm, "start": start,
        })
    # front-most agent per arm also gets the highest speed so nobody
    # rear-ends a slower leader on the approach
    by_arm: dict[int, list[int]] = {}
    for i, sp in enumerate(specs):
        by_arm.setdefault(sp["arm"], []).append(i)
    for arm, idxs in by_arm.items():
        idxs = sorted(idxs, key=lambda i: -specs[i]["start"])
        speeds = sorted((specs[i]["v"] for i in idxs), reverse=True)
        for i, v in zip(idxs, speeds):
            specs[i]["v"] = v

    s = np.zeros(n_agents)
    lock = -1
    follow_gap = 6.5
    traces = [np.zeros((n_frames, 2)) for _ in range(n_agents)]
    for t in range(n_frames):
        for i in range(n_agents):
            traces[i][t] = specs[i]["locate"](s[i])
        here = [traces[i][t] for i in range(n_agents)]
        if lock >= 0 and s[lock] >= specs[lock]["box_out"]:
            lock = -1
        if lock < 0:
            waiting = [
                i for i in range(n_agents)
                if t >= specs[i]["delay"]
                and specs[i]["stop_s"] - 1e-9 <= s[i] < specs[i]["box_in"]
            ]
            if waiting:
                waiting.sort(key=lambda i: (not specs[i]["priority"], -s[i], i))
                lock = waiting[0]
        for i in range(n_agents):
            sp = specs[i]
            if t < sp["delay"]:
                continue
            s_next = s[i] + sp["v"] * dt
            held = lock != i and s[i] < sp["box_in"]
            if held and s_next > sp["stop_s"]:
                s_next = max(s[i], sp["stop_s"])
            if lock != i:
                # queue behind stopped or slower agents in the same lane;
                # the box owner is exempt so the crossing always drains
                others = [here[j] for j in range(n_agents) if j != i]
                if _held_behind(here[i], sp["locate"](s_next), others,
                                max_gap=follow_gap):
                    s_next = s[i]
            s[i] = s_next
    return _assemble(rec_id, traces)


_LANES = (0.0, 3.5, 7.0)
_LANE_CHANGE_VY = 1.75
_GAP_TRIGGER = 25.0
_LANE_FREE_GAP = 20.0


def _highway_recording(rng, rec_id: str, n_agents: int, n_frames: int) -> Recording:
    """Straight multi-lane flow with overtaking lane changes.

    Longitudinal speed is constant per agent unless boxed in behind a
    slower leader with no free lane; lateral motion is a constant-velocity
    ramp between lane centers and exactly zero otherwise.
    """
    dt = 1.0 / RECORDING_HZ
    lane = [int(rng.integers(0, len(_LANES))) for _ in range(n_agents)]
    x = np.zeros(n_agents)
    occupied: dict[int, list[float]] = {}
    for i in range(n_agents):
        while True:
            xi = float(rng.uniform(0.0, 30.0 + 22.0 * n_agents))
            if all(abs(xi - xo) > 18.0 for xo in occupied.get(lane[i], [])):
                break
        occupied.setdefault(lane[i], []).append(xi)
        x[i] = xi
    v = np.array([float(rng.uniform(22.0, 32.0)) for _ in range(n_agents)])
    # fastest at the back of each lane so overtakes actually happen
    for k in range(len(_LANES)):
        idxs = sorted((i for i in range(n_agents) if lane[i] == k),
                      key=lambda i: x[i])
        speeds = sorted((v[i] for i in idxs), reverse=True)
        for i, vi in zip(idxs, speeds):
            v[i] = vi
    v_cur = v.copy()
    y = np.array([_LANES[k] for k in lane])
    target_lane = list(lane)  # differs from lane while a change is running
    traces = [np.zeros((n_frames, 2)) for _ in range(n_agents)]

    def lane_of(i):
        return target_lane[i]

    for t in range(n_frames):
        for i in range(n_agents):
            traces[i][t] = (x[i], y[i])
        for i in range(n_agents):
            changing = y[i] != _LANES[target_lane[i]]
            if not changing:
                lane[i] = target_lane[i]
                lead_gap, lead_v = np.inf, None
                for j in range(n_agents):
                    if j != i and lane_of(j) == lane_of(i) and x[j] > x[i]:
                        if x[j] - x[i] < lead_gap:
                            lead_gap, lead_v = x[j] - x[i], v_cur[j]
                if lead_gap < _GAP_TRIGGER and lead_v is not None and lead_v < v[i]:
                    moved = False
                    for cand in (lane[i] + 1, lane[i] - 1):
                        if not 0 <= cand < len(_LANES):
                            continue
                        if all(lane_of(j) != cand or abs(x[j] - x[i]) > _LANE_FREE_GAP
                               for j in range(n_agents) if j != i):
                            target_lane[i] = cand
                            moved = True
                            break
                    if not moved:
                        # boxed in: settle onto the leader's speed
                        v_cur[i] = max(lead_v, v_cur[i] - 4.0 * dt)
                elif v_cur[i] < v[i]:
                    v_cur[i] = min(v[i], v_cur[i] + 2.0 * dt)
            x[i] += v_cur[i] * dt
            goal = _LANES[target_lane[i]]
            if y[i] != goal:
                step = _LANE_CHANGE_VY * dt
                if abs(goal - y[i]) <= step:
                    y[i] = goal
                else:
                    y[i] += math.copysign(step, goal - y[i])
    return _assemble(rec_id, traces)


_GENERATORS = {
    ScenarioTag.ROUNDABOUT: _roundabout_recording,
    ScenarioTag.INTERSECTION: _intersection_recording,
    ScenarioTag.HIGHWAY: _highway_recording,
}


def synth_scenario(kind, n_recordings: int, n_agents: int, seed: int,
                   n_frames: int = 450) -> list:
    """Generate deterministic synthetic recordings of one scenario kind."""
    try:
        kind = ScenarioTag(kind)
    except ValueError as exc:
        raise InvalidInput(f"unknown scenario kind: {kind!r}") from exc
    if n_recordings < 1 or n_agents < 1:
        raise InvalidInput("need at least one recording and one agent")
    gen = _GENERATORS[kind]
    out = []
    root = np.random.SeedSequence(entropy=seed, spawn_key=(hash(kind.value) & 0xFFFF,))
    for i, child in enumerate(root.spawn(n_recordings)):
        rng = np.random.default_rng(child)
        rec_id = f"{kind.value}-{seed}-{i:03d}"
        out.append(gen(rng, rec_id, n_agents, n_frames))
    return out


def infer_tag(recording_id: str) -> ScenarioTag:
    for tag in ScenarioTag:
        if recording_id.startswith(tag.value):
            return tag
    raise InvalidInput(
        f"cannot infer scenario kind from recording id {recording_id!r}; "
        f"expected a prefix in {[t.value for t in ScenarioTag]}"
    )


def prepare_dataset(paths, *, downsample_factor: int = 5, stride: int = 5,
                    split: SplitSpec | None = None, obs_steps: int | None = None,
                    horizon_steps: int | None = None):
    """Recordings on disk -> stratified (train, val, test) instance lists.

    Window lengths default per scenario kind, inferred from each
    recording's id; pass obs_steps / horizon_steps to override globally.
    """
    instances = []
    for path in sorted(str(p) for p in paths):
        rec = Recording.from_csv(path)
        tag = infer_tag(rec.recording_id)
        n_obs, horizon = scenario_window_defaults(tag)
        if obs_steps is not None:
            n_obs = obs_steps
        if horizon_steps is not None:
            horizon = horizon_steps
        trajs = downsample(rec.to_trajectories(), downsample_factor)
        instances.extend(
            window_instances(trajs, n_obs, horizon, stride=stride,
                             scenario_tag=tag, recording_id=rec.recording_id)
        )
    if not instances:
        raise InvalidInput("no prediction instances could be built")
    return stratified_split(instances, split)
