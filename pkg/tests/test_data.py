import math

import numpy as np
import pandas as pd
import pytest

from trajkit.data import (
    RECORDING_COLUMNS,
    Recording,
    SplitSpec,
    build_graph,
    downsample,
    infer_tag,
    load_recording,
    prepare_dataset,
    stratified_split,
    synth_scenario,
)
from trajkit.domain import (
    AgentState,
    ScenarioTag,
    Trajectory,
    window_instances,
)
from trajkit.errors import InvalidInput, SchemaError


def small_table(n=12, tracks=(0, 1)):
    rows = []
    for tid in tracks:
        for f in range(n):
            rows.append({
                "recording_id": "roundabout-0-000", "frame": f, "track_id": tid,
                "x": 0.25 * f + tid, "y": 0.5 * f, "vx": 6.25, "vy": 12.5,
                "ax": 0.0, "ay": 0.0, "heading_deg": 45.0,
                "width": 2.0, "length": 4.5, "agent_class": "car",
            })
    return pd.DataFrame(rows)


def test_recording_round_trip(tmp_path):
    rec = Recording.from_frame(small_table())
    path = tmp_path / "rec.csv"
    rec.to_csv(path)
    back = Recording.from_csv(path)
    pd.testing.assert_frame_equal(rec.table, back.table)


def test_missing_column_named():
    table = small_table().drop(columns=["vx"])
    with pytest.raises(SchemaError, match="vx"):
        Recording.from_frame(table)


def test_extra_column_rejected():
    table = small_table()
    table["speed"] = 1.0
    with pytest.raises(SchemaError, match="speed"):
        Recording.from_frame(table)


def test_nan_cited_with_row():
    table = small_table()
    table.loc[7, "x"] = np.nan
    with pytest.raises(SchemaError, match="row 7"):
        Recording.from_frame(table)


def test_duplicate_and_gap_rejected():
    table = small_table()
    dup = pd.concat([table, table.iloc[[3]]], ignore_index=True)
    with pytest.raises(SchemaError, match="duplicate"):
        Recording.from_frame(dup)
    gap = table[table["frame"] != 5]
    with pytest.raises(SchemaError, match="non-contiguous"):
        Recording.from_frame(gap)


def test_to_trajectories_converts_heading():
    trajs = Recording.from_frame(small_table()).to_trajectories()
    assert len(trajs) == 2
    assert trajs[0].agent_id == "roundabout-0-000/0"
    assert trajs[0].states[0].yaw == pytest.approx(math.radians(45.0))
    assert trajs[0].dt == pytest.approx(1.0 / 25.0)


def make_traj(n, t0=0, agent_id="a", dt=0.04):
    states = [
        AgentState(float(i), 0.0, 1.0 + i, 0.0, 0.0, 0.0, 0.0, t0 + i)
        for i in range(n)
    ]
    return Trajectory(agent_id, states, dt)


def test_downsample_25_steps_by_5():
    out = downsample(make_traj(25), 5)
    assert len(out) == 5
    np.testing.assert_array_equal(out.timesteps, [0, 1, 2, 3, 4])
    assert out.dt == pytest.approx(0.2)
    # kept states carry their original sampled values
    np.testing.assert_array_equal(out.positions()[:, 0], [0, 5, 10, 15, 20])
    np.testing.assert_array_equal(out.features()[:, 2], [1, 6, 11, 16, 21])


def test_downsample_keeps_global_phase():
    # an agent born at frame 3 keeps frames 5, 10, ... so index 1 means the
    # same instant for everyone
    out = downsample(make_traj(25, t0=3), 5)
    np.testing.assert_array_equal(out.timesteps, [1, 2, 3, 4, 5])
    assert out.states[0].x == pytest.approx(2.0)  # originally frame 5


def test_downsample_validates_factor():
    with pytest.raises(InvalidInput):
        downsample(make_traj(10), 0)
    with pytest.raises(InvalidInput):
        downsample(make_traj(10), 2.5)


def test_stratified_split_proportions_and_determinism():
    rng = np.random.default_rng(0)
    instances = []
    for tag, rec_id, count in [
        (ScenarioTag.ROUNDABOUT, "r0", 50),
        (ScenarioTag.ROUNDABOUT, "r1", 23),
        (ScenarioTag.HIGHWAY, "h0", 9),
    ]:
        traj = make_traj(count + 7 + 3 - 1, agent_id=rec_id)
        got = window_instances([traj], 7, 3, stride=1,
                               scenario_tag=tag, recording_id=rec_id)
        assert len(got) == count
        instances.extend(got)
    rng.shuffle(instances)

    spec = SplitSpec(seed=11)
    train, val, test = stratified_split(instances, spec)
    assert len(train) + len(val) + len(test) == len(instances)
    for rec_id, count in [("r0", 50), ("r1", 23), ("h0", 9)]:
        n_train = sum(1 for i in train if i.recording_id == rec_id)
        n_val = sum(1 for i in val if i.recording_id == rec_id)
        n_test = sum(1 for i in test if i.recording_id == rec_id)
        assert n_train + n_val + n_test == count
        assert abs(n_train - 0.8 * count) <= 1.0
        assert abs(n_val - 0.1 * count) <= 1.0
        assert abs(n_test - 0.1 * count) <= 1.0

    again = stratified_split(instances, spec)
    for a, b in zip((train, val, test), again):
        assert [id(i) for i in a] == [id(i) for i in b]


def test_split_spec_validates():
    with pytest.raises(InvalidInput):
        SplitSpec(train=0.8, val=0.3, test=0.1)


def place_instance(neighbor_xy):
    target = make_traj(10, agent_id="t", dt=0.2)
    trajs = [target]
    for k, (nx, ny) in enumerate(neighbor_xy):
        states = [
            AgentState(nx + 0.0 * i, ny, 0.5, 0.0, 0.0, 0.0, 0.0, i)
            for i in range(10)
        ]
        trajs.append(Trajectory(f"n{k}", states, 0.2))
    return window_instances(trajs, 6, 4, stride=1)[0]


def test_build_graph_radius_threshold():
    # target history runs x = 0..5, so the anchor is (5, 0)
    inst = place_instance([(5 + 29.0, 0.0), (5 + 31.0, 0.0)])
    g = build_graph(inst, radius=30.0)
    assert len(g.node_features) == 2  # target + the near neighbor
    np.testing.assert_array_equal(g.source_indices, [-1, 0])
    np.testing.assert_array_equal(g.node_features[0, :2], [0.0, 0.0])


def test_build_graph_edges_bidirectional_no_self_loops():
    inst = place_instance([(10.0, 3.0), (2.0, -4.0)])
    g = build_graph(inst, radius=30.0)
    pairs = {tuple(e) for e in g.edge_index}
    assert all((j, i) in pairs for i, j in pairs)
    assert all(i != j for i, j in pairs)
    assert len(pairs) == 6  # 3 nodes fully connected, both directions


def test_build_graph_distance_feature_exact():
    inst = place_instance([(9.0, 7.0), (1.0, -2.0)])
    g = build_graph(inst, radius=50.0)
    for (i, j), feat in zip(g.edge_index, g.edge_features):
        dx = g.node_features[j, 0] - g.node_features[i, 0]
        dy = g.node_features[j, 1] - g.node_features[i, 1]
        assert feat[0] == dx and feat[1] == dy
        assert feat[4] == math.hypot(dx, dy)
        assert feat[2] == g.node_features[j, 2] - g.node_features[i, 2]


def test_build_graph_isolated_target():
    inst = place_instance([])
    g = build_graph(inst, radius=30.0)
    assert len(g.node_features) == 1
    assert g.edge_index.shape == (0, 2)
    assert g.edge_features.shape == (0, 5)


def synth_one(kind, seed=5, n_agents=4, n_frames=400):
    return synth_scenario(kind, 1, n_agents, seed, n_frames=n_frames)[0]


@pytest.mark.parametrize("kind", ["roundabout", "intersection", "highway"])
def test_synth_velocities_are_forward_differences(kind):
    rec = synth_one(kind)
    dt = 1.0 / 25.0
    for _, g in rec.table.groupby("track_id"):
        g = g.sort_values("frame")
        pos = g[["x", "y"]].to_numpy()
        vel = g[["vx", "vy"]].to_numpy()
        acc = g[["ax", "ay"]].to_numpy()
        np.testing.assert_array_equal(vel[:-1], np.diff(pos, axis=0) / dt)
        np.testing.assert_array_equal(vel[-1], vel[-2])
        np.testing.assert_array_equal(acc[:-1], np.diff(vel, axis=0) / dt)


@pytest.mark.parametrize("kind", ["roundabout", "intersection", "highway"])
def test_synth_deterministic(kind):
    a = synth_one(kind, seed=9).table
    b = synth_one(kind, seed=9).table
    pd.testing.assert_frame_equal(a, b)
    c = synth_one(kind, seed=10).table
    assert not a[["x", "y"]].equals(c[["x", "y"]])


def turning_runs(pos, min_len=12):
    """Maximal runs of steps with nonzero curvature (cross product)."""
    d = np.diff(pos, axis=0)
    cross = d[:-1, 0] * d[1:, 1] - d[:-1, 1] * d[1:, 0]
    turning = np.abs(cross) > 1e-9
    runs, start = [], None
    for i, flag in enumerate(turning):
        if flag and start is None:
            start = i
        elif not flag and start is not None:
            runs.append((start, i))
            start = None
    if start is not None:
        runs.append((start, len(turning)))
    return [(a, b) for a, b in runs if b - a >= min_len]


def test_roundabout_arc_speed_constant():
    rec = synth_one("roundabout", seed=3, n_agents=3)
    found = 0
    for _, g in rec.table.groupby("track_id"):
        pos = g.sort_values("frame")[["x", "y"]].to_numpy()
        speed = np.hypot(*np.diff(pos, axis=0).T) * 25.0
        for a, b in turning_runs(pos):
            # trim the segment-boundary steps at either end of the run
            seg = speed[a + 2:b - 1]
            if seg.size >= 8:
                assert np.ptp(seg) < 1e-9
                found += 1
    assert found >= 2


def test_intersection_turn_yaw_rate_constant():
    rec = synth_one("intersection", seed=8, n_agents=5, n_frames=500)
    found = 0
    for _, g in rec.table.groupby("track_id"):
        pos = g.sort_values("frame")[["x", "y"]].to_numpy()
        for a, b in turning_runs(pos):
            d = np.diff(pos[a + 2:b], axis=0)
            headings = np.unwrap(np.arctan2(d[:, 1], d[:, 0]))
            rates = np.diff(headings) * 25.0
            if rates.size >= 6:
                assert np.ptp(rates) < 1e-6
                found += 1
    assert found >= 1


def test_highway_stays_in_lane_band_outside_changes():
    rec = synth_one("highway", seed=4, n_agents=6)
    lanes = np.array([0.0, 3.5, 7.0])
    n_changes = 0
    for _, g in rec.table.groupby("track_id"):
        y = g.sort_values("frame")["y"].to_numpy()
        dy = np.diff(y)
        # frames not touched by a ramp sit exactly on a lane center
        still = np.zeros(len(y), dtype=bool)
        still[:-1] |= dy == 0.0
        still[1:] |= dy == 0.0
        on_center = np.isin(y, lanes)
        assert np.all(on_center[still])
        off_center = np.abs(y[:, None] - lanes).min(axis=1)
        assert np.all(off_center[still] <= 0.2)
        # each ramp is monotone with constant lateral velocity inside
        idx = np.flatnonzero(dy != 0.0)
        if idx.size:
            n_changes += 1
            splits = np.flatnonzero(np.diff(idx) > 1) + 1
            for run in np.split(idx, splits):
                seg = dy[run]
                assert np.all(seg > 0) or np.all(seg < 0)
                if seg.size > 2:
                    assert np.ptp(seg[:-1]) < 1e-9
    assert n_changes >= 1


def test_highway_speeds_exceed_urban(tmp_path):
    hw = synth_one("highway", seed=6)
    rb = synth_one("roundabout", seed=6)
    hw_speed = np.hypot(hw.table["vx"], hw.table["vy"]).mean()
    rb_speed = np.hypot(rb.table["vx"], rb.table["vy"]).mean()
    assert hw_speed > 2.0 * rb_speed


def test_synth_validates_inputs():
    with pytest.raises(InvalidInput):
        synth_scenario("freeway", 1, 3, 0)
    with pytest.raises(InvalidInput):
        synth_scenario("highway", 0, 3, 0)


def test_infer_tag():
    assert infer_tag("highway-0-003") is ScenarioTag.HIGHWAY
    with pytest.raises(InvalidInput):
        infer_tag("parking-0-000")


def test_prepare_dataset_end_to_end(tmp_path):
    for rec in synth_scenario("roundabout", 2, 4, seed=1):
        rec.to_csv(tmp_path / f"{rec.recording_id}.csv")
    for rec in synth_scenario("highway", 1, 4, seed=1):
        rec.to_csv(tmp_path / f"{rec.recording_id}.csv")
    paths = sorted(tmp_path.glob("*.csv"))
    train, val, test = prepare_dataset(paths, stride=5, split=SplitSpec(seed=2))
    assert train and val and test
    for inst in train + val + test:
        if inst.scenario_tag is ScenarioTag.HIGHWAY:
            assert inst.n_observed == 10 and inst.horizon == 25
        else:
            assert inst.n_observed == 15 and inst.horizon == 25
    # loading one file directly also works
    trajs = load_recording(paths[0])
    assert all(len(t) > 0 for t in trajs)
