"""Command-line experiment driver.

Seven subcommands cover the full workflow: synthesize recordings, train
the predictor (with or without interaction and reward terms), score a
checkpoint on a held-out split, fit the bounded policy head, compare the
raw and policy-corrected pipelines under distribution shift, reduce
report tables to adaptability scores, and rerun the ablation grid.

Every command reads one YAML config (all fields defaulted), applies
dotted-key overrides from ``--set``, echoes the effective config into
its run directory, and is deterministic under a fixed seed.  Exit codes:
0 success, 2 usage or config error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path

import pandas as pd

from .config import RunConfig, load_config, save_config
from .data import SplitSpec, prepare_dataset, synth_scenario
from .errors import InvalidInput, TrajkitError
from .metrics import (
    METRIC_NAMES,
    CsaInput,
    csa_table,
    emit_report,
    metrics_from_instances,
    radar_chart,
    read_report,
    report_csa_input,
)
from .policy import build_replay, load_policy, ood_predict, save_policy, td3_train
from .reward import DemonstrationSet
from .training import (
    ablation_grid,
    load_checkpoint,
    predict_positions,
    save_checkpoint,
    train,
)


def make_run_dir(cfg: RunConfig, command: str, run_name=None) -> Path:
    """Timestamped directory under cfg.out_dir; --run-name pins it."""
    name = run_name or time.strftime(f"{command}-%Y%m%d-%H%M%S")
    path = Path(cfg.out_dir) / name
    path.mkdir(parents=True, exist_ok=True)
    return path


def _echo_config(cfg: RunConfig, run_dir: Path) -> None:
    save_config(cfg, run_dir / "config.yaml")


def _synthesize_recordings(cfg: RunConfig, scenarios, data_dir: Path) -> list:
    data_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for kind in scenarios:
        for rec in synth_scenario(kind, cfg.data.n_recordings,
                                  cfg.data.n_agents, cfg.seed,
                                  n_frames=cfg.data.n_frames):
            path = data_dir / f"{rec.recording_id}.csv"
            rec.to_csv(path)
            paths.append(path)
    return paths


def _split_spec(cfg: RunConfig) -> SplitSpec:
    return SplitSpec(train=cfg.data.train_frac, val=cfg.data.val_frac,
                     test=cfg.data.test_frac, seed=cfg.data.split_seed)


def _load_splits(cfg: RunConfig, run_dir: Path):
    """(train, val, test) instances from cfg.data.paths, else synthetic."""
    paths = cfg.data.paths
    if not paths:
        paths = _synthesize_recordings(cfg, cfg.data.scenarios,
                                       run_dir / "data")
    return prepare_dataset(paths, downsample_factor=cfg.data.downsample,
                           stride=cfg.data.stride, split=_split_spec(cfg),
                           obs_steps=cfg.data.obs_steps,
                           horizon_steps=cfg.data.horizon_steps)


def _ood_instances(cfg: RunConfig, run_dir: Path) -> list:
    """Every instance from the shifted scenarios, in a fixed order."""
    paths = _synthesize_recordings(cfg, cfg.data.ood_scenarios,
                                   run_dir / "data-ood")
    tr, va, te = prepare_dataset(paths, downsample_factor=cfg.data.downsample,
                                 stride=cfg.data.stride, split=_split_spec(cfg),
                                 obs_steps=cfg.data.obs_steps,
                                 horizon_steps=cfg.data.horizon_steps)
    return tr + va + te


def _require_file(path, what: str) -> str:
    if not os.path.exists(path):
        raise InvalidInput(f"{what} not found: {path}")
    return str(path)


def _print_epoch(entry: dict) -> None:
    parts = [f"epoch {entry['epoch']}"]
    for key, value in entry.items():
        if key != "epoch" and isinstance(value, float):
            parts.append(f"{key} {value:.4f}")
    print("  ".join(parts))


def _config_from_args(args) -> RunConfig:
    overrides = list(args.overrides)
    if getattr(args, "no_irl", False):
        overrides.append("train.use_irl=false")
    if getattr(args, "no_gnn", False):
        overrides.append("train.use_gnn=false")
    cfg = load_config(args.config, overrides)
    return cfg


def cmd_synth(args) -> int:
    cfg = load_config(args.config, args.overrides)
    out = Path(args.out if args.out is not None else cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    recordings = synth_scenario(args.kind, args.count,
                                args.agents if args.agents else cfg.data.n_agents,
                                args.seed if args.seed is not None else cfg.seed,
                                n_frames=args.frames or cfg.data.n_frames)
    _echo_config(cfg, out)
    for rec in recordings:
        path = out / f"{rec.recording_id}.csv"
        rec.to_csv(path)
        print(f"wrote {path}")
    return 0


def cmd_train(args) -> int:
    cfg = _config_from_args(args)
    run_dir = make_run_dir(cfg, "train", args.run_name)
    _echo_config(cfg, run_dir)
    train_set, val_set, _ = _load_splits(cfg, run_dir)
    print(f"training on {len(train_set)} instances, validating on "
          f"{len(val_set)}")
    result = train(train_set, val_set, cfg.train, callback=_print_epoch)
    ckpt = run_dir / "checkpoint.npz"
    save_checkpoint(ckpt, result.params, result.config,
                    history=result.history,
                    reward_params=result.reward_params)
    print(f"wrote {ckpt}")
    return 0


def cmd_eval(args) -> int:
    cfg = _config_from_args(args)
    run_dir = make_run_dir(cfg, "eval", args.run_name)
    _echo_config(cfg, run_dir)
    params, _, train_cfg, _ = load_checkpoint(
        _require_file(args.checkpoint, "checkpoint"))
    splits = dict(zip(("train", "val", "test"), _load_splits(cfg, run_dir)))
    instances = splits[args.split]
    if not instances:
        raise InvalidInput(f"split {args.split!r} is empty")
    preds = predict_positions(instances, params, use_gnn=train_cfg.use_gnn,
                              radius=train_cfg.radius)
    report = metrics_from_instances(preds, instances,
                                    miss_threshold=cfg.metrics.miss_threshold,
                                    crash_distance=cfg.metrics.crash_distance)
    label = args.dataset_label or args.split
    frame = emit_report({(args.method_label, label): report},
                        run_dir / "report.csv")
    print(frame.to_string(index=False))
    print(f"wrote {run_dir / 'report.csv'}")
    return 0


def cmd_train_policy(args) -> int:
    cfg = _config_from_args(args)
    run_dir = make_run_dir(cfg, "train-policy", args.run_name)
    _echo_config(cfg, run_dir)
    _, reward_params, _, _ = load_checkpoint(
        _require_file(args.checkpoint, "checkpoint"))
    if reward_params is None:
        raise InvalidInput(
            "checkpoint has no reward net; retrain without --no-irl")
    train_set, _, _ = _load_splits(cfg, run_dir)
    demos = DemonstrationSet.from_instances(train_set)
    replay = build_replay(demos)
    print(f"fitting policy on {len(replay.states)} transitions")
    result = td3_train(replay, reward_params, cfg.td3, callback=_print_epoch)
    path = run_dir / "policy.npz"
    save_policy(path, result.params, result.config, history=result.history)
    print(f"wrote {path}")
    return 0


def cmd_ood(args) -> int:
    cfg = _config_from_args(args)
    run_dir = make_run_dir(cfg, "ood-eval", args.run_name)
    _echo_config(cfg, run_dir)
    params, _, train_cfg, _ = load_checkpoint(
        _require_file(args.checkpoint, "checkpoint"))
    policy_params, _, _ = load_policy(_require_file(args.policy, "policy"))
    instances = _ood_instances(cfg, run_dir)
    label = "+".join(cfg.data.ood_scenarios)
    print(f"evaluating {len(instances)} shifted instances ({label})")

    baseline = predict_positions(instances, params, use_gnn=train_cfg.use_gnn,
                                 radius=train_cfg.radius)
    corrected = ood_predict(instances, params, policy_params,
                            use_gnn=train_cfg.use_gnn, radius=train_cfg.radius)
    reports = {}
    for method, preds in (("baseline", baseline), ("+policy", corrected)):
        reports[(method, label)] = metrics_from_instances(
            preds, instances, miss_threshold=cfg.metrics.miss_threshold,
            crash_distance=cfg.metrics.crash_distance)
    frame = emit_report(reports, run_dir / "report.csv")
    print(frame.to_string(index=False))
    print(f"wrote {run_dir / 'report.csv'}")
    return 0


def cmd_csa(args) -> int:
    cfg = _config_from_args(args)
    run_dir = make_run_dir(cfg, "csa", args.run_name)
    _echo_config(cfg, run_dir)
    frames = [read_report(_require_file(p, "report")) for p in args.report]
    table = pd.concat(frames, ignore_index=True)
    alpha = cfg.csa.alpha if args.alpha is None else args.alpha
    beta = cfg.csa.beta if args.beta is None else args.beta
    inp = report_csa_input(table, args.known, args.unknown,
                           alpha=alpha, beta=beta)
    if args.metrics:
        wanted = [m.lower() for m in args.metrics]
        bad = sorted(set(wanted) - set(METRIC_NAMES))
        if bad:
            raise InvalidInput(f"unknown metrics: {bad}")
        inp = CsaInput(
            known={m: {k: row[k] for k in wanted}
                   for m, row in inp.known.items()},
            unknown={m: {k: row[k] for k in wanted}
                     for m, row in inp.unknown.items()},
            alpha=alpha, beta=beta)
    scores = csa_table(inp)
    scores.to_csv(run_dir / "csa.csv", index=False)
    radar_chart(inp, run_dir / "radar.png")
    print(scores.to_string(index=False))
    print(f"wrote {run_dir / 'csa.csv'}")
    print(f"wrote {run_dir / 'radar.png'}")
    return 0


def cmd_ablate(args) -> int:
    cfg = _config_from_args(args)
    run_dir = make_run_dir(cfg, "ablate", args.run_name)
    _echo_config(cfg, run_dir)
    train_set, val_set, _ = _load_splits(cfg, run_dir)
    print(f"ablation over {len(train_set)} train / {len(val_set)} val "
          "instances")

    def announce(label, _result):
        print(f"variant {label} done")

    results = ablation_grid(train_set, val_set, cfg.train, callback=announce)
    reports = {}
    for label, result in results.items():
        preds = predict_positions(val_set, result.params,
                                  use_gnn=result.config.use_gnn,
                                  radius=result.config.radius)
        reports[(label, "val")] = metrics_from_instances(
            preds, val_set, miss_threshold=cfg.metrics.miss_threshold,
            crash_distance=cfg.metrics.crash_distance)
    frame = emit_report(reports, run_dir / "report.csv")
    print(frame.to_string(index=False))
    print(f"wrote {run_dir / 'report.csv'}")
    return 0


def _add_common(sp) -> None:
    sp.add_argument("--config", default=None,
                    help="YAML config file; defaults apply when omitted")
    sp.add_argument("--set", dest="overrides", action="append", default=[],
                    metavar="KEY=VALUE",
                    help="dotted config override, e.g. train.epochs=20")
    sp.add_argument("--run-name", default=None,
                    help="run directory name (default: command + timestamp)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trajkit",
        description="trajectory prediction experiments: synthesize data, "
                    "train, evaluate, fit the shift-robust policy, and "
                    "score adaptability")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", help="write synthetic recording CSVs")
    sp.add_argument("kind", help="scenario kind (roundabout, intersection, "
                                 "highway)")
    sp.add_argument("count", type=int, help="number of recordings")
    sp.add_argument("--agents", type=int, default=None)
    sp.add_argument("--frames", type=int, default=None)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--out", default=None, help="output directory")
    _add_common(sp)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("train", help="train the trajectory predictor")
    sp.add_argument("--no-irl", action="store_true",
                    help="drop the reward-learning term")
    sp.add_argument("--no-gnn", action="store_true",
                    help="drop the interaction encoder")
    _add_common(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="score a checkpoint on one split")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--split", choices=("train", "val", "test"),
                    default="test")
    sp.add_argument("--method-label", default="tpm",
                    help="method column value in the report")
    sp.add_argument("--dataset-label", default=None,
                    help="dataset column value (default: the split name)")
    _add_common(sp)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("train-policy",
                        help="fit the bounded policy head offline")
    sp.add_argument("--checkpoint", required=True,
                    help="predictor checkpoint holding the reward net")
    _add_common(sp)
    sp.set_defaults(func=cmd_train_policy)

    sp = sub.add_parser("ood-eval",
                        help="baseline vs +policy on shifted scenarios")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--policy", required=True)
    _add_common(sp)
    sp.set_defaults(func=cmd_ood)

    sp = sub.add_parser("csa", help="adaptability scores from report CSVs")
    sp.add_argument("--report", action="append", required=True,
                    help="report CSV; repeat to concatenate")
    sp.add_argument("--known", required=True,
                    help="dataset label of the familiar domain")
    sp.add_argument("--unknown", required=True,
                    help="dataset label of the shifted domain")
    sp.add_argument("--alpha", type=float, default=None)
    sp.add_argument("--beta", type=float, default=None)
    sp.add_argument("--metrics", nargs="+", default=None)
    _add_common(sp)
    sp.set_defaults(func=cmd_csa)

    sp = sub.add_parser("ablate", help="retrain the four model variants")
    _add_common(sp)
    sp.set_defaults(func=cmd_ablate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except InvalidInput as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TrajkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
