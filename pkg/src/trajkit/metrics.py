"""Displacement metrics, the cross-scenario adaptability score, and reports.

Five per-instance metrics, aggregated by plain means:

* ade   mean Euclidean error over all predicted steps
* fde   Euclidean error of the final step
* apde  mean distance from each predicted point to the nearest ground-truth
        path vertex (alignment-free; no segment interpolation)
* mr    fraction of instances whose final error exceeds miss_threshold
* cr    fraction of instances where any predicted point comes within
        crash_distance of any neighbor's true position at the same step

The adaptability score compares methods across a known and an unknown
scenario: per metric, values are min-max normalized across methods and
flipped so 1 is best, and a degradation penalty charges the mean relative
increase from known to unknown.  score = alpha * known + unknown - beta * D.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .errors import DegenerateNormalization, InvalidInput

MISS_THRESHOLD = 2.0
CRASH_DISTANCE = 1.0

METRIC_NAMES = ("ade", "fde", "apde", "mr", "cr")
REPORT_COLUMNS = ("method", "dataset", "ADE", "FDE", "MR", "APDE", "CR")
CSA_COLUMNS = ("method", "metric", "M_known", "M_unknown", "D", "CSA")


@dataclass(frozen=True)
class MetricReport:
    ade: float
    fde: float
    apde: float
    mr: float
    cr: float
    n_instances: int

    def __post_init__(self):
        for name in METRIC_NAMES:
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0.0:
                raise InvalidInput(f"{name} must be finite and nonnegative: {v}")
        for name in ("mr", "cr"):
            if getattr(self, name) > 1.0:
                raise InvalidInput(f"{name} is a fraction: {getattr(self, name)}")
        if self.n_instances < 1:
            raise InvalidInput("report needs at least one instance")

    def as_dict(self) -> dict:
        return {name: getattr(self, name) for name in METRIC_NAMES}


def compute_metrics(predictions, ground_truth, miss_threshold: float = MISS_THRESHOLD,
                    crash_distance: float = CRASH_DISTANCE,
                    neighbor_futures=None) -> MetricReport:
    """Aggregate metrics over aligned (H_i, 2) position arrays.

    neighbor_futures, when given, carries one (positions, mask) tuple per
    instance with positions (n, H_i, 2) and a boolean mask (n, H_i); only
    masked-on steps can register a crash.  Every array must share the
    prediction's frame, whatever that frame is: all five metrics consume
    distances only.
    """
    if len(predictions) != len(ground_truth):
        raise InvalidInput(
            f"{len(predictions)} predictions vs {len(ground_truth)} truths"
        )
    if len(predictions) == 0:
        raise InvalidInput("no instances to score")
    if neighbor_futures is not None and len(neighbor_futures) != len(predictions):
        raise InvalidInput("neighbor futures must align with predictions")

    ades, fdes, apdes, misses, crashes = [], [], [], [], []
    for i, (pred, gt) in enumerate(zip(predictions, ground_truth)):
        pred = np.asarray(pred, dtype=np.float64)
        gt = np.asarray(gt, dtype=np.float64)
        if pred.shape != gt.shape or pred.ndim != 2 or pred.shape[1] != 2:
            raise InvalidInput(
                f"instance {i}: shapes {pred.shape} vs {gt.shape}"
            )
        d = np.linalg.norm(pred - gt, axis=1)
        ades.append(d.mean())
        fdes.append(d[-1])
        gaps = np.linalg.norm(pred[:, None, :] - gt[None, :, :], axis=2)
        apdes.append(gaps.min(axis=1).mean())
        misses.append(d[-1] > miss_threshold)
        crashes.append(
            _crashed(pred, neighbor_futures[i], crash_distance, i)
            if neighbor_futures is not None else False
        )
    return MetricReport(
        ade=float(np.mean(ades)),
        fde=float(np.mean(fdes)),
        apde=float(np.mean(apdes)),
        mr=float(np.mean(misses)),
        cr=float(np.mean(crashes)),
        n_instances=len(predictions),
    )


def _crashed(pred, futures, crash_distance: float, i: int) -> bool:
    if futures is None:
        return False
    positions, mask = futures
    positions = np.asarray(positions, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if positions.size == 0:
        return False
    if positions.shape[1] != len(pred) or positions.shape[:2] != mask.shape:
        raise InvalidInput(f"instance {i}: neighbor future shapes disagree")
    d = np.linalg.norm(positions - pred[None, :, :], axis=2)
    return bool(np.any(mask & (d <= crash_distance)))


def metrics_from_instances(predictions, instances,
                           miss_threshold: float = MISS_THRESHOLD,
                           crash_distance: float = CRASH_DISTANCE) -> MetricReport:
    """Score scene-local predictions against their source instances."""
    if len(predictions) != len(instances):
        raise InvalidInput("predictions must align with instances")
    gts, futures = [], []
    for inst in instances:
        anchor = inst.anchor
        gts.append(inst.target_future.positions() - anchor)
        if inst.neighbors:
            pos = np.stack([nb.future_xy - anchor for nb in inst.neighbors])
            mask = np.stack([nb.future_mask for nb in inst.neighbors])
            futures.append((pos, mask))
        else:
            futures.append((np.zeros((0, inst.horizon, 2)), np.zeros((0, inst.horizon), dtype=bool)))
    return compute_metrics(predictions, gts, miss_threshold=miss_threshold,
                           crash_distance=crash_distance,
                           neighbor_futures=futures)


@dataclass
class CsaInput:
    """Per-method metric values on a known and an unknown scenario.

    known and unknown map method -> {metric: value} with identical method
    and metric sets; alpha weights the known term, beta the degradation
    penalty.
    """

    known: dict
    unknown: dict
    alpha: float = 1.0
    beta: float = 0.0

    def __post_init__(self):
        if not self.known:
            raise InvalidInput("need at least one method")
        if set(self.known) != set(self.unknown):
            raise InvalidInput("method sets differ between scenarios")
        ref = list(next(iter(self.known.values())))
        for table in (self.known, self.unknown):
            for method, row in table.items():
                if list(row) != ref:
                    raise InvalidInput(
                        f"metric set of {method!r} does not match {ref}"
                    )
        if not (np.isfinite(self.alpha) and np.isfinite(self.beta)):
            raise InvalidInput("weights must be finite")

    @property
    def methods(self) -> list:
        return list(self.known)

    @property
    def metrics(self) -> list:
        return list(next(iter(self.known.values())))


def _flipped_norm(values: dict, method: str, metric: str) -> float:
    """1 - min-max normalized value; 1 is the best method for this metric."""
    col = np.array([values[m][metric] for m in values], dtype=np.float64)
    lo, hi = col.min(), col.max()
    if hi == lo:
        raise DegenerateNormalization(
            f"all methods share {metric} = {lo}; nothing to normalize"
        )
    return float(1.0 - (values[method][metric] - lo) / (hi - lo))


def _degradation(inp: CsaInput, method: str, metric: str) -> float:
    kn = inp.known[method][metric]
    if kn == 0.0:
        if inp.beta == 0.0:
            return float("nan")  # unused by the score; reported as missing
        raise DegenerateNormalization(
            f"known {metric} of {method!r} is zero; relative degradation undefined"
        )
    return float((inp.unknown[method][metric] - kn) / abs(kn))


def csa_score(inp: CsaInput, method: str, metrics=None) -> float:
    """Adaptability score for one method, averaged over the given metrics."""
    if method not in inp.known:
        raise InvalidInput(f"unknown method {method!r}")
    names = list(metrics) if metrics is not None else inp.metrics
    if not names:
        raise InvalidInput("no metrics selected")
    m_known = np.mean([_flipped_norm(inp.known, method, m) for m in names])
    m_unknown = np.mean([_flipped_norm(inp.unknown, method, m) for m in names])
    score = inp.alpha * m_known + m_unknown
    if inp.beta != 0.0:
        score -= inp.beta * np.mean([_degradation(inp, method, m) for m in names])
    return float(score)


def csa_table(inp: CsaInput) -> pd.DataFrame:
    """Single-metric scores for every method, one row per (method, metric)."""
    rows = []
    for method in inp.methods:
        for metric in inp.metrics:
            mk = _flipped_norm(inp.known, method, metric)
            mu = _flipped_norm(inp.unknown, method, metric)
            d = _degradation(inp, method, metric)
            score = inp.alpha * mk + mu
            if inp.beta != 0.0:
                score -= inp.beta * d
            rows.append({"method": method, "metric": metric, "M_known": mk,
                         "M_unknown": mu, "D": d, "CSA": score})
    return pd.DataFrame(rows, columns=list(CSA_COLUMNS))


def emit_report(reports: dict, path) -> pd.DataFrame:
    """Write a (method, dataset) -> MetricReport mapping as a CSV table."""
    if not reports:
        raise InvalidInput("nothing to report")
    rows = []
    for (method, dataset), rep in reports.items():
        rows.append({
            "method": method, "dataset": dataset, "ADE": rep.ade,
            "FDE": rep.fde, "MR": rep.mr, "APDE": rep.apde, "CR": rep.cr,
        })
    frame = pd.DataFrame(rows, columns=list(REPORT_COLUMNS))
    frame.to_csv(path, index=False)
    return frame


def read_report(path) -> pd.DataFrame:
    # round_trip parsing keeps every written float bit-identical
    frame = pd.read_csv(path, float_precision="round_trip")
    missing = set(REPORT_COLUMNS) - set(frame.columns)
    if missing:
        raise InvalidInput(f"report at {path} lacks columns {sorted(missing)}")
    return frame


def report_csa_input(frame: pd.DataFrame, known: str, unknown: str,
                     alpha: float = 1.0, beta: float = 0.0) -> CsaInput:
    """Build adaptability input from a report table's two dataset slices."""
    tables = {}
    for name in (known, unknown):
        part = frame[frame["dataset"] == name]
        if part.empty:
            raise InvalidInput(f"no rows for dataset {name!r}")
        tables[name] = {
            row["method"]: {m: float(row[m.upper()]) for m in METRIC_NAMES}
            for _, row in part.iterrows()
        }
    return CsaInput(known=tables[known], unknown=tables[unknown],
                    alpha=alpha, beta=beta)


def radar_chart(inp: CsaInput, path=None):
    """Polar plot of per-metric scores, one spoke per metric."""
    import matplotlib
    if path is not None:
        matplotlib.use("Agg", force=False)
    import matplotlib.pyplot as plt

    table = csa_table(inp)
    names = inp.metrics
    angles = np.linspace(0.0, 2.0 * np.pi, len(names), endpoint=False)
    closed = np.concatenate([angles, angles[:1]])
    fig, ax = plt.subplots(subplot_kw={"projection": "polar"})
    for method in inp.methods:
        vals = table[table["method"] == method]["CSA"].to_numpy()
        ax.plot(closed, np.concatenate([vals, vals[:1]]), label=method)
    ax.set_xticks(angles)
    ax.set_xticklabels([n.upper() for n in names])
    ax.legend(loc="lower right", bbox_to_anchor=(1.2, 0.0), fontsize=8)
    if path is not None:
        fig.savefig(path, dpi=120, bbox_inches="tight",
                    metadata={"Date": None})
        plt.close(fig)
    return fig
