"""Error metrics, reference predictors and per-day prediction traces."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import NormalizationSpec, SpeedSeries, WindowBatch, denormalize, format_number, normalize
from .errors import AllTargetsZero, BadDay, BadLink, BadParams, EmptyDataset, ShapeMismatch
from .model import GltModel, forward

BASELINES = ("persistence", "historical_mean")


@dataclass(frozen=True)
class MetricsReport:
    rmse: float
    mape: float
    mae: float
    n: int
    skipped_zero_targets: int = 0

    def to_line(self) -> str:
        return (f"rmse_mph={self.rmse:.6f} mape_pct={self.mape:.6f} mae_mph={self.mae:.6f} "
                f"n={self.n} skipped={self.skipped_zero_targets}")

    def to_kv_lines(self) -> str:
        return (f"rmse_mph={format_number(self.rmse)}\nmape_pct={format_number(self.mape)}\n"
                f"mae_mph={format_number(self.mae)}\nn={self.n}\nskipped={self.skipped_zero_targets}\n")


def compute_metrics(predictions, targets) -> MetricsReport:
    """RMSE and MAE over every entry; MAPE (percent) over entries with a positive target."""
    p = np.asarray(predictions, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if p.shape != y.shape:
        raise ShapeMismatch(f"predictions {p.shape} vs targets {y.shape}")
    if y.size == 0:
        raise EmptyDataset("no entries to score")
    err = np.abs(y - p).ravel()
    yv = y.ravel()
    keep = yv > 0
    if not keep.any():
        raise AllTargetsZero("MAPE is undefined when every target is zero")
    return MetricsReport(
        rmse=float(np.sqrt(np.mean(err ** 2))),
        mape=float(100.0 * np.mean(err[keep] / yv[keep])),
        mae=float(np.mean(err)),
        n=int(y.size),
        skipped_zero_targets=int(np.count_nonzero(~keep)),
    )


def predict_mph(model, inputs_mph, normalization: NormalizationSpec = NormalizationSpec(),
                chunk: int = 4096) -> np.ndarray:
    """Predictions in mph for (B, M, N) mph windows.

    ``model`` is a :class:`GltModel` (run in normalized units) or any callable
    that already maps mph windows to mph predictions.
    """
    x = np.asarray(inputs_mph, dtype=np.float64)
    if not isinstance(model, GltModel):
        return np.asarray(model(x), dtype=np.float64)
    out = [forward(model, normalize(x[s:s + chunk], normalization)) for s in range(0, len(x), chunk)]
    return denormalize(np.concatenate(out), normalization)


def evaluate(model, windows: WindowBatch, normalization: NormalizationSpec = NormalizationSpec()) -> MetricsReport:
    """Score a model on mph windows; predictions are denormalized before scoring."""
    if len(windows) == 0:
        raise EmptyDataset("no test windows")
    return compute_metrics(predict_mph(model, windows.inputs, normalization), windows.targets)


def historical_mean_table(train: SpeedSeries) -> np.ndarray:
    """(steps_per_day, N) mean speed of each link at each time-of-day slot."""
    spd = train.steps_per_day
    slots = train.slots()
    counts = np.bincount(slots, minlength=spd)
    if np.any(counts == 0):
        raise EmptyDataset("training data does not cover every time-of-day slot")
    sums = np.zeros((spd, train.N))
    np.add.at(sums, slots, train.values)
    return sums / counts[:, None]


def baseline_predict(kind: str, train: SpeedSeries, windows: WindowBatch) -> np.ndarray:
    if kind == "persistence":
        return np.array(windows.inputs[:, -1, :], dtype=np.float64)
    if kind == "historical_mean":
        return historical_mean_table(train)[windows.slots]
    raise BadParams(f"unknown baseline {kind!r}; expected one of {BASELINES}")


def day_rows(series: SpeedSeries, day_index: int) -> range:
    """Row indices of calendar day ``day_index`` (day 0 contains row 0)."""
    spd = series.steps_per_day
    first = day_index * spd - series.start_index
    if day_index < 0 or first < 0 or first + spd > series.T:
        raise BadDay(f"day {day_index} is not fully covered by the series")
    return range(first, first + spd)


def export_trace(model, series: SpeedSeries, link_id: int, day_index: int, path: str | Path | None,
                 normalization: NormalizationSpec = NormalizationSpec(), M: int = 10) -> np.ndarray:
    """One link's one-step-ahead predictions against ground truth over one day.

    Writes ``time_step,ground_truth_mph,predicted_mph`` (one row per slot)
    when ``path`` is given and returns the same rows as an array.
    """
    if not 0 <= link_id < series.N:
        raise BadLink(f"link {link_id} outside [0, {series.N})")
    rows = day_rows(series, day_index)
    if rows.start < M:
        raise BadDay(f"day {day_index} starts before a full {M}-step history is available")
    t = np.arange(rows.start, rows.stop)
    windows = series.values[(t - 1)[:, None] - np.arange(M - 1, -1, -1)[None, :]]
    pred = predict_mph(model, windows, normalization)[:, link_id]
    truth = series.values[t, link_id]
    out = np.column_stack([np.arange(len(t)), truth, pred])
    if path is not None:
        with Path(path).open("w", newline="") as fh:
            fh.write("time_step,ground_truth_mph,predicted_mph\n")
            for step, gt, pr in out:
                fh.write(f"{int(step)},{format_number(gt)},{format_number(pr)}\n")
    return out


def read_trace(path: str | Path) -> np.ndarray:
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["time_step", "ground_truth_mph", "predicted_mph"]:
            raise ShapeMismatch(f"unexpected trace header {header}")
        return np.array([[float(c) for c in row] for row in reader])
