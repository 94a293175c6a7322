"""Speed histories, road-network matrices, splits, windows and synthetic data."""

from __future__ import annotations

import csv
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    BadFractions,
    BadScale,
    BadShape,
    MalformedCsv,
    NegativeSpeed,
    NonSymmetric,
    TooShort,
)

MINUTES_PER_DAY = 1440
DEFAULT_FRACTIONS = (0.7, 0.2, 0.1)


def _frozen(a: np.ndarray, dtype=np.float64) -> np.ndarray:
    out = np.array(a, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class SpeedSeries:
    """T x N link speeds in mph on a fixed grid.

    ``start_index`` is the time-of-day slot of row 0, so slices taken from the
    middle of a day still know where they sit on the daily grid.
    """

    values: np.ndarray
    interval_minutes: int = 5
    start_index: int = 0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise BadShape(f"speed matrix must be 2-D, got shape {v.shape}")
        if v.shape[1] < 2:
            raise BadShape(f"need at least 2 links, got {v.shape[1]}")
        if not np.all(np.isfinite(v)):
            raise MalformedCsv("speed matrix contains non-finite entries")
        if np.any(v < 0):
            raise NegativeSpeed("speed matrix contains negative entries")
        if self.interval_minutes <= 0 or MINUTES_PER_DAY % self.interval_minutes:
            raise BadShape(f"interval of {self.interval_minutes} min does not divide a day")
        if not 0 <= self.start_index < MINUTES_PER_DAY // self.interval_minutes:
            raise BadShape(f"start_index {self.start_index} outside the day grid")
        object.__setattr__(self, "values", _frozen(v))

    @property
    def steps_per_day(self) -> int:
        return MINUTES_PER_DAY // self.interval_minutes

    @property
    def T(self) -> int:
        return self.values.shape[0]

    @property
    def N(self) -> int:
        return self.values.shape[1]

    def slots(self) -> np.ndarray:
        """Time-of-day slot of every row."""
        return (self.start_index + np.arange(self.T)) % self.steps_per_day

    def slice(self, start: int, stop: int) -> "SpeedSeries":
        return SpeedSeries(
            self.values[start:stop],
            self.interval_minutes,
            (self.start_index + start) % self.steps_per_day,
        )

    def with_values(self, values: np.ndarray) -> "SpeedSeries":
        return SpeedSeries(values, self.interval_minutes, self.start_index)


@dataclass(frozen=True)
class RoadNetworkSpec:
    """Binary undirected adjacency plus roadway distances in miles.

    Distances may be given only on the adjacency support (zeros elsewhere);
    :func:`gltgcrnn.graph.pairwise_distance` completes them.
    """

    adjacency: np.ndarray
    distance: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.adjacency, dtype=np.float64)
        d = np.asarray(self.distance, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise BadShape(f"adjacency must be square, got {a.shape}")
        if d.shape != a.shape:
            raise BadShape(f"distance shape {d.shape} != adjacency shape {a.shape}")
        if not np.isin(a, (0.0, 1.0)).all():
            raise BadShape("adjacency must be binary")
        if not np.array_equal(a, a.T) or np.any(np.diag(a)):
            raise NonSymmetric("adjacency must be symmetric with zero diagonal")
        if not np.all(np.isfinite(d)) or np.any(d < 0):
            raise BadShape("distances must be finite and nonnegative")
        if not np.array_equal(d, d.T) or np.any(np.diag(d)):
            raise NonSymmetric("distance must be symmetric with zero diagonal")
        if np.any((a == 1) & (d <= 0)):
            raise BadShape("adjacent links need a positive distance")
        object.__setattr__(self, "adjacency", _frozen(a.astype(np.int64), np.int64))
        object.__setattr__(self, "distance", _frozen(d))

    @property
    def N(self) -> int:
        return self.adjacency.shape[0]


@dataclass(frozen=True)
class DatasetSplit:
    train: SpeedSeries
    validation: SpeedSeries
    test: SpeedSeries
    fractions: tuple = DEFAULT_FRACTIONS

    def lengths(self) -> tuple[int, int, int]:
        return self.train.T, self.validation.T, self.test.T

    def concatenate(self) -> SpeedSeries:
        values = np.concatenate([self.train.values, self.validation.values, self.test.values])
        return SpeedSeries(values, self.train.interval_minutes, self.train.start_index)


@dataclass(frozen=True)
class WindowSample:
    inputs: np.ndarray
    target: np.ndarray
    t_index: int


@dataclass(frozen=True)
class WindowBatch:
    """Stacked supervised windows: inputs (B, M, N), targets (B, N).

    ``slots`` holds the time-of-day slot of each target row.
    """

    inputs: np.ndarray
    targets: np.ndarray
    t_index: np.ndarray
    slots: np.ndarray

    def __len__(self) -> int:
        return self.inputs.shape[0]

    def take(self, idx) -> "WindowBatch":
        return WindowBatch(self.inputs[idx], self.targets[idx], self.t_index[idx], self.slots[idx])

    def samples(self) -> list[WindowSample]:
        return [
            WindowSample(self.inputs[j], self.targets[j], int(self.t_index[j]))
            for j in range(len(self))
        ]


@dataclass(frozen=True)
class NormalizationSpec:
    """How speeds are mapped into model units: ``(x - offset) / scale``.

    ``max_scale`` has no offset. ``affine`` also subtracts ``offset``, which
    centres the data inside the (-1, 1) range the LSTM output can reach.
    """

    mode: str = "max_scale"
    scale: float = 60.0
    offset: float = 0.0

    def __post_init__(self):
        if self.mode not in NORMALIZATION_MODES:
            raise BadScale(f"unknown normalization mode {self.mode!r}")
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise BadScale(f"scale must be positive, got {self.scale}")
        if not math.isfinite(self.offset) or (self.mode != "affine" and self.offset != 0):
            raise BadScale("offset must be finite and is only allowed in affine mode")

    @classmethod
    def fit_affine(cls, train: "SpeedSeries", headroom: float = 0.8) -> "NormalizationSpec":
        """Centre the training range and shrink it to ``[-headroom, headroom]``."""
        lo, hi = float(train.values.min()), float(train.values.max())
        half = max((hi - lo) / 2.0, 1e-6)
        return cls("affine", half / headroom, (hi + lo) / 2.0)


NORMALIZATION_MODES = ("none", "max_scale", "affine")


# ---------------------------------------------------------------- CSV I/O


def _parse_float(cell: str) -> float:
    return float(cell.strip())


def _read_numeric_rows(path: str | Path) -> list[list[float]]:
    path = Path(path)
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise MalformedCsv(f"{path}: no data rows")

    # First row is a header iff any of its cells fails to parse.
    try:
        [_parse_float(c) for c in rows[0]]
    except ValueError:
        rows = rows[1:]
        if not rows:
            raise MalformedCsv(f"{path}: header only, no data rows")

    width = len(rows[0])
    out = []
    for lineno, row in enumerate(rows, start=1):
        if len(row) != width:
            raise MalformedCsv(f"{path}: data row {lineno} has {len(row)} cells, expected {width}")
        try:
            vals = [_parse_float(c) for c in row]
        except ValueError as exc:
            raise MalformedCsv(f"{path}: data row {lineno}: {exc}") from None
        if not all(math.isfinite(v) for v in vals):
            raise MalformedCsv(f"{path}: data row {lineno} has a non-finite cell")
        out.append(vals)
    return out


def impute_missing(values: np.ndarray) -> np.ndarray:
    """Replace zero readings by the link's last valid reading.

    Leading zeros fall back to the mean of the link's nonzero readings; a link
    with no valid reading at all is left untouched.
    """
    v = np.array(values, dtype=np.float64, copy=True)
    for j in range(v.shape[1]):
        col = v[:, j]
        valid = col > 0
        if valid.all() or not valid.any():
            continue
        mean = col[valid].mean()
        last_idx = np.where(valid, np.arange(len(col)), -1)
        np.maximum.accumulate(last_idx, out=last_idx)
        filled = np.where(last_idx >= 0, col[np.maximum(last_idx, 0)], mean)
        v[:, j] = filled
    return v


def load_speed_csv(
    path: str | Path,
    interval_minutes: int = 5,
    *,
    impute_zeros: bool = True,
    start_index: int = 0,
) -> SpeedSeries:
    """Read a T x N speed matrix (rows are time steps, columns are links)."""
    rows = _read_numeric_rows(path)
    values = np.array(rows, dtype=np.float64)
    if np.any(values < 0):
        raise NegativeSpeed(f"{path}: negative speed reading")
    if impute_zeros:
        values = impute_missing(values)
    series = SpeedSeries(values, interval_minutes, start_index)
    if series.T < series.steps_per_day:
        raise TooShort(f"{path}: {series.T} rows is less than one day ({series.steps_per_day})")
    return series


def load_matrix_csv(path: str | Path) -> np.ndarray:
    m = np.array(_read_numeric_rows(path), dtype=np.float64)
    if m.shape[0] != m.shape[1]:
        raise MalformedCsv(f"{path}: matrix is {m.shape[0]}x{m.shape[1]}, expected square")
    return m


def load_network(adjacency_path: str | Path, distance_path: str | Path) -> RoadNetworkSpec:
    return RoadNetworkSpec(load_matrix_csv(adjacency_path), load_matrix_csv(distance_path))


def format_number(x) -> str:
    """Shortest text that parses back to the identical float (ints stay ints)."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if x.is_integer() and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def write_matrix_csv(path: str | Path, matrix, header: Sequence[str] | None = None) -> None:
    m = np.asarray(matrix)
    fmt = format_number if m.dtype.kind == "f" else (lambda v: str(int(v)))
    with Path(path).open("w", newline="") as fh:
        if header is not None:
            fh.write(",".join(header) + "\n")
        for row in m:
            fh.write(",".join(fmt(v) for v in row) + "\n")


def write_speed_csv(path: str | Path, series: SpeedSeries, header: bool = False) -> None:
    names = [f"link_{j}" for j in range(series.N)] if header else None
    write_matrix_csv(path, series.values, names)


# ---------------------------------------------------------- split/windows


def split_lengths(T: int, fractions: Sequence[float]) -> tuple[int, int, int]:
    f = tuple(float(x) for x in fractions)
    if len(f) != 3 or any(not (x > 0) for x in f) or abs(sum(f) - 1.0) > 1e-9:
        raise BadFractions(f"fractions must be three positives summing to 1, got {fractions}")
    n_train = int(math.floor(f[0] * T + 0.5))
    n_val = int(math.floor(f[1] * T + 0.5))
    n_test = T - n_train - n_val
    if n_test < 0:
        n_val += n_test
        n_test = 0
    return n_train, n_val, n_test


def chronological_split(series: SpeedSeries, fractions=DEFAULT_FRACTIONS) -> DatasetSplit:
    """Contiguous train/validation/test slices in time order; nothing is shuffled."""
    n_train, n_val, _ = split_lengths(series.T, fractions)
    return DatasetSplit(
        series.slice(0, n_train),
        series.slice(n_train, n_train + n_val),
        series.slice(n_train + n_val, series.T),
        tuple(float(x) for x in fractions),
    )


def make_window_batch(series: SpeedSeries | np.ndarray, M: int, H: int = 1) -> WindowBatch:
    if isinstance(series, SpeedSeries):
        values, spd, start = series.values, series.steps_per_day, series.start_index
    else:
        values, spd, start = np.asarray(series, dtype=np.float64), None, 0
    if M < 1 or H < 1:
        raise BadShape(f"window length and horizon must be >= 1, got M={M}, H={H}")
    T, N = values.shape
    count = T - M - H + 1
    if count < 1:
        raise TooShort(f"series of length {T} cannot hold a window of {M} plus horizon {H}")
    t_index = np.arange(M - 1, M - 1 + count)
    idx = t_index[:, None] - np.arange(M - 1, -1, -1)[None, :]
    inputs = values[idx]
    targets = values[t_index + H]
    slots = (start + t_index + H) % spd if spd else t_index + H
    return WindowBatch(inputs, targets, t_index, slots)


def make_windows(series: SpeedSeries | np.ndarray, M: int = 10, H: int = 1) -> list[WindowSample]:
    """All length-``M`` input windows with the row ``H`` steps past their end as target."""
    return make_window_batch(series, M, H).samples()


# -------------------------------------------------------- normalization


def normalize(x, spec: NormalizationSpec):
    """Map speeds into model units.

    A :class:`SpeedSeries` stays a series under ``none``/``max_scale``; affine
    output can be negative, so it only applies to plain arrays.
    """
    if spec.mode == "none":
        return x
    if isinstance(x, SpeedSeries):
        if spec.mode == "affine":
            raise BadScale("affine normalization applies to arrays, not speed series")
        return x.with_values(x.values / spec.scale)
    return (np.asarray(x, dtype=np.float64) - spec.offset) / spec.scale


def denormalize(x, spec: NormalizationSpec):
    if spec.mode == "none":
        return x
    if isinstance(x, SpeedSeries):
        if spec.mode == "affine":
            raise BadScale("affine normalization applies to arrays, not speed series")
        return x.with_values(x.values * spec.scale)
    return np.asarray(x, dtype=np.float64) * spec.scale + spec.offset


def normalize_batch(batch: WindowBatch, spec: NormalizationSpec) -> WindowBatch:
    return WindowBatch(normalize(batch.inputs, spec), normalize(batch.targets, spec),
                       batch.t_index, batch.slots)


# ------------------------------------------------------------ synthetic


def topology_adjacency(n: int, topology: str) -> np.ndarray:
    a = np.zeros((n, n), dtype=np.int64)
    if topology == "chain":
        edges = [(i, i + 1) for i in range(n - 1)]
    elif topology == "ring":
        if n < 3:
            raise BadShape("a ring needs at least 3 links")
        edges = [(i, (i + 1) % n) for i in range(n)]
    elif topology == "grid":
        rows = int(math.isqrt(n))
        while n % rows:
            rows -= 1
        cols = n // rows
        edges = []
        for r in range(rows):
            for c in range(cols):
                i = r * cols + c
                if c + 1 < cols:
                    edges.append((i, i + 1))
                if r + 1 < rows:
                    edges.append((i, i + cols))
    else:
        raise BadShape(f"unknown topology {topology!r}")
    for i, j in edges:
        a[i, j] = a[j, i] = 1
    return a


def _bfs_hops(adjacency: np.ndarray, source: int) -> np.ndarray:
    n = adjacency.shape[0]
    dist = np.full(n, -1)
    dist[source] = 0
    queue = deque([source])
    while queue:
        u = queue.popleft()
        for v in np.flatnonzero(adjacency[u]):
            if dist[v] < 0:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


@dataclass(frozen=True)
class SyntheticManifest:
    seed: int
    topology: str
    N: int
    days: int
    interval_minutes: int = 5
    noiseless: bool = False
    twin_links: tuple = field(default_factory=tuple)

    def to_text(self) -> str:
        twins = ";".join(f"{a}-{b}" for a, b in self.twin_links)
        return (
            f"seed={self.seed}\ntopology={self.topology}\nN={self.N}\ndays={self.days}\n"
            f"interval_minutes={self.interval_minutes}\nnoiseless={int(self.noiseless)}\n"
            f"twin_links={twins}\n"
        )


def generate_synthetic(
    N: int,
    days: int,
    seed: int,
    topology: str = "chain",
    *,
    interval_minutes: int = 5,
    noiseless: bool = False,
    return_manifest: bool = False,
):
    """Desk-scale speed data with rush-hour dips on a toy road network.

    Each link follows a 60 mph free-flow baseline with a morning and an evening
    Gaussian dip whose timing drifts along the link index, so congestion
    travels through the network. Outside ``noiseless`` mode the dip depth is
    rescaled per day and bounded AR(1) noise is added. The link farthest from
    link 0 copies link 0's daily profile, which gives a non-adjacent pair with
    identical long-term behaviour. Speeds are clipped to [0, 70] mph.
    """
    if N < 2 or days < 2:
        raise BadShape(f"need N >= 2 and days >= 2, got N={N}, days={days}")
    if interval_minutes <= 0 or MINUTES_PER_DAY % interval_minutes:
        raise BadShape(f"interval of {interval_minutes} min does not divide a day")
    rng = np.random.default_rng(seed)
    adjacency = topology_adjacency(N, topology)
    spd = MINUTES_PER_DAY // interval_minutes

    lengths = np.round(rng.uniform(0.8, 1.2, size=(N, N)), 2)
    lengths = np.triu(lengths, 1)
    lengths = lengths + lengths.T
    distance = np.where(adjacency == 1, lengths, 0.0)

    am_depth = rng.uniform(10.0, 25.0, N)
    pm_depth = rng.uniform(12.0, 30.0, N)
    am_width = rng.uniform(0.6, 1.1, N)
    pm_width = rng.uniform(0.7, 1.3, N)
    shift = 0.05 * np.arange(N)

    twins = ()
    hops = _bfs_hops(adjacency, 0)
    far = int(np.argmax(hops))
    if hops[far] >= 2:
        for arr in (am_depth, pm_depth, am_width, pm_width, shift):
            arr[far] = arr[0]
        twins = ((0, far),)

    hours = np.arange(spd) * interval_minutes / 60.0
    am = np.exp(-0.5 * ((hours[:, None] - 8.0 - shift) / am_width) ** 2)
    pm = np.exp(-0.5 * ((hours[:, None] - 17.5 - shift) / pm_width) ** 2)

    day_factor = rng.uniform(0.6, 1.4, size=(days, 1, 1)) * rng.uniform(0.9, 1.1, size=(days, 1, N))
    innovations = rng.uniform(-1.5, 1.5, size=(days * spd, N))
    if noiseless:
        day_factor = np.ones_like(day_factor)

    dips = am_depth * am + pm_depth * pm
    values = (60.0 - day_factor * dips[None, :, :]).reshape(days * spd, N)
    if not noiseless:
        noise = np.zeros_like(values)
        state = np.zeros(N)
        for t in range(values.shape[0]):
            state = np.clip(0.5 * state + innovations[t], -3.0, 3.0)
            noise[t] = state
        values = values + noise
    values = np.clip(values, 0.0, 70.0)

    series = SpeedSeries(values, interval_minutes, 0)
    network = RoadNetworkSpec(adjacency, distance)
    if return_manifest:
        manifest = SyntheticManifest(seed, topology, N, days, interval_minutes, noiseless, twins)
        return series, network, manifest
    return series, network


def write_dataset(out_dir: str | Path, series: SpeedSeries, network: RoadNetworkSpec,
                  manifest: SyntheticManifest | None = None) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "speeds": out / "speeds.csv",
        "adjacency": out / "adjacency.csv",
        "distance": out / "distance.csv",
    }
    write_speed_csv(paths["speeds"], series)
    write_matrix_csv(paths["adjacency"], network.adjacency)
    write_matrix_csv(paths["distance"], network.distance)
    if manifest is not None:
        paths["manifest"] = out / "manifest.txt"
        paths["manifest"].write_text(manifest.to_text())
    return paths
