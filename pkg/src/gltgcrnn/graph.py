"""Geographic, long-term temporal, free-flow and combined link masks."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import shortest_path

from .data import RoadNetworkSpec, SpeedSeries
from .errors import (
    BadGamma,
    BadK,
    BadParams,
    BadShape,
    NonSymmetric,
    NotDivisibleByThree,
    ShapeMismatch,
    TooShort,
)

MASK_KINDS = ("geographic", "long_term", "glt", "free_flow", "ultimate")


@dataclass(frozen=True)
class BinaryMask:
    values: np.ndarray
    kind: str
    hop: int | None = None

    def __post_init__(self):
        if self.kind not in MASK_KINDS:
            raise BadShape(f"unknown mask kind {self.kind!r}")
        v = np.array(self.values, dtype=np.int64, copy=True)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise BadShape(f"mask must be square, got {v.shape}")
        allowed = (0, 1, 2) if self.kind == "glt" else (0, 1)
        if not np.isin(v, allowed).all():
            raise BadShape(f"{self.kind} mask has entries outside {allowed}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def N(self) -> int:
        return self.values.shape[0]

    @property
    def support(self) -> np.ndarray:
        return self.values != 0

    def nnz(self) -> int:
        return int(np.count_nonzero(self.values))


@dataclass(frozen=True)
class DailyProfileSet:
    profiles: np.ndarray  # N x bins

    @property
    def profile_bins(self) -> int:
        return self.profiles.shape[1]


@dataclass(frozen=True)
class TemporalDifference:
    values: np.ndarray

    @property
    def N(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class FreeFlowParams:
    free_flow_speed: float = 60.0
    delta_t_minutes: float = 20.0
    m: int = 1

    def __post_init__(self):
        speed = np.asarray(self.free_flow_speed, dtype=np.float64)
        if not (np.all(speed > 0) and np.all(np.isfinite(speed))):
            raise BadParams("free-flow speed must be positive")
        if not self.delta_t_minutes > 0:
            raise BadParams("delta_t_minutes must be positive")
        if int(self.m) != self.m or self.m < 1:
            raise BadParams("m must be a positive integer")

    def reach_miles(self):
        return np.asarray(self.free_flow_speed, dtype=np.float64) * self.m * self.delta_t_minutes / 60.0


def _as_matrix(a) -> np.ndarray:
    if isinstance(a, BinaryMask):
        return a.values
    return np.asarray(a)


def _check_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ShapeMismatch(f"mask shapes differ: {a.shape} vs {b.shape}")


def k_hop_similarity(adjacency, k: int) -> BinaryMask:
    """Pairs within ``k`` hops: ``min((A + I)^k, 1)``, computed without overflow."""
    a = _as_matrix(adjacency)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise BadShape(f"adjacency must be square, got {a.shape}")
    if not np.array_equal(a, a.T) or np.any(np.diag(a)):
        raise NonSymmetric("adjacency must be symmetric with zero diagonal")
    if int(k) != k or k < 1:
        raise BadK(f"hop count must be >= 1, got {k}")
    step = (a != 0) | np.eye(a.shape[0], dtype=bool)
    step_i = step.astype(np.int64)
    reach = step.copy()
    for _ in range(int(k) - 1):
        reach = (reach.astype(np.int64) @ step_i) > 0
    return BinaryMask(reach.astype(np.int64), "geographic", int(k))


def daily_profiles(train: SpeedSeries, pool: int = 3) -> DailyProfileSet:
    """Per-link average day from the training rows, mean-pooled over ``pool`` slots."""
    spd = train.steps_per_day
    if spd % pool:
        raise NotDivisibleByThree(f"{spd} slots per day is not divisible by {pool}")
    if train.T < spd:
        raise TooShort(f"profiles need a full day ({spd} rows), got {train.T}")
    slots = train.slots()
    sums = np.zeros((spd, train.N))
    np.add.at(sums, slots, train.values)
    counts = np.bincount(slots, minlength=spd)
    per_slot = sums / counts[:, None]
    pooled = per_slot.reshape(spd // pool, pool, train.N).mean(axis=1)
    return DailyProfileSet(pooled.T.copy())


def temporal_difference(profiles: DailyProfileSet) -> TemporalDifference:
    """Euclidean distance between every pair of link profiles."""
    p = np.asarray(profiles.profiles, dtype=np.float64)
    n = p.shape[0]
    q = np.zeros((n, n))
    for i in range(n - 1):
        q[i, i + 1:] = np.sqrt(((p[i + 1:] - p[i]) ** 2).sum(axis=1))
    q = q + q.T
    return TemporalDifference(q)


def long_term_selection(Q: TemporalDifference | np.ndarray, gamma: int) -> np.ndarray:
    """Row-wise pick of the ``gamma`` nearest other links (ties go to the lower index).

    The result is generally asymmetric.
    """
    q = np.asarray(Q.values if isinstance(Q, TemporalDifference) else Q, dtype=np.float64)
    n = q.shape[0]
    if int(gamma) != gamma or not 1 <= gamma <= n - 1:
        raise BadGamma(f"gamma must be in [1, {n - 1}], got {gamma}")
    masked = q.copy()
    np.fill_diagonal(masked, np.inf)
    order = np.argsort(masked, axis=1, kind="stable")[:, : int(gamma)]
    sel = np.zeros((n, n), dtype=np.int64)
    np.put_along_axis(sel, order, 1, axis=1)
    return sel


def long_term_similarity(Q: TemporalDifference | np.ndarray, gamma: int,
                         symmetrize: bool = True) -> BinaryMask:
    sel = long_term_selection(Q, gamma)
    if symmetrize:
        sel = sel | sel.T
    return BinaryMask(sel, "long_term")


def glt_similarity(S_G_k: BinaryMask, S_LT: BinaryMask) -> BinaryMask:
    g, lt = _as_matrix(S_G_k), _as_matrix(S_LT)
    _check_same_shape(g, lt)
    hop = S_G_k.hop if isinstance(S_G_k, BinaryMask) else None
    return BinaryMask(g + lt, "glt", hop)


def pairwise_distance(network: RoadNetworkSpec | np.ndarray) -> np.ndarray:
    """All-pairs roadway distance.

    A matrix that is positive everywhere off the diagonal is used as is.
    Otherwise the nonzero entries are treated as road segments and shortest
    paths fill in the rest; unreachable pairs are inf.
    """
    d = network.distance if isinstance(network, RoadNetworkSpec) else np.asarray(network, dtype=np.float64)
    n = d.shape[0]
    off = ~np.eye(n, dtype=bool)
    if np.all(d[off] > 0):
        return np.array(d, dtype=np.float64)
    full = shortest_path(np.asarray(d, dtype=np.float64), method="D", directed=False)
    # path sums can differ in the last bit between directions
    return np.minimum(full, full.T)


def free_flow_reachable(distance, params: FreeFlowParams = FreeFlowParams()) -> BinaryMask:
    """Pairs a vehicle at free-flow speed covers within ``m * delta_t``."""
    d = np.asarray(distance, dtype=np.float64)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise BadShape(f"distance must be square, got {d.shape}")
    if np.any(d < 0) or np.any(np.isnan(d)):
        raise BadParams("distances must be nonnegative")
    if not np.array_equal(d, d.T):
        raise NonSymmetric("distance must be symmetric")
    reach = params.reach_miles()
    out = (reach >= d).astype(np.int64)
    np.fill_diagonal(out, 1)
    return BinaryMask(out, "free_flow")


def ultimate_similarity(S_GLT_k: BinaryMask, S_F: BinaryMask) -> BinaryMask:
    glt, ff = _as_matrix(S_GLT_k), _as_matrix(S_F)
    _check_same_shape(glt, ff)
    hop = S_GLT_k.hop if isinstance(S_GLT_k, BinaryMask) else None
    return BinaryMask(((glt * ff) != 0).astype(np.int64), "ultimate", hop)


@dataclass(frozen=True)
class GltGraph:
    """Every intermediate of the graph construction for one (K, gamma) setting."""

    geographic: list
    long_term: BinaryMask
    long_term_raw: np.ndarray
    glt: list
    free_flow: BinaryMask
    ultimate: list
    Q: TemporalDifference
    gamma: int
    params: FreeFlowParams = field(default_factory=FreeFlowParams)

    @property
    def K(self) -> int:
        return len(self.ultimate)

    def mask_stack(self) -> np.ndarray:
        return np.stack([m.values for m in self.ultimate]).astype(np.float64)


def build_glt_graph(network: RoadNetworkSpec, train: SpeedSeries, K: int = 3, gamma: int = 3,
                    params: FreeFlowParams = FreeFlowParams(), symmetrize: bool = True) -> GltGraph:
    if train.N != network.N:
        raise ShapeMismatch(f"speed series has {train.N} links, network has {network.N}")
    if int(K) != K or K < 1:
        raise BadK(f"K must be >= 1, got {K}")
    Q = temporal_difference(daily_profiles(train))
    raw = long_term_selection(Q, gamma)
    s_lt = long_term_similarity(Q, gamma, symmetrize)
    s_f = free_flow_reachable(pairwise_distance(network), params)
    geo = [k_hop_similarity(network.adjacency, k) for k in range(1, K + 1)]
    glt = [glt_similarity(g, s_lt) for g in geo]
    ult = [ultimate_similarity(g, s_f) for g in glt]
    return GltGraph(geo, s_lt, raw, glt, s_f, ult, Q, int(gamma), params)
