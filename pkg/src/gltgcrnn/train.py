"""Loss, hand-written backpropagation through time, RMSProp and the training loop."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .data import DatasetSplit, NormalizationSpec, WindowBatch, make_window_batch, normalize_batch
from .errors import BadParams, EmptyBatch, EmptyDataset, NonFinite, ShapeMismatch
from .model import GltModel, ModelState, _step, forward, stack_hops


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-5
    batch_size: int = 10
    max_epochs: int = 200
    rmsprop_alpha: float = 0.99
    rmsprop_epsilon: float = 1e-8
    early_stop_patience: int = 10
    seed: int = 0
    clip_norm: float | None = None

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise BadParams("learning_rate must be positive")
        if not 0 < self.rmsprop_alpha < 1:
            raise BadParams("rmsprop_alpha must lie in (0, 1)")
        if not self.rmsprop_epsilon > 0:
            raise BadParams("rmsprop_epsilon must be positive")
        if self.batch_size < 1 or self.max_epochs < 0 or self.early_stop_patience < 1:
            raise BadParams("batch_size, early_stop_patience must be >= 1 and max_epochs >= 0")
        if self.clip_norm is not None and not self.clip_norm > 0:
            raise BadParams("clip_norm must be positive when set")


@dataclass
class RmsPropState:
    square_avg: dict[str, np.ndarray]

    @classmethod
    def zeros_like(cls, model: GltModel) -> "RmsPropState":
        return cls({k: np.zeros_like(v) for k, v in model.parameters().items()})


@dataclass
class EpochRecord:
    epoch: int
    train_mse: float
    val_mse: float
    seconds: float


@dataclass
class TrainLog:
    epochs: list[EpochRecord] = field(default_factory=list)
    initial_val_mse: float = float("nan")
    best_epoch: int = 0
    stop_reason: str = "max_epochs"

    @property
    def best_val_mse(self) -> float:
        if not self.epochs:
            return self.initial_val_mse
        return min(r.val_mse for r in self.epochs)


def mse_loss(predictions, targets) -> float:
    p = np.asarray(predictions, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if p.shape != y.shape:
        raise ShapeMismatch(f"predictions {p.shape} vs targets {y.shape}")
    if p.size == 0:
        raise EmptyBatch("empty batch")
    return float(np.mean((y - p) ** 2))


def backward(model: GltModel, inputs, targets) -> tuple[float, dict[str, np.ndarray]]:
    """MSE of the forward predictions and its exact gradient for every parameter.

    ``inputs`` is (B, M, N) and ``targets`` (B, N). Gradients of masked
    weights are zero off the mask support.
    """
    x = np.asarray(inputs, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if x.ndim == 2:
        x, y = x[None], y[None]
    if x.shape[0] == 0:
        raise EmptyBatch("empty batch")
    B, M, N = x.shape
    if N != model.N or y.shape != (B, N):
        raise ShapeMismatch(f"batch {x.shape} / targets {y.shape} do not fit N={model.N}")
    K = model.K
    wc = model.masked_cell()

    state = ModelState.zeros(N, B)
    tape = []
    for t in range(M):
        G = stack_hops(model, x[:, t, :])
        new, cache = _step(model, G, state.h, state.C, wc)
        tape.append((G, state.h, state.C, cache))
        state = new
    h = state.h
    resid = h - y
    loss = float(np.mean(resid ** 2))

    d_wg = np.zeros_like(model.W_g)
    d_U = np.zeros_like(model.U)
    d_R = np.zeros_like(model.R)
    d_b = np.zeros_like(model.b)
    d_wc = np.zeros_like(model.W_C)

    dh = 2.0 * resid / resid.size
    dC = np.zeros_like(dh)
    for t in range(M - 1, -1, -1):
        G, h_prev, C_prev, (i, f, o, c_hat, C_star, tC) = tape[t]
        dC = dC + dh * o * (1.0 - tC ** 2)
        dz = np.concatenate([
            dC * c_hat * i * (1.0 - i),
            dC * C_star * f * (1.0 - f),
            dh * tC * o * (1.0 - o),
            dC * i * (1.0 - c_hat ** 2),
        ], axis=1)
        d_U += dz.T @ G
        d_R += dz.T @ h_prev
        d_b += dz.sum(axis=0)
        dG = dz @ model.U
        xt = x[:, t, :]
        for k in range(K):
            d_wg[k] += dG[:, k * N:(k + 1) * N].T @ xt
        dC_star = dC * f
        d_wc += dC_star.T @ C_prev
        dh = dz @ model.R
        dC = dC_star @ wc

    grads = {
        "W_g": d_wg * model.masks,
        "U": d_U,
        "R": d_R,
        "b": d_b,
        "W_C": d_wc * model.cell_mask,
    }
    if not all(np.all(np.isfinite(g)) for g in grads.values()):
        raise NonFinite("non-finite gradient")
    return loss, grads


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> dict[str, np.ndarray]:
    total = np.sqrt(sum(float(np.sum(g ** 2)) for g in grads.values()))
    if total <= max_norm:
        return grads
    scale = max_norm / total
    return {k: g * scale for k, g in grads.items()}


def rmsprop_update(model: GltModel, grads: dict[str, np.ndarray], opt_state: RmsPropState,
                   config: TrainConfig) -> tuple[GltModel, RmsPropState]:
    """One in-place RMSProp step: ``s = a*s + (1-a)*g^2``; ``p -= lr*g/(sqrt(s)+eps)``."""
    a, lr, eps = config.rmsprop_alpha, config.learning_rate, config.rmsprop_epsilon
    params = model.parameters()
    for name, g in grads.items():
        p, s = params[name], opt_state.square_avg[name]
        if g.shape != p.shape:
            raise ShapeMismatch(f"gradient for {name} has shape {g.shape}, expected {p.shape}")
        s *= a
        s += (1.0 - a) * g * g
        p -= lr * g / (np.sqrt(s) + eps)
        if not np.all(np.isfinite(p)):
            raise NonFinite(f"parameter {name} became non-finite")
    model.apply_masks()
    return model, opt_state


def batch_mse(model: GltModel, batch: WindowBatch, chunk: int = 4096) -> float:
    if len(batch) == 0:
        raise EmptyDataset("no windows to score")
    total = 0.0
    for start in range(0, len(batch), chunk):
        pred = forward(model, batch.inputs[start:start + chunk])
        total += float(np.sum((pred - batch.targets[start:start + chunk]) ** 2))
    return total / batch.targets.size


def prepare_windows(split: DatasetSplit, M: int, normalization: NormalizationSpec,
                    H: int = 1) -> tuple[WindowBatch, WindowBatch, WindowBatch | None]:
    """Normalized windows cut inside each slice, so no window straddles a boundary."""
    out = []
    for part in (split.train, split.validation, split.test):
        if part.T < M + H:
            out.append(None)
        else:
            out.append(normalize_batch(make_window_batch(part, M, H), normalization))
    if out[0] is None or out[1] is None:
        raise EmptyDataset("train and validation slices must each hold at least one window")
    return out[0], out[1], out[2]


def train(model: GltModel, split: DatasetSplit | tuple, config: TrainConfig = TrainConfig(), *,
          M: int = 10, normalization: NormalizationSpec = NormalizationSpec(),
          callback=None) -> tuple[GltModel, TrainLog]:
    """Mini-batch RMSProp with early stopping on validation MSE.

    ``split`` is either a :class:`DatasetSplit` (windows are cut here) or a
    ready ``(train_windows, val_windows)`` pair of normalized batches. The
    input model is updated in place; the returned model is a copy taken at
    the best validation epoch.
    """
    if isinstance(split, DatasetSplit):
        train_w, val_w, _ = prepare_windows(split, M, normalization)
    else:
        train_w, val_w = split
    if len(train_w) == 0 or len(val_w) == 0:
        raise EmptyDataset("no training or validation windows")

    rng = np.random.default_rng(config.seed)
    opt = RmsPropState.zeros_like(model)
    log = TrainLog(initial_val_mse=batch_mse(model, val_w))
    best_model, best_val, since_best = model.copy(), np.inf, 0

    for epoch in range(1, config.max_epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(len(train_w))
        sq_sum = 0.0
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            loss, grads = backward(model, train_w.inputs[idx], train_w.targets[idx])
            if config.clip_norm is not None:
                grads = clip_gradients(grads, config.clip_norm)
            rmsprop_update(model, grads, opt, config)
            sq_sum += loss * len(idx)
        val = batch_mse(model, val_w)
        record = EpochRecord(epoch, sq_sum / len(order), val, time.perf_counter() - t0)
        log.epochs.append(record)
        if callback is not None:
            callback(record)
        if val < best_val:
            best_val, best_model, since_best = val, model.copy(), 0
            log.best_epoch = epoch
        else:
            since_best += 1
            if since_best >= config.early_stop_patience:
                log.stop_reason = "early_stop"
                break
    return best_model, log


# -------------------------------------------------------- gradient check


@dataclass
class GradCheckReport:
    max_rel_error: dict[str, float]
    flagged: list[tuple[str, tuple, float, float]]
    tolerance: float
    checked: int

    @property
    def ok(self) -> bool:
        return not self.flagged


def gradient_check(model: GltModel, inputs, targets, step: float = 1e-5, tolerance: float = 1e-4,
                   *, grads: dict[str, np.ndarray] | None = None, max_entries: int | None = None,
                   seed: int = 0, abs_floor: float = 1e-7) -> GradCheckReport:
    """Compare analytic gradients with central differences of the loss.

    Relative error is ``|a - n| / max(|a|, |n|, abs_floor)``; the floor keeps
    entries whose true gradient is essentially zero from reporting noise.
    ``max_entries`` samples that many entries per parameter block.
    """
    if not step > 0:
        raise BadParams("step must be positive")
    x = np.asarray(inputs, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if grads is None:
        _, grads = backward(model, x, y)
    rng = np.random.default_rng(seed)
    params = model.parameters()
    worst, flagged, checked = {}, [], 0

    def loss_at() -> float:
        return float(np.mean((forward(model, x) - y) ** 2))

    for name, p in params.items():
        flat_idx = np.arange(p.size)
        if max_entries is not None and p.size > max_entries:
            flat_idx = np.sort(rng.choice(p.size, max_entries, replace=False))
        worst[name] = 0.0
        for fi in flat_idx:
            idx = np.unravel_index(fi, p.shape)
            orig = p[idx]
            p[idx] = orig + step
            up = loss_at()
            p[idx] = orig - step
            down = loss_at()
            p[idx] = orig
            numeric = (up - down) / (2.0 * step)
            if not np.isfinite(numeric):
                raise NonFinite(f"non-finite loss while probing {name}{idx}")
            analytic = float(grads[name][idx])
            rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), abs_floor)
            worst[name] = max(worst[name], rel)
            checked += 1
            if rel > tolerance:
                flagged.append((name, tuple(int(i) for i in idx), analytic, numeric))
    return GradCheckReport(worst, flagged, tolerance, checked)
