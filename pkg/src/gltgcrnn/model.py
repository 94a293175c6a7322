"""Masked graph convolution feeding an LSTM whose cell state mixes across links.

Parameters live in one :class:`GltModel`:

* ``W_g``  (K, N, N)     per-hop graph-convolution weights, masked by ``masks[k]``
* ``U``    (4N, K*N)     gate input weights, rows stacked as input/forget/output/candidate
* ``R``    (4N, N)       gate hidden weights, same row order
* ``b``    (4N,)         gate biases
* ``W_C``  (N, N)        cell-state mixing weights, masked by ``masks[K-1]``

Everything works on batches: a window is (B, M, N) and a state is (B, N).
"""

from __future__ import annotations

import io
import zipfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BadHop, BadShape, NonFinite, ShapeMismatch

PARAM_NAMES = ("W_g", "U", "R", "b", "W_C")
GATES = ("input", "forget", "output", "candidate")


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass
class ModelState:
    h: np.ndarray
    C: np.ndarray

    @classmethod
    def zeros(cls, N: int, batch: int | None = None) -> "ModelState":
        shape = (N,) if batch is None else (batch, N)
        return cls(np.zeros(shape), np.zeros(shape))


class GltModel:
    def __init__(self, W_g, U, R, b, W_C, masks):
        self.masks = np.asarray(masks, dtype=np.float64)
        if self.masks.ndim != 3 or self.masks.shape[1] != self.masks.shape[2]:
            raise BadShape(f"masks must be (K, N, N), got {self.masks.shape}")
        if not np.isin(self.masks, (0.0, 1.0)).all():
            raise BadShape("masks must be binary")
        K, N, _ = self.masks.shape
        self.W_g = np.array(W_g, dtype=np.float64)
        self.U = np.array(U, dtype=np.float64)
        self.R = np.array(R, dtype=np.float64)
        self.b = np.array(b, dtype=np.float64)
        self.W_C = np.array(W_C, dtype=np.float64)
        expected = {
            "W_g": (K, N, N), "U": (4 * N, K * N), "R": (4 * N, N), "b": (4 * N,), "W_C": (N, N),
        }
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise BadShape(f"{name} has shape {getattr(self, name).shape}, expected {shape}")
        self.apply_masks()

    @property
    def K(self) -> int:
        return self.masks.shape[0]

    @property
    def N(self) -> int:
        return self.masks.shape[1]

    @property
    def cell_mask(self) -> np.ndarray:
        return self.masks[-1]

    def parameters(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def param_masks(self) -> dict[str, np.ndarray | None]:
        """Support of each parameter; ``None`` means fully trainable."""
        return {"W_g": self.masks, "U": None, "R": None, "b": None, "W_C": self.cell_mask}

    def apply_masks(self) -> None:
        self.W_g *= self.masks
        self.W_C *= self.cell_mask

    def copy(self) -> "GltModel":
        return GltModel(self.W_g, self.U, self.R, self.b, self.W_C, self.masks)

    def gate_weights(self, gate: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(U_g, R_g, b_g) views for one gate name."""
        j = GATES.index(gate)
        rows = slice(j * self.N, (j + 1) * self.N)
        return self.U[rows], self.R[rows], self.b[rows]

    def masked_conv(self) -> np.ndarray:
        return self.W_g * self.masks

    def masked_cell(self) -> np.ndarray:
        return self.W_C * self.cell_mask

    def __eq__(self, other):
        if not isinstance(other, GltModel):
            return NotImplemented
        return np.array_equal(self.masks, other.masks) and all(
            np.array_equal(a, b) for a, b in zip(self.parameters().values(), other.parameters().values())
        )


def init_params(N: int, K: int, masks, seed: int = 0, scale: float = 0.05,
                forget_bias: float = 1.0) -> GltModel:
    """Uniform draws in [-scale, scale]; forget-gate bias starts at ``forget_bias``."""
    masks = np.stack([np.asarray(getattr(m, "values", m), dtype=np.float64) for m in masks])
    if masks.shape != (K, N, N):
        raise BadShape(f"expected {K} masks of {N}x{N}, got {masks.shape}")
    if scale < 0:
        raise BadShape(f"scale must be nonnegative, got {scale}")
    rng = np.random.default_rng(seed)
    W_g = rng.uniform(-scale, scale, (K, N, N))
    U = rng.uniform(-scale, scale, (4 * N, K * N))
    R = rng.uniform(-scale, scale, (4 * N, N))
    W_C = rng.uniform(-scale, scale, (N, N))
    b = np.zeros(4 * N)
    b[N:2 * N] = forget_bias
    return GltModel(W_g, U, R, b, W_C, masks)


def _check_input(model: GltModel, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.N:
        raise ShapeMismatch(f"input width {x.shape[-1]} != N={model.N}")
    return x


def graph_convolve(model: GltModel, x_t, k: int) -> np.ndarray:
    """Hop-``k`` feature ``(W_g[k] * S_U[k]) @ x_t`` (``k`` counts from 1)."""
    if int(k) != k or not 1 <= k <= model.K:
        raise BadHop(f"hop must be in [1, {model.K}], got {k}")
    x = _check_input(model, x_t)
    return x @ (model.W_g[k - 1] * model.masks[k - 1]).T


def stack_hops(model: GltModel, x_t) -> np.ndarray:
    x = _check_input(model, x_t)
    w = model.masked_conv()  # (K, N, N)
    return np.concatenate([x @ w[k].T for k in range(model.K)], axis=-1)


def lstm_step(model: GltModel, G, state: ModelState) -> ModelState:
    G = np.asarray(G, dtype=np.float64)
    if G.shape[-1] != model.K * model.N or state.h.shape[-1] != model.N or state.C.shape[-1] != model.N:
        raise ShapeMismatch("hop features or state do not match the model size")
    return _step(model, G, state.h, state.C, model.masked_cell())[0]


def _step(model, G, h_prev, C_prev, wc):
    N = model.N
    z = G @ model.U.T + h_prev @ model.R.T + model.b
    i = sigmoid(z[..., :N])
    f = sigmoid(z[..., N:2 * N])
    o = sigmoid(z[..., 2 * N:3 * N])
    c_hat = np.tanh(z[..., 3 * N:])
    C_star = C_prev @ wc.T
    C = f * C_star + i * c_hat
    tC = np.tanh(C)
    h = o * tC
    if not (np.all(np.isfinite(h)) and np.all(np.isfinite(C))):
        raise NonFinite("non-finite LSTM state")
    return ModelState(h, C), (i, f, o, c_hat, C_star, tC)


def forward(model: GltModel, window) -> np.ndarray:
    """Run a (M, N) window, or a (B, M, N) batch, and return the final hidden state."""
    x = _check_input(model, window)
    if x.ndim not in (2, 3):
        raise ShapeMismatch(f"window must be (M, N) or (B, M, N), got {x.shape}")
    batch = None if x.ndim == 2 else x.shape[0]
    state = ModelState.zeros(model.N, batch)
    wc = model.masked_cell()
    for t in range(x.shape[-2]):
        G = stack_hops(model, x[..., t, :])
        state = _step(model, G, state.h, state.C, wc)[0]
    return state.h


predict = forward


# ------------------------------------------------------------ checkpoint

_EPOCH = (1980, 1, 1, 0, 0, 0)


def save_checkpoint(path: str | Path, model: GltModel, extra: dict | None = None) -> None:
    """Write an ``.npz``-compatible archive with fixed zip timestamps.

    Masks are stored as nonzero (row, col) coordinates per hop; parameters as
    raw float64 arrays, so a round trip is bit exact and reruns are byte
    identical.
    """
    arrays = {"N": np.array(model.N), "K": np.array(model.K)}
    for k in range(model.K):
        arrays[f"mask_coords_{k + 1}"] = np.argwhere(model.masks[k] != 0).astype(np.int64)
    arrays.update(model.parameters())
    for key, value in (extra or {}).items():
        arrays[f"extra_{key}"] = np.asarray(value)
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        for name, arr in arrays.items():
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.asarray(arr), allow_pickle=False)
            info = zipfile.ZipInfo(name + ".npy", date_time=_EPOCH)
            info.external_attr = 0o644 << 16
            zf.writestr(info, buf.getvalue())


def load_checkpoint(path: str | Path) -> GltModel:
    with np.load(path, allow_pickle=False) as z:
        N, K = int(z["N"]), int(z["K"])
        masks = np.zeros((K, N, N))
        for k in range(K):
            coords = z[f"mask_coords_{k + 1}"]
            masks[k][coords[:, 0], coords[:, 1]] = 1.0
        return GltModel(z["W_g"], z["U"], z["R"], z["b"], z["W_C"], masks)


def load_checkpoint_extra(path: str | Path) -> dict[str, np.ndarray]:
    with np.load(path, allow_pickle=False) as z:
        return {k[len("extra_"):]: z[k] for k in z.files if k.startswith("extra_")}
