"""Traffic speed forecasting with a graph-masked convolutional LSTM.

Links are connected by a mask that joins geographic k-hop neighbours with
links whose average day looks alike, then filtered by free-flow
reachability. Submodules: ``data``, ``graph``, ``model``, ``train``,
``evaluation`` and ``cli``.
"""

from .data import NormalizationSpec, RoadNetworkSpec, SpeedSeries, chronological_split, generate_synthetic
from .errors import GltError
from .evaluation import compute_metrics, evaluate
from .graph import FreeFlowParams, build_glt_graph
from .model import GltModel, forward, init_params, load_checkpoint, save_checkpoint
from .train import TrainConfig, train

__all__ = [
    "FreeFlowParams",
    "GltError",
    "GltModel",
    "NormalizationSpec",
    "RoadNetworkSpec",
    "SpeedSeries",
    "TrainConfig",
    "build_glt_graph",
    "chronological_split",
    "compute_metrics",
    "evaluate",
    "forward",
    "generate_synthetic",
    "init_params",
    "load_checkpoint",
    "save_checkpoint",
    "train",
]
