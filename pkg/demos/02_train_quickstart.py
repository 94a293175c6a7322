# coding: utf-8

# # Training on the bundled synthetic configuration
#
# This mirrors `gltgcrnn train --config configs/synthetic_quickstart.ini`
# through the library API and compares the result with two reference
# predictors. It takes about ten seconds on one CPU core.

# %%

from pathlib import Path

from gltgcrnn.cli import load_config, resolve_normalization
from gltgcrnn.data import chronological_split, generate_synthetic, make_window_batch
from gltgcrnn.evaluation import baseline_predict, compute_metrics, evaluate, export_trace
from gltgcrnn.graph import build_glt_graph
from gltgcrnn.model import init_params
from gltgcrnn.train import prepare_windows, train

ROOT = Path(__file__).resolve().parents[1]
cfg = load_config(ROOT / "configs" / "synthetic_quickstart.ini")

# %% [markdown]
# Data, graph and initial model.

# %%

series, network = generate_synthetic(cfg.synth_n, cfg.synth_days, int(cfg.synth_seed), cfg.synth_topology)
split = chronological_split(series, cfg.fractions())
graph = build_glt_graph(network, split.train, cfg.K, cfg.gamma, cfg.free_flow())
norm = resolve_normalization(cfg, split.train)
model = init_params(series.N, cfg.K, graph.ultimate, seed=cfg.seed, scale=cfg.init_scale)
print("normalization:", norm)

# %% [markdown]
# Train with RMSProp; the callback prints every tenth epoch.

# %%

train_w, val_w, _ = prepare_windows(split, cfg.M, norm)


def show(rec):
    if rec.epoch % 10 == 0:
        print(f"epoch {rec.epoch:3d}  train {rec.train_mse:.5f}  val {rec.val_mse:.5f}")


best, log = train(model, (train_w, val_w), cfg.train_config(), callback=show)
print("validation MSE before training:", round(log.initial_val_mse, 5), "best:", round(log.best_val_mse, 5))

# %% [markdown]
# Test-set metrics in mph against persistence (repeat the last reading) and
# the time-of-day historical mean.

# %%

windows = make_window_batch(split.test, cfg.M)
print("model          ", evaluate(best, windows, norm).to_line())
for kind in ("persistence", "historical_mean"):
    print(f"{kind:15s}", compute_metrics(baseline_predict(kind, split.train, windows), windows.targets).to_line())

# %% [markdown]
# A one-day trace for link 5, ready for plotting.

# %%

trace = export_trace(best, series, link_id=5, day_index=6, path=None, normalization=norm, M=cfg.M)
print(trace[96:102])
