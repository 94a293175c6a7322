"""Command-line front end: synth, build-graph, train, evaluate, predict, sweep-gamma.

Settings come from an INI file (``--config``) whose keys are grouped in the
sections below; every key can be overridden by a flag of the same name, e.g.
``--gamma 4`` or ``--learning_rate 1e-3``. Relative paths in a config file
are resolved against the file's directory.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import sys
from dataclasses import dataclass
from pathlib import Path

from .data import (
    NORMALIZATION_MODES,
    NormalizationSpec,
    chronological_split,
    format_number,
    generate_synthetic,
    load_network,
    load_speed_csv,
    make_window_batch,
    write_dataset,
    write_matrix_csv,
)
from .errors import ConfigError, GltError, ParseError
from .evaluation import BASELINES, baseline_predict, compute_metrics, evaluate, export_trace
from .graph import FreeFlowParams, build_glt_graph
from .model import init_params, load_checkpoint, load_checkpoint_extra, save_checkpoint
from .train import TrainConfig, prepare_windows, train

# (section, key, type, default, help)
SCHEMA = [
    ("paths", "speeds", "path", "", "speed CSV (rows = 5-minute steps, columns = links)"),
    ("paths", "adjacency", "path", "", "N x N binary adjacency CSV"),
    ("paths", "distance", "path", "", "N x N roadway distance CSV (miles)"),
    ("paths", "checkpoint", "path", "", "checkpoint to read (default: <out_dir>/checkpoint.npz)"),
    ("paths", "out_dir", "path", "run", "output directory"),
    ("data", "source", str, "csv", "csv or synthetic"),
    ("data", "interval_minutes", int, 5, "minutes per time step"),
    ("data", "M", int, 10, "input window length"),
    ("data", "H", int, 1, "forecast horizon (only 1 is supported)"),
    ("data", "split", str, "0.7,0.2,0.1", "train,validation,test fractions"),
    ("data", "norm_mode", str, "max_scale", "none, max_scale or affine"),
    ("data", "norm_scale", str, "60", "normalization scale in mph (blank + affine: fit on train)"),
    ("data", "norm_offset", str, "0", "affine offset in mph (blank + affine: fit on train)"),
    ("data", "impute_zeros", bool, True, "treat zero readings as missing"),
    ("synthetic", "synth_n", int, 20, "number of synthetic links"),
    ("synthetic", "synth_days", int, 7, "number of synthetic days"),
    ("synthetic", "synth_topology", str, "chain", "chain, ring or grid"),
    ("synthetic", "synth_seed", str, "", "generator seed (blank: run seed)"),
    ("synthetic", "synth_noiseless", bool, False, "periodic data without noise"),
    ("graph", "K", int, 3, "number of hops"),
    ("graph", "gamma", int, 3, "long-term temporal neighbours per link"),
    ("graph", "delta_t", float, 20.0, "free-flow time quantum in minutes"),
    ("graph", "m", int, 1, "number of time quanta"),
    ("graph", "free_flow_mph", float, 60.0, "free-flow speed"),
    ("graph", "symmetrize", bool, True, "OR-symmetrize the long-term mask"),
    ("train", "learning_rate", float, 1e-5, "RMSProp learning rate"),
    ("train", "batch_size", int, 10, "mini-batch size"),
    ("train", "max_epochs", int, 200, "epoch limit"),
    ("train", "rmsprop_alpha", float, 0.99, "RMSProp decay"),
    ("train", "rmsprop_epsilon", float, 1e-8, "RMSProp epsilon"),
    ("train", "early_stop_patience", int, 10, "epochs without validation improvement"),
    ("train", "clip_norm", str, "", "max gradient norm (blank: no clipping)"),
    ("train", "init_scale", float, 0.05, "uniform init half-width"),
    ("run", "seed", int, 0, "run seed (init, shuffling)"),
]
_TYPES = {key: (section, typ, default) for section, key, typ, default, _ in SCHEMA}


def _convert(key: str, raw):
    _, typ, _ = _TYPES[key]
    if not isinstance(raw, str):
        return raw
    raw = raw.strip()
    try:
        if typ is bool:
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if typ in (int, float):
            return typ(raw)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None
    return raw


@dataclass
class RunConfig:
    values: dict
    base_dir: Path

    def __getattr__(self, key):
        try:
            return self.values[key]
        except KeyError:
            raise AttributeError(key) from None

    def path(self, key: str) -> Path | None:
        raw = self.values[key]
        if not raw:
            return None
        p = Path(raw)
        return p if p.is_absolute() else (self.base_dir / p).resolve()

    @property
    def out(self) -> Path:
        return self.path("out_dir") or Path("run")

    def train_config(self, seed: int | None = None) -> TrainConfig:
        clip = self.clip_norm
        return TrainConfig(
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            max_epochs=self.max_epochs,
            rmsprop_alpha=self.rmsprop_alpha,
            rmsprop_epsilon=self.rmsprop_epsilon,
            early_stop_patience=self.early_stop_patience,
            seed=self.seed if seed is None else seed,
            clip_norm=float(clip) if clip else None,
        )

    def free_flow(self) -> FreeFlowParams:
        return FreeFlowParams(self.free_flow_mph, self.delta_t, self.m)

    def fractions(self) -> tuple[float, ...]:
        try:
            return tuple(float(x) for x in self.split.split(","))
        except ValueError:
            raise ConfigError(f"bad split fractions {self.split!r}") from None

    def to_ini(self) -> str:
        cp = configparser.ConfigParser()
        cp.optionxform = str
        for section, key, typ, _, _ in SCHEMA:
            if not cp.has_section(section):
                cp.add_section(section)
            v = self.values[key]
            cp[section][key] = format_number(v) if typ in (int, float) else str(v)
        lines = []
        for section in cp.sections():
            lines.append(f"[{section}]")
            lines.extend(f"{k} = {v}" for k, v in cp[section].items())
            lines.append("")
        return "\n".join(lines)


def load_config(path: str | Path | None, overrides: dict | None = None) -> RunConfig:
    values = {key: default for _, key, _, default, _ in SCHEMA}
    base = Path.cwd()
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"config file not found: {path}")
        cp = configparser.ConfigParser()
        cp.optionxform = str
        try:
            cp.read(path)
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from None
        for section in cp.sections():
            for key, raw in cp[section].items():
                if key not in _TYPES:
                    raise ConfigError(f"{path}: unknown key {key!r} in [{section}]")
                if _TYPES[key][0] != section:
                    raise ConfigError(f"{path}: key {key!r} belongs in [{_TYPES[key][0]}]")
                values[key] = _convert(key, raw)
        base = path.resolve().parent
    for key, raw in (overrides or {}).items():
        values[key] = _convert(key, raw)
    cfg = RunConfig(values, base)
    if overrides and "out_dir" in overrides:
        # flags are relative to the working directory, not the config file
        cfg.values["out_dir"] = str(Path(overrides["out_dir"]).resolve())
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    if cfg.K < 1:
        raise ConfigError("K must be >= 1")
    if cfg.gamma < 1:
        raise ConfigError("gamma must be >= 1")
    if cfg.H != 1:
        raise ConfigError(f"only one-step-ahead forecasting is supported (H=1), got H={cfg.H}")
    if cfg.M < 1:
        raise ConfigError("M must be >= 1")
    if cfg.norm_mode not in NORMALIZATION_MODES:
        raise ConfigError(f"norm_mode must be one of {NORMALIZATION_MODES}")
    if cfg.source not in ("csv", "synthetic"):
        raise ConfigError("source must be csv or synthetic")


# --------------------------------------------------------------- helpers


def _log(args, msg: str) -> None:
    if not getattr(args, "quiet", False):
        print(msg, file=sys.stderr)


def _synth_seed(cfg: RunConfig) -> int:
    return int(cfg.synth_seed) if str(cfg.synth_seed).strip() else cfg.seed


def load_inputs(cfg: RunConfig):
    if cfg.source == "synthetic":
        return generate_synthetic(cfg.synth_n, cfg.synth_days, _synth_seed(cfg), cfg.synth_topology,
                                  interval_minutes=cfg.interval_minutes, noiseless=cfg.synth_noiseless)
    paths = {k: cfg.path(k) for k in ("speeds", "adjacency", "distance")}
    for key, p in paths.items():
        if p is None:
            raise ConfigError(f"no {key} path configured")
        if not p.is_file():
            raise FileNotFoundError(f"{key} file not found: {p}")
    series = load_speed_csv(paths["speeds"], cfg.interval_minutes, impute_zeros=cfg.impute_zeros)
    network = load_network(paths["adjacency"], paths["distance"])
    if network.N != series.N:
        raise ParseError(f"speed file has {series.N} links but network has {network.N}")
    return series, network


def resolve_normalization(cfg: RunConfig, train_series) -> NormalizationSpec:
    if cfg.norm_mode == "none":
        return NormalizationSpec("none")
    if cfg.norm_mode == "max_scale":
        return NormalizationSpec("max_scale", float(cfg.norm_scale or 60))
    if not str(cfg.norm_scale).strip() or not str(cfg.norm_offset).strip():
        return NormalizationSpec.fit_affine(train_series)
    try:
        return NormalizationSpec("affine", float(cfg.norm_scale), float(cfg.norm_offset))
    except ValueError:
        raise ConfigError("norm_scale / norm_offset must be numbers") from None


def _prepare(cfg: RunConfig):
    series, network = load_inputs(cfg)
    split = chronological_split(series, cfg.fractions())
    return series, network, split


def _graph(cfg: RunConfig, network, split, gamma: int | None = None):
    return build_glt_graph(network, split.train, cfg.K, cfg.gamma if gamma is None else gamma,
                           cfg.free_flow(), cfg.symmetrize)


def _norm_extra(norm: NormalizationSpec, cfg: RunConfig, gamma: int) -> dict:
    return {"norm_mode": norm.mode, "norm_scale": norm.scale, "norm_offset": norm.offset,
            "M": cfg.M, "gamma": gamma}


def _checkpoint_norm(path: Path) -> tuple[NormalizationSpec, int]:
    extra = load_checkpoint_extra(path)
    norm = NormalizationSpec(str(extra["norm_mode"]), float(extra["norm_scale"]), float(extra["norm_offset"]))
    return norm, int(extra["M"])


def _fit(cfg: RunConfig, network, split, gamma: int, seed: int, args=None):
    graph = _graph(cfg, network, split, gamma)
    norm = resolve_normalization(cfg, split.train)
    model = init_params(network.N, cfg.K, graph.ultimate, seed=seed, scale=cfg.init_scale)
    train_w, val_w, _ = prepare_windows(split, cfg.M, norm)

    def progress(rec):
        _log(args, f"epoch {rec.epoch}: train_mse={rec.train_mse:.6g} val_mse={rec.val_mse:.6g}")

    best, log = train(model, (train_w, val_w), cfg.train_config(seed), callback=progress if args else None)
    return best, log, norm, graph


def write_train_outputs(out: Path, best, log, norm, cfg: RunConfig, gamma: int) -> None:
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out / "checkpoint.npz", best, _norm_extra(norm, cfg, gamma))
    with (out / "train_log.csv").open("w") as fh:
        fh.write("epoch,train_mse,val_mse\n")
        for r in log.epochs:
            fh.write(f"{r.epoch},{format_number(r.train_mse)},{format_number(r.val_mse)}\n")
    with (out / "train_timing.csv").open("w") as fh:
        fh.write("epoch,seconds\n")
        for r in log.epochs:
            fh.write(f"{r.epoch},{r.seconds:.6f}\n")
    (out / "train_summary.txt").write_text(
        f"initial_val_mse={format_number(log.initial_val_mse)}\n"
        f"best_val_mse={format_number(log.best_val_mse)}\n"
        f"best_epoch={log.best_epoch}\nstop_reason={log.stop_reason}\nepochs={len(log.epochs)}\n"
    )


def read_train_log(path: str | Path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return [{"epoch": int(r["epoch"]), "train_mse": float(r["train_mse"]), "val_mse": float(r["val_mse"])}
                for r in csv.DictReader(fh)]


# -------------------------------------------------------------- commands


def cmd_synth(cfg: RunConfig, args) -> int:
    series, network, manifest = generate_synthetic(
        cfg.synth_n, cfg.synth_days, _synth_seed(cfg), cfg.synth_topology,
        interval_minutes=cfg.interval_minutes, noiseless=cfg.synth_noiseless, return_manifest=True)
    paths = write_dataset(cfg.out, series, network, manifest)
    _log(args, f"wrote {', '.join(str(p) for p in paths.values())}")
    return 0


def cmd_build_graph(cfg: RunConfig, args) -> int:
    _, network, split = _prepare(cfg)
    graph = _graph(cfg, network, split)
    out = cfg.out
    out.mkdir(parents=True, exist_ok=True)
    ff = graph.params
    common = f"gamma={graph.gamma} delta_t={format_number(ff.delta_t_minutes)} m={ff.m} V={format_number(ff.free_flow_speed)}"
    entries = []
    for k, mask in enumerate(graph.geographic, start=1):
        entries.append((f"S_G_k{k}.csv", mask))
    entries.append(("S_LT.csv", graph.long_term))
    for k, mask in enumerate(graph.glt, start=1):
        entries.append((f"S_GLT_k{k}.csv", mask))
    entries.append(("S_F.csv", graph.free_flow))
    for k, mask in enumerate(graph.ultimate, start=1):
        entries.append((f"S_U_k{k}.csv", mask))
    lines = []
    for name, mask in entries:
        write_matrix_csv(out / name, mask.values)
        hop = mask.hop if mask.hop is not None else "-"
        lines.append(f"file={name} kind={mask.kind} k={hop} {common} nonzero={mask.nnz()}")
    (out / "manifest.txt").write_text("\n".join(lines) + "\n")
    _log(args, f"wrote {len(entries)} masks to {out}")
    return 0


def cmd_train(cfg: RunConfig, args) -> int:
    _, network, split = _prepare(cfg)
    best, log, norm, _ = _fit(cfg, network, split, cfg.gamma, cfg.seed, args)
    write_train_outputs(cfg.out, best, log, norm, cfg, cfg.gamma)
    (cfg.out / "run_config.ini").write_text(cfg.to_ini())
    _log(args, f"best epoch {log.best_epoch} ({log.stop_reason}); wrote {cfg.out / 'checkpoint.npz'}")
    return 0


def _checkpoint_path(cfg: RunConfig) -> Path:
    p = cfg.path("checkpoint") or cfg.out / "checkpoint.npz"
    if not p.is_file():
        raise FileNotFoundError(f"checkpoint not found: {p}")
    return p


def cmd_evaluate(cfg: RunConfig, args) -> int:
    _, _, split = _prepare(cfg)
    ckpt = _checkpoint_path(cfg)
    model = load_checkpoint(ckpt)
    norm, M = _checkpoint_norm(ckpt)
    part = getattr(split, args.subset)
    windows = make_window_batch(part, M)
    report = evaluate(model, windows, norm)
    print(report.to_line())
    if args.baselines:
        for kind in BASELINES:
            base = compute_metrics(baseline_predict(kind, split.train, windows), windows.targets)
            print(f"baseline={kind} {base.to_line()}")
    if args.report:
        Path(args.report).write_text(report.to_kv_lines())
    return 0


def cmd_predict(cfg: RunConfig, args) -> int:
    series, _, _ = _prepare(cfg)
    ckpt = _checkpoint_path(cfg)
    model = load_checkpoint(ckpt)
    norm, M = _checkpoint_norm(ckpt)
    out = Path(args.output) if args.output else cfg.out / f"trace_link{args.link}_day{args.day}.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    export_trace(model, series, args.link, args.day, out, norm, M)
    _log(args, f"wrote {out}")
    return 0


SWEEP_FIELDS = ("gamma", "seed", "rmse_mph", "mape_pct", "mae_mph", "best_epoch", "best_val_mse")


def cmd_sweep_gamma(cfg: RunConfig, args) -> int:
    try:
        gammas = sorted({int(g) for g in args.gammas.split(",") if g.strip()})
    except ValueError:
        raise ConfigError(f"bad gamma list {args.gammas!r}") from None
    if not gammas or args.repeats < 1:
        raise ConfigError("need at least one gamma and one repeat")
    _, network, split = _prepare(cfg)
    rows = []
    for gamma in gammas:
        for r in range(args.repeats):
            seed = cfg.seed + r
            _log(args, f"gamma={gamma} seed={seed}")
            best, log, norm, _ = _fit(cfg, network, split, gamma, seed)
            cell = cfg.out / "sweep" / f"gamma{gamma}_seed{seed}"
            write_train_outputs(cell, best, log, norm, cfg, gamma)
            val_w = make_window_batch(split.validation, cfg.M)
            rep = evaluate(best, val_w, norm)
            rows.append((gamma, seed, rep.rmse, rep.mape, rep.mae, log.best_epoch, log.best_val_mse))
    rows.sort(key=lambda row: (row[0], row[1]))
    write_sweep_table(cfg.out / "sweep.csv", rows)
    write_sweep_means(cfg.out / "sweep_mean.csv", rows)
    _log(args, f"wrote {len(rows)} rows to {cfg.out / 'sweep.csv'}")
    return 0


def write_sweep_table(path: Path, rows) -> None:
    with Path(path).open("w") as fh:
        fh.write(",".join(SWEEP_FIELDS) + "\n")
        for row in rows:
            fh.write(",".join(format_number(v) for v in row) + "\n")


def write_sweep_means(path: Path, rows) -> None:
    """Per-gamma mean of the validation metrics over seeds."""
    with Path(path).open("w") as fh:
        fh.write("gamma,runs,rmse_mph,mape_pct,mae_mph\n")
        for gamma in sorted({row[0] for row in rows}):
            cell = [row for row in rows if row[0] == gamma]
            means = [sum(row[j] for row in cell) / len(cell) for j in (2, 3, 4)]
            fh.write(",".join(format_number(v) for v in (gamma, len(cell), *means)) + "\n")


def read_sweep_table(path: str | Path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != SWEEP_FIELDS:
            raise ParseError(f"{path}: unexpected columns {reader.fieldnames}")
        out = []
        for row in reader:
            rec = {k: float(row[k]) for k in SWEEP_FIELDS}
            for k in ("gamma", "seed", "best_epoch"):
                rec[k] = int(rec[k])
            out.append(rec)
    return out


# ----------------------------------------------------------------- parser


def _override_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    p.add_argument("--config", help="INI run configuration")
    p.add_argument("--seed", help="run seed")
    p.add_argument("--out-dir", "--out_dir", dest="out_dir", help="output directory")
    p.add_argument("--quiet", action="store_true", help="suppress progress messages")
    for _, key, _, _, help_ in SCHEMA:
        if key in ("seed", "out_dir"):
            continue
        names = [f"--{key}"]
        if "_" in key:
            names.append(f"--{key.replace('_', '-')}")
        p.add_argument(*names, dest=key, metavar=key.upper(), help=help_)
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _override_parser()
    parser = argparse.ArgumentParser(prog="gltgcrnn", parents=[common],
                                     description="GLT graph construction and masked graph-convolutional LSTM.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", parents=[common], help="write a synthetic dataset")
    sub.add_parser("build-graph", parents=[common], help="write every similarity mask")
    sub.add_parser("train", parents=[common], help="train and write a checkpoint")
    ev = sub.add_parser("evaluate", parents=[common], help="score a checkpoint")
    ev.add_argument("--subset", choices=("train", "validation", "test"), default="test")
    ev.add_argument("--baselines", action="store_true", help="also score reference predictors")
    ev.add_argument("--report", help="write key=value metrics to this file")
    pr = sub.add_parser("predict", parents=[common], help="write a one-day prediction trace")
    pr.add_argument("--link", type=int, required=True)
    pr.add_argument("--day", type=int, required=True)
    pr.add_argument("--output", help="trace CSV path")
    sw = sub.add_parser("sweep-gamma", parents=[common], help="retrain over several gamma values")
    sw.add_argument("--gammas", default="2,3,4,5,6")
    sw.add_argument("--repeats", type=int, default=1)
    return parser


COMMANDS = {
    "synth": cmd_synth,
    "build-graph": cmd_build_graph,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "predict": cmd_predict,
    "sweep-gamma": cmd_sweep_gamma,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {k: v for k, v in vars(args).items() if k in _TYPES}
    try:
        cfg = load_config(getattr(args, "config", None), overrides)
        return COMMANDS[args.command](cfg, args)
    except OSError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
    except ParseError as exc:
        print(f"error: parse: {exc}", file=sys.stderr)
    except GltError as exc:
        print(f"error: contract: {exc}", file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())
