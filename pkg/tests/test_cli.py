import numpy as np
import pytest

from gltgcrnn.cli import load_config, main, read_sweep_table, read_train_log
from gltgcrnn.data import load_matrix_csv
from gltgcrnn.errors import ConfigError
from gltgcrnn.evaluation import read_trace

SMALL = """
[data]
source = synthetic
norm_mode = affine
norm_offset = 45
norm_scale = 25

[synthetic]
synth_n = 6
synth_days = 3

[graph]
K = 2
gamma = 2

[train]
learning_rate = 1e-3
max_epochs = 2
batch_size = 32
init_scale = 0.3
"""


@pytest.fixture
def config(tmp_path):
    p = tmp_path / "small.ini"
    p.write_text(SMALL)
    return p


def run(*argv):
    return main([str(a) for a in argv])


class TestConfig:
    def test_defaults(self):
        cfg = load_config(None)
        assert (cfg.K, cfg.gamma, cfg.M, cfg.learning_rate, cfg.batch_size) == (3, 3, 10, 1e-5, 10)

    def test_overrides_and_relative_paths(self, config):
        cfg = load_config(config, {"gamma": "5", "out_dir": "x"})
        assert cfg.gamma == 5 and cfg.synth_n == 6
        assert cfg.path("speeds") is None

    def test_horizon_rejected(self, config, capsys):
        assert run("train", "--config", config, "--H", "2", "--quiet") == 1
        assert capsys.readouterr().err.startswith("error: ")

    def test_unknown_key(self, tmp_path):
        p = tmp_path / "bad.ini"
        p.write_text("[graph]\nnot_a_key = 3\n")
        with pytest.raises(ConfigError):
            load_config(p)

    def test_bad_value(self, config):
        with pytest.raises(ConfigError):
            load_config(config, {"K": "three"})


class TestCommands:
    def test_synth(self, tmp_path, config):
        out = tmp_path / "data"
        assert run("synth", "--config", config, "--out-dir", out, "--quiet") == 0
        assert "N=6" in (out / "manifest.txt").read_text()
        assert load_matrix_csv(out / "adjacency.csv").shape == (6, 6)

    def test_build_graph_deterministic(self, tmp_path, config):
        for name in ("a", "b"):
            assert run("build-graph", "--config", config, "--out-dir", tmp_path / name, "--quiet") == 0
        files = sorted(p.name for p in (tmp_path / "a").iterdir())
        assert len([f for f in files if f.endswith(".csv")]) == 3 * 2 + 2  # S_G, S_GLT, S_U per hop plus S_LT and S_F
        for f in files:
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
        manifest = (tmp_path / "a" / "manifest.txt").read_text().splitlines()
        assert manifest[0].startswith("file=S_G_k1.csv kind=geographic k=1 gamma=2")

    def test_build_graph_from_csv(self, tmp_path, config):
        data = tmp_path / "data"
        run("synth", "--config", config, "--out-dir", data, "--quiet")
        ini = tmp_path / "csv.ini"
        ini.write_text(f"[paths]\nspeeds = data/speeds.csv\nadjacency = data/adjacency.csv\n"
                       f"distance = data/distance.csv\n[graph]\nK = 2\ngamma = 2\n")
        assert run("build-graph", "--config", ini, "--out-dir", tmp_path / "g1", "--quiet") == 0
        assert run("build-graph", "--config", config, "--out-dir", tmp_path / "g2", "--quiet") == 0
        for f in ("S_U_k2.csv", "S_LT.csv"):
            assert (tmp_path / "g1" / f).read_bytes() == (tmp_path / "g2" / f).read_bytes()

    def test_missing_file(self, tmp_path, capsys):
        ini = tmp_path / "csv.ini"
        ini.write_text("[paths]\nspeeds = nope.csv\nadjacency = nope.csv\ndistance = nope.csv\n")
        assert run("build-graph", "--config", ini, "--quiet") == 1
        err = capsys.readouterr().err
        assert err.startswith("error: io:") and "not found" in err and err.count("\n") == 1

    def test_malformed_csv(self, tmp_path, capsys):
        (tmp_path / "s.csv").write_text("1,2\n3\n")
        (tmp_path / "a.csv").write_text("0,1\n1,0\n")
        ini = tmp_path / "csv.ini"
        ini.write_text("[paths]\nspeeds = s.csv\nadjacency = a.csv\ndistance = a.csv\n")
        assert run("train", "--config", ini, "--quiet") == 1
        assert capsys.readouterr().err.startswith("error: parse:")

    def test_train_evaluate_predict(self, tmp_path, config, capsys):
        out = tmp_path / "run"
        assert run("train", "--config", config, "--out-dir", out, "--max_epochs", "1", "--quiet") == 0
        rows = read_train_log(out / "train_log.csv")
        assert len(rows) == 1 and rows[0]["epoch"] == 1
        summary = (out / "train_summary.txt").read_text()
        assert "best_epoch=1" in summary and "initial_val_mse=" in summary
        assert "max_epochs = 1" in (out / "run_config.ini").read_text()

        capsys.readouterr()
        assert run("evaluate", "--config", config, "--out-dir", out, "--baselines",
                   "--report", tmp_path / "r.txt") == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0].startswith("rmse_mph=") and " mape_pct=" in lines[0] and " mae_mph=" in lines[0]
        assert lines[1].startswith("baseline=persistence ")
        assert "mae_mph=" in (tmp_path / "r.txt").read_text()

        trace = tmp_path / "trace.csv"
        assert run("predict", "--config", config, "--out-dir", out, "--link", 3, "--day", 1,
                   "--output", trace, "--quiet") == 0
        values = read_trace(trace)
        assert values.shape == (288, 3) and np.all(np.isfinite(values))

    def test_predict_bad_link(self, tmp_path, config, capsys):
        out = tmp_path / "run"
        run("train", "--config", config, "--out-dir", out, "--max_epochs", "1", "--quiet")
        assert run("predict", "--config", config, "--out-dir", out, "--link", 99, "--day", 1, "--quiet") == 1
        assert capsys.readouterr().err.startswith("error: contract:")

    def test_dash_flags(self, tmp_path, config):
        out = tmp_path / "run"
        assert run("train", "--config", config, "--out_dir", out, "--max-epochs", "1",
                   "--learning-rate", "0.01", "--quiet") == 0
        assert "learning_rate = 0.01" in (out / "run_config.ini").read_text()

    def test_sweep(self, tmp_path, config):
        out = tmp_path / "sweep"
        assert run("sweep-gamma", "--config", config, "--out-dir", out, "--gammas", "3,2",
                   "--repeats", 2, "--max_epochs", 1, "--quiet") == 0
        rows = read_sweep_table(out / "sweep.csv")
        assert [(r["gamma"], r["seed"]) for r in rows] == [(2, 0), (2, 1), (3, 0), (3, 1)]
        assert (out / "sweep" / "gamma3_seed1" / "checkpoint.npz").is_file()
        means = (out / "sweep_mean.csv").read_text().splitlines()
        assert means[0] == "gamma,runs,rmse_mph,mape_pct,mae_mph" and len(means) == 3
        gamma, runs, _, _, mae = means[1].split(",")
        assert (gamma, runs) == ("2", "2")
        assert float(mae) == pytest.approx((rows[0]["mae_mph"] + rows[1]["mae_mph"]) / 2, rel=1e-12)
