import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from wprcn.cli import main
from wprcn.data import parse_ts, synthesize
from wprcn.experiment import load_experiment

ROOT = Path(__file__).resolve().parents[1]
BAD = ROOT / "tests" / "fixtures" / "ts" / "bad"
GOOD = ROOT / "tests" / "fixtures" / "ts" / "good"
BUNDLED = ROOT / "configs" / "synthetic3.cfg"

TINY = """\
name = tiny
seeds = 0, 1
data.synthetic.kind = sinusoid
data.synthetic.classes = 3
data.synthetic.length = 16
data.synthetic.n_train = 15
data.synthetic.n_test = 9
awpg.hidden = 4
awpg.epochs = 2
cfcn.channels = 4, 6, 4
cfcn.kernels = 3, 2, 2
cfcn.reduction = 2
lstm.hidden = 3
train.epochs = 2
train.lr_grid = 0.01
"""


@pytest.fixture
def tiny_cfg(tmp_path):
    path = tmp_path / "tiny.cfg"
    path.write_text(TINY)
    return path


def run(*argv):
    return main([str(a) for a in argv])


class TestParseCheck:
    def test_good_fixtures(self, capsys):
        assert run("parse-check", *sorted(GOOD.glob("*.ts"))) == 0
        assert capsys.readouterr().out.count(": ok (") == 5

    @pytest.mark.parametrize("name", sorted(p.name for p in BAD.glob("*.ts")))
    def test_malformed_exits_2_with_line(self, name, capsys):
        assert run("parse-check", BAD / name) == 2
        err = capsys.readouterr().err
        assert f"{name}:" in err and "error" in err
        line = int(err.split(f"{name}:", 1)[1].split(":", 1)[0])
        assert line >= 1

    def test_names_the_offending_line(self, capsys):
        assert run("parse-check", BAD / "non_numeric.ts") == 2
        err = capsys.readouterr().err
        assert "non_numeric.ts:6:" in err and "two" in err

    def test_bad_config_exits_2(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("data.synthetic.kind = sinusoid\ntrain.epochs = -1\n")
        assert run("train", "--config", cfg, "--out", tmp_path) == 2
        assert "bad.cfg:2:" in capsys.readouterr().err

    def test_missing_config_flag(self, capsys):
        assert run("train") == 2

    def test_runtime_failure_exits_1(self, tmp_path, tiny_cfg):
        broken = tmp_path / "awpg.ckpt"
        broken.write_bytes(b"not a checkpoint")
        assert run("gen-features", "--config", tiny_cfg, "--out", tmp_path, "--awpg", broken) == 1


class TestCommands:
    def test_synth_roundtrip(self, tmp_path, tiny_cfg):
        assert run("synth", "--config", tiny_cfg, "--out", tmp_path) == 0
        exp = load_experiment(tiny_cfg)
        train, test = synthesize(exp.synthetic)
        assert parse_ts(tmp_path / "tiny_TRAIN.ts").equals(train)
        assert parse_ts(tmp_path / "tiny_TEST.ts").equals(test)

    def test_train_then_eval(self, tmp_path, tiny_cfg):
        assert run("train", "--config", tiny_cfg, "--out", tmp_path, "--seed", 1) == 0
        assert (tmp_path / "model_full_seed1.ckpt").exists()
        assert run("eval", "--config", tiny_cfg, "--out", tmp_path, "--seed", 1) == 0
        trained = (tmp_path / "runs.tsv").read_text().splitlines()[1].split("\t")
        evaluated = (tmp_path / "eval.tsv").read_text().splitlines()[1].split("\t")
        assert trained == evaluated

    def test_ablate_four_rows(self, tmp_path, tiny_cfg):
        assert run("ablate", "--config", tiny_cfg, "--out", tmp_path) == 0
        rows = (tmp_path / "ablation.tsv").read_text().splitlines()
        assert rows[0].split("\t") == ["method", "mean_accuracy", "std_accuracy", "seed0", "seed1"]
        assert [r.split("\t")[0] for r in rows[1:]] == ["a1", "a2", "a3", "full"]

    def test_features_dump(self, tmp_path, tiny_cfg):
        assert run("train-awpg", "--config", tiny_cfg, "--out", tmp_path, "--seed", 0) == 0
        assert run("gen-features", "--config", tiny_cfg, "--out", tmp_path, "--seed", 0) == 0
        rows = (tmp_path / "features_test.tsv").read_text().splitlines()
        assert len(rows) == 1 + 9 * 15
        assert rows[0].split("\t")[:3] == ["sample", "label", "channel"] and len(rows[0].split("\t")) == 3 + 16
        values = np.array([[float(v) for v in r.split("\t")[3:]] for r in rows[1:]])
        assert np.all(values >= 0)

    def test_bench_density(self, tmp_path):
        assert run("bench-density", "--out", tmp_path, "--updates", 50) == 0
        assert len((tmp_path / "bench_density.tsv").read_text().splitlines()) == 16
        assert len((tmp_path / "drift_tracking.tsv").read_text().splitlines()) == 3001

    def test_threads_env(self, tmp_path, tiny_cfg, monkeypatch):
        monkeypatch.setenv("WPRCN_THREADS", "zero")
        assert run("train", "--config", tiny_cfg, "--out", tmp_path) == 2


class TestDeterminism:
    def test_byte_identical_reruns(self, tmp_path, tiny_cfg):
        outs = [tmp_path / "a", tmp_path / "b"]
        for out in outs:
            assert run("ablate", "--config", tiny_cfg, "--out", out, "--seed", 0) == 0
            assert run("bench-density", "--out", out, "--updates", 30) == 0
        for name in ("ablation.tsv", "ablation_runs.tsv", "ablation_summary.json", "bench_density.tsv", "drift_tracking.tsv"):
            assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes(), name

    def test_parallel_matches_serial(self, tmp_path, tiny_cfg):
        assert run("train", "--config", tiny_cfg, "--out", tmp_path / "s", "--threads", 1) == 0
        assert run("train", "--config", tiny_cfg, "--out", tmp_path / "p", "--threads", 2) == 0
        for name in ("results.tsv", "runs.tsv", "summary.json", "model_full_seed0.ckpt", "model_full_seed1.ckpt"):
            assert (tmp_path / "s" / name).read_bytes() == (tmp_path / "p" / name).read_bytes(), name

    def test_console_script(self):
        proc = subprocess.run(
            [sys.executable, "-m", "wprcn.cli", "--version"], capture_output=True, text=True, env=os.environ | {}
        )
        assert proc.returncode == 0 and proc.stdout.startswith("wprcn ")


@pytest.mark.slow
def test_synth_then_train_bundled(tmp_path):
    """Bundled 3-class benchmark, read back from the written .ts files."""
    assert run("synth", "--config", BUNDLED, "--out", tmp_path) == 0
    body = BUNDLED.read_text().splitlines()
    keep = [l for l in body if not l.startswith("data.synthetic")]
    cfg = tmp_path / "from_files.cfg"
    cfg.write_text("\n".join(keep + ["data.train = synthetic3_TRAIN.ts", "data.test = synthetic3_TEST.ts"]) + "\n")
    assert run("train", "--config", cfg, "--out", tmp_path, "--seed", 0) == 0
    acc = float((tmp_path / "runs.tsv").read_text().splitlines()[1].split("\t")[3])
    assert acc >= 0.9
