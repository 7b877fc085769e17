import dataclasses
import os

import numpy as np
import pytest

from m2rnet import checkpoint, cli, netpbm
from m2rnet.ablation import FIELDS, ablate, read_table, reference_path, reference_table, write_table
from m2rnet.config import (SEED_ENV, AblationScheme, EncoderConfig, TrainConfig, dump_config,
                           parse_config_text, scheme, train_config_from_mapping)
from m2rnet.dataset import Sample, split_dataset
from m2rnet.errors import CodecError, ConfigError, ContractError, TrainingDiverged
from m2rnet.losses import LossConfig
from m2rnet.metrics import METRIC_NAMES
from m2rnet.network import build
from m2rnet.training import LOG_FIELDS, train, write_log

TINY = EncoderConfig(channels=(4, 4, 8, 8, 8), resolution=16, decoder_channels=4)
SMALL = TrainConfig(encoder=TINY, epochs=2, n_train=8, n_test=4, batch_size=4)
TOY_CFG = """\
# tiny run for tests
channels = 4 4 8 8 8
resolution = 16
decoder_channels = 4
epochs = 1
n_train = 4
n_test = 2
"""


@pytest.fixture(scope="module")
def data():
    return split_dataset(SMALL.n_train, SMALL.n_test, 16, seed=0)


class TestConfig:
    def test_defaults_match_protocol(self):
        cfg = TrainConfig()
        assert (cfg.batch_size, cfg.momentum, cfg.weight_decay) == (4, 0.9, 5e-4)
        assert (cfg.learning_rate, cfg.epochs, cfg.n_train, cfg.n_test) == (1e-3, 10, 200, 50)
        assert cfg.encoder.resolution == 64

    def test_parse_text(self):
        assert parse_config_text("a = 1  # note\n\n# skip\nb=x y\n") == {"a": "1", "b": "x y"}
        with pytest.raises(ConfigError, match="line 1"):
            parse_config_text("nonsense\n")

    def test_mapping_and_round_trip(self):
        cfg = train_config_from_mapping({"epochs": "3", "channels": "4 4 8 8 8", "resolution": "32",
                                         "mu": "0.5", "scheme": "7", "l2": "on"}, env={})
        assert cfg.epochs == 3 and cfg.encoder.resolution == 32 and cfg.loss.mu == 0.5
        assert cfg.scheme == dataclasses.replace(scheme(7), l2=True)
        again = train_config_from_mapping(parse_config_text(dump_config(cfg)), env={})
        assert again == cfg

    def test_seed_env_overrides(self):
        assert train_config_from_mapping({"seed": "1"}, env={SEED_ENV: "9"}).seed == 9
        assert train_config_from_mapping({"seed": "1"}, env={}).seed == 1

    @pytest.mark.parametrize("values", [{"bogus": "1"}, {"epochs": "x"}, {"augment": "maybe"},
                                        {"scheme": "14"}, {"batch_size": "0"}, {"learning_rate": "0"},
                                        {"resolution": "30"}])
    def test_errors(self, values):
        with pytest.raises(ConfigError):
            train_config_from_mapping(values, env={})

    def test_schemes(self):
        assert not any(scheme(1).flags().values())
        assert all(scheme(13).flags().values())
        assert scheme(12).loss_terms == (True,) * 4 and not scheme(12).ndam
        with pytest.raises(ConfigError):
            AblationScheme.from_flags(["p9"])

    def test_loss_label(self):
        assert TrainConfig(loss=LossConfig(mu=0.0)).loss_label() == "bce"
        assert TrainConfig(scheme=scheme(1)).loss_label() == "bce"
        assert TrainConfig(scheme=scheme(9)).loss_label() == "bce+1*(l2)"


class TestTraining:
    def test_loss_decreases_and_logs(self, data, tmp_path):
        # eight samples make single epochs noisy; the toy-run version of this
        # check lives in the acceptance suite
        path = tmp_path / "log.csv"
        cfg = dataclasses.replace(SMALL, epochs=4, learning_rate=0.03)
        model, log = train(cfg, *data, log_path=path)
        assert [row["epoch"] for row in log] == [0, 1, 2, 3, 4]
        assert log[-1]["train_loss"] < log[0]["train_loss"]
        assert all(0 <= row["val_mae"] <= 1 for row in log)
        header = path.read_text().splitlines()[0]
        assert header == ",".join(LOG_FIELDS)

    def test_equal_seeds_identical_logs(self, data, tmp_path):
        logs = []
        for k in range(2):
            _, log = train(SMALL, *data, log_path=tmp_path / f"{k}.csv")
            logs.append([(r["train_loss"], r["val_mae"]) for r in log])
        assert logs[0] == logs[1]
        assert (tmp_path / "0.csv").read_text().split("seconds")[0] == (tmp_path / "1.csv").read_text().split("seconds")[0]

    def test_mu_zero_label(self, data):
        cfg = dataclasses.replace(SMALL, epochs=1, loss=LossConfig(mu=0.0))
        _, log = train(cfg, data[0][:4])
        assert {row["loss"] for row in log} == {"bce"}

    def test_divergence_names_step(self, data):
        good = data[0][0]
        bad = Sample(good.rgb, good.depth, np.full_like(good.gt, np.nan))
        cfg = dataclasses.replace(SMALL, augment=False, batch_size=1, epochs=1)
        order = np.random.default_rng([cfg.seed, 1]).permutation(3)
        with pytest.raises(TrainingDiverged) as info:
            train(cfg, [good, bad, data[0][1]])
        assert info.value.step == int(np.flatnonzero(order == 1)[0])
        assert "step" in str(info.value)

    def test_empty_training_set(self):
        with pytest.raises(ContractError):
            train(SMALL, [])

    def test_write_log(self, tmp_path):
        write_log([{"epoch": 0, "steps": 0, "train_loss": 0.5, "val_mae": 0.25, "loss": "bce", "seconds": 1.0}],
                  tmp_path / "l.csv")
        assert (tmp_path / "l.csv").read_text().splitlines()[1] == "0,0,0.5,0.25,bce,1.0"


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        model = build(TINY, 3, scheme(5))
        model.rgb_encoder.stages[0].bn.running_mean[...] = 0.25
        checkpoint.save(tmp_path / "m.ckpt", model)
        back = checkpoint.load(tmp_path / "m.ckpt")
        assert back.config == model.config and back.scheme == model.scheme and back.seed == 3
        for (n, a), (m, b) in zip(model.named_parameters(), back.named_parameters()):
            assert n == m
            np.testing.assert_array_equal(a.data, b.data)
        for (n, a), (_, b) in zip(model.named_buffers(), back.named_buffers()):
            np.testing.assert_array_equal(a, b)

    def test_little_endian_layout(self):
        blob = checkpoint.encode(build(TINY, 0))
        assert blob[:8] == checkpoint.MAGIC
        assert int.from_bytes(blob[8:12], "little") == checkpoint.VERSION

    @pytest.mark.parametrize("mutate, message", [
        (lambda b: b"XXXXXXXX" + b[8:], "magic"),
        (lambda b: b[:8] + (7).to_bytes(4, "little") + b[12:], "version"),
        (lambda b: b[:-8], "past end"),
        (lambda b: b[:10], "truncated"),
        (lambda b: b[:20] + b"\xff" * 8 + b[28:], "header"),
    ])
    def test_corruption(self, mutate, message):
        blob = checkpoint.encode(build(TINY, 0))
        with pytest.raises(CodecError, match=message):
            checkpoint.decode(mutate(blob))


class TestAblation:
    def test_reference_table(self):
        rows = {r["scheme"]: r for r in reference_table()}
        assert sorted(rows) == list(range(1, 14))
        full = rows[13]
        assert [full[m] for m in METRIC_NAMES] == [0.913, 0.873, 0.854, 0.929, 0.897, 0.043]
        assert rows[1]["s_alpha"] == 0.885 and rows[1]["mae"] == 0.064
        assert all(full[f] == 1 for f in AblationScheme.FLAGS) and not any(rows[1][f] for f in AblationScheme.FLAGS)
        with open(reference_path("table1_benchmarks.csv")) as fh:
            assert fh.readline().startswith("# m2rnet-benchmark/1")

    def test_table_format(self, data, tmp_path):
        cfg = dataclasses.replace(SMALL, epochs=1)
        rows = ablate([1, 13], cfg, data)
        assert [r.scheme for r in rows] == [1, 13]
        write_table(rows, tmp_path / "a.csv")
        lines = (tmp_path / "a.csv").read_text().splitlines()
        assert lines[0] == "# m2rnet-ablation/1" and lines[1].split(",") == list(FIELDS)
        parsed = read_table(tmp_path / "a.csv")
        assert len(parsed[0]) == 1 + 8 + 6
        assert parsed[1]["mae"] == rows[1].report.mae

    def test_needs_a_scheme(self, data):
        with pytest.raises(ContractError):
            ablate([], SMALL, data)


class TestCLI:
    @pytest.fixture
    def toy(self, tmp_path):
        path = tmp_path / "toy.cfg"
        path.write_text(TOY_CFG)
        return str(path)

    def test_unknown_flag(self, capsys, tmp_path):
        assert cli.main(["train", "--out", str(tmp_path), "--frobnicate"]) == 1
        assert "usage" in capsys.readouterr().err

    def test_missing_command(self):
        assert cli.main([]) == 1

    def test_config_error(self, tmp_path, toy):
        assert cli.main(["gen-data", "--config", toy, "--set", "resolution=30", "--out", str(tmp_path)]) == 1

    def test_io_error(self, tmp_path):
        assert cli.main(["predict", "--checkpoint", str(tmp_path / "nope.ckpt"), "--input", str(tmp_path),
                         "--out", str(tmp_path / "o")]) == 2

    def test_train_then_predict(self, tmp_path, toy):
        run, data, preds = (str(tmp_path / d) for d in ("run", "data", "preds"))
        assert cli.main(["train", "--config", toy, "--out", run, "--quiet"]) == 0
        for name in ("train_log.csv", "model.ckpt", "config.txt", "metrics.csv", "pr_curve.csv", "f_curve.csv"):
            assert os.path.exists(os.path.join(run, name))
        assert cli.main(["gen-data", "--config", toy, "--out", data, "--quiet"]) == 0
        assert cli.main(["predict", "--checkpoint", os.path.join(run, "model.ckpt"), "--input", data,
                         "--out", preds]) == 0
        maps = sorted(os.listdir(preds))
        assert maps == [f"{i:04d}.pgm" for i in range(6)]
        assert netpbm.load(os.path.join(preds, maps[0])).shape == (16, 16)

    def test_eval_directories(self, tmp_path):
        pred_dir, gt_dir, out = tmp_path / "p", tmp_path / "g", tmp_path / "o"
        pred_dir.mkdir()
        gt_dir.mkdir()
        r = np.random.default_rng(0)
        for k in range(3):
            g = (r.random((8, 8)) > 0.5).astype(float)
            netpbm.save(gt_dir / f"{k}.pgm", g)
            netpbm.save(pred_dir / f"{k}.pgm", np.clip(g * 0.8 + 0.2 * r.random((8, 8)), 0, 1))
        assert cli.main(["eval", "--pred-dir", str(pred_dir), "--gt-dir", str(gt_dir), "--out", str(out)]) == 0
        assert sorted(os.listdir(out)) == ["f_curve.csv", "metrics.csv", "pr_curve.csv"]
        os.remove(pred_dir / "1.pgm")
        assert cli.main(["eval", "--pred-dir", str(pred_dir), "--gt-dir", str(gt_dir), "--out", str(out)]) == 1

    def test_corrupt_image_is_contract_failure(self, tmp_path):
        (tmp_path / "g").mkdir()
        (tmp_path / "p").mkdir()
        (tmp_path / "g" / "0.pgm").write_bytes(b"P2\n1 1\n255\n0\n")
        (tmp_path / "p" / "0.pgm").write_bytes(b"P2\n1 1\n255\n0\n")
        assert cli.main(["eval", "--pred-dir", str(tmp_path / "p"), "--gt-dir", str(tmp_path / "g"),
                         "--out", str(tmp_path / "o")]) == 1

    def test_gradcheck_command(self, tmp_path, capsys):
        assert cli.main(["gradcheck", "--trials", "1", "--out", str(tmp_path), "--quiet"]) == 0
        assert "max relative error" in capsys.readouterr().out
        assert (tmp_path / "gradcheck.csv").read_text().startswith("case,max_relative_error")
