import hashlib
import json
import math
from pathlib import Path

import numpy as np
import pytest

from momentset import checkpoint as ckpt
from momentset import cli
from momentset.config import RunConfig
from momentset.errors import CheckpointError, ConfigError


def tiny_run_config(**kw):
    base = dict(seed=3, videos=3, duration=12.0, fps=2, chunk_seconds=6.0,
                vocab_size=4, moments_per_video=2, noise_level=0.1,
                feature_dim=8, model_dim=8, conv_kernel=2, enc_layers=1,
                dec_layers=1, heads=2, head_dim=4, queries=4,
                temporal_rows=8, ffn_hidden=16, lr=1e-3, epochs=2,
                batch_size=2)
    base.update(kw)
    return RunConfig(**base)


def tree_digest(root: Path) -> dict:
    return {str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("data")
    cfg = tiny_run_config()
    cli.cmd_generate(cfg, out)
    return cfg, out


class TestConfig:
    def test_json_round_trip(self):
        cfg = tiny_run_config()
        assert RunConfig.from_dict(json.loads(cfg.to_json())) == cfg

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown"):
            RunConfig.from_dict({"not_a_field": 1})

    def test_invalid_combinations_rejected(self):
        with pytest.raises(ConfigError, match="even"):
            tiny_run_config(model_dim=7, heads=1, head_dim=7).validate()
        with pytest.raises(ConfigError, match="queries"):
            tiny_run_config(queries=1, moments_per_video=3).validate()


class TestGenerate:
    def test_deterministic_byte_identical(self, dataset, tmp_path):
        cfg, out = dataset
        again = tmp_path / "again"
        cli.cmd_generate(cfg, again)
        assert tree_digest(out) == tree_digest(again)

    def test_chunk_count_arithmetic(self, dataset):
        cfg, out = dataset
        manifest = json.loads((out / cli.MANIFEST_NAME).read_text())
        total = sum(len(m["chunks"]) for m in manifest["videos"].values())
        assert total == cfg.videos * math.ceil(cfg.duration / cfg.chunk_seconds)

    def test_manifest_lists_every_chunk_file_once(self, dataset):
        _, out = dataset
        manifest = json.loads((out / cli.MANIFEST_NAME).read_text())
        listed = [c for m in manifest["videos"].values() for c in m["chunks"]]
        assert len(listed) == len(set(listed))
        on_disk = {f"chunks/{p.name}" for p in (out / "chunks").iterdir()}
        assert set(listed) == on_disk

    def test_refuses_non_empty_dir(self, dataset):
        cfg, out = dataset
        with pytest.raises(ConfigError, match="force"):
            cli.cmd_generate(cfg, out)

    def test_force_overwrites(self, dataset, tmp_path):
        cfg, _ = dataset
        target = tmp_path / "forced"
        target.mkdir()
        (target / "junk.txt").write_text("x")
        cli.cmd_generate(cfg, target, force=True)
        assert (target / cli.MANIFEST_NAME).exists()

    def test_workers_do_not_change_output(self, dataset, tmp_path):
        cfg, out = dataset
        cfg2 = tiny_run_config(workers=3)
        par = tmp_path / "par"
        cli.cmd_generate(cfg2, par)
        digest_a = {k: v for k, v in tree_digest(out).items() if k != cli.MANIFEST_NAME}
        digest_b = {k: v for k, v in tree_digest(par).items() if k != cli.MANIFEST_NAME}
        assert digest_a == digest_b


class TestTrain:
    def test_log_rows_and_checkpoint(self, dataset, tmp_path):
        cfg, data = dataset
        out = tmp_path / "run"
        path = cli.cmd_train(cfg, data, out)
        assert path.exists()
        rows = (out / cli.TRAIN_LOG_NAME).read_text().strip().splitlines()
        _, _, videos = cli.load_dataset(data)
        chunks = sum(len(v) for v in videos.values())
        expect = cfg.epochs * math.ceil(chunks / cfg.batch_size)
        assert len(rows) == expect + 1  # header
        losses = [float(r.split(",")[1]) for r in rows[1:]]
        assert all(np.isfinite(losses))

    def test_checkpoint_round_trip_bit_exact(self, dataset, tmp_path):
        cfg, data = dataset
        model = cli.build_model(cfg)
        opt = cli.build_optimizer(cfg, model)
        path = tmp_path / "a.malc"
        ckpt.save_checkpoint(path, cfg, model, opt, epochs_done=0)
        data1 = ckpt.load_checkpoint(path)
        model2 = cli.build_model(cfg)
        for p in model2.params.values():
            p.data = p.data + 1.0  # perturb before restoring
        opt2 = cli.build_optimizer(cfg, model2)
        ckpt.restore(data1, cfg, model2, opt2)
        path2 = tmp_path / "b.malc"
        ckpt.save_checkpoint(path2, cfg, model2, opt2, epochs_done=0)
        assert path.read_bytes() == path2.read_bytes()

    def test_restore_rejects_config_mismatch(self, dataset, tmp_path):
        cfg, _ = dataset
        model = cli.build_model(cfg)
        opt = cli.build_optimizer(cfg, model)
        path = tmp_path / "c.malc"
        ckpt.save_checkpoint(path, cfg, model, opt, epochs_done=0)
        other = tiny_run_config(lr=5e-4)
        with pytest.raises(CheckpointError, match="config"):
            ckpt.restore(ckpt.load_checkpoint(path), other,
                         cli.build_model(other),
                         cli.build_optimizer(other, cli.build_model(other)))

    def test_resume_replays_uninterrupted_run(self, dataset, tmp_path):
        cfg, data = dataset
        full_cfg = tiny_run_config(epochs=4)
        full = tmp_path / "full"
        cli.cmd_train(full_cfg, data, full)

        half_cfg = tiny_run_config(epochs=2)
        part = tmp_path / "part"
        cli.cmd_train(half_cfg, data, part)
        # same config object except epochs; resume must pick up at epoch 2
        resumed_cfg = tiny_run_config(epochs=4)
        cli.cmd_train(resumed_cfg, data, part,
                      resume_from=part / cli.CHECKPOINT_NAME)

        full_rows = (full / cli.TRAIN_LOG_NAME).read_text().splitlines()
        part_rows = (part / cli.TRAIN_LOG_NAME).read_text().splitlines()
        assert part_rows == full_rows
        assert (full / cli.CHECKPOINT_NAME).read_bytes() == \
            (part / cli.CHECKPOINT_NAME).read_bytes()


@pytest.fixture(scope="module")
def trained(dataset, tmp_path_factory):
    cfg, data = dataset
    out = tmp_path_factory.mktemp("train")
    cli.cmd_train(cfg, data, out)
    return out / cli.CHECKPOINT_NAME


class TestEval:
    def test_recognition_report_shape(self, dataset, trained, tmp_path):
        cfg, data = dataset
        report = cli.cmd_eval(cfg, data, tmp_path, "recognition",
                              checkpoint_path=trained)
        assert report["task"] == "recognition"
        assert 0.0 <= report["map"] <= 1.0
        assert (tmp_path / "report_recognition.json").exists()

    def test_nlq_report_grid(self, dataset, trained, tmp_path):
        cfg, data = dataset
        report = cli.cmd_eval(cfg, data, tmp_path, "nlq",
                              checkpoint_path=trained)
        recall = report["recall"]
        assert set(recall) == {"1", "5"}
        for k in recall:
            assert set(recall[k]) == {"0.3", "0.5"}
            for v in recall[k].values():
                assert 0.0 <= v <= 1.0
        assert (tmp_path / "nlq_outcomes.csv").exists()

    def test_eval_deterministic(self, dataset, trained, tmp_path):
        cfg, data = dataset
        a = cli.cmd_eval(cfg, data, tmp_path / "a", "nlq", checkpoint_path=trained)
        b = cli.cmd_eval(cfg, data, tmp_path / "b", "nlq", checkpoint_path=trained)
        assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)

    def test_unknown_task_rejected(self, dataset, tmp_path):
        cfg, data = dataset
        with pytest.raises(ConfigError, match="task"):
            cli.cmd_eval(cfg, data, tmp_path, "segmentation")


class TestMainEntry:
    def test_generate_and_error_paths(self, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(tiny_run_config().to_json())
        out = tmp_path / "ds"
        rc = cli.main(["generate", "--config", str(cfg_path),
                       "--out", str(out)])
        assert rc == 0
        assert (out / cli.MANIFEST_NAME).exists()
        capsys.readouterr()

        rc = cli.main(["generate", "--config", str(cfg_path),
                       "--out", str(out)])
        captured = capsys.readouterr()
        assert rc == 2
        assert captured.err.startswith("error: config:")

    def test_missing_dataset_dir(self, tmp_path, capsys):
        rc = cli.main(["eval", "--data", str(tmp_path / "nope"),
                       "--out", str(tmp_path / "o"), "--task", "nlq"])
        captured = capsys.readouterr()
        assert rc == 2
        assert "not a dataset directory" in captured.err

    def test_bad_config_file(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{nope")
        rc = cli.main(["generate", "--config", str(bad),
                       "--out", str(tmp_path / "x")])
        captured = capsys.readouterr()
        assert rc == 2
        assert "error: config:" in captured.err
