import dataclasses

import numpy as np
import pytest
import torch
from torch import nn

from brightcolor.data import generate_synthetic_dataset
from brightcolor.inference import CheckpointError, ModelBundle, load_bundle
from brightcolor.losses import LossWeights
from brightcolor.network import ModelConfig, build_model, count_lams, count_parameters
from brightcolor.quantizer import load_gamut
from brightcolor.trainer import (
    ABLATIONS,
    TrainConfig,
    TrainingAborted,
    ablation_config,
    evaluate,
    load_train_config,
    train,
)

TINY_MODEL = dict(base_channels=4)


@pytest.fixture(scope="module")
def small_dataset(tmp_path_factory):
    return generate_synthetic_dataset(
        tmp_path_factory.mktemp("small"), count=2, size=32, seed=3
    )


def tiny_train_config(**kwargs):
    defaults = dict(
        max_steps=3,
        batch_size=2,
        eval_every=0,
        checkpoint_every=0,
        seed=0,
        model=ModelConfig(**TINY_MODEL),
    )
    defaults.update(kwargs)
    return TrainConfig(**defaults)


class TestTrainConfig:
    def test_defaults_match_protocol(self):
        cfg = TrainConfig()
        assert cfg.lr == 2e-4
        assert cfg.batch_size == 8
        assert cfg.beta1 == 0.9
        assert cfg.resolved_schedule() == [(1000, 0.5), (1500, 0.5)]

    def test_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(lr=0)
        with pytest.raises(ValueError):
            TrainConfig(batch_size=0)
        with pytest.raises(ValueError):
            TrainConfig(schedule=[(100, 0.5), (50, 0.5)])

    def test_toml_round_trip(self, tmp_path):
        path = tmp_path / "cfg.toml"
        path.write_text(
            "[train]\nlr = 1e-3\nmax_steps = 10\n"
            "[model]\nbase_channels = 8\n"
            "[weights]\ntv = 0.5\n"
            "[data]\nlow_dir = 'x'\nhigh_dir = 'y'\n"
        )
        cfg, data = load_train_config(path)
        assert cfg.lr == 1e-3 and cfg.max_steps == 10
        assert cfg.model.base_channels == 8
        assert cfg.weights.tv == 0.5
        assert data == {"low_dir": "x", "high_dir": "y"}

    def test_unknown_key_named(self, tmp_path):
        path = tmp_path / "cfg.toml"
        path.write_text("[train]\nlearning_rate = 1e-3\n")
        with pytest.raises(ValueError, match="learning_rate"):
            load_train_config(path)

    def test_overrides_applied(self, tmp_path):
        path = tmp_path / "cfg.toml"
        path.write_text("[train]\nlr = 1e-3\n")
        cfg, _ = load_train_config(path, {"lr": 5e-4, "seed": None})
        assert cfg.lr == 5e-4
        assert cfg.seed == 0


class TestTrainLoop:
    def test_single_step_deterministic(self, small_dataset, tmp_path):
        cfg = tiny_train_config(max_steps=1)
        a = train(cfg, small_dataset, tmp_path / "a")
        b = train(cfg, small_dataset, tmp_path / "b")
        sd_a = load_bundle(a.checkpoint).model.state_dict()
        sd_b = load_bundle(b.checkpoint).model.state_dict()
        assert sd_a.keys() == sd_b.keys()
        for key in sd_a:
            assert torch.equal(sd_a[key], sd_b[key]), key

    def test_schedule_halves_lr_readback(self, small_dataset, tmp_path):
        cfg = tiny_train_config(max_steps=6, schedule=[(4, 0.5)])
        result = train(cfg, small_dataset, tmp_path / "run")
        lrs = {row["step"]: row["lr"] for row in result.history}
        assert lrs[3] == pytest.approx(2e-4)
        assert lrs[4] == pytest.approx(1e-4)
        assert lrs[6] == pytest.approx(1e-4)

    def test_loss_decreases_on_overfit_set(self, small_dataset, tmp_path):
        cfg = tiny_train_config(max_steps=60, seed=1)
        result = train(cfg, small_dataset, tmp_path / "run")
        first = np.mean([r["total"] for r in result.history[:5]])
        last = np.mean([r["total"] for r in result.history[-5:]])
        assert last < first

    def test_checkpoint_round_trip_identical_eval(self, small_dataset, tmp_path):
        cfg = tiny_train_config(max_steps=2)
        result = train(cfg, small_dataset, tmp_path / "run")
        rep1 = evaluate(result.checkpoint, small_dataset)
        rep2 = evaluate(result.checkpoint, small_dataset)
        assert rep1.rows == rep2.rows

    def test_run_artifacts_written(self, small_dataset, tmp_path):
        cfg = tiny_train_config(max_steps=2)
        train(cfg, small_dataset, tmp_path / "run")
        assert (tmp_path / "run" / "checkpoint.pt").exists()
        assert (tmp_path / "run" / "train_log.csv").exists()
        assert (tmp_path / "run" / "loss_curve.png").exists()
        assert (tmp_path / "run" / "train_summary.json").exists()

    def test_non_finite_loss_aborts_with_last_good(
        self, small_dataset, tmp_path, monkeypatch
    ):
        import brightcolor.trainer as trainer_mod

        calls = {"n": 0}
        real = trainer_mod.charbonnier

        def poisoned(pred, target, eps=1e-3):
            calls["n"] += 1
            if calls["n"] >= 2:
                return torch.tensor(float("nan"), dtype=pred.dtype)
            return real(pred, target, eps)

        monkeypatch.setattr(trainer_mod, "charbonnier", poisoned)
        cfg = tiny_train_config(max_steps=5)
        with pytest.raises(TrainingAborted, match="rec_l") as info:
            train(cfg, small_dataset, tmp_path / "run")
        assert info.value.checkpoint.exists()

    def test_empty_dataset_rejected(self, tmp_path):
        from brightcolor.data import DatasetError, PairDataset

        with pytest.raises(DatasetError):
            train(tiny_train_config(), PairDataset([]), tmp_path / "run")

    def test_augmented_training_runs(self, small_dataset, tmp_path):
        cfg = tiny_train_config(max_steps=2, crop=16)
        result = train(cfg, small_dataset, tmp_path / "run")
        assert result.steps == 2


class TestEvaluate:
    def test_identity_model_on_identity_dataset(self, tmp_path):
        from brightcolor.data import PairPaths, PairDataset
        from brightcolor.colorspace import write_png
        from brightcolor.data import make_scene

        img = make_scene(1, 32)
        p = tmp_path / "img.png"
        write_png(p, img)
        ds = PairDataset([PairPaths(id="same", low=p, normal=p)])

        class IdentityNet(nn.Module):
            def forward(self, x):
                return x

        bundle = ModelBundle(
            model=IdentityNet(),
            config=ModelConfig(**TINY_MODEL),
            gamut=load_gamut(),
            model_id="identity",
            step=0,
            payload={"gamut_hash": ""},
        )
        rep = evaluate(bundle, ds)
        assert rep.rows[0]["psnr"] == 100.0
        assert rep.rows[0]["ssim"] == pytest.approx(1.0, abs=1e-9)
        assert rep.rows[0]["delta_e"] == pytest.approx(0.0, abs=1e-9)

    def test_aggregates_are_means_and_rows_match_dataset(
        self, small_dataset, tiny_checkpoint
    ):
        rep = evaluate(tiny_checkpoint, small_dataset)
        assert len(rep.rows) == len(small_dataset)
        for metric in ("psnr", "ssim", "delta_e"):
            assert rep.aggregates[metric] == pytest.approx(
                np.mean([r[metric] for r in rep.rows])
            )

    def test_report_files_written(self, small_dataset, tiny_checkpoint, tmp_path):
        evaluate(tiny_checkpoint, small_dataset, out_dir=tmp_path, dump_images=True)
        assert (tmp_path / "report.csv").exists()
        assert (tmp_path / "metrics.png").exists()
        assert any(tmp_path.glob("*_enhanced.png"))
        assert any(tmp_path.glob("*_panel.png"))

    def test_gamut_hash_mismatch_refused(self, tiny_checkpoint, tmp_path):
        payload = torch.load(tiny_checkpoint, map_location="cpu", weights_only=True)
        payload["gamut_hash"] = "0" * 64
        bad = tmp_path / "bad.pt"
        torch.save(payload, bad)
        with pytest.raises(CheckpointError, match="gamut"):
            load_bundle(bad)

    def test_corrupt_checkpoint_refused(self, tmp_path):
        bad = tmp_path / "corrupt.pt"
        bad.write_bytes(b"not a checkpoint")
        with pytest.raises(CheckpointError, match="cannot read"):
            load_bundle(bad)


class TestAblations:
    def test_all_names_derivable(self):
        base = TrainConfig(model=ModelConfig(**TINY_MODEL))
        for name in ABLATIONS:
            cfg = ablation_config(name, base)
            assert cfg.model != base.model or cfg.weights != base.weights

    def test_no_lq_zeroes_weight_and_drops_head(self):
        base = TrainConfig(model=ModelConfig(**TINY_MODEL))
        cfg = ablation_config("no_Lq", base)
        assert cfg.weights.q == 0.0
        assert not cfg.model.use_class_head
        model = build_model(cfg.model)
        assert not hasattr(model.colorize, "class_head")

    def test_no_lam_has_zero_lams(self):
        base = TrainConfig(model=ModelConfig(**TINY_MODEL))
        model = build_model(ablation_config("no_lam", base).model)
        assert count_lams(model) == 0

    def test_no_share_strictly_more_parameters(self):
        base = TrainConfig(model=ModelConfig(**TINY_MODEL))
        unshared = build_model(ablation_config("no_share", base).model)
        shared = build_model(base.model)
        assert count_parameters(unshared) > count_parameters(shared)

    def test_no_decouple_is_single_rgb_network(self):
        base = TrainConfig(model=ModelConfig(**TINY_MODEL))
        model = build_model(ablation_config("no_decouple", base).model)
        from brightcolor.network import FusedRgbNet

        assert isinstance(model, FusedRgbNet)

    def test_unknown_name_rejected(self):
        with pytest.raises(ValueError, match="unknown ablation"):
            ablation_config("no_magic", TrainConfig())

    def test_ablation_run_trains_and_reports(self, small_dataset, tmp_path):
        base = tiny_train_config(max_steps=2)
        from brightcolor.trainer import ablation_run

        result = ablation_run("no_Lq", base, small_dataset, tmp_path)
        assert result.eval.rows
        assert result.param_count < result.baseline_param_count
