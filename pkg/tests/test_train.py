import math
import shutil

import numpy as np
import pytest
import torch
import torch.nn as nn

from config.train_config import LossWeights, TrainConfig, dump_config, load_config, parse_overrides
from dam.losses import DamLossTerms
from dam.warp import warp
from metric.embedder import FixedRandomConvEmbedder
from train.ablation import run_ablation
from train.checkpoint import load_checkpoint, load_dam, load_tgrn, parameter_checksum, save_checkpoint
from train.discriminator import Discriminator
from train.losses import (
    LossComponents,
    adversarial_losses,
    generator_adversarial_loss,
    identity_loss,
    l1_loss,
    total_tgrn_loss,
)
from train.priors import (
    DirectoryPairProvider,
    collate,
    iterate_batches,
    save_prior_pairs,
    smooth_random_field,
    synth_prior_pair,
)
from train.stage1 import DAM_LOG, evaluate_dam, train_stage1
from train.stage2 import TGRN_LOG, train_stage2, triplet_roles
from utils.errors import (
    CheckpointError,
    ConfigError,
    ImageNotFoundError,
    MissingMaskError,
    RangeError,
    ShapeMismatchError,
    TrainingDivergedError,
)
from utils.file_manager import read_json, read_jsonl

from tests.conftest import tiny_config


class ConstantCritic(nn.Module):
    def __init__(self, value: float):
        super().__init__()
        self.value = value

    def forward(self, x):
        return torch.full((x.shape[0],), self.value, dtype=x.dtype)


@pytest.fixture
def dam_ckpt(tiny_pairs):
    return train_stage1(tiny_config("dam", iterations=2), tiny_pairs)


class TestPriors:
    def test_no_perturbation_gives_hq(self, face):
        pair = synth_prior_pair(face, warp_magnitude=0.0, texture_strength=0.0, seed=3)
        assert np.array_equal(pair.i_g.pixels, face.pixels)
        assert pair.gt_field.max_magnitude() == 0.0

    def test_field_respects_magnitude(self, rng):
        for magnitude in (0.5, 3.0, 7.0):
            disp = smooth_random_field(24, 40, magnitude, rng)
            assert np.sqrt((disp ** 2).sum(axis=-1)).max() <= magnitude

    def test_same_seed_same_pair(self, face):
        a = synth_prior_pair(face, 3.0, 0.05, seed=11)
        b = synth_prior_pair(face, 3.0, 0.05, seed=11)
        assert np.array_equal(a.i_g.pixels, b.i_g.pixels)
        assert np.array_equal(a.gt_field.displacements, b.gt_field.displacements)
        assert np.array_equal(a.mask.mask, b.mask.mask)

    def test_gt_field_undoes_the_perturbation(self, face):
        pair = synth_prior_pair(face, 3.0, 0.0, seed=5)
        hq = torch.from_numpy(face.pixels.transpose(2, 0, 1))[None]
        g = torch.from_numpy(pair.i_g.pixels.transpose(2, 0, 1))[None]
        gt = torch.from_numpy(pair.gt_field.displacements.transpose(2, 0, 1).copy())[None]
        aligned = float((warp(g, gt) - hq).abs().mean())
        unaligned = float((g - hq).abs().mean())
        assert aligned < 0.5 * unaligned

    def test_identity_output_is_blurred(self, face):
        pair = synth_prior_pair(face, 2.0, 0.05, seed=0)
        assert not np.array_equal(pair.i_f.pixels, face.pixels)
        assert pair.i_f.shape == face.shape

    def test_invalid_parameters(self, face, rng):
        with pytest.raises(RangeError):
            smooth_random_field(16, 16, -1.0, rng)
        with pytest.raises(RangeError):
            synth_prior_pair(face, -1.0, 0.0, seed=0)
        with pytest.raises(RangeError):
            synth_prior_pair(face, 1.0, -0.1, seed=0)


class TestBatching:
    def test_order_is_seed_determined(self, tiny_pairs):
        first = iterate_batches(tiny_pairs, 3, seed=4)
        second = iterate_batches(tiny_pairs, 3, seed=4)
        for _ in range(5):
            a, b = next(first), next(second)
            assert a.indices == b.indices
            assert torch.equal(a.i_g, b.i_g)

    def test_each_epoch_covers_every_pair(self, tiny_pairs):
        batches = iterate_batches(tiny_pairs, 2, seed=0)
        seen = next(batches).indices + next(batches).indices
        assert sorted(seen) == [0, 1, 2, 3]

    def test_collate_layout(self, tiny_pairs):
        batch = collate([tiny_pairs.get(0), tiny_pairs.get(1)], [0, 1])
        assert batch.i_f.shape == (2, 3, 32, 32)
        assert batch.gt_field.shape == (2, 2, 32, 32)
        assert batch.mask.shape == (2, 1, 32, 32)
        assert float(batch.i_hq.min()) >= -1.0 and float(batch.i_hq.max()) <= 1.0


class TestDirectoryPairs:
    def test_round_trip(self, tmp_path, tiny_pairs):
        names = save_prior_pairs(tiny_pairs, tmp_path / "pairs")
        provider = DirectoryPairProvider(tmp_path / "pairs")
        assert len(provider) == len(names) == 4
        pair = provider.get(1)
        assert pair.mask is not None and pair.landmarks is not None
        assert np.allclose(pair.gt_field.displacements, tiny_pairs.get(1).gt_field.displacements, atol=1e-5)
        assert np.max(np.abs(pair.i_g.pixels - tiny_pairs.get(1).i_g.pixels)) <= 1.0 / 255.0

    def test_mask_derived_from_landmarks(self, tmp_path, tiny_pairs):
        save_prior_pairs(tiny_pairs, tmp_path)
        shutil.rmtree(tmp_path / "masks")
        assert DirectoryPairProvider(tmp_path).get(0).mask is not None

    def test_missing_layout(self, tmp_path):
        with pytest.raises(ImageNotFoundError):
            DirectoryPairProvider(tmp_path)


class TestLosses:
    def test_l1(self, rng):
        a = torch.zeros(1, 3, 8, 8, dtype=torch.float64)
        assert float(l1_loss(a, a)) == 0.0
        assert float(l1_loss(a, a + 0.1)) == pytest.approx(0.1, abs=1e-12)
        x = rng.uniform(-1, 1, size=(1, 3, 8, 8))
        y = rng.uniform(-1, 1, size=(1, 3, 8, 8))
        oracle = sum(abs(x.flat[k] - y.flat[k]) for k in range(x.size)) / x.size
        assert float(l1_loss(torch.tensor(x), torch.tensor(y))) == pytest.approx(oracle, abs=1e-12)
        with pytest.raises(ShapeMismatchError):
            l1_loss(a, torch.zeros(1, 3, 8, 9, dtype=torch.float64))

    def test_generator_adversarial_values(self):
        assert float(generator_adversarial_loss(torch.zeros(4))) == pytest.approx(-math.log(2.0), abs=1e-7)
        assert float(generator_adversarial_loss(torch.full((4,), 10.0))) == pytest.approx(-10.0, abs=1e-4)
        values = [float(generator_adversarial_loss(torch.full((2,), v))) for v in (-3.0, 0.0, 3.0)]
        assert values[0] > values[1] > values[2]

    def test_adversarial_pair(self):
        images = torch.zeros(2, 3, 16, 16)
        gen, disc = adversarial_losses(ConstantCritic(0.0), images, images)
        assert float(gen) == pytest.approx(-math.log(2.0), abs=1e-7)
        assert float(disc) == pytest.approx(2 * math.log(2.0), abs=1e-6)

    def test_identity_loss(self, rng):
        embedder = FixedRandomConvEmbedder(seed=2, output_dim=16).double()
        a = torch.tensor(rng.uniform(-1, 1, size=(1, 3, 16, 16)))
        b = torch.tensor(rng.uniform(-1, 1, size=(1, 3, 16, 16)))
        assert float(identity_loss(embedder, a, a)) == 0.0
        assert float(identity_loss(embedder, a, b)) == pytest.approx(float(identity_loss(embedder, b, a)), abs=1e-15)

    def test_total_weighting(self):
        weights = LossWeights()
        assert total_tgrn_loss(LossComponents(1.0, 1.0, 1.0, 1.0), weights) == pytest.approx(11.2)
        assert total_tgrn_loss(LossComponents(0.0, 0.0, 0.0, 0.0), weights) == 0.0
        zero = LossWeights(lambda_l1=0, lambda_adv=0, lambda_id=0, lambda_triplet=0)
        assert total_tgrn_loss(LossComponents(3.0, -2.0, 5.0, 0.0), zero) == 0.0

    def test_perceptual_hook(self):
        components = LossComponents(1.0, 1.0, 1.0, 1.0, perceptual=1.0)
        assert total_tgrn_loss(components, LossWeights()) == pytest.approx(11.2)
        assert total_tgrn_loss(components, LossWeights(lambda_perceptual=2.0)) == pytest.approx(13.2)

    def test_discriminator_shape(self):
        logits = Discriminator(3, 4)(torch.randn(3, 3, 32, 32))
        assert logits.shape == (3,)


class TestStage1:
    def test_logs_and_checkpoint(self, tmp_path, tiny_pairs):
        ckpt = train_stage1(tiny_config("dam", iterations=3), tiny_pairs, tmp_path)
        records = read_jsonl(tmp_path / DAM_LOG)
        assert [r["step"] for r in records] == [0, 1, 2]
        assert {"sim", "smooth", "total", "epe"} <= set(records[0])
        assert records == ckpt.history

        reloaded = load_dam(ckpt.path)
        config = ckpt.config
        assert evaluate_dam(reloaded.net, tiny_pairs, config) == evaluate_dam(ckpt.net, tiny_pairs, config)
        assert reloaded.history == ckpt.history

    def test_deterministic_per_seed(self, tiny_pairs):
        a = train_stage1(tiny_config("dam", iterations=3, seed=5), tiny_pairs)
        b = train_stage1(tiny_config("dam", iterations=3, seed=5), tiny_pairs)
        for ra, rb in zip(a.history, b.history):
            for key in ("sim", "smooth", "total"):
                assert ra[key] == pytest.approx(rb[key], rel=1e-4, abs=1e-12)

    def test_logging_does_not_warn_about_grad_tensors(self, recwarn, tiny_pairs):
        train_stage1(tiny_config("dam", iterations=2), tiny_pairs)
        assert not [w for w in recwarn if "requires_grad" in str(w.message)]

    def test_wrong_stage(self, tiny_pairs):
        with pytest.raises(ConfigError):
            train_stage1(tiny_config("tgrn"), tiny_pairs)

    def test_non_finite_loss_aborts(self, monkeypatch, tiny_pairs):
        def broken(*args, **kwargs):
            nan = torch.tensor(float("nan"))
            return DamLossTerms(total=nan, sim=nan, smooth=torch.tensor(0.0))

        monkeypatch.setattr("train.stage1.dam_loss_terms", broken)
        with pytest.raises(TrainingDivergedError):
            train_stage1(tiny_config("dam"), tiny_pairs)


class TestCheckpoints:
    def test_container_errors(self, tmp_path, dam_ckpt):
        path = save_checkpoint("dam", dam_ckpt.net, dam_ckpt.config, tmp_path / "d.ckpt")
        with pytest.raises(CheckpointError):
            load_tgrn(path)
        with pytest.raises(ImageNotFoundError):
            load_dam(tmp_path / "missing.ckpt")
        (tmp_path / "junk.ckpt").write_text("not a checkpoint")
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "junk.ckpt", "dam")
        with pytest.raises(FileNotFoundError):
            save_checkpoint("dam", dam_ckpt.net, dam_ckpt.config, tmp_path / "nope" / "d.ckpt")


class TestStage2:
    def test_total_decomposes_and_dam_stays_frozen(self, tmp_path, tiny_pairs, dam_ckpt):
        before = parameter_checksum(dam_ckpt.net)
        ckpt = train_stage2(tiny_config("tgrn", iterations=3), dam_ckpt, tiny_pairs, tmp_path)
        assert parameter_checksum(dam_ckpt.net) == before == ckpt.dam_checksum

        weights = ckpt.config.loss_weights
        for r in ckpt.history:
            recombined = weights.lambda_l1 * r["l1"] + weights.lambda_adv * r["adv"] + weights.lambda_id * r["id"] + r["triplet"]
            assert r["total"] == pytest.approx(recombined, rel=1e-5, abs=1e-6)
            assert r["triplet"] > 0

        assert read_jsonl(tmp_path / TGRN_LOG) == ckpt.history
        reloaded = load_tgrn(ckpt.path)
        assert reloaded.dam_checksum == before
        assert parameter_checksum(reloaded.net) == parameter_checksum(ckpt.net)

    def test_deterministic_per_seed(self, tiny_pairs, dam_ckpt):
        a = train_stage2(tiny_config("tgrn", iterations=3, seed=5), dam_ckpt, tiny_pairs)
        b = train_stage2(tiny_config("tgrn", iterations=3, seed=5), dam_ckpt, tiny_pairs)
        assert len(a.history) == len(b.history) == 3
        for ra, rb in zip(a.history, b.history):
            for key in ("l1", "adv", "id", "triplet", "total"):
                assert ra[key] == pytest.approx(rb[key], rel=1e-4, abs=1e-12)

    def test_logging_does_not_warn_about_grad_tensors(self, recwarn, tiny_pairs, dam_ckpt):
        train_stage2(tiny_config("tgrn", iterations=2), dam_ckpt, tiny_pairs)
        assert not [w for w in recwarn if "requires_grad" in str(w.message)]

    def test_variant_b_has_no_triplet(self, tiny_pairs, dam_ckpt):
        config = tiny_config("tgrn", iterations=2).with_variant("B")
        ckpt = train_stage2(config, dam_ckpt, tiny_pairs)
        assert all(r["triplet"] == 0.0 for r in ckpt.history)

    def test_triplet_roles_follow_variant(self, tiny_pairs):
        batch = collate([tiny_pairs.get(0)], [0])
        i_warp = batch.i_g.clone()
        c = tiny_config("tgrn").with_variant("C")
        positive, negative = triplet_roles(c, batch, i_warp)
        assert positive is batch.i_hq and negative is i_warp
        d = tiny_config("tgrn").with_variant("D")
        positive, negative = triplet_roles(d, batch, i_warp)
        assert negative is batch.i_f
        assert torch.equal(positive, batch.i_f * batch.mask + i_warp * (1 - batch.mask))

    def test_missing_mask(self, tmp_path, tiny_pairs, dam_ckpt):
        save_prior_pairs(tiny_pairs, tmp_path)
        shutil.rmtree(tmp_path / "masks")
        shutil.rmtree(tmp_path / "landmarks")
        provider = DirectoryPairProvider(tmp_path)
        with pytest.raises(MissingMaskError):
            train_stage2(tiny_config("tgrn", iterations=1), dam_ckpt, provider)
        ckpt = train_stage2(tiny_config("tgrn", iterations=1).with_variant("C"), dam_ckpt, provider)
        assert len(ckpt.history) == 1

    def test_wrong_stage(self, tiny_pairs, dam_ckpt):
        with pytest.raises(ConfigError):
            train_stage2(tiny_config("dam"), dam_ckpt, tiny_pairs)


class TestAblation:
    def test_runs_every_variant(self, tmp_path, tiny_pairs, dam_ckpt):
        results = run_ablation(tiny_config("tgrn"), tiny_pairs, out_dir=tmp_path, dam_ckpt=dam_ckpt, tgrn_iterations=1)
        assert set(results) == {"A", "B", "C", "D"}
        assert {"l1", "psnr", "epe", "epe_unaligned"} <= set(results["A"])
        assert read_json(tmp_path / "ablation.json") == results
        assert (tmp_path / "D" / "tgrn.ckpt").is_file()

    def test_unknown_variant(self, tiny_pairs):
        with pytest.raises(ConfigError):
            run_ablation(tiny_config("tgrn"), tiny_pairs, variants=("E",))


class TestTrainConfig:
    def test_desk_defaults(self):
        dam = TrainConfig()
        assert dam.learning_rate == 5e-4 and dam.batch_size == 4 and dam.total_iterations == 2000
        assert TrainConfig(stage="tgrn").total_iterations == 5000
        weights = dam.loss_weights
        assert (weights.lambda_l1, weights.lambda_adv, weights.lambda_id, weights.lambda_triplet, weights.lambda_phi) == (
            0.1, 0.1, 10.0, 1.0, 1.0,
        )

    def test_full_scale(self):
        config = TrainConfig.full_scale("tgrn")
        assert (config.batch_size, config.total_iterations, config.image_size) == (8, 600_000, 512)
        assert TrainConfig.full_scale("dam").total_iterations == 400_000

    def test_precedence(self, tmp_path):
        path = tmp_path / "train.yaml"
        path.write_text("learning_rate: 0.001\nbatch_size: 16\nloss_weights:\n  lambda_id: 3\n")
        config = load_config(path, ["learning_rate=0.002", "loss_weights.lambda_adv=0.5"], batch_size=2, seed=None)
        assert config.learning_rate == 0.002
        assert config.batch_size == 2
        assert config.loss_weights.lambda_id == 3.0
        assert config.loss_weights.lambda_adv == 0.5
        assert config.seed == 0

    def test_dump_and_reload(self, tmp_path):
        config = tiny_config("tgrn", iterations=7).with_variant("C")
        dump_config(config, tmp_path / "c.yaml")
        assert load_config(tmp_path / "c.yaml") == config

    def test_invalid_configs(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(overrides=["no_such_key=1"])
        with pytest.raises(ConfigError):
            load_config(overrides=["loss_weights.lambda_id=-1"])
        with pytest.raises(ConfigError):
            load_config(tmp_path / "absent.yaml")
        with pytest.raises(ConfigError):
            parse_overrides(["learning_rate"])
        with pytest.raises(ConfigError):
            TrainConfig().with_variant("Z")

    def test_variants(self):
        base = TrainConfig(stage="tgrn")
        assert base.with_variant("B").loss_weights.lambda_triplet == 0.0
        c = base.with_variant("C")
        assert (c.positive, c.negative, c.variant) == ("ground_truth", "warp", "C")
        d = c.with_variant("D")
        assert (d.positive, d.negative, d.loss_weights.lambda_triplet) == ("anchor_positive", "identity", 1.0)
