import pytest

from demix.config import (
    DatasetSpec,
    ExperimentConfig,
    parse_config,
    serialize_config,
)

SAMPLE = """
# supervised trend run
dataset.source = images
dataset.size = 1000
dataset.val_size = 1000
dataset.noise = 0.25
mixer.policy = cutmix
mixer.alpha = 0.2
loss.kind = dm_ce
loss.eta = 0.1
train.epochs = 50
train.batch_size = 100
run.seeds = 1,2,3,4,5
run.name = cutmix_dm
eval.mixed_pairs = true
"""


class TestParse:
    def test_defaults_fill_in(self):
        cfg = parse_config("")
        assert cfg == ExperimentConfig()

    def test_sample_values(self):
        cfg = parse_config(SAMPLE)
        assert cfg.mixer.policy == "cutmix"
        assert cfg.loss.kind == "dm_ce"
        assert cfg.loss.dm.eta == 0.1
        assert cfg.run.seeds == (1, 2, 3, 4, 5)
        assert cfg.eval.mixed_pairs is True
        assert cfg.ssl is None

    def test_unknown_key_is_hard_error(self):
        with pytest.raises(ValueError, match="unknown config key"):
            parse_config("dataset.sizes = 10")

    def test_bad_value_reported_with_line(self):
        with pytest.raises(ValueError, match="line 1"):
            parse_config("train.epochs = soon")

    def test_missing_equals_rejected(self):
        with pytest.raises(ValueError, match="expected"):
            parse_config("just some words")

    def test_comments_and_blanks_ignored(self):
        cfg = parse_config("\n# comment only\n\ntrain.epochs = 7  # trailing\n")
        assert cfg.train.epochs == 7

    def test_mixer_none(self):
        cfg = parse_config("mixer.policy = none")
        assert cfg.mixer is None

    def test_ssl_block(self):
        cfg = parse_config("ssl.enabled = true\nssl.tau = 0.9\nssl.steps = 500")
        assert cfg.ssl is not None
        assert cfg.ssl.tau == 0.9
        assert cfg.ssl.steps == 500

    def test_invalid_loss_kind(self):
        with pytest.raises(ValueError):
            parse_config("loss.kind = focal")


class TestRoundTrip:
    @pytest.mark.parametrize(
        "text",
        [
            "",
            SAMPLE,
            "mixer.policy = none\nssl.enabled = true\nssl.unlabeled_weight = 0.5",
            "eval.occlusion = true\neval.occlusion_ratios = 0,0.25,0.5\nloss.kind = dm_bce\nloss.t = 0.5\nloss.xi = 0.8",
        ],
    )
    def test_parse_serialize_parse_identity(self, text):
        once = parse_config(text)
        assert parse_config(serialize_config(once)) == once

    def test_serialized_floats_survive(self):
        cfg = parse_config("train.base_lr = 0.030000000000000002")
        again = parse_config(serialize_config(cfg))
        assert again.train.base_lr == cfg.train.base_lr


class TestValidation:
    def test_dataset_source(self):
        with pytest.raises(ValueError):
            DatasetSpec(source="mnist")

    def test_label_fraction_bounds(self):
        with pytest.raises(ValueError):
            DatasetSpec(label_fraction=0.0)

    def test_seeds_nonempty(self):
        from demix.config import RunConfig

        with pytest.raises(ValueError):
            RunConfig(seeds=())
