import pytest

from condiv import augment as A
from condiv.config import (ConfigError, TrainConfig, augment_spec, build_config, dump_config,
                           known_keys, parse_config_text)


def test_defaults():
    cfg = TrainConfig()
    assert cfg.tau == 0.1 and cfg.kernel.kind == "gaussian" and cfg.kernel.sigma == 0.9
    assert cfg.model.kappa == 100 and cfg.batch_size == 128 and cfg.epochs == 30
    assert (cfg.lr, cfg.beta1, cfg.beta2, cfg.weight_decay) == (0.005, 0.5, 0.999, 1e-4)
    assert cfg.lr_milestones == () and cfg.divergence_temperature is None


def test_parse_comments_and_dotted_keys():
    text = "# header\n\n kernel.sigma = 0.5  # inline\nmodel.encoder = 16,8\naugment.preset=small\n"
    cfg = build_config(parse_config_text(text))
    assert cfg.kernel.sigma == 0.5 and cfg.model.encoder == (16, 8) and cfg.augment == "small"


def test_malformed_line_cites_line_number():
    with pytest.raises(ConfigError, match="line 2") as info:
        parse_config_text("tau = 0.2\njust words\n")
    assert info.value.line == 2
    with pytest.raises(ConfigError, match="line 3"):
        build_config(parse_config_text("tau = 0.2\n\nepochs = many\n"))
    with pytest.raises(ConfigError, match="unknown config key"):
        build_config(parse_config_text("taus = 1\n"))


@pytest.mark.parametrize("text", ["tau = 0", "tau = -1", "batch_size = 1", "model.kappa = 0", "lr = nan",
                                  "model.use_contrastive_loss = false\nmodel.use_divergence_loss = false",
                                  "kernel.kind = cubic", "augment.preset = huge", "augment.hflip.prob = 2",
                                  "probe.train_fraction = 1.0"])
def test_invalid_values_rejected(text):
    with pytest.raises(ConfigError):
        build_config(parse_config_text(text))


def test_dump_round_trip():
    cfg = build_config(parse_config_text(
        "tau = 0.25\nlr_milestones = 3,7\ndivergence_temperature = 0.5\nmodel.subnet_widths = \n"
        "augment.crop.area_range = 0.3,0.9\nmodel.use_divergence_loss = off\n"))
    assert cfg.model.subnet_widths == ()
    text = dump_config(cfg)
    again = build_config(parse_config_text(text))
    assert again == cfg
    assert dump_config(again) == text
    assert text.splitlines() == sorted(text.splitlines())


def test_dump_with_resolved_augment_covers_every_key():
    cfg = TrainConfig()
    text = dump_config(cfg, augment_spec(cfg, is_vector=False))
    keys = {line.split(" = ")[0] for line in text.splitlines()}
    assert keys == set(known_keys())
    assert build_config(parse_config_text(text)).augment == "auto"


def test_augment_resolution():
    cfg = TrainConfig()
    assert augment_spec(cfg, is_vector=True) == A.preset("vector")
    assert augment_spec(cfg, is_vector=False) == A.preset("small")
    cfg = build_config(parse_config_text("augment.preset = imagenet\naugment.blur.enabled = false\n"))
    spec = augment_spec(cfg, is_vector=False)
    assert not spec.blur.enabled and spec.jitter.strengths == (0.8, 0.8, 0.8, 0.2)


def test_three_layer_precedence():
    file_layer = build_config(parse_config_text("tau = 0.3\nepochs = 4\n"))
    assert (file_layer.tau, file_layer.epochs, file_layer.seed) == (0.3, 4, 0)
    flags = build_config({"epochs": ("9", None)}, base=file_layer)
    # defaults < file < flags
    assert (flags.tau, flags.epochs, flags.seed, flags.batch_size) == (0.3, 9, 0, 128)
