import pytest

from latmmi.config import ConfigError, ExperimentConfig, default_config_text


def write(tmp_path, text):
    p = tmp_path / "exp.ini"
    p.write_text(text)
    return p


def test_default_config_parses(tmp_path):
    cfg = ExperimentConfig.load(write(tmp_path, default_config_text()))
    assert cfg.synth.vocab_size == 3
    assert cfg.synth.seed == 0
    assert cfg.train.mode == "otf"
    assert cfg.train.iterations == 500
    assert cfg.ce_iterations == 60


def test_unknown_key_rejected(tmp_path):
    text = default_config_text().replace("noise = 1.5", "noise = 1.5\nwhatever = 3")
    with pytest.raises(ConfigError, match="unknown key 'whatever'"):
        ExperimentConfig.load(write(tmp_path, text))


def test_unknown_section_rejected(tmp_path):
    text = default_config_text() + "\n[extra]\nx = 1\n"
    with pytest.raises(ConfigError, match=r"unknown section \[extra\]"):
        ExperimentConfig.load(write(tmp_path, text))


def test_missing_seed_rejected(tmp_path):
    lines = default_config_text().splitlines()
    idx = max(i for i, l in enumerate(lines) if l.startswith("seed"))
    del lines[idx]  # drops the [train] seed, the last one in the file
    with pytest.raises(ConfigError, match=r"\[train\] must set an explicit seed"):
        ExperimentConfig.load(write(tmp_path, "\n".join(lines)))


def test_bad_type_rejected(tmp_path):
    text = default_config_text().replace("frames = 8", "frames = eight")
    with pytest.raises(ConfigError, match="not a valid int"):
        ExperimentConfig.load(write(tmp_path, text))


def test_bad_mode_rejected(tmp_path):
    text = default_config_text().replace("mode = otf", "mode = something")
    with pytest.raises(ConfigError, match="mode"):
        ExperimentConfig.load(write(tmp_path, text))


def test_replace_train(tmp_path):
    cfg = ExperimentConfig.load(write(tmp_path, default_config_text()))
    cfg2 = cfg.replace_train(mode="baseline", numerator="viterbi")
    assert cfg2.train.mode == "baseline"
    assert cfg2.train.numerator == "viterbi"
    assert cfg2.train.iterations == cfg.train.iterations
    assert cfg.train.mode == "otf"  # original untouched
