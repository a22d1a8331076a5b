import pytest

from ristopo.config import (DEFAULTS, ConfigError, default_config, dump_config, load_config, parse_config)


def test_defaults_complete():
    cfg = default_config()
    assert cfg.values == DEFAULTS and cfg.defaults_used() == sorted(DEFAULTS)
    assert cfg["channel.bandwidth"] == 3e6 and cfg["ddpg.discount"] == 0.9


def test_dotted_and_table_forms_agree():
    a = parse_config('seed = 3\ngraph.preset = "star8"\nchannel.rice_factor = 4\n')
    b = parse_config('seed = 3\n[graph]\npreset = "star8"\n[channel]\nrice_factor = 4.0\n')
    assert a.values == b.values and a.digest() == b.digest()
    assert a["channel.rice_factor"] == 4.0 and isinstance(a["channel.rice_factor"], float)
    assert "channel.rice_factor" not in a.defaults_used()


def test_unknown_key_reports_line():
    with pytest.raises(ConfigError, match=r"scn\.toml:2: unknown key 'channel\.rice'"):
        parse_config('seed = 1\nchannel.rice = 3\n', "scn.toml")


def test_typo_hint():
    with pytest.raises(ConfigError, match="did you mean ddpg.discount"):
        parse_config("ddpg_x.discount = 0.5\n")


def test_type_mismatch():
    with pytest.raises(ConfigError, match="seed expects int"):
        parse_config('seed = "x"\n')
    with pytest.raises(ConfigError, match="expects int"):
        parse_config("ddpg.episodes = 1.5\n")


def test_unknown_stage():
    with pytest.raises(ConfigError, match="unknown stage"):
        parse_config('stages = ["spectrum", "fly"]\n')


def test_syntax_error():
    with pytest.raises(ConfigError):
        parse_config("seed = = 1\n")


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.toml")


def test_dump_roundtrip():
    cfg = parse_config('seed = 9\nstages = ["spectrum"]\nfl.modes = ["star"]\n')
    again = parse_config(dump_config(cfg))
    assert again.values == cfg.values


def test_override():
    cfg = default_config().override(seed=5, **{"graph.preset": "ring8"})
    assert cfg.seed == 5 and "seed" not in cfg.defaults_used()
    with pytest.raises(ConfigError):
        default_config().override(**{"graph.nodes": 3})


def test_digest_changes_with_values():
    assert default_config().digest() != default_config().override(seed=1).digest()
