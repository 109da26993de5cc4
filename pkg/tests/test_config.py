import pytest
from hypothesis import given
from hypothesis import strategies as st

from gemst.config import PRESETS, ModelConfig, StageConfig, dump_config, load_config, parse_config, preset
from gemst.errors import ConfigError


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_preset_round_trip(name):
    cfg = preset(name)
    assert parse_config(dump_config(cfg)) == cfg


def test_feature_sizes():
    assert preset("small").feature_sizes() == [112, 56, 28, 14, 7]
    assert preset("small").stages[2].split_channel == 48


def test_two_by_two_downsampler_sizes():
    cfg = parse_config("preset = small\ndown_kernel = 2\n")
    assert cfg.feature_sizes() == [112, 56, 28, 14, 7] and cfg.down_kernel == 2


def test_preset_override_and_stage_sections():
    cfg = parse_config("""
        preset = small   # start from small
        num_classes = 10
        [stage.1]
        kind = conv_b
        depth = 1
        channels = 24
        """)
    assert cfg.num_classes == 10 and len(cfg.stages) == 1


@pytest.mark.parametrize("text", [
    "bogus = 1",
    "time_steps = four",
    "[stage.2]\nkind = conv_b\ndepth = 1\nchannels = 8",
    "[stage.1]\nkind = conv_b",
    "[stage.1]\nkind = mlp\ndepth = 1\nchannels = 8",
    "time_steps = 1\ntime_steps = 2",
    "preset = huge",
    "just words",
    "[stage.1]\nkind = ssa_b_gw\ndepth = 1\nchannels = 24\nheads = 5",
    "[stage.1]\nkind = conv_b\ndepth = 1\nchannels = 8\ndownsample = maybe",
])
def test_config_errors(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_stage_chaining_error():
    with pytest.raises(ConfigError):
        ModelConfig((StageConfig("conv_b", 1, 8), StageConfig("conv_b", 1, 16, downsample=False)))


def test_load_config_file(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text(dump_config(preset("base")))
    assert load_config(p) == preset("base")


def test_shipped_configs_parse():
    import pathlib

    root = pathlib.Path(__file__).resolve().parents[1] / "configs"
    for path in sorted(root.glob("*.cfg")):
        cfg = load_config(path)
        assert parse_config(dump_config(cfg)) == cfg


@given(st.sampled_from(sorted(PRESETS)), st.integers(1, 8), st.integers(1, 2000))
def test_round_trip_property(name, t, classes):
    text = f"preset = {name}\ntime_steps = {t}\nnum_classes = {classes}\n"
    try:
        cfg = parse_config(text)
    except ConfigError:
        return  # temporal_group larger than time_steps
    assert parse_config(dump_config(cfg)) == cfg
