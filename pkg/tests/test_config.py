import pytest

from wallpgd.config import RunConfig, load_run_config
from wallpgd.errors import ConfigError


def _write(tmp_path, text, name="run.toml"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_defaults_match_the_published_cases():
    config = load_run_config(None)
    assert config.case == "theoretical"
    assert config.theoretical.horizon_days == 3.0
    assert config.theoretical.wall.L == 0.2
    assert config.practical.wall.k == 0.04
    assert config.numerics.dt == 1e-3
    assert config.pgd.max_modes == 60
    assert config.sweep.modes == [2, 3, 4, 5]


def test_small_config_overrides_sections(small_config_path):
    config = load_run_config(small_config_path)
    assert config.theoretical.horizon_days == 0.25
    assert config.numerics.reference_nodes == 41
    assert config.numerics.pgd_nodes == 21
    assert config.numerics.dt == 1e-3


@pytest.mark.parametrize("text", [
    'case = "sideways"\n',
    "[numerics]\ndt = -1.0\n",
    "[sweep]\nmodes = [0, 2]\n",
    "[sweep]\ndzeta = [2.0]\n",
    'unknown_section = 1\n',
])
def test_invalid_values_raise_config_error(tmp_path, text):
    with pytest.raises(ConfigError):
        load_run_config(_write(tmp_path, text))


def test_malformed_toml(tmp_path):
    with pytest.raises(ConfigError):
        load_run_config(_write(tmp_path, "[numerics\ndt = 1"))


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError) as info:
        load_run_config(tmp_path / "absent.toml")
    assert "absent.toml" in str(info.value)


def test_relative_measurements_resolve_against_config_dir(tmp_path):
    sub = tmp_path / "cfg"
    sub.mkdir()
    path = _write(sub, 'case = "practical"\n[practical]\nmeasurements = "data/m.csv"\n')
    config = load_run_config(path)
    assert config.practical.measurements == sub / "data" / "m.csv"


def test_digest_is_stable_and_sensitive(small_config_path):
    first = load_run_config(small_config_path).digest()
    assert first == load_run_config(small_config_path).digest()
    assert first != RunConfig().digest()
    assert len(first) == 64
