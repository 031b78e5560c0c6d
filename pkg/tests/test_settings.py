"""Tests for run configuration parsing."""

import os
import tempfile

import pytest

from gaincert.errors import ConfigError
from gaincert.settings import builtin_config_names, load_run_config, override, parse_config_text


def test_parse_config_text_with_comments_and_defaults():
    config = parse_config_text(
        "# pendulum example\n"
        "system = pendulum\n"
        "k_mode = x2_affine   # state-dependent input\n"
        "\n"
        "region = -0.8, 0.8, -0.8, 0.8\n"
        "divisions = 8, 4\n"
        "report_timings = yes\n"
    )

    assert config.region == (-0.8, 0.8, -0.8, 0.8)
    assert config.divisions == (8, 4)
    assert config.report_timings
    assert config.mode == 'cpa' and config.levels == 1 and config.seed == 0
    assert config.resolved_epsilon() is None
    assert config.fan_radius is None
    assert config.model().name == 'pendulum[x2_affine]'
    assert config.box().n == 2


@pytest.mark.parametrize("text", [
    "region = -1, 1\n",
    "system = linear_test\n",
    "system = linear_test\nregion = -1, 1\ncolour = blue\n",
    "system = linear_test\nregion = -1, 1\nlevels = many\n",
    "system = linear_test\nregion = -1, 1\nmode\n",
    "system = linear_test\nregion = -1, 1\nmode = quadratic\n",
    "system = linear_test\nregion = -1, 1\nlevels = 0\n",
    "system = linear_test\nregion = -1, 1\nepsilon = -0.1\n",
    "system = linear_test\nregion = -1, 1\nfan_radius = 0\n",
])
def test_invalid_configs_are_rejected(text):
    with pytest.raises(ConfigError):
        parse_config_text(text)


def test_cpa_mode_rejects_constant_input_matrix():
    config = parse_config_text("system = linear_test\nregion = -0.8, 0.8\nmode = cpa\n")
    with pytest.raises(ConfigError):
        config.model()


def test_hybrid_epsilon_defaults_to_tenth_of_margin():
    config = parse_config_text("system = linear_test\nregion = -0.5, 1.0\nmode = hybrid\n")

    assert config.resolved_epsilon() == pytest.approx(0.05)


def test_builtin_configs_load_by_name():
    names = builtin_config_names()

    assert names == ['linear_test', 'pendulum_affine', 'pendulum_hybrid']
    for name in names:
        config = load_run_config(name)
        assert config.model().n == config.box().n


def test_load_from_path_and_override():
    with tempfile.TemporaryDirectory() as tmpdir:
        path = os.path.join(tmpdir, "run.cfg")
        with open(path, 'w', encoding='utf-8') as file:
            file.write("system = linear_test\nregion = -0.8, 0.8\nmode = hybrid\nseed = 3\n")
        config = load_run_config(path)

    changed = override(config, seed=None, threads=4)
    assert config.source == path
    assert changed.seed == 3 and changed.threads == 4
    with pytest.raises(ConfigError):
        override(config, threads=0)


def test_pendulum_configs_use_fine_planar_meshes():
    affine = load_run_config('pendulum_affine')
    hybrid = load_run_config('pendulum_hybrid')

    assert affine.divisions == (16,) and affine.boundary_segments == 32 and affine.fan_radius == 0.05
    assert hybrid.divisions == (16,) and hybrid.boundary_segments == 32 and hybrid.levels == 3
