"""
Tests for experiment configuration parsing.
"""

import json

import numpy as np
import pytest

from src.config import ExperimentConfig, load_config, parse_config
from src.errors import ConfigError, ValidationError


class TestParseConfig:
    """Tests for parse_config."""

    def test_defaults(self):
        config = parse_config({})

        assert config.grid.points_per_axis == 256
        assert config.partition.patches_per_axis == 4
        assert config.partition.overlap == 0.3
        assert config.sweep.truncation_radius == 8.0
        assert config.propagate.threshold == 0.1
        assert config.propagate.checkpoints == 20
        assert config.seed == 0

    def test_integers_promote_to_float(self):
        config = parse_config({"grid": {"half_length": 4}, "sweep": {"h_list": [1, 0.5, 0.25, 0.125]}})

        assert config.grid.half_length == 4.0
        assert isinstance(config.grid.half_length, float)
        assert config.sweep.h_list == [1.0, 0.5, 0.25, 0.125]

    def test_unknown_key(self):
        with pytest.raises(ConfigError) as info:
            parse_config({"grid": {"points": 64}})

        assert info.value.key == "grid.points"

    def test_unknown_section(self):
        with pytest.raises(ConfigError, match="'solver'"):
            parse_config({"solver": {}})

    @pytest.mark.parametrize("document, key", [
        ({"grid": {"points_per_axis": 64.5}}, "grid.points_per_axis"),
        ({"grid": {"dim": True}}, "grid.dim"),
        ({"sweep": {"h_list": [0.1, "x"]}}, "sweep.h_list[1]"),
        ({"sweep": {"h_list": 0.1}}, "sweep.h_list"),
        ({"symbol": {"name": 3}}, "symbol.name"),
        ({"grid": []}, "grid"),
    ])
    def test_wrong_type_names_key(self, document, key):
        with pytest.raises(ConfigError) as info:
            parse_config(document)

        assert info.value.key == key

    def test_config_error_is_validation_error(self):
        assert issubclass(ConfigError, ValidationError)

    def test_seed_override(self):
        assert parse_config({"seed": 3}).seed == 3
        assert parse_config({"seed": 3}, seed=9).seed == 9

    @pytest.mark.parametrize("document, seed", [({"seed": -1}, None), ({"seed": 2 ** 64}, None), ({}, -5)])
    def test_rejects_out_of_range_seed(self, document, seed):
        with pytest.raises(ConfigError) as info:
            parse_config(document, seed=seed)

        assert info.value.key == "seed"

    def test_accepts_largest_seed(self):
        assert parse_config({"seed": 2 ** 64 - 1}).seed == 2 ** 64 - 1


class TestExperimentConfig:
    """Tests for require and digest."""

    def test_require_names_missing_key(self):
        with pytest.raises(ConfigError, match="sweep.h_list"):
            parse_config({}).require("sweep", "h_list")

    def test_require_returns_value(self):
        assert parse_config({"bichar": {"t_end": 2}}).require("bichar", "t_end") == 2.0

    def test_digest_is_stable(self):
        document = {"grid": {"points_per_axis": 64}, "symbol": {"name": "free"}}

        assert parse_config(document).digest() == parse_config(json.loads(json.dumps(document))).digest()
        assert len(parse_config(document).digest()) == 64

    def test_digest_tracks_seed_and_content(self):
        base = parse_config({})

        assert base.digest() != parse_config({}, seed=1).digest()
        assert base.digest() != parse_config({"grid": {"half_length": 4.0}}).digest()
        assert base.digest() == ExperimentConfig().digest()


class TestSections:
    """Tests for section builders."""

    def test_grid_build_error(self):
        with pytest.raises(ConfigError) as info:
            parse_config({"grid": {"points_per_axis": 24}}).grid.build()

        assert info.value.key == "grid"

    def test_symbol_build(self):
        symbol = parse_config({"symbol": {"name": "bessel_decay", "params": {"m": -2}}}).symbol.build()

        assert symbol.declared_order == -2.0

    @pytest.mark.parametrize("section, key", [
        ({}, "symbol.name"),
        ({"name": "nonexistent"}, "symbol.name"),
        ({"name": "damped_free", "params": {"gamma": -1}}, "symbol.params"),
        ({"name": "bessel_decay", "params": {"m": "abc"}}, "symbol.params"),
        ({"name": "multiplier", "params": {"profile": "linear", "axis": [0]}}, "symbol.params"),
    ])
    def test_symbol_build_errors(self, section, key):
        with pytest.raises(ConfigError) as info:
            parse_config({"symbol": section}).symbol.build()

        assert info.value.key == key

    def test_default_phase_box(self):
        box = parse_config({}).symbol.phase_box(2)

        assert box.bounds == ((-4.0, 4.0),) * 4

    def test_coherent_family_depends_on_h(self):
        config = parse_config({"grid": {"points_per_axis": 512}, "states": {"x0": [0.0], "xi0": [2.0]}})
        family = config.states.family(config.grid.build(), config.seed)

        assert family(0.1).norm() == pytest.approx(1.0, abs=1e-10)
        assert not np.array_equal(family(0.1).values, family(0.05).values)

    def test_gaussian_family_is_fixed(self):
        config = parse_config({"states": {"kind": "gaussian", "width": 0.5}})
        family = config.states.family(config.grid.build(), config.seed)

        assert family(0.1) is family(0.4)
        assert family(0.1).norm() == pytest.approx(1.0, abs=1e-12)

    def test_random_family_follows_seed(self):
        config = parse_config({"grid": {"points_per_axis": 64}, "states": {"kind": "random"}})
        grid = config.grid.build()

        np.testing.assert_array_equal(config.states.family(grid, 1)(0.1).values,
                                      config.states.family(grid, 1)(0.1).values)
        assert not np.array_equal(config.states.family(grid, 1)(0.1).values,
                                  config.states.family(grid, 2)(0.1).values)

    @pytest.mark.parametrize("states, key", [
        ({"kind": "plane"}, "states.kind"),
        ({"x0": [0.0, 1.0]}, "states.x0"),
    ])
    def test_family_errors(self, states, key):
        config = parse_config({"states": states})

        with pytest.raises(ConfigError) as info:
            config.states.family(config.grid.build(), 0)

        assert info.value.key == key


class TestLoadConfig:
    """Tests for load_config."""

    def test_round_trip(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"grid": {"points_per_axis": 64}, "seed": 5}))

        config = load_config(path)
        assert config.grid.points_per_axis == 64
        assert config.seed == 5

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="does not exist"):
            load_config(tmp_path / "absent.json")

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text("{grid: ")

        with pytest.raises(ConfigError, match="not valid JSON"):
            load_config(path)
