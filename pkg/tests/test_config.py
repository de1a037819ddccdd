"""
Tests for run configuration loading, merging and validation.
"""
import json

import pytest

from prolate_ewald.config import (
    DEFAULTS,
    RunConfig,
    apply_overrides,
    config_hash,
    load_config_file,
    load_run_config,
    local_config_path,
    merge_configs,
    validate_config,
)
from prolate_ewald.errors import ConfigurationError


def _write_json(path, data):
    path.write_text(json.dumps(data) if not isinstance(data, str) else data)
    return str(path)


# ---------------------------------------------------------------------------
# Loading single files
# ---------------------------------------------------------------------------

class TestLoadConfigFile:
    """Tests for parsing one JSON file."""

    def test_missing_file_is_empty(self, test_dir):
        """A missing file gives the defaults, marked empty."""
        config = load_config_file(str(test_dir / "absent.json"))
        assert config["is_empty"]
        assert not config["has_error"]
        assert config["n"] == DEFAULTS["n"]

    def test_blank_file_is_empty(self, test_dir):
        """Whitespace-only files count as empty."""
        config = load_config_file(_write_json(test_dir / "run.json", "  \n"))
        assert config["is_empty"]
        assert not config["has_error"]

    def test_values_are_read(self, test_dir):
        """Keys in the file replace defaults and are listed as provided."""
        config = load_config_file(_write_json(test_dir / "run.json", {"n": 40, "rc": 0.2}))
        assert config["n"] == 40
        assert config["rc"] == 0.2
        assert config["provided"] == ["n", "rc"]
        assert not config["is_empty"]

    def test_invalid_json(self, test_dir):
        """Broken JSON is reported, not raised."""
        config = load_config_file(_write_json(test_dir / "run.json", "{not json"))
        assert config["has_error"]
        assert "Invalid JSON" in config["error_message"]

    def test_non_object(self, test_dir):
        """A JSON list is not a configuration."""
        config = load_config_file(_write_json(test_dir / "run.json", "[1, 2]"))
        assert config["has_error"]
        assert "expected a JSON object" in config["error_message"]

    def test_unknown_keys(self, test_dir):
        """Unknown keys are named in the error."""
        config = load_config_file(_write_json(test_dir / "run.json", {"cutoff": 0.1, "grid": 8}))
        assert config["has_error"]
        assert "cutoff" in config["error_message"]
        assert "grid" in config["error_message"]

    def test_local_path(self):
        """The local file sits next to the main one."""
        assert local_config_path("exp/run.json") == "exp/run.local.json"
        assert local_config_path("exp/run.cfg") == "exp/run.cfg.local.json"


# ---------------------------------------------------------------------------
# Merging and overrides
# ---------------------------------------------------------------------------

class TestMergeConfigs:
    """Tests for main/local merging."""

    def test_local_keys_win(self, test_dir):
        """Provided local keys replace main values; others are kept."""
        main = load_config_file(_write_json(test_dir / "run.json", {"n": 40, "rc": 0.2}))
        local = load_config_file(_write_json(test_dir / "run.local.json", {"n": 60, "threads": 4}))
        merged = merge_configs(main, local)
        assert merged["n"] == 60
        assert merged["rc"] == 0.2
        assert merged["threads"] == 4
        assert merged["provided"] == ["n", "rc", "threads"]

    def test_local_defaults_do_not_reset_main(self, test_dir):
        """Keys missing from the local file keep their main values."""
        main = load_config_file(_write_json(test_dir / "run.json", {"box": 2.0}))
        local = load_config_file(_write_json(test_dir / "run.local.json", {"threads": 2}))
        assert merge_configs(main, local)["box"] == 2.0

    def test_empty_local_returns_main(self, test_dir):
        """An empty local config changes nothing."""
        main = load_config_file(_write_json(test_dir / "run.json", {"n": 40}))
        assert merge_configs(main, load_config_file(str(test_dir / "absent.json"))) is main
        assert merge_configs(main, None) is main

    def test_errors_propagate(self, test_dir):
        """An error in either file wins over the merge."""
        good = load_config_file(_write_json(test_dir / "good.json", {"n": 40}))
        bad = load_config_file(_write_json(test_dir / "bad.json", "{"))
        assert merge_configs(good, bad)["has_error"]
        assert merge_configs(bad, good)["has_error"]


class TestApplyOverrides:
    """Tests for explicit flag values."""

    def test_given_values_win(self, test_dir):
        """Non-None overrides replace file values."""
        config = load_config_file(_write_json(test_dir / "run.json", {"n": 40, "rc": 0.2}))
        result = apply_overrides(config, {"n": 80, "rc": None})
        assert result["n"] == 80
        assert result["rc"] == 0.2

    def test_no_overrides(self):
        """All-None overrides return the config untouched."""
        config = load_run_config(None)
        assert apply_overrides(config, {"n": None}) is config


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

class TestValidateConfig:
    """Tests for type and range checks."""

    def test_defaults_are_valid(self):
        """The defaults validate without problems."""
        config = load_run_config(None)
        assert not config["has_error"]
        assert config["eps"] == [1e-6]

    def test_scalars_become_lists(self):
        """A single eps or m is wrapped into a list."""
        config = load_run_config(None, {"eps": 1e-4, "m": 16})
        assert config["eps"] == [1e-4]
        assert config["m"] == [16]

    def test_integral_floats_are_accepted(self):
        """n = 20.0 is coerced to 20."""
        config = load_run_config(None, {"n": 20.0})
        assert config["n"] == 20
        assert isinstance(config["n"], int)

    @pytest.mark.parametrize(
        "overrides, fragment",
        [
            ({"n": 2.5}, "'n' must be an integer"),
            ({"n": "ten"}, "'n' must be a number"),
            ({"direct": 1}, "'direct' must be true or false"),
            ({"split": "ewald"}, "'split' must be one of"),
            ({"window": "kaiser"}, "'window' must be one of"),
            ({"format": "hdf5"}, "'format' must be one of"),
            ({"m": []}, "'m' must be a non-empty list"),
            ({"rc": float("inf")}, "'rc' must be finite"),
        ],
    )
    def test_type_problems(self, overrides, fragment):
        """Wrong types are reported with the key name."""
        config = load_run_config(None, overrides)
        assert config["has_error"]
        assert fragment in config["error_message"]

    @pytest.mark.parametrize(
        "overrides, fragment",
        [
            ({"n": 1}, "'n' must be at least 2"),
            ({"box": -1.0}, "'box' must be positive"),
            ({"rc": 0.5}, "cutoff 0.5 must lie in (0, box/2)"),
            ({"rc_values": [0.1, 0.6]}, "cutoff 0.6"),
            ({"eps": [1e-3, 2.0]}, "tolerance 2 must lie in (0, 1)"),
            ({"support": [0, 4]}, "'support' entries must be positive"),
            ({"threads": 0}, "'threads' must be at least 1"),
            ({"c_s": -3.0}, "'c_s' must be positive"),
        ],
    )
    def test_range_problems(self, overrides, fragment):
        """Out-of-range values are reported."""
        config = load_run_config(None, overrides)
        assert config["has_error"]
        assert fragment in config["error_message"]

    def test_null_eps_is_rejected(self, test_dir):
        """A config file setting eps to null has no tolerance."""
        path = _write_json(test_dir / "run.json", {"eps": None})
        config = load_run_config(path)
        assert config["has_error"]
        assert "'eps'" in config["error_message"]

    def test_problems_are_collected(self):
        """Several type problems appear in one message."""
        config = validate_config(dict(load_run_config(None), n="x", split="y"))
        assert "'n' must be a number" in config["error_message"]
        assert "'split' must be one of" in config["error_message"]


# ---------------------------------------------------------------------------
# Full loading, hashing and the frozen config
# ---------------------------------------------------------------------------

class TestLoadRunConfig:
    """Tests for main file, local file and flags together."""

    def test_precedence(self, test_dir):
        """Flags beat the local file, which beats the main file."""
        path = _write_json(test_dir / "run.json", {"n": 40, "rc": 0.2, "seed": 3})
        _write_json(test_dir / "run.local.json", {"n": 60, "rc": 0.25})
        config = load_run_config(path, {"rc": 0.3})
        assert not config["has_error"]
        assert config["seed"] == 3
        assert config["n"] == 60
        assert config["rc"] == 0.3

    def test_missing_config_file(self, test_dir):
        """An explicit --config that does not exist is an error."""
        config = load_run_config(str(test_dir / "absent.json"))
        assert config["has_error"]
        assert "not found" in config["error_message"]


class TestConfigHash:
    """Tests for the configuration hash."""

    def test_twelve_hex_characters(self):
        """The hash is 12 lowercase hex characters."""
        digest = config_hash(load_run_config(None))
        assert len(digest) == 12
        int(digest, 16)
        assert digest == digest.lower()

    def test_non_semantic_keys_ignored(self):
        """out, cache_dir and threads do not change the hash."""
        base = config_hash(load_run_config(None))
        assert config_hash(load_run_config(None, {"out": "elsewhere", "threads": 8, "cache_dir": "/tmp/c"})) == base

    def test_semantic_keys_change_hash(self):
        """Changing a computed input changes the hash."""
        base = config_hash(load_run_config(None))
        assert config_hash(load_run_config(None, {"seed": 2})) != base
        assert config_hash(load_run_config(None, {"eps": [1e-5]})) != base

    def test_file_and_flags_agree(self, test_dir):
        """The same values give the same hash however they were supplied."""
        path = _write_json(test_dir / "run.json", {"n": 40, "eps": [1e-4]})
        assert config_hash(load_run_config(path)) == config_hash(load_run_config(None, {"n": 40, "eps": 1e-4}))


class TestRunConfig:
    """Tests for the frozen configuration."""

    def test_from_valid_dict(self):
        """Lists become tuples and derived defaults are filled."""
        run = RunConfig.from_dict(load_run_config(None, {"seed": 7, "eps": [1e-3, 1e-6], "m": 16}))
        assert run.eps == (1e-3, 1e-6)
        assert run.m == (16,)
        assert run.support is None
        assert run.seeds == (7, 8, 9, 10, 11)
        assert run.n_values == (run.n,)
        assert run.rc_values == (run.rc,)
        assert len(run.config_hash) == 12

    def test_explicit_seed_list(self):
        """A seeds list is kept as given."""
        run = RunConfig.from_dict(load_run_config(None, {"seeds": [4, 2]}))
        assert run.seeds == (4, 2)

    def test_error_dict_raises(self):
        """An errored config dict raises ConfigurationError."""
        with pytest.raises(ConfigurationError, match="'n' must be at least 2"):
            RunConfig.from_dict(load_run_config(None, {"n": 1}))

    def test_frozen(self):
        """Fields cannot be reassigned."""
        run = RunConfig.from_dict(load_run_config(None))
        with pytest.raises(AttributeError):
            run.n = 5
