"""
Unit tests for SystemConfig loading and validation.
"""

import json
import math
import tempfile
from pathlib import Path

import pytest

from python.irslink.config import PRESETS, OptimizerParams, SystemConfig, build_config, load_config
from python.irslink.errors import ConfigurationError


class TestDefaults:
    """Test the default scenario."""

    def test_desk_defaults(self):
        """Test the documented default values."""
        cfg = SystemConfig()
        assert cfg.n_bs == 16
        assert cfg.m_irs == 64
        assert cfg.p_bs_dbm == 10.0
        assert cfg.noise_dbm == -60.0
        assert cfg.irs_spherical == (42.0, 63.0, -16.0)
        assert cfg.user_spherical == (41.0, 47.0, -16.0)
        assert cfg.optimizer.p == 20
        assert cfg.optimizer.kappa == 100.0

    def test_wavelength(self):
        """Test the carrier wavelength."""
        assert SystemConfig().wavelength_m == pytest.approx(0.1224, abs=1e-4)

    def test_presets_validate(self):
        """Test every preset builds."""
        for name in PRESETS:
            assert isinstance(SystemConfig.preset(name), SystemConfig)

    def test_unknown_preset(self):
        """Test an unknown preset name."""
        with pytest.raises(ConfigurationError, match="Unknown preset"):
            SystemConfig.preset("nope")


class TestValidation:
    """Test rejected configurations."""

    def test_non_square_bs(self):
        """Test N must be an even perfect square."""
        with pytest.raises(ConfigurationError):
            build_config({"n_bs": 15})
        with pytest.raises(ConfigurationError):
            build_config({"n_bs": 9})

    def test_irs_may_be_absent(self):
        """Test M = 0 is accepted and odd squares are not."""
        assert build_config({"m_irs": 0}).m_irs == 0
        with pytest.raises(ConfigurationError):
            build_config({"m_irs": 25})

    def test_negative_rician(self):
        """Test v < 0 is rejected while inf is allowed."""
        with pytest.raises(ConfigurationError):
            build_config({"rician_b2u": -1.0})
        assert math.isinf(build_config({"rician_b2u": math.inf}).rician_b2u)

    def test_user_above_bs(self):
        """Test a negative user elevation."""
        with pytest.raises(ConfigurationError, match="elevation"):
            build_config({"user_spherical": (41.0, -10.0, 0.0)})

    def test_coincident_irs_and_user(self):
        """Test IRS and user at the same place."""
        with pytest.raises(ConfigurationError, match="coincide"):
            build_config({"irs_spherical": (41.0, 47.0, -16.0)})

    def test_unknown_key(self):
        """Test unknown keys are not ignored."""
        with pytest.raises(ConfigurationError):
            build_config({"n_bss": 16})

    def test_odd_barrier_exponent(self):
        """Test p must be even."""
        with pytest.raises(ValueError):
            OptimizerParams(p=21)


class TestLoadConfig:
    """Test JSON config files."""

    def test_load_valid(self):
        """Test a subset of fields overrides the defaults."""
        with tempfile.NamedTemporaryFile(mode="w", suffix=".json", delete=False) as f:
            json.dump({"n_bs": 4, "m_irs": 16, "seed": 11, "optimizer": {"eps": 1e-5}}, f)
            temp_path = f.name
        try:
            cfg = load_config(temp_path)
            assert cfg.n_bs == 4
            assert cfg.m_irs == 16
            assert cfg.seed == 11
            assert cfg.optimizer.eps == 1e-5
            assert cfg.optimizer.p == 20
        finally:
            Path(temp_path).unlink()

    def test_missing_file(self):
        """Test a path that does not exist."""
        with pytest.raises(ConfigurationError, match="not found"):
            load_config("/nonexistent/config.json")

    def test_malformed_json(self):
        """Test broken JSON is a configuration error."""
        with tempfile.NamedTemporaryFile(mode="w", suffix=".json", delete=False) as f:
            f.write("{n_bs: 16")
            temp_path = f.name
        try:
            with pytest.raises(ConfigurationError):
                load_config(temp_path)
        finally:
            Path(temp_path).unlink()


class TestDerivedConfigs:
    """Test with_updates and hashing."""

    def test_with_updates_is_copy(self):
        """Test the original config is unchanged."""
        base = SystemConfig()
        changed = base.with_updates(m_irs=16)
        assert base.m_irs == 64
        assert changed.m_irs == 16

    def test_with_updates_validates(self):
        """Test updates go through validation."""
        with pytest.raises(ConfigurationError):
            SystemConfig().with_updates(n_bs=10)

    def test_nested_optimizer_update(self):
        """Test passing an OptimizerParams instance."""
        cfg = SystemConfig().with_updates(optimizer=OptimizerParams(n_iter_outer=3))
        assert cfg.optimizer.n_iter_outer == 3

    def test_hash_stable_and_sensitive(self):
        """Test equal configs hash equally and a changed field changes the hash."""
        assert SystemConfig().config_hash() == SystemConfig().config_hash()
        assert SystemConfig().config_hash() != SystemConfig(seed=1).config_hash()
        assert len(SystemConfig().config_hash()) == 16
