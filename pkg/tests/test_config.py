"""Tests for configuration module."""

import os
from unittest import mock

import pytest
from pydantic import ValidationError

from stratal.config import StratalSettings, SystemMode


def test_stratal_settings_defaults():
    """Test default settings for StratalSettings."""
    with mock.patch.dict(os.environ, {}, clear=True):
        settings = StratalSettings(_env_file=None)

        assert settings.seed == 0
        assert settings.fuel == 10_000
        assert settings.instants == 0
        assert settings.state_budget == 100_000
        assert settings.system is SystemMode.STRATIFIED
        assert settings.prelude is None
        assert settings.max_core_steps == 4
        assert settings.log_level == "WARNING"


def test_stratal_settings_from_env():
    """Test loading settings from environment variables."""
    with mock.patch.dict(
        os.environ,
        {
            "STRATAL_SEED": "42",
            "STRATAL_FUEL": "500",
            "STRATAL_SYSTEM": "unstratified",
            "STRATAL_PRELUDE": "int",
            "STRATAL_LOG_LEVEL": "debug",
        },
        clear=True,
    ):
        settings = StratalSettings(_env_file=None)

        assert settings.seed == 42
        assert settings.fuel == 500
        assert settings.system is SystemMode.UNSTRATIFIED
        assert settings.prelude == "int"
        assert settings.log_level == "DEBUG"


def test_stratal_settings_override():
    """Test overriding environment settings with direct values."""
    with mock.patch.dict(os.environ, {"STRATAL_SEED": "42", "STRATAL_INSTANTS": "3"}, clear=True):
        settings = StratalSettings(_env_file=None, seed=7)

        # Direct values should override environment variables
        assert settings.seed == 7
        assert settings.instants == 3


@pytest.mark.parametrize(
    "env",
    [
        {"STRATAL_PRELUDE": "float"},
        {"STRATAL_FUEL": "0"},
        {"STRATAL_MAX_CORE_STEPS": "5"},
        {"STRATAL_SYSTEM": "linear"},
        {"STRATAL_LOG_LEVEL": "chatty"},
    ],
)
def test_stratal_settings_rejects_bad_values(env):
    """Test that invalid environment values are rejected."""
    with mock.patch.dict(os.environ, env, clear=True):
        with pytest.raises(ValidationError):
            StratalSettings(_env_file=None)


def test_stratal_settings_model_config():
    """Test model configuration for StratalSettings."""
    model_config = StratalSettings.model_config
    assert model_config.get("env_prefix") == "STRATAL_"
    assert model_config.get("env_file") == ".env"
    assert model_config.get("env_file_encoding") == "utf-8"
