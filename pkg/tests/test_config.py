from dataclasses import fields, replace

from config.settings import _env_float, _env_int, config


def test_defaults_are_valid():
    is_valid, errors = config.validate()
    assert is_valid, errors


def test_non_positive_tolerance_rejected():
    is_valid, errors = replace(config, MARGIN_TOL=0.0).validate()
    assert not is_valid
    assert any("MARGIN_TOL" in e for e in errors)


def test_alpha_fraction_must_be_below_one():
    is_valid, errors = replace(config, ALPHA_FRACTION=1.0).validate()
    assert not is_valid
    assert any("ALPHA_FRACTION" in e for e in errors)


def test_environment_override(monkeypatch):
    monkeypatch.setenv("VBCERT_RATE_SLACK", "1e-6")
    monkeypatch.setenv("VBCERT_TD_STEPS", "42")
    assert _env_float("RATE_SLACK", 1e-9) == 1e-6
    assert _env_int("TD_STEPS", 5000) == 42
    assert _env_float("MARGIN_TOL", 1e-9) == 1e-9


def test_only_consumed_settings_declared():
    names = {f.name for f in fields(config)}
    assert "LYAPUNOV_ROUNDING_FACTOR" in names
    assert not names & {"PSD_SLACK", "DATA_DIR", "LYAPUNOV_RESOLUTION"}
