import pytest

from utils import settings
from utils.errors import ConfigError, QuickCountError, ScenarioError


def test_defaults(monkeypatch):
    for name in ("QUICKCOUNT_WORKERS", "QUICKCOUNT_SEED", "QUICKCOUNT_SAMPLES", "QUICKCOUNT_LOG_LEVEL"):
        monkeypatch.delenv(name, raising=False)
    assert settings.default_workers() == 1
    assert settings.default_seed() == settings.DEFAULT_SEED
    assert settings.default_samples() == 1_000_000
    assert settings.log_level() == "WARNING"


def test_environment_overrides(monkeypatch):
    monkeypatch.setenv("QUICKCOUNT_WORKERS", " 8 ")
    monkeypatch.setenv("QUICKCOUNT_SAMPLES", "5000")
    monkeypatch.setenv("QUICKCOUNT_LOG_LEVEL", "debug")
    assert settings.default_workers() == 8
    assert settings.default_samples() == 5000
    assert settings.log_level() == "DEBUG"


@pytest.mark.parametrize("name, value", [("QUICKCOUNT_WORKERS", "0"), ("QUICKCOUNT_SEED", "-3"), ("QUICKCOUNT_SAMPLES", "1e6"), ("QUICKCOUNT_LOG_LEVEL", "LOUD")])
def test_bad_values(monkeypatch, name, value):
    monkeypatch.setenv(name, value)
    with pytest.raises(ConfigError, match=name):
        {
            "QUICKCOUNT_WORKERS": settings.default_workers,
            "QUICKCOUNT_SEED": settings.default_seed,
            "QUICKCOUNT_SAMPLES": settings.default_samples,
            "QUICKCOUNT_LOG_LEVEL": settings.log_level,
        }[name]()


def test_scenario_error_message():
    err = ScenarioError("bad value", path="a.json", line=3, field="n.smoke")
    assert str(err) == "a.json, line 3, field 'n.smoke': bad value"
    assert isinstance(err, QuickCountError) and isinstance(err, ValueError)
