"""Environment-driven defaults. Values are read at call time so a `.env` loaded
by the entry script (python-dotenv) or a test's monkeypatch takes effect."""

import os

from utils.errors import ConfigError

DEFAULT_SEED = 20060702
DEFAULT_SAMPLES = 1_000_000
DEFAULT_WORKERS = 1
DEFAULT_LOG_LEVEL = "WARNING"


def _project_dir() -> str:
    return os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def _int_env(name: str, default: int, minimum: int) -> int:
    raw = os.environ.get(name)
    if raw is None or not raw.strip():
        return default
    try:
        value = int(raw.strip())
    except ValueError:
        raise ConfigError(f"{name} must be an integer, got {raw!r}") from None
    if value < minimum:
        raise ConfigError(f"{name} must be >= {minimum}, got {value}")
    return value


def default_workers() -> int:
    return _int_env("QUICKCOUNT_WORKERS", DEFAULT_WORKERS, 1)


def default_seed() -> int:
    return _int_env("QUICKCOUNT_SEED", DEFAULT_SEED, 0)


def default_samples() -> int:
    return _int_env("QUICKCOUNT_SAMPLES", DEFAULT_SAMPLES, 1)


def scenario_dir() -> str:
    return os.environ.get("QUICKCOUNT_SCENARIO_DIR") or os.path.join(_project_dir(), "scenarios")


def log_level() -> str:
    level = (os.environ.get("QUICKCOUNT_LOG_LEVEL") or DEFAULT_LOG_LEVEL).strip().upper()
    if level not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
        raise ConfigError(f"QUICKCOUNT_LOG_LEVEL must be a logging level name, got {level!r}")
    return level
