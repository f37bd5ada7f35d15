"""
Runtime configuration.

Precedence, lowest first: config/runtime.yaml, a `.env` file, process
environment (EDAT_*), explicit keyword arguments.
"""
import logging
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping, Optional

import yaml
from dotenv import load_dotenv

from ..core.errors import ConfigError
from ..scheduler import ProgressMode

logger = logging.getLogger(__name__)

CONFIG_DIR = Path(__file__).parent.parent.parent / "config"

TRANSPORTS = ("loopback", "tcp")

_ENV_KEYS = {
    "EDAT_TRANSPORT": "transport",
    "EDAT_RANKS": "ranks",
    "EDAT_WORKERS": "workers",
    "EDAT_PROGRESS_MODE": "progress_mode",
    "EDAT_ROSTER": "roster",
    "EDAT_RANK": "rank",
    "EDAT_DET_SEED": "deterministic_seed",
}


def default_workers() -> int:
    return os.cpu_count() or 1


@dataclass
class RuntimeConfig:
    """Everything a rank needs to start."""
    transport: str = "loopback"
    ranks: int = 1
    workers: int = field(default_factory=default_workers)
    progress_mode: ProgressMode = ProgressMode.DEDICATED_THREAD
    roster: Optional[Path] = None
    rank: Optional[int] = None
    deterministic_seed: Optional[int] = None
    poll_timeout: float = 0.002
    token_interval: float = 0.002
    connect_timeout: float = 10.0

    def __post_init__(self):
        self.transport = str(self.transport).lower()
        self.ranks = _as_int("ranks", self.ranks)
        self.workers = default_workers() if self.workers in (None, "auto") else _as_int("workers", self.workers)
        self.progress_mode = _as_progress_mode(self.progress_mode)
        if self.roster is not None:
            self.roster = Path(self.roster)
        if self.rank is not None:
            self.rank = _as_int("rank", self.rank)
        if self.deterministic_seed is not None:
            self.deterministic_seed = _as_int("deterministic_seed", self.deterministic_seed)
        for name in ("poll_timeout", "token_interval", "connect_timeout"):
            setattr(self, name, _as_float(name, getattr(self, name)))
        self.validate()

    def validate(self) -> None:
        """
        Raises:
            ConfigError: on any invalid combination
        """
        if self.transport not in TRANSPORTS:
            raise ConfigError(f"transport must be one of {TRANSPORTS}, got {self.transport!r}")
        if self.ranks < 1:
            raise ConfigError(f"ranks must be >= 1, got {self.ranks}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        if self.poll_timeout <= 0 or self.token_interval < 0 or self.connect_timeout <= 0:
            raise ConfigError("poll_timeout and connect_timeout must be > 0, token_interval >= 0")
        if self.transport == "tcp" and self.deterministic_seed is not None:
            raise ConfigError("deterministic delivery is only available on the loopback transport")

    def with_overrides(self, **overrides: Any) -> "RuntimeConfig":
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})

    @classmethod
    def load(
        cls,
        path: Optional[Path] = None,
        env: Optional[Mapping[str, str]] = None,
        use_dotenv: bool = True,
        **overrides: Any,
    ) -> "RuntimeConfig":
        """
        Build a config from YAML, environment and keyword overrides.

        Args:
            path: YAML file; defaults to config/runtime.yaml
            env: Environment mapping; defaults to os.environ
            use_dotenv: Load `.env` into os.environ first
            **overrides: Field values that win over everything else (None is ignored)

        Raises:
            ConfigError: unreadable file, unknown keys or invalid values
        """
        if use_dotenv and env is None:
            load_dotenv()
        env = os.environ if env is None else env

        values = _read_yaml(path or CONFIG_DIR / "runtime.yaml")
        for key, name in _ENV_KEYS.items():
            if env.get(key):
                values[name] = env[key]
        values.update({k: v for k, v in overrides.items() if v is not None})

        known = {f.name for f in fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ConfigError(f"unknown runtime config keys: {unknown}")
        config = cls(**values)
        logger.debug(f"Runtime config: {config}")
        return config


def _read_yaml(path: Path) -> dict:
    path = Path(path)
    if not path.exists():
        return {}
    try:
        with open(path) as f:
            data = yaml.safe_load(f) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must contain a mapping")
    return {k: v for k, v in data.items() if v is not None}


def _as_int(name: str, value: Any) -> int:
    if isinstance(value, bool):
        raise ConfigError(f"{name} must be an integer, got {value!r}")
    try:
        return int(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be an integer, got {value!r}") from None


def _as_float(name: str, value: Any) -> float:
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a number, got {value!r}") from None


def _as_progress_mode(value: Any) -> ProgressMode:
    if isinstance(value, ProgressMode):
        return value
    try:
        return ProgressMode(str(value).lower())
    except ValueError:
        choices = [mode.value for mode in ProgressMode]
        raise ConfigError(f"progress_mode must be one of {choices}, got {value!r}") from None
