"""
iac-analysis Config
Configuration management: defaults → config/config.yaml → environment
"""

import os
import logging
from pathlib import Path
from dataclasses import dataclass, field, fields, is_dataclass
from typing import Any, Dict, Optional

import yaml
from dotenv import load_dotenv

logger = logging.getLogger("iac.config")

CONFIG_DIR = Path(__file__).parent.parent / "config"


@dataclass
class SolverConfig:
    path: Optional[str] = None
    backend: str = "auto"              # auto | process | z3py
    timeout_seconds: float = 10.0
    probe_cap_exponent: int = 63
    real_tolerance: float = 1e-6


@dataclass
class AnalysisConfig:
    max_core_constraints: int = 10
    parallel_bounds: bool = True


@dataclass
class CatalogConfig:
    path: Optional[str] = None


@dataclass
class LoggingConfig:
    debug: bool = False


@dataclass
class IacConfig:
    version: str = "1.0.0"
    solver: SolverConfig = field(default_factory=SolverConfig)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    catalog: CatalogConfig = field(default_factory=CatalogConfig)
    logging: LoggingConfig = field(default_factory=LoggingConfig)


_config: Optional[IacConfig] = None


def get_config() -> IacConfig:
    """Get configuration (singleton)"""
    global _config
    if _config is None:
        _config = IacConfig()
        _load_from_file(_config)
        _load_from_env(_config)
    return _config


def reset_config():
    global _config
    _config = None


def _sections(config: IacConfig) -> Dict[str, Any]:
    return {f.name: getattr(config, f.name) for f in fields(config) if is_dataclass(getattr(config, f.name))}


def _apply(section: Any, values: Dict[str, Any], where: str):
    known = {f.name for f in fields(section)}
    for key, value in values.items():
        if key not in known:
            logger.debug(f"Ignoring unknown setting {where}.{key}")
            continue
        setattr(section, key, value)


def _load_from_file(config: IacConfig, config_file: Optional[Path] = None):
    """Overlay config/config.yaml; a broken file leaves the defaults in place"""
    config_file = config_file or CONFIG_DIR / "config.yaml"
    if not config_file.is_file():
        return
    try:
        data = yaml.safe_load(config_file.read_text(encoding="utf-8")) or {}
    except (OSError, UnicodeDecodeError, yaml.YAMLError) as e:
        logger.warning(f"Config file {config_file} ignored: {e}")
        return
    if not isinstance(data, dict):
        logger.warning(f"Config file {config_file} ignored: expected a mapping")
        return
    for name, section in _sections(config).items():
        values = data.get(name)
        if isinstance(values, dict):
            _apply(section, values, name)


def _as_bool(value: str) -> bool:
    return value.strip().lower() in ("true", "1", "yes")


ENV_SETTINGS = {
    "IAC_ANALYSIS_SOLVER": ("solver", "path", str),
    "IAC_ANALYSIS_BACKEND": ("solver", "backend", str),
    "IAC_ANALYSIS_TIMEOUT": ("solver", "timeout_seconds", float),
    "IAC_ANALYSIS_CATALOG": ("catalog", "path", str),
    "IAC_ANALYSIS_DEBUG": ("logging", "debug", _as_bool),
}


def _load_from_env(config: IacConfig):
    """Environment last; a .env file in the working directory counts as environment"""
    load_dotenv()
    sections = _sections(config)
    for name, (section, key, convert) in ENV_SETTINGS.items():
        raw = os.environ.get(name)
        if not raw:
            continue
        try:
            setattr(sections[section], key, convert(raw))
        except ValueError as e:
            logger.warning(f"Ignoring {name}={raw!r}: {e}")
