"""
Flat ``key=value`` run configuration files.

One setting per line, ``#`` starts a comment, blank lines are ignored. Keys not
given fall back to the stage-4 preset. The snapshot written next to every run
(``dump_config``) is itself a valid input file.
"""

import logging
from pathlib import Path
from typing import Any, Dict

from pydantic import ValidationError

from app.errors import ConfigError
from app.services.presets import StageConfig, stage_preset

logger = logging.getLogger(__name__)


def parse_config_text(text: str, source: str = "<config>") -> StageConfig:
    defaults = stage_preset(4)
    known = set(StageConfig.model_fields)
    overrides: Dict[str, str] = {}

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key=value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: missing key before '='")
        if key not in known:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in overrides:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        overrides[key] = value

    if overrides and "stage_id" not in overrides:
        overrides["stage_id"] = "custom"

    try:
        return StageConfig(**{**defaults.model_dump(), **overrides})
    except ValidationError as exc:
        first = exc.errors()[0]
        key = ".".join(str(p) for p in first["loc"]) or "config"
        raise ConfigError(f"{source}: invalid value for {key}: {first['msg']}") from exc


def parse_config(path: Path) -> StageConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"Cannot read config file {path}: {exc}") from exc
    return parse_config_text(text, source=str(path))


def _format_value(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


def dump_config(config: StageConfig) -> str:
    lines = [f"{key}={_format_value(value)}" for key, value in config.model_dump().items()]
    return "\n".join(lines) + "\n"
