"""Run configuration: a single TOML or JSON file, with every field
overridable by command-line flags.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Optional

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .errors import ConfigError


def load_config(path: Optional[str | Path]) -> dict[str, Any]:
    """Parse a config file by suffix; None yields an empty config."""
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        if p.suffix == ".json":
            return json.loads(p.read_text(encoding="utf-8"))
        if p.suffix == ".toml":
            with p.open("rb") as fh:
                return tomllib.load(fh)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse {p}: {exc}")
    raise ConfigError(f"config must be .toml or .json, got {p.suffix!r}")


def config_get(cfg: dict[str, Any], dotted: str,
               default: Any = None) -> Any:
    """Fetch a nested field by dotted path, e.g. 'baseline.rag_k'."""
    node: Any = cfg
    for part in dotted.split("."):
        if not isinstance(node, dict) or part not in node:
            return default
        node = node[part]
    return node


def pick(flag_value: Any, cfg: dict[str, Any], dotted: str,
         default: Any = None) -> Any:
    """Flag wins over config wins over default."""
    if flag_value is not None:
        return flag_value
    return config_get(cfg, dotted, default)


def require_int(value: Any, field: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{field}: expected an integer, got {value!r}")
    return value
