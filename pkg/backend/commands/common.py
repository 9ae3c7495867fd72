"""
Argument helpers shared by the command modules
"""

# Standard library imports
import argparse
import json
from pathlib import Path
from typing import Any, Dict, Optional

# Local application imports
from mortality.base_config import Settings
from mortality.errors import ConfigError


def common_arguments() -> argparse.ArgumentParser:
    """Parent parser carrying the flags every command accepts"""
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--seed", type=int, default=None, help="Master seed (default: MORTALITY_DEFAULT_SEED)")
    parent.add_argument("--config", default=None, help="Command configuration file")
    parent.add_argument("--out", default=None, help="Output path")
    parent.add_argument("--quiet", action="store_true", help="Only warnings and errors on the console")
    return parent


def resolve_seed(args: argparse.Namespace, settings: Settings) -> int:
    return args.seed if args.seed is not None else settings.default_seed


def resolve_out(args: argparse.Namespace, settings: Settings, default_name: str) -> Path:
    if args.out:
        return Path(args.out)
    return Path(settings.storage_directory) / default_name


def parse_json_object(text: str, what: str) -> Dict[str, Any]:
    try:
        value = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"Invalid JSON in {what}: {e.msg} (column {e.colno})", line=e.lineno)
    if not isinstance(value, dict):
        raise ConfigError(f"{what} must be a JSON object")
    return value


def load_json_object(path: Optional[str], what: str) -> Dict[str, Any]:
    """Parsed JSON object from path; an empty dict when no path is given"""
    if not path:
        return {}
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"{what} not found: {path}")
    return parse_json_object(path.read_text(encoding="utf-8"), what)
